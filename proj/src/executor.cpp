#include "recipeforge/executor.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <unordered_map>

#include "recipeforge/data_verifier.hpp"
#include "recipeforge/error.hpp"
#include "recipeforge/llm_gateway.hpp"
#include "recipeforge/recipe_lang.hpp"
#include "recipeforge/task_pool.hpp"
#include "recipeforge/template.hpp"

namespace recipeforge::exec {

namespace fs = std::filesystem;
using namespace std::chrono;

// ---------------------------------------------------------------------------
// rows

std::string field_text(const FieldValue& value) {
  if (const auto* s = std::get_if<std::string>(&value)) return *s;
  return shortest_number(std::get<double>(value));
}

Record Record::from_json(const Json& object) {
  Record r;
  if (!object.is_object()) {
    r.set("text", object.is_string() ? object.get<std::string>() : canonical_dump(object));
    return r;
  }
  for (const auto& [key, v] : object.items()) {
    if (key.empty()) continue;
    if (v.is_string()) r.set(key, v.get<std::string>());
    else if (v.is_number()) {
      const double d = v.get<double>();
      if (std::isfinite(d)) r.set(key, d);
      else r.set(key, canonical_dump(v));
    } else if (v.is_boolean()) r.set(key, std::string(v.get<bool>() ? "true" : "false"));
    else if (v.is_null()) r.set(key, std::string());
    else r.set(key, canonical_dump(v));
  }
  return r;
}

const FieldValue* Record::get(std::string_view name) const noexcept {
  for (const auto& [k, v] : fields_)
    if (k == name) return &v;
  return nullptr;
}

std::optional<std::string> Record::text(std::string_view name) const {
  if (const FieldValue* v = get(name)) return field_text(*v);
  return std::nullopt;
}

void Record::set(std::string name, FieldValue value) {
  for (auto& [k, v] : fields_) {
    if (k == name) {
      v = std::move(value);
      return;
    }
  }
  fields_.emplace_back(std::move(name), std::move(value));
}

std::string_view to_string(Role role) noexcept { return role == Role::user ? "user" : "assistant"; }

std::string serialize_dialog_line(const DialogSample& sample) {
  std::string out = "{\"dialogs\": [";
  for (std::size_t i = 0; i < sample.dialogs.size(); ++i) {
    if (i > 0) out += ", ";
    out += "{\"role\": \"";
    out += to_string(sample.dialogs[i].role);
    out += "\", \"content\": ";
    out += json_quote(sample.dialogs[i].content);
    out += '}';
  }
  out += "]}";
  return out;
}

std::string serialize_dataset(const DialogDataset& dataset) {
  std::string out;
  for (const auto& s : dataset) {
    out += serialize_dialog_line(s);
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// format checking

FormatCheck check_training_format(const DialogDataset& dataset) {
  FormatCheck check;
  const auto flag = [&](std::size_t i, std::string message) {
    check.ok = false;
    check.issues.push_back({i, std::move(message)});
  };
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& turns = dataset[i].dialogs;
    if (turns.size() < 2) {
      flag(i, "fewer than two turns");
      continue;
    }
    if (turns.size() % 2 != 0) {
      flag(i, "odd number of turns");
      continue;
    }
    bool bad = false;
    for (std::size_t t = 0; t < turns.size() && !bad; ++t) {
      const Role expected = t % 2 == 0 ? Role::user : Role::assistant;
      if (turns[t].role != expected) {
        flag(i, "turn " + std::to_string(t) + " should be " + std::string(to_string(expected)));
        bad = true;
      } else if (trim(turns[t].content).empty()) {
        flag(i, "turn " + std::to_string(t) + " has empty content");
        bad = true;
      }
    }
  }
  return check;
}

LoadedDataset load_dialog_lines(std::string_view jsonl) {
  LoadedDataset out;
  std::size_t index = 0;
  std::vector<std::size_t> line_of;  // dataset position -> line index
  const auto structural = [&](std::string message) {
    out.check.ok = false;
    out.check.issues.push_back({index, std::move(message)});
  };
  for (const auto& line : split_lines(jsonl)) {
    if (trim(line).empty()) continue;
    Json j;
    try {
      j = Json::parse(line);
    } catch (const Json::parse_error&) {
      structural("line is not valid JSON");
      ++index;
      continue;
    }
    DialogSample sample;
    bool shape_ok = j.is_object() && j.size() == 1 && j.contains("dialogs") && j["dialogs"].is_array();
    if (shape_ok) {
      for (const auto& turn : j["dialogs"]) {
        if (!turn.is_object() || turn.size() != 2 || !turn.contains("role") || !turn.contains("content") ||
            !turn["role"].is_string() || !turn["content"].is_string()) {
          shape_ok = false;
          break;
        }
        const std::string role = turn["role"].get<std::string>();
        if (role != "user" && role != "assistant") {
          shape_ok = false;
          break;
        }
        sample.dialogs.push_back({role == "user" ? Role::user : Role::assistant, turn["content"].get<std::string>()});
      }
    }
    if (!shape_ok) {
      structural("line is not a {\"dialogs\": [{\"role\", \"content\"}, ...]} object");
    } else {
      // exact key order of the output contract
      if (line.rfind("{\"dialogs\":", 0) != 0) structural("line does not start with the \"dialogs\" key");
      out.dataset.push_back(std::move(sample));
      line_of.push_back(index);
    }
    ++index;
  }
  const auto semantic = check_training_format(out.dataset);
  if (!semantic.ok) {
    out.check.ok = false;
    for (const auto& issue : semantic.issues) out.check.issues.push_back({line_of[issue.sample_index], issue.message});
    std::stable_sort(out.check.issues.begin(), out.check.issues.end(),
                     [](const FormatIssue& a, const FormatIssue& b) { return a.sample_index < b.sample_index; });
  }
  return out;
}

LoadedDataset load_dialog_file(const fs::path& path) { return load_dialog_lines(read_file(path)); }

// ---------------------------------------------------------------------------
// operators

namespace {

std::optional<double> as_number(const FieldValue& v) {
  if (const auto* d = std::get_if<double>(&v)) return *d;
  const std::string_view s = trim(std::get<std::string>(v));
  if (s.empty()) return std::nullopt;
  double out = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) return std::nullopt;
  return out;
}

/// -1, 0, +1; numeric when both sides read as numbers, textual otherwise.
int compare(const FieldValue& field, const lang::Scalar& operand) {
  if (const auto* d = std::get_if<double>(&operand)) {
    if (const auto n = as_number(field)) return *n < *d ? -1 : (*n > *d ? 1 : 0);
    const int c = field_text(field).compare(shortest_number(*d));
    return c < 0 ? -1 : (c > 0 ? 1 : 0);
  }
  const int c = field_text(field).compare(std::get<std::string>(operand));
  return c < 0 ? -1 : (c > 0 ? 1 : 0);
}

PlaceholderLookup row_lookup(const Record& row) {
  return [&row](std::string_view name) { return row.text(name); };
}

}  // namespace

bool evaluate_filter(const lang::FilterExpr& expr, const Record& row) {
  using Op = lang::FilterExpr::Op;
  switch (expr.op) {
    case Op::eq:
    case Op::ne:
    case Op::lt:
    case Op::gt: {
      // absent fields compare unequal and unordered
      const FieldValue* v = row.get(expr.field);
      if (v == nullptr) return expr.op == Op::ne;
      const int c = compare(*v, expr.operand);
      if (expr.op == Op::eq) return c == 0;
      if (expr.op == Op::ne) return c != 0;
      if (expr.op == Op::lt) return c < 0;
      return c > 0;
    }
    case Op::contains: {
      std::string haystack;
      for (const auto& f : expr.fields) {
        if (auto t = row.text(f)) {
          haystack += to_lower_ascii(*t);
          haystack += ' ';
        }
      }
      for (const auto& k : expr.keywords)
        if (haystack.find(to_lower_ascii(k)) != std::string::npos) return true;
      return false;
    }
    case Op::all_of:
      for (const auto& c : expr.children)
        if (!evaluate_filter(c, row)) return false;
      return true;
    case Op::any_of:
      for (const auto& c : expr.children)
        if (evaluate_filter(c, row)) return true;
      return false;
    case Op::negate:
      return !evaluate_filter(expr.children.front(), row);
  }
  return false;
}

std::vector<Record> deduplicate_by_text_hash(std::vector<Record> rows, std::string_view key,
                                             bool lowercase, bool ignore_non_character) {
  const bool is_template = key.find("{{") != std::string_view::npos;
  std::unordered_map<std::uint64_t, std::vector<std::string>> seen;
  std::vector<Record> kept;
  kept.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::string text;
    if (is_template) {
      try {
        text = render_placeholders(key, row_lookup(rows[i]));
      } catch (const TemplateError& e) {
        throw MissingFieldError("dedup key on row " + std::to_string(i) + ": " + e.what());
      }
    } else {
      auto t = rows[i].text(key);
      if (!t) throw MissingFieldError("dedup key '" + std::string(key) + "' absent on row " + std::to_string(i));
      text = std::move(*t);
    }
    std::string normalized = normalize_text(text, lowercase, ignore_non_character);
    auto& bucket = seen[fnv1a64(normalized)];
    if (std::find(bucket.begin(), bucket.end(), normalized) != bucket.end()) continue;
    bucket.push_back(std::move(normalized));
    kept.push_back(std::move(rows[i]));
  }
  return kept;
}

DialogConversion to_dialogs(const std::vector<Record>& rows, std::string_view user_template,
                            std::string_view assistant_template) {
  DialogConversion out;
  out.samples.reserve(rows.size());
  for (const auto& row : rows) {
    std::string user = render_placeholders(user_template, row_lookup(row));
    std::string assistant = render_placeholders(assistant_template, row_lookup(row));
    if (trim(user).empty() || trim(assistant).empty()) {
      ++out.dropped;
      continue;
    }
    out.samples.push_back(DialogSample{{{Role::user, std::move(user)}, {Role::assistant, std::move(assistant)}}});
  }
  return out;
}

std::optional<Json> extract_json_object(std::string_view text) {
  for (std::size_t open = text.find('{'); open != std::string_view::npos; open = text.find('{', open + 1)) {
    int depth = 0;
    bool in_string = false;
    for (std::size_t i = open; i < text.size(); ++i) {
      const char c = text[i];
      if (in_string) {
        if (c == '\\') ++i;
        else if (c == '"') in_string = false;
        continue;
      }
      if (c == '"') in_string = true;
      else if (c == '{') ++depth;
      else if (c == '}' && --depth == 0) {
        try {
          Json j = Json::parse(text.substr(open, i - open + 1));
          if (j.is_object()) return j;
        } catch (const Json::parse_error&) {
        }
        break;
      }
    }
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// reports

std::string_view to_string(ExecStatus status) noexcept {
  switch (status) {
    case ExecStatus::ok: return "ok";
    case ExecStatus::exec_failure: return "exec_failure";
    case ExecStatus::format_violation: return "format_violation";
  }
  return "exec_failure";
}

ExecStatus exec_status_from_string(std::string_view name) {
  if (name == "ok") return ExecStatus::ok;
  if (name == "exec_failure") return ExecStatus::exec_failure;
  if (name == "format_violation") return ExecStatus::format_violation;
  throw ConfigError("unknown exec status '" + std::string(name) + "'");
}

Json to_json(const ExecReport& report) {
  Json ops = Json::array();
  for (const auto& op : report.per_op) {
    ops.push_back({{"label", op.label},
                   {"kind", lang::to_string(op.kind)},
                   {"rows_in", op.rows_in},
                   {"rows_out", op.rows_out},
                   {"dropped", op.dropped},
                   {"millis", op.millis}});
  }
  return Json{{"status", to_string(report.status)},
              {"produced", report.produced},
              {"per_op", std::move(ops)},
              {"seed", report.seed},
              {"failure_detail", report.failure_detail},
              {"output_path", report.output_path}};
}

ExecReport exec_report_from_json(const Json& j) {
  ExecReport r;
  r.status = exec_status_from_string(j.at("status").get<std::string>());
  r.produced = j.value("produced", std::size_t{0});
  r.seed = j.value("seed", std::uint64_t{0});
  r.failure_detail = j.value("failure_detail", std::string{});
  r.output_path = j.value("output_path", std::string{});
  if (j.contains("per_op")) {
    for (const auto& op : j["per_op"]) {
      OpStats s;
      s.label = op.value("label", std::string{});
      s.kind = lang::op_kind_from_string(op.value("kind", std::string{"load_source"})).value_or(lang::OpKind::load_source);
      s.rows_in = op.value("rows_in", std::size_t{0});
      s.rows_out = op.value("rows_out", std::size_t{0});
      s.dropped = op.value("dropped", std::size_t{0});
      s.millis = op.value("millis", std::int64_t{0});
      r.per_op.push_back(std::move(s));
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// interpreter

namespace {

using Table = std::variant<std::vector<Record>, DialogDataset>;

std::size_t table_rows(const Table& t) {
  return std::visit([](const auto& v) { return v.size(); }, t);
}

struct OpFault {
  std::string message;
};

class Interpreter {
public:
  Interpreter(const pool::TaskSpec& task, const Budget& budget, std::uint64_t seed, llm::Gateway* gateway,
              const Limits& limits, const fs::path& run_dir)
      : task_(task), budget_(budget), seed_(seed), gateway_(gateway), limits_(limits), run_dir_(run_dir),
        deadline_(steady_clock::now() + limits.wall_clock) {}

  ExecResult run(const lang::Recipe& recipe) {
    ExecResult result;
    result.report.seed = seed_;
    const auto fail = [&](std::string detail) {
      result.dataset.clear();
      result.report.status = ExecStatus::exec_failure;
      result.report.produced = 0;
      result.report.output_path.clear();
      result.report.failure_detail = std::move(detail);
      return std::move(result);
    };

    if (const auto diags = lang::validate_recipe(recipe, task_); !diags.empty())
      return fail("recipe failed validation: " + diags.front().to_string());

    for (const auto& op : recipe.pipeline) {
      if (steady_clock::now() > deadline_) return fail("wall-clock limit exceeded before op '" + op.label + "'");
      OpStats stats;
      stats.label = op.label;
      stats.kind = op.kind();
      for (const auto& in : op.inputs) stats.rows_in += table_rows(tables_.at(in));
      const auto start = steady_clock::now();
      Table out;
      try {
        out = apply(op, stats);
      } catch (const OpFault& f) {
        result.report.per_op.push_back(stats);
        return fail("op '" + op.label + "' (" + std::string(lang::to_string(op.kind())) + "): " + f.message);
      } catch (const std::exception& e) {
        result.report.per_op.push_back(stats);
        return fail("op '" + op.label + "' (" + std::string(lang::to_string(op.kind())) + "): " + e.what());
      }
      stats.rows_out = table_rows(out);
      stats.millis = duration_cast<milliseconds>(steady_clock::now() - start).count();
      result.report.per_op.push_back(stats);
      if (stats.rows_out > limits_.per_op_rows)
        return fail("op '" + op.label + "' produced " + std::to_string(stats.rows_out) +
                    " rows, over the per-op limit of " + std::to_string(limits_.per_op_rows));
      if (steady_clock::now() > deadline_) return fail("wall-clock limit exceeded in op '" + op.label + "'");

      if (op.kind() == lang::OpKind::dump) {
        auto& samples = std::get<DialogDataset>(out);
        if (samples.empty()) return fail("pipeline produced an empty dataset");
        const auto check = check_training_format(samples);
        result.report.produced = samples.size();
        const auto& path = std::get<lang::DumpParams>(op.params).path;
        if (!run_dir_.empty()) {
          try {
            write_file_atomic(run_dir_ / path, serialize_dataset(samples));
          } catch (const std::exception& e) {
            return fail(std::string("writing the dataset failed: ") + e.what());
          }
          result.report.output_path = path;
        }
        if (!check.ok) {
          result.report.status = ExecStatus::format_violation;
          result.report.failure_detail = "sample " + std::to_string(check.issues.front().sample_index) + ": " +
                                         check.issues.front().message;
        } else {
          result.report.status = ExecStatus::ok;
        }
        result.dataset = std::move(samples);
        return result;
      }
      tables_[op.label] = std::move(out);
    }
    return fail("pipeline ended without a dump");
  }

private:
  const std::vector<Record>& records(const std::string& label) const {
    const auto* rows = std::get_if<std::vector<Record>>(&tables_.at(label));
    if (rows == nullptr) throw OpFault{"input '" + label + "' holds dialogs, not rows"};
    return *rows;
  }

  Table apply(const lang::PipelineOp& op, OpStats& stats) {
    using lang::OpKind;
    switch (op.kind()) {
      case OpKind::load_source: return load(std::get<lang::LoadSourceParams>(op.params));
      case OpKind::select_by_filter: {
        const auto& where = std::get<lang::SelectByFilterParams>(op.params).where;
        std::vector<Record> out;
        for (const auto& row : records(op.inputs[0]))
          if (evaluate_filter(where, row)) out.push_back(row);
        return out;
      }
      case OpKind::map_fields: {
        const auto& p = std::get<lang::MapFieldsParams>(op.params);
        std::vector<Record> out;
        for (const auto& row : records(op.inputs[0])) {
          Record next = p.keep ? row : Record{};
          for (const auto& [field, tmpl] : p.set) next.set(field, render_placeholders(tmpl, row_lookup(row)));
          out.push_back(std::move(next));
        }
        return out;
      }
      case OpKind::llm_transform:
        return transform(std::get<lang::LlmTransformParams>(op.params), records(op.inputs[0]), stats);
      case OpKind::concatenate: {
        std::vector<Record> out;
        for (const auto& in : op.inputs) {
          const auto& rows = records(in);
          out.insert(out.end(), rows.begin(), rows.end());
        }
        return out;
      }
      case OpKind::deduplicate: {
        const auto& p = std::get<lang::DeduplicateParams>(op.params);
        auto out = deduplicate_by_text_hash(records(op.inputs[0]), p.key, p.lowercase, p.ignore_non_character);
        stats.dropped = stats.rows_in - out.size();
        return out;
      }
      case OpKind::sample_n: {
        const auto& p = std::get<lang::SampleNParams>(op.params);
        const std::uint64_t seed = p.seed ? static_cast<std::uint64_t>(*p.seed) : derive_seed(seed_, fnv1a64(op.label));
        return enforce_budget(records(op.inputs[0]), static_cast<std::size_t>(p.n), seed);
      }
      case OpKind::to_dialogs: {
        const auto& p = std::get<lang::ToDialogsParams>(op.params);
        auto conv = to_dialogs(records(op.inputs[0]), p.user, p.assistant);
        stats.dropped = conv.dropped;
        return std::move(conv.samples);
      }
      case OpKind::dump: {
        const auto* samples = std::get_if<DialogDataset>(&tables_.at(op.inputs[0]));
        if (samples == nullptr) throw OpFault{"dump input is not a dialog table"};
        return enforce_budget(*samples, budget_.max_rows, derive_seed(seed_, fnv1a64("budget")));
      }
    }
    throw OpFault{"unknown operator"};
  }

  std::vector<Record> load(const lang::LoadSourceParams& p) {
    const pool::DataSourceMeta* source = task_.find_source(p.source);
    if (source == nullptr) throw OpFault{"unknown source '" + p.source + "'"};
    std::vector<Json> raw;
    try {
      raw = pool::load_source_records(*source);
    } catch (const Error& e) {
      throw OpFault{e.what()};
    }
    if (raw.size() > limits_.per_op_rows && !(p.limit && static_cast<std::size_t>(*p.limit) <= limits_.per_op_rows))
      throw OpFault{"source has " + std::to_string(raw.size()) + " rows, over the per-op limit"};
    std::vector<Record> rows;
    const std::size_t n = p.limit ? std::min(raw.size(), static_cast<std::size_t>(*p.limit)) : raw.size();
    rows.reserve(n);
    for (std::size_t i = 0; i < n; ++i) rows.push_back(Record::from_json(raw[i]));
    return rows;
  }

  std::vector<Record> transform(const lang::LlmTransformParams& p, const std::vector<Record>& rows, OpStats& stats) {
    if (gateway_ == nullptr) throw OpFault{"llm_transform needs a gateway"};
    constexpr std::size_t kChunk = 64;
    std::vector<Record> out;
    for (std::size_t begin = 0; begin < rows.size(); begin += kChunk) {
      if (steady_clock::now() > deadline_) throw OpFault{"wall-clock limit exceeded"};
      const std::size_t end = std::min(rows.size(), begin + kChunk);
      std::vector<llm::ChatRequest> requests;
      for (std::size_t i = begin; i < end; ++i) {
        std::vector<llm::Message> messages;
        if (!p.system.empty()) messages.push_back({"system", p.system});
        messages.push_back({"user", render_placeholders(p.prompt, row_lookup(rows[i]))});
        requests.push_back(gateway_->make_request(llm::Tag::transform, std::move(messages), p.temperature));
      }
      const auto results = gateway_->complete_batch(requests);
      for (std::size_t k = 0; k < results.size(); ++k) {
        if (!results[k].ok()) throw OpFault{"gateway: " + results[k].error};
        Record row = rows[begin + k];
        if (parse_into(p, results[k].response->text, row)) out.push_back(std::move(row));
        else ++stats.dropped;
      }
    }
    return out;
  }

  static bool parse_into(const lang::LlmTransformParams& p, const std::string& text, Record& row) {
    switch (p.parser) {
      case lang::ResponseParser::raw:
        if (trim(text).empty()) return false;
        row.set(p.output, std::string(trim(text)));
        return true;
      case lang::ResponseParser::json: {
        const auto obj = extract_json_object(text);
        if (!obj) return false;
        const Record parsed = Record::from_json(*obj);
        for (const auto& [k, v] : parsed.fields()) row.set(k, v);
        return true;
      }
      case lang::ResponseParser::grade_box:
        try {
          const auto verdict = verifier::parse_verdict(text);
          row.set("grade", std::string(1, verifier::grade_letter(verdict.grade)));
          row.set("reason", verdict.reason);
          return true;
        } catch (const JudgeParseError&) {
          return false;
        }
    }
    return false;
  }

  const pool::TaskSpec& task_;
  const Budget& budget_;
  std::uint64_t seed_;
  llm::Gateway* gateway_;
  const Limits& limits_;
  fs::path run_dir_;
  steady_clock::time_point deadline_;
  std::unordered_map<std::string, Table> tables_;
};

}  // namespace

ExecResult execute(const lang::Recipe& recipe, const pool::TaskSpec& task, const Budget& budget, std::uint64_t seed,
                   llm::Gateway* gateway, const Limits& limits, const fs::path& run_dir) {
  try {
    return Interpreter(task, budget, seed, gateway, limits, run_dir).run(recipe);
  } catch (const std::exception& e) {
    ExecResult result;
    result.report.seed = seed;
    result.report.status = ExecStatus::exec_failure;
    result.report.failure_detail = std::string("internal fault: ") + e.what();
    return result;
  }
}

// ---------------------------------------------------------------------------
// script-runner contract

Json to_json(const ShimInvocation& inv) {
  Json j{{"script", inv.script},
         {"verification", inv.verification ? Json(*inv.verification) : Json(nullptr)},
         {"workdir", inv.workdir.string()},
         {"limits",
          {{"wall_clock_ms", inv.limits.wall_clock.count()}, {"max_output_rows", inv.max_output_rows}}},
         {"sources", inv.sources},
         {"gateway_proxy", inv.gateway_proxy}};
  return j;
}

ShimInvocation shim_invocation_from_json(const Json& j) {
  ShimInvocation inv;
  inv.script = j.at("script").get<std::string>();
  if (j.contains("verification") && j["verification"].is_string()) inv.verification = j["verification"].get<std::string>();
  inv.workdir = j.at("workdir").get<std::string>();
  if (j.contains("limits")) {
    inv.limits.wall_clock = milliseconds(j["limits"].value("wall_clock_ms", std::int64_t{300000}));
    inv.max_output_rows = j["limits"].value("max_output_rows", std::size_t{10000});
  }
  if (j.contains("sources")) inv.sources = j["sources"].get<std::map<std::string, std::string>>();
  inv.gateway_proxy = j.value("gateway_proxy", std::string{});
  return inv;
}

void write_shim_invocation(const ShimInvocation& invocation, const fs::path& path) {
  write_file_atomic(path, pretty_dump(to_json(invocation)));
}

ExecResult ingest_shim_output(const fs::path& workdir, const fs::path& report_path, std::size_t max_rows,
                              std::uint64_t seed) {
  ExecResult result;
  result.report.seed = seed;
  const auto fail = [&](std::string detail) {
    result.dataset.clear();
    result.report.status = ExecStatus::exec_failure;
    result.report.produced = 0;
    result.report.failure_detail = std::move(detail);
    return result;
  };

  try {
    result.report = exec_report_from_json(Json::parse(read_file(report_path)));
    result.report.seed = seed;
  } catch (const std::exception& e) {
    return fail(std::string("unreadable runner report: ") + e.what());
  }
  if (result.report.status == ExecStatus::exec_failure) return fail(result.report.failure_detail);

  const fs::path processed = workdir / "data" / "processed";
  fs::path output;
  if (!result.report.output_path.empty()) {
    output = workdir / result.report.output_path;
  } else {
    std::vector<fs::path> candidates;
    std::error_code ec;
    for (const auto& entry : fs::directory_iterator(processed, ec))
      if (entry.is_regular_file() && entry.path().extension() == ".jsonl") candidates.push_back(entry.path());
    std::sort(candidates.begin(), candidates.end());
    if (!candidates.empty()) output = candidates.front();
  }
  std::error_code ec;
  if (output.empty() || !fs::exists(output, ec)) return fail("runner produced no output under data/processed/");

  LoadedDataset loaded;
  try {
    loaded = load_dialog_file(output);
  } catch (const std::exception& e) {
    return fail(std::string("unreadable runner output: ") + e.what());
  }
  if (loaded.dataset.empty() && loaded.check.ok) return fail("runner produced an empty dataset");
  result.dataset = enforce_budget(std::move(loaded.dataset), max_rows, derive_seed(seed, fnv1a64("budget")));
  result.report.produced = result.dataset.size();
  result.report.output_path = fs::relative(output, workdir, ec).generic_string();
  if (!loaded.check.ok) {
    result.report.status = ExecStatus::format_violation;
    result.report.failure_detail = "sample " + std::to_string(loaded.check.issues.front().sample_index) + ": " +
                                   loaded.check.issues.front().message;
  } else {
    result.report.status = ExecStatus::ok;
  }
  return result;
}

}  // namespace recipeforge::exec
