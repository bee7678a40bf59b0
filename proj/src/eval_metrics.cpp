#include "recipeforge/eval_metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <unordered_map>

#include "recipeforge/error.hpp"
#include "recipeforge/task_pool.hpp"
#include "recipeforge/template.hpp"

namespace recipeforge::metrics {

// ---------------------------------------------------------------------------
// candidate sets

void CandidateSet::validate() const {
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& c = candidates[i];
    if (c.mean_score.has_value() != (c.status == exec::ExecStatus::ok))
      throw ContractError("candidate " + std::to_string(i) + " has status " + std::string(exec::to_string(c.status)) +
                          (c.mean_score ? " but a score" : " but no score"));
  }
}

double dvs_avg(const CandidateSet& set) {
  if (set.candidates.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& c : set.candidates) sum += c.mean_score.value_or(0.0);
  return 100.0 * sum / static_cast<double>(set.candidates.size());
}

std::vector<std::string> oracle_topk(const CandidateSet& set, std::size_t k) {
  if (k > set.n()) throw BoundsError("k = " + std::to_string(k) + " exceeds N = " + std::to_string(set.n()));
  std::vector<std::size_t> order(set.n());
  std::iota(order.begin(), order.end(), 0);
  const auto score = [&](std::size_t i) {
    return set.candidates[i].mean_score.value_or(-std::numeric_limits<double>::infinity());
  };
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return score(a) > score(b); });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < k; ++i) out.push_back(set.candidates[order[i]].recipe_id);
  return out;
}

Json to_json(const CandidateSet& set) {
  Json list = Json::array();
  for (std::size_t i = 0; i < set.candidates.size(); ++i) {
    const auto& c = set.candidates[i];
    list.push_back({{"index", i},
                    {"recipe_id", c.recipe_id},
                    {"status", exec::to_string(c.status)},
                    {"mean_score", c.mean_score ? Json(*c.mean_score) : Json("FAIL")},
                    {"reward", c.reward},
                    {"produced", c.produced},
                    {"judge_errors", c.judge_errors},
                    {"failure_detail", c.failure_detail},
                    {"artifacts", c.artifacts}});
  }
  return Json{{"task_id", set.task_id}, {"n", set.n()}, {"dvs_avg", dvs_avg(set)}, {"candidates", std::move(list)}};
}

CandidateSet candidate_set_from_json(const Json& j) {
  CandidateSet set;
  set.task_id = j.at("task_id").get<std::string>();
  for (const auto& c : j.at("candidates")) {
    Candidate cand;
    cand.recipe_id = c.at("recipe_id").get<std::string>();
    cand.status = exec::exec_status_from_string(c.at("status").get<std::string>());
    if (c.at("mean_score").is_number()) cand.mean_score = c["mean_score"].get<double>();
    cand.reward = c.value("reward", 0.0);
    cand.produced = c.value("produced", std::size_t{0});
    cand.judge_errors = c.value("judge_errors", std::size_t{0});
    cand.failure_detail = c.value("failure_detail", std::string{});
    if (c.contains("artifacts")) cand.artifacts = c["artifacts"].get<std::map<std::string, std::string>>();
    set.candidates.push_back(std::move(cand));
  }
  set.validate();
  return set;
}

// ---------------------------------------------------------------------------
// review checklist

std::string_view to_string(Check check) noexcept {
  switch (check) {
    case Check::pass: return "pass";
    case Check::flag: return "flag";
    case Check::not_applicable: return "n/a";
  }
  return "n/a";
}

AnswerShape answer_shape_from_hint(std::string_view hint) {
  const std::string h = to_lower_ascii(hint);
  if (h.find("json") != std::string::npos) return AnswerShape::json;
  if (h.find("multiple-choice") != std::string::npos || h.find("multiple choice") != std::string::npos ||
      h.find("mcq") != std::string::npos || h.find("letter") != std::string::npos ||
      h.find("option") != std::string::npos)
    return AnswerShape::choice_letter;
  if (h.find("numeric") != std::string::npos || h.find("number") != std::string::npos ||
      h.find("integer") != std::string::npos)
    return AnswerShape::numeric;
  return AnswerShape::unknown;
}

namespace {

std::string last_line(std::string_view text) {
  const auto lines = split_lines(text);
  for (auto it = lines.rbegin(); it != lines.rend(); ++it)
    if (const auto t = trim(*it); !t.empty()) return std::string(t);
  return {};
}

/// Strips "answer:", "the answer is", \boxed{...}, brackets and trailing
/// punctuation around a short final answer.
std::string core_answer(std::string_view line) {
  std::string s(trim(line));
  std::string lower = to_lower_ascii(s);
  for (const std::string_view prefix : {"the final answer is", "final answer:", "the answer is", "answer:", "answer"}) {
    if (lower.rfind(prefix, 0) == 0) {
      s = std::string(trim(std::string_view(s).substr(prefix.size())));
      break;
    }
  }
  if (s.rfind("\\boxed{", 0) == 0 && !s.empty() && s.back() == '}') s = s.substr(7, s.size() - 8);
  while (!s.empty() && (s.back() == '.' || s.back() == ')' || s.back() == ']' || s.back() == '$' || s.back() == ' '))
    s.pop_back();
  while (!s.empty() && (s.front() == '(' || s.front() == '[' || s.front() == '$' || s.front() == ' '))
    s.erase(s.begin());
  return s;
}

}  // namespace

bool answer_matches_shape(std::string_view answer, AnswerShape shape) {
  switch (shape) {
    case AnswerShape::unknown: return true;
    case AnswerShape::json: {
      const auto obj = exec::extract_json_object(answer);
      return obj.has_value();
    }
    case AnswerShape::choice_letter: {
      const std::string core = core_answer(last_line(answer));
      return core.size() == 1 && std::isupper(static_cast<unsigned char>(core[0]));
    }
    case AnswerShape::numeric: {
      std::string core = core_answer(last_line(answer));
      core.erase(std::remove(core.begin(), core.end(), ','), core.end());
      if (core.empty()) return false;
      double v = 0;
      const auto res = std::from_chars(core.data(), core.data() + core.size(), v);
      return res.ec == std::errc{} && res.ptr == core.data() + core.size();
    }
  }
  return true;
}

namespace {

bool is_context_field(std::string_view name) {
  static const std::set<std::string, std::less<>> kNames = {"passage", "context", "document", "article", "paragraph",
                                                            "background", "story", "evidence", "reference", "table"};
  return kNames.contains(to_lower_ascii(name));
}

/// Base (source, field) pairs feeding each field of a table. The "*" entry
/// collects fields merged in opaquely (json-parsed model output).
using Origin = std::set<std::pair<std::string, std::string>>;
using Lineage = std::map<std::string, Origin>;

Origin origin_of_template(std::string_view tmpl, const Lineage& in) {
  Origin out;
  std::vector<std::string> names;
  try {
    names = template_placeholders(tmpl);
  } catch (const TemplateError&) {
    return out;
  }
  for (const auto& n : names) {
    if (const auto it = in.find(n); it != in.end()) out.insert(it->second.begin(), it->second.end());
    else if (const auto star = in.find("*"); star != in.end()) out.insert(star->second.begin(), star->second.end());
  }
  return out;
}

}  // namespace

ReviewChecklist oracle_checklist(const lang::Recipe& recipe, const pool::TaskSpec& task,
                                 const exec::DialogDataset* sample, std::string recipe_id) {
  using lang::OpKind;
  ReviewChecklist out;
  out.task_id = task.id;
  out.recipe_id = std::move(recipe_id);

  // field lineage through the op graph, plus the loads each table descends from
  std::map<std::string, Lineage> lineage;
  std::map<std::string, std::set<std::string>> loads;
  const lang::ToDialogsParams* dialogs = nullptr;
  std::string dialogs_input;
  for (const auto& op : recipe.pipeline) {
    Lineage here;
    std::set<std::string> from;
    for (const auto& in : op.inputs) {
      if (const auto it = lineage.find(in); it != lineage.end())
        for (const auto& [f, o] : it->second) here[f].insert(o.begin(), o.end());
      if (const auto it = loads.find(in); it != loads.end()) from.insert(it->second.begin(), it->second.end());
    }
    switch (op.kind()) {
      case OpKind::load_source: {
        const auto& p = std::get<lang::LoadSourceParams>(op.params);
        from.insert(p.source);
        if (const auto* src = task.find_source(p.source))
          for (const auto& f : src->field_names) here[f].insert({p.source, f});
        break;
      }
      case OpKind::map_fields: {
        const auto& p = std::get<lang::MapFieldsParams>(op.params);
        Lineage next = p.keep ? here : Lineage{};
        for (const auto& [f, tmpl] : p.set) next[f] = origin_of_template(tmpl, here);
        here = std::move(next);
        break;
      }
      case OpKind::llm_transform: {
        const auto& p = std::get<lang::LlmTransformParams>(op.params);
        Origin o = origin_of_template(p.prompt, here);
        switch (p.parser) {
          case lang::ResponseParser::raw: here[p.output] = o; break;
          case lang::ResponseParser::json: here["*"].insert(o.begin(), o.end()); break;
          case lang::ResponseParser::grade_box:
            here["grade"] = o;
            here["reason"] = o;
            break;
        }
        break;
      }
      case OpKind::to_dialogs:
        dialogs = &std::get<lang::ToDialogsParams>(op.params);
        if (!op.inputs.empty()) dialogs_input = op.inputs.front();
        break;
      default:
        break;
    }
    lineage[op.label] = std::move(here);
    loads[op.label] = std::move(from);
  }

  // format alignment
  const AnswerShape shape = answer_shape_from_hint(task.benchmark.answer_format_hint);
  if (dialogs == nullptr) {
    out.format_alignment = {Check::flag, "no to_dialogs stage; output is not in dialog format"};
  } else if (sample != nullptr && !sample->empty()) {
    const auto check = exec::check_training_format(*sample);
    if (!check.ok) {
      out.format_alignment = {Check::flag, "dialog format violated at sample " +
                                               std::to_string(check.issues.front().sample_index) + ": " +
                                               check.issues.front().message};
    } else if (shape == AnswerShape::unknown) {
      out.format_alignment = {Check::pass, "dialog format ok; benchmark states no answer format to match"};
    } else {
      std::size_t matching = 0;
      for (const auto& s : *sample)
        if (answer_matches_shape(s.dialogs.back().content, shape)) ++matching;
      const double rate = static_cast<double>(matching) / static_cast<double>(sample->size());
      const std::string detail = std::to_string(matching) + " of " + std::to_string(sample->size()) +
                                 " answers match the expected format (" + task.benchmark.answer_format_hint + ")";
      out.format_alignment = {rate >= 0.9 ? Check::pass : Check::flag, detail};
    }
  } else if (shape == AnswerShape::unknown) {
    out.format_alignment = {Check::pass, "dialog stage present; benchmark states no answer format to match"};
  } else {
    out.format_alignment = {Check::not_applicable,
                            "no dataset sample supplied; answer format (" + task.benchmark.answer_format_hint +
                                ") needs manual review"};
  }

  // context integrity
  if (dialogs == nullptr) {
    out.context_integrity = {Check::not_applicable, "no to_dialogs stage"};
  } else {
    const Lineage& in = lineage[dialogs_input];
    const Origin user_origin = origin_of_template(dialogs->user, in);
    std::vector<std::string> missing;
    std::size_t context_fields = 0;
    for (const auto& source_id : loads[dialogs_input]) {
      const auto* src = task.find_source(source_id);
      if (src == nullptr) continue;
      for (const auto& f : src->field_names) {
        if (!is_context_field(f)) continue;
        ++context_fields;
        if (!user_origin.contains({source_id, f})) missing.push_back(source_id + "." + f);
      }
    }
    if (context_fields == 0) {
      out.context_integrity = {Check::not_applicable, "sources carry no context fields"};
    } else if (missing.empty()) {
      out.context_integrity = {Check::pass, "every context field reaches the user turn"};
    } else {
      std::string detail = "context dropped from the user turn: ";
      for (std::size_t i = 0; i < missing.size(); ++i) detail += (i > 0 ? ", " : "") + missing[i];
      out.context_integrity = {Check::flag, detail};
    }
  }

  // comprehensiveness
  const auto has = [&](OpKind kind) {
    return std::any_of(recipe.pipeline.begin(), recipe.pipeline.end(),
                       [kind](const lang::PipelineOp& op) { return op.kind() == kind; });
  };
  if (!has(OpKind::select_by_filter)) out.comprehensiveness_notes.push_back("no filtering stage");
  if (!has(OpKind::deduplicate)) out.comprehensiveness_notes.push_back("no deduplication stage");
  if (!has(OpKind::to_dialogs)) out.comprehensiveness_notes.push_back("no dialog formatting stage");
  std::set<std::string> used;
  for (const auto& op : recipe.pipeline)
    if (op.kind() == OpKind::load_source) used.insert(std::get<lang::LoadSourceParams>(op.params).source);
  if (used.size() == 1) out.comprehensiveness_notes.push_back("single source only");
  return out;
}

Json to_json(const ReviewChecklist& c) {
  return Json{{"task_id", c.task_id},
              {"recipe_id", c.recipe_id},
              {"format_alignment", {{"verdict", to_string(c.format_alignment.verdict)}, {"detail", c.format_alignment.detail}}},
              {"context_integrity", {{"verdict", to_string(c.context_integrity.verdict)}, {"detail", c.context_integrity.detail}}},
              {"comprehensiveness_notes", c.comprehensiveness_notes},
              {"reviewer_notes", c.reviewer_notes},
              {"selected", c.selected}};
}

std::string render_checklist_markdown(const ReviewChecklist& c) {
  std::string out = "# Review: " + c.recipe_id + " (" + c.task_id + ")\n\n";
  out += "- Format alignment: " + std::string(to_string(c.format_alignment.verdict)) + " - " +
         c.format_alignment.detail + "\n";
  out += "- Context integrity: " + std::string(to_string(c.context_integrity.verdict)) + " - " +
         c.context_integrity.detail + "\n";
  out += "- Comprehensiveness:";
  if (c.comprehensiveness_notes.empty()) out += " filter, dedup and formatting stages present\n";
  else {
    out += '\n';
    for (const auto& n : c.comprehensiveness_notes) out += "  - " + n + "\n";
  }
  out += "\n## Reviewer notes\n\n" + (c.reviewer_notes.empty() ? std::string("(none)") : c.reviewer_notes) + "\n";
  out += "\nSelected: " + std::string(c.selected ? "yes" : "no (reviewer decides)") + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// correlation

double pearson_r(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw SizeError("series lengths differ");
  if (x.size() < 2) throw SizeError("need at least two pairs");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw DegenerateError("a series is constant");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double pearson_r(const CorrelationInput& input) { return pearson_r(input.metric, input.downstream); }

namespace {

/// Continued fraction for the incomplete beta (modified Lentz).
double beta_cf(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 1e-15;
  constexpr double kTiny = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace

double regularized_incomplete_beta(double a, double b, double x) {
  if (!(a > 0 && b > 0)) throw BoundsError("incomplete beta needs positive shape parameters");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_cf(a, b, x) / a;
  return 1.0 - front * beta_cf(b, a, 1.0 - x) / b;
}

double student_t_two_sided(double t, double df) {
  if (!(df > 0)) throw BoundsError("degrees of freedom must be positive");
  if (std::isinf(t)) return 0.0;
  return regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
}

double pearson_p(double r, std::size_t n) {
  if (n < 3) throw BoundsError("n ≥ 3 required (got " + std::to_string(n) + ")");
  if (!(r >= -1.0 && r <= 1.0)) throw BoundsError("r must lie in [-1, 1]");
  if (std::fabs(r) >= 1.0) return 0.0;
  const double df = static_cast<double>(n - 2);
  const double t = r * std::sqrt(df / (1.0 - r * r));
  return student_t_two_sided(t, df);
}

namespace {

std::vector<std::string> csv_fields(std::string_view line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.emplace_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.emplace_back(trim(cur));
  return out;
}

double csv_number(const std::string& s, std::size_t line_no) {
  double v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc{} || res.ptr != s.data() + s.size() || !std::isfinite(v))
    throw ParseError("line " + std::to_string(line_no) + ": '" + s + "' is not a finite number");
  return v;
}

}  // namespace

CorrelationInput parse_correlation_csv(std::string_view csv) {
  CorrelationInput input;
  bool header = true;
  std::size_t width = 0;
  std::size_t line_no = 0;
  for (const auto& line : split_lines(csv)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = csv_fields(line);
    if (header) {
      width = fields.size();
      if (width != 2 && width != 3) throw ParseError("expected 2 or 3 columns in the header, got " + std::to_string(width));
      input.metric_label = fields[width - 2];
      input.downstream_label = fields[width - 1];
      header = false;
      continue;
    }
    if (fields.size() != width)
      throw ParseError("line " + std::to_string(line_no) + ": expected " + std::to_string(width) + " columns");
    if (width == 3) input.labels.push_back(fields[0]);
    input.metric.push_back(csv_number(fields[width - 2], line_no));
    input.downstream.push_back(csv_number(fields[width - 1], line_no));
  }
  if (header) throw ParseError("empty CSV");
  if (input.metric.size() < 3) throw BoundsError("n ≥ 3 required (got " + std::to_string(input.metric.size()) + ")");
  return input;
}

CorrelationInput load_correlation_csv(const std::filesystem::path& path) { return parse_correlation_csv(read_file(path)); }

}  // namespace recipeforge::metrics
