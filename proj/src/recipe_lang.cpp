#include "recipeforge/recipe_lang.hpp"

#include <charconv>
#include <map>
#include <set>

#include "recipeforge/error.hpp"
#include "recipeforge/prompt_assets.hpp"
#include "recipeforge/task_pool.hpp"
#include "recipeforge/template.hpp"
#include "recipeforge/text.hpp"

namespace recipeforge::lang {

// ---------------------------------------------------------------------------
// validation

namespace {

enum class TableType { records, dialogs };

Diagnostic invalid(std::string code, std::string message) {
  return Diagnostic{Diagnostic::Kind::validation, 0, 0, std::move(code), std::move(message)};
}

void check_source_ref(const std::string& id, const pool::TaskSpec& task, const std::string& where,
                      std::vector<Diagnostic>& out) {
  if (id == task.benchmark.id) {
    out.push_back(invalid("benchmark contamination",
                          where + " uses benchmark '" + id + "' as training data"));
  } else if (task.find_source(id) == nullptr) {
    out.push_back(invalid("undeclared source", where + " references undeclared source '" + id + "'"));
  }
}

}  // namespace

std::vector<Diagnostic> validate_recipe(const Recipe& recipe, const pool::TaskSpec& task) {
  std::vector<Diagnostic> out;
  for (const auto& sel : recipe.selections) check_source_ref(sel.dataset_id, task, "selection", out);

  std::map<std::string, TableType> defined;
  for (std::size_t i = 0; i < recipe.pipeline.size(); ++i) {
    const PipelineOp& op = recipe.pipeline[i];
    const std::string where = "op '" + op.label + "'";
    bool inputs_known = true;
    bool dialog_input = false;
    for (const auto& in : op.inputs) {
      const auto it = defined.find(in);
      if (it == defined.end()) {
        out.push_back(invalid("dangling label", where + " reads '" + in + "', which is not defined earlier"));
        inputs_known = false;
      } else if (it->second == TableType::dialogs) {
        dialog_input = true;
      }
    }

    TableType produced = TableType::records;
    switch (op.kind()) {
      case OpKind::load_source:
        check_source_ref(std::get<LoadSourceParams>(op.params).source, task, where, out);
        break;
      case OpKind::to_dialogs:
        produced = TableType::dialogs;
        break;
      case OpKind::dump:
        produced = TableType::dialogs;
        if (i + 1 != recipe.pipeline.size())
          out.push_back(invalid("non-terminal dump", where + " is a dump but not the final op"));
        if (inputs_known && !dialog_input)
          out.push_back(invalid("missing to_dialogs before dump", where + " dumps rows that were not passed through to_dialogs"));
        break;
      default:
        break;
    }
    if (op.kind() != OpKind::dump && dialog_input)
      out.push_back(invalid("dialog input", where + " consumes dialog samples; only dump may follow to_dialogs"));
    defined.emplace(op.label, produced);
  }
  if (recipe.pipeline.empty() || recipe.pipeline.back().kind() != OpKind::dump)
    out.push_back(invalid("missing terminal dump", "the pipeline must end with a dump op"));
  return out;
}

// ---------------------------------------------------------------------------
// prompts

std::string render_source_examples(const pool::TaskSpec& task, std::size_t source_index) {
  const auto& source = task.sources.at(source_index);
  std::string out = "Fields: ";
  for (std::size_t i = 0; i < source.field_names.size(); ++i) {
    if (i > 0) out += ", ";
    out += source.field_names[i];
  }
  for (const auto& record : source.preview) {
    out += '\n';
    out += canonical_dump(record);
  }
  return out;
}

namespace {

Json datasets_context(const pool::TaskSpec& task) {
  Json datasets = Json::array();
  for (std::size_t i = 0; i < task.sources.size(); ++i)
    datasets.push_back({{"dataset_id", task.sources[i].id}, {"examples", render_source_examples(task, i)}});
  return datasets;
}

}  // namespace

std::string render_plan_prompt(const pool::TaskSpec& task) {
  const Json context{{"task_description", task.instruction},
                     {"benchmark", {{"name", task.benchmark.id}, {"description", task.benchmark.description}}},
                     {"datasets", datasets_context(task)}};
  return render_prompt_template(assets::plan_prompt_v1(), context);
}

std::string render_code_prompt(const pool::TaskSpec& task, const std::optional<std::string>& plan) {
  if (!plan) throw PreconditionError("the code prompt needs a plan");
  const Json context{{"datasets", datasets_context(task)},
                     {"plan", *plan},
                     {"tool_info", std::string(trim(assets::tool_info_v1()))}};
  return render_prompt_template(assets::code_prompt_v1(), context);
}

GenerationPrompts render_generation_prompts(const pool::TaskSpec& task,
                                            const std::optional<std::string>& plan) {
  GenerationPrompts prompts;
  prompts.plan_prompt = render_plan_prompt(task);
  if (plan) prompts.code_prompt = render_code_prompt(task, plan);
  return prompts;
}

// ---------------------------------------------------------------------------
// model output handling

RecipeBlocks extract_recipe_blocks(std::string_view model_output) {
  std::vector<std::string> blocks;
  bool inside = false;
  std::string current;
  bool first_line = true;
  for (const auto& line : split_lines(model_output)) {
    std::string_view t = line;
    while (!t.empty() && (t.front() == ' ' || t.front() == '\t')) t.remove_prefix(1);
    const bool fence = t.substr(0, 3) == "```";
    if (!inside) {
      if (fence) {
        inside = true;
        current.clear();
        first_line = true;
      }
      continue;
    }
    if (fence && trim(t).find_first_not_of('`') == std::string_view::npos) {
      blocks.push_back(std::move(current));
      current.clear();
      inside = false;
      if (blocks.size() == 2) break;
      continue;
    }
    if (!first_line) current += '\n';
    current += line;
    first_line = false;
  }
  if (blocks.size() < 2)
    throw ExtractionError("expected two fenced code blocks, found " + std::to_string(blocks.size()));
  return RecipeBlocks{std::move(blocks[0]), std::move(blocks[1])};
}

namespace {

/// Offset one past the bracket matching the '[' at `open`, or npos.
std::size_t matching_bracket(std::string_view text, std::size_t open) {
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
    else if (c == '[' || c == '{') ++depth;
    else if (c == ']' || c == '}') {
      if (--depth == 0) return i + 1;
    }
  }
  return std::string_view::npos;
}

std::optional<std::int64_t> sample_num_of(const Json& v) {
  if (v.is_number_integer()) return v.get<std::int64_t>();
  if (v.is_string()) {
    const std::string s(trim(v.get<std::string>()));
    std::int64_t out = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
    if (!s.empty() && res.ec == std::errc{} && res.ptr == s.data() + s.size()) return out;
  }
  return std::nullopt;
}

}  // namespace

std::vector<Selection> parse_plan_selections(std::string_view plan) {
  std::size_t heading = std::string_view::npos;
  std::size_t offset = 0;
  for (const auto& line : split_lines(plan)) {
    if (starts_with_ci(trim(line), "## training data")) {
      heading = offset + line.size();
      break;
    }
    offset += line.size() + 1;
  }
  if (heading == std::string_view::npos) return {};
  const std::size_t open = plan.find('[', heading);
  if (open == std::string_view::npos) return {};
  const std::size_t close = matching_bracket(plan, open);
  if (close == std::string_view::npos) return {};

  Json list;
  try {
    list = Json::parse(plan.substr(open, close - open));
  } catch (const Json::parse_error&) {
    return {};
  }
  if (!list.is_array()) return {};
  std::vector<Selection> out;
  for (const auto& item : list) {
    if (!item.is_object() || !item.contains("dataset_id") || !item["dataset_id"].is_string()) continue;
    Selection s;
    s.dataset_id = item["dataset_id"].get<std::string>();
    if (item.contains("split") && item["split"].is_string()) s.split = item["split"].get<std::string>();
    if (item.contains("name") && item["name"].is_string()) s.name = item["name"].get<std::string>();
    if (item.contains("sample_num")) s.sample_num = sample_num_of(item["sample_num"]).value_or(0);
    if (item.contains("reason") && item["reason"].is_string()) s.reason = item["reason"].get<std::string>();
    out.push_back(std::move(s));
  }
  return out;
}

std::map<OpKind, double> op_frequency(std::span<const Recipe> recipes) {
  if (recipes.empty()) throw EmptyInputError("op_frequency needs at least one recipe");
  std::map<OpKind, std::size_t> totals;
  for (const auto& r : recipes)
    for (const auto& op : r.pipeline) ++totals[op.kind()];
  std::map<OpKind, double> out;
  for (const auto& [kind, count] : totals)
    out[kind] = static_cast<double>(count) / static_cast<double>(recipes.size());
  return out;
}

}  // namespace recipeforge::lang
