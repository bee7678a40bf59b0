#include "recipeforge/mock_policy.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "recipeforge/recipe_lang.hpp"
#include "recipeforge/text.hpp"

namespace recipeforge::mock {

namespace {

const std::string& last_message(const llm::ChatRequest& request) {
  static const std::string kEmpty;
  return request.messages.empty() ? kEmpty : request.messages.back().content;
}

/// Text after `heading` up to the next line starting with `stop` (or end).
std::string section(std::string_view text, std::string_view heading, std::string_view stop) {
  const auto lines = split_lines(text);
  std::string out;
  bool inside = false;
  for (const auto& line : lines) {
    if (!inside) {
      if (line == heading) inside = true;
      continue;
    }
    if (!stop.empty() && line.rfind(stop, 0) == 0) break;
    out += line;
    out += '\n';
  }
  return out;
}

struct ListedSource {
  std::string id;
  std::vector<std::string> fields;
};

std::vector<ListedSource> listed_sources(std::string_view prompt) {
  std::vector<ListedSource> out;
  const std::string block = section(prompt, "# Available Hugging Face Training Datasets", "# ");
  for (const auto& line : split_lines(block)) {
    if (line.rfind("## ", 0) == 0) {
      out.push_back({line.substr(3), {}});
    } else if (line.rfind("Fields: ", 0) == 0 && !out.empty()) {
      std::string_view rest = std::string_view(line).substr(8);
      while (!rest.empty()) {
        const auto comma = rest.find(',');
        const auto f = trim(rest.substr(0, comma));
        if (!f.empty()) out.back().fields.emplace_back(f);
        if (comma == std::string_view::npos) break;
        rest.remove_prefix(comma + 1);
      }
    }
  }
  return out;
}

std::string pick_field(const std::vector<std::string>& fields, std::initializer_list<std::string_view> preferred,
                       const std::set<std::string>& taken) {
  for (const auto want : preferred)
    for (const auto& f : fields)
      if (to_lower_ascii(f) == want && !taken.contains(f)) return f;
  for (const auto& f : fields)
    if (!taken.contains(f)) return f;
  return {};
}

}  // namespace

std::string keywords_response(const llm::ChatRequest& request) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  const auto add = [&](std::string word) {
    word = to_lower_ascii(trim(word));
    if (word.size() >= 3 && out.size() < 4 && seen.insert(word).second) out.push_back(word);
  };
  std::string description;
  for (const auto& line : split_lines(last_message(request))) {
    if (line.rfind("Domain: ", 0) == 0) add(line.substr(8));
    else if (line.rfind("Description: ", 0) == 0) description = line.substr(13);
  }
  std::vector<std::string> words;
  for (const auto w : split_words(normalize_text(description, true, true))) words.emplace_back(w);
  std::stable_sort(words.begin(), words.end(), [](const auto& a, const auto& b) { return a.size() > b.size(); });
  for (const auto& w : words) add(w);
  for (const char* filler : {"instruction", "dataset", "question"}) add(filler);
  std::string text;
  for (const auto& k : out) text += k + "\n";
  return text;
}

std::string plan_response(const llm::ChatRequest& request) {
  const auto sources = listed_sources(last_message(request));
  Json list = Json::array();
  if (!sources.empty()) {
    const std::size_t start = request.sample_index % sources.size();
    const std::size_t take = std::min<std::size_t>(sources.size(), 1 + request.sample_index % 2);
    for (std::size_t k = 0; k < take; ++k) {
      const auto& s = sources[(start + k) % sources.size()];
      list.push_back(Json{{"dataset_id", s.id}, {"split", "train"}, {"name", "default"}, {"sample_num", "500"},
                          {"reason", "fields " + std::to_string(s.fields.size()) + " match the target task"}});
    }
  }
  std::string plan = "## Training Data\n" + list.dump(4) + "\n\n## Data Processing Workflow\n";
  plan += "1. Load each selected dataset and map it onto a question and an answer field.\n";
  plan += "2. Drop rows with empty answers and deduplicate on the question text.\n";
  plan += "3. Format every row as a single user/assistant exchange and save it under data/processed/.\n";
  return plan;
}

std::string code_response(const llm::ChatRequest& request) {
  const std::string& prompt = last_message(request);
  const auto sources = listed_sources(prompt);
  const auto selections = lang::parse_plan_selections(section(prompt, "# Data Processing Plan", "# Tool Information"));

  std::string recipe = "recipe 1\n";
  std::vector<std::string> mapped;
  for (const auto& sel : selections) {
    const auto it = std::find_if(sources.begin(), sources.end(), [&](const auto& s) { return s.id == sel.dataset_id; });
    if (it == sources.end() || it->fields.empty()) continue;
    std::set<std::string> taken;
    std::string context;
    for (const auto& f : it->fields)
      if (std::set<std::string>{"passage", "context", "document", "article"}.contains(to_lower_ascii(f))) context = f;
    const bool has_context = !context.empty();
    if (has_context) taken.insert(context);
    const std::string question = pick_field(it->fields, {"question", "prompt", "instruction", "input", "problem", "query"}, taken);
    taken.insert(question);
    std::string answer = pick_field(it->fields, {"answer", "response", "output", "solution", "completion", "label"}, taken);
    if (answer.empty()) answer = question;

    const std::string n = std::to_string(mapped.size());
    recipe += "op load_" + n + " = load_source()\n  source = " + json_quote(it->id) + "\n";
    std::string user = has_context ? "{{ " + context + " }}\n\n{{ " + question + " }}" : "{{ " + question + " }}";
    recipe += "op map_" + n + " = map_fields(load_" + n + ")\n  set = {\"q\": " + json_quote(user) +
              ", \"a\": " + json_quote("{{ " + answer + " }}") + "}\n  keep = false\n";
    mapped.push_back("map_" + n);
  }
  if (mapped.empty()) return "I could not find the selected datasets.";

  std::string tail = mapped.front();
  if (mapped.size() > 1) {
    recipe += "op merged = concatenate(";
    for (std::size_t i = 0; i < mapped.size(); ++i) recipe += (i > 0 ? ", " : "") + mapped[i];
    recipe += ")\n";
    tail = "merged";
  }
  recipe += "op answered = select_by_filter(" + tail + ")\n  where = not(eq(\"a\", \"\"))\n";
  recipe += "op unique = deduplicate(answered)\n  key = \"q\"\n  lowercase = true\n  ignore_non_character = true\n";
  recipe += "op dialogs = to_dialogs(unique)\n  user = \"{{ q }}\"\n  assistant = \"{{ a }}\"\n";
  recipe += "op out = dump(dialogs)\n  path = \"data/processed/train.jsonl\"\n";

  return "```recipe\n" + recipe + "```\n\n```python\n" +
         "import json\nrows = [json.loads(l) for l in open('data/processed/train.jsonl')]\n"
         "assert rows and all(len(r['dialogs']) == 2 for r in rows)\n```\n";
}

std::string judge_response(const llm::ChatRequest& request) {
  const std::uint64_t h = fnv1a64(last_message(request)) % 20;
  if (h < 12) return "Validity, format, correctness and alignment checks hold.\n\\boxed{E} - PASS";
  if (h < 16) return "The answer is correct but its form does not suit the task.\n\\boxed{D} - TASK_MISMATCH";
  if (h < 18) return "The reference answer differs.\n\\boxed{C} - INCORRECT";
  if (h < 19) return "The required output format is not followed.\n\\boxed{B} - FORMAT_ERROR";
  return "The question is cut off.\n\\boxed{A} - INCOMPLETE";
}

std::string transform_response(const llm::ChatRequest& request) {
  return std::string(trim(last_message(request)));
}

llm::MockScript& install_builtin_policy(llm::MockScript& script) {
  script.on(llm::Tag::keywords, keywords_response);
  script.on(llm::Tag::generate_plan, plan_response);
  script.on(llm::Tag::generate_code, code_response);
  script.on(llm::Tag::verify, judge_response);
  script.on(llm::Tag::transform, transform_response);
  return script;
}

llm::MockScript builtin_policy() {
  llm::MockScript script;
  return install_builtin_policy(script);
}

}  // namespace recipeforge::mock
