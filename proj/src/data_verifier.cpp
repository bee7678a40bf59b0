#include "recipeforge/data_verifier.hpp"

#include <cctype>

#include "recipeforge/error.hpp"
#include "recipeforge/llm_gateway.hpp"
#include "recipeforge/prompt_assets.hpp"
#include "recipeforge/rng.hpp"
#include "recipeforge/task_pool.hpp"
#include "recipeforge/template.hpp"

namespace recipeforge::verifier {

char grade_letter(Grade grade) noexcept { return static_cast<char>('A' + static_cast<int>(grade)); }

std::string render_verifier_prompt(std::string_view task_description, std::string_view question,
                                   std::string_view answer) {
  if (trim(task_description).empty()) throw EmptyFieldError("task description is empty");
  if (trim(question).empty()) throw EmptyFieldError("question is empty");
  if (trim(answer).empty()) throw EmptyFieldError("answer is empty");
  return render_placeholders(assets::verifier_prompt_v1(), [&](std::string_view name) -> std::optional<std::string> {
    if (name == "task_description") return std::string(task_description);
    if (name == "question") return std::string(question);
    if (name == "llm_response") return std::string(answer);
    return std::nullopt;
  });
}

namespace {

bool is_space(char c) { return c == ' ' || c == '\t'; }

/// Reason token after a boxed grade: optional separator, then [A-Za-z_]+.
std::string reason_after(std::string_view rest) {
  std::size_t i = 0;
  while (i < rest.size() && is_space(rest[i])) ++i;
  bool separated = false;
  if (i < rest.size() && (rest[i] == '-' || rest[i] == ':')) {
    ++i;
    separated = true;
  } else if (rest.substr(i, 3) == "\xE2\x80\x93" || rest.substr(i, 3) == "\xE2\x80\x94") {
    i += 3;
    separated = true;
  }
  if (!separated) return {};
  while (i < rest.size() && is_space(rest[i])) ++i;
  std::string token;
  while (i < rest.size() && (std::isalpha(static_cast<unsigned char>(rest[i])) || rest[i] == '_'))
    token += static_cast<char>(std::toupper(static_cast<unsigned char>(rest[i++])));
  return token;
}

}  // namespace

Verdict parse_verdict(std::string_view text) {
  constexpr std::string_view kBox = "\\boxed{";
  std::optional<Verdict> last;
  for (std::size_t at = text.find(kBox); at != std::string_view::npos; at = text.find(kBox, at + 1)) {
    std::size_t i = at + kBox.size();
    while (i < text.size() && is_space(text[i])) ++i;
    if (i >= text.size()) break;
    const char letter = static_cast<char>(std::toupper(static_cast<unsigned char>(text[i])));
    if (letter < 'A' || letter > 'E') continue;
    ++i;
    while (i < text.size() && is_space(text[i])) ++i;
    if (i >= text.size() || text[i] != '}') continue;
    Verdict v;
    v.grade = static_cast<Grade>(letter - 'A');
    v.reason = reason_after(text.substr(i + 1));
    last = std::move(v);
  }
  if (!last) throw JudgeParseError("no \\boxed{A-E} grade in judge output");
  last->raw = std::string(text);
  return *last;
}

std::pair<std::string, std::string> judge_inputs(const exec::DialogSample& sample) {
  std::string question;
  std::string answer;
  for (const auto& turn : sample.dialogs) {
    if (turn.role == exec::Role::user) {
      if (!question.empty()) question += "\n\n";
      question += turn.content;
    } else {
      answer = turn.content;
    }
  }
  return {std::move(question), std::move(answer)};
}

double mean_score(std::span<const Verdict> verdicts) {
  if (verdicts.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& v : verdicts) sum += v.score();
  return sum / static_cast<double>(verdicts.size());
}

VerifierReport score_dataset(const exec::DialogDataset& dataset, const pool::TaskSpec& task,
                             std::size_t subset_size, std::uint64_t seed, llm::Gateway& gateway) {
  if (dataset.empty()) throw PreconditionError("cannot verify an empty dataset");
  if (const auto check = exec::check_training_format(dataset); !check.ok)
    throw PreconditionError("cannot verify a dataset with format violations: " + check.issues.front().message);
  if (subset_size == 0) throw PreconditionError("verifier subset size must be positive");

  VerifierReport report;
  report.subset_indices = sample_indices(dataset.size(), std::min(subset_size, dataset.size()), seed);

  std::vector<llm::ChatRequest> requests;
  requests.reserve(report.subset_indices.size());
  for (const std::size_t i : report.subset_indices) {
    const auto [question, answer] = judge_inputs(dataset[i]);
    requests.push_back(gateway.make_request(
        llm::Tag::verify, {{"user", render_verifier_prompt(task.instruction, question, answer)}}, 0.0));
  }

  report.verdicts.resize(requests.size());
  std::vector<std::size_t> retry;
  std::vector<std::string> first_raw(requests.size());
  const auto first = gateway.complete_batch(requests);
  for (std::size_t k = 0; k < first.size(); ++k) {
    if (first[k].ok()) {
      first_raw[k] = first[k].response->text;
      try {
        report.verdicts[k] = parse_verdict(first[k].response->text);
        continue;
      } catch (const JudgeParseError&) {
      }
    }
    retry.push_back(k);
  }

  if (!retry.empty()) {
    std::vector<llm::ChatRequest> again;
    for (const std::size_t k : retry) {
      llm::ChatRequest r = requests[k];
      if (!first_raw[k].empty()) {
        r.messages.push_back({"assistant", first_raw[k]});
        r.messages.push_back({"user", "Give your final grade as \\boxed{X} with X one of A, B, C, D, E, "
                                      "followed by \" - REASON\"."});
      } else {
        r.sample_index = 1;  // fresh attempt after a gateway failure
      }
      again.push_back(std::move(r));
    }
    const auto second = gateway.complete_batch(again);
    for (std::size_t j = 0; j < retry.size(); ++j) {
      Verdict& v = report.verdicts[retry[j]];
      if (second[j].ok()) {
        try {
          v = parse_verdict(second[j].response->text);
          continue;
        } catch (const JudgeParseError&) {
          v.raw = second[j].response->text;
        }
      } else {
        v.raw = second[j].error;
      }
      v.grade = Grade::A;
      v.reason = "JUDGE_ERROR";
      v.judge_error = true;
      ++report.judge_errors;
    }
  }
  report.mean_score = mean_score(report.verdicts);
  return report;
}

Json to_json(const Verdict& v) {
  return Json{{"grade", std::string(1, grade_letter(v.grade))},
              {"reason", v.reason},
              {"score", v.score()},
              {"judge_error", v.judge_error},
              {"raw", v.raw}};
}

Json to_json(const VerifierReport& report) {
  Json verdicts = Json::array();
  for (std::size_t k = 0; k < report.verdicts.size(); ++k) {
    Json v = to_json(report.verdicts[k]);
    v["index"] = report.subset_indices.at(k);
    v.erase("raw");
    verdicts.push_back(std::move(v));
  }
  return Json{{"mean_score", report.mean_score},
              {"judged", report.verdicts.size()},
              {"judge_errors", report.judge_errors},
              {"verdicts", std::move(verdicts)}};
}

VerifierReport verifier_report_from_json(const Json& j) {
  VerifierReport r;
  r.mean_score = j.at("mean_score").get<double>();
  r.judge_errors = j.value("judge_errors", std::size_t{0});
  for (const auto& v : j.at("verdicts")) {
    Verdict verdict;
    const std::string letter = v.at("grade").get<std::string>();
    if (letter.size() != 1 || letter[0] < 'A' || letter[0] > 'E')
      throw ParseError("bad grade '" + letter + "' in verifier report");
    verdict.grade = static_cast<Grade>(letter[0] - 'A');
    verdict.reason = v.value("reason", std::string{});
    verdict.judge_error = v.value("judge_error", false);
    verdict.raw = v.value("raw", std::string{});
    r.subset_indices.push_back(v.value("index", std::size_t{0}));
    r.verdicts.push_back(std::move(verdict));
  }
  return r;
}

std::string verdicts_jsonl(const VerifierReport& report) {
  std::string out;
  for (std::size_t k = 0; k < report.verdicts.size(); ++k) {
    Json v = to_json(report.verdicts[k]);
    v["index"] = report.subset_indices.at(k);
    out += canonical_dump(v);
    out += '\n';
  }
  return out;
}

}  // namespace recipeforge::verifier
