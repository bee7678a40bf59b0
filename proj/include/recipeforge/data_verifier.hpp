#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "recipeforge/executor.hpp"
#include "recipeforge/text.hpp"

namespace recipeforge::llm {
class Gateway;
}
namespace recipeforge::pool {
struct TaskSpec;
}

namespace recipeforge::verifier {

/// Invalid, Format Error, Incorrect, Task Mismatch, Pass.
enum class Grade { A, B, C, D, E };

inline constexpr Grade kAllGrades[] = {Grade::A, Grade::B, Grade::C, Grade::D, Grade::E};

/// A, B, C -> 0; D -> 0.4; E -> 1.0.
constexpr double grade_score(Grade grade) noexcept {
  switch (grade) {
    case Grade::D: return 0.4;
    case Grade::E: return 1.0;
    default: return 0.0;
  }
}

char grade_letter(Grade grade) noexcept;

struct Verdict {
  Grade grade = Grade::A;
  std::string reason;  // e.g. PASS, TASK_MISMATCH; may be empty
  std::string raw;
  bool judge_error = false;  // unparseable after retry or gateway failure; scored 0

  double score() const noexcept { return grade_score(grade); }
};

/// Fills the rubric template. Throws EmptyFieldError if any field is empty.
std::string render_verifier_prompt(std::string_view task_description, std::string_view question,
                                   std::string_view answer);

/// The last `\boxed{X}` with X in A..E wins; an optional "- REASON" token
/// after it is captured. Throws JudgeParseError when none exists.
Verdict parse_verdict(std::string_view judge_text);

/// Question = user turns joined by blank lines; answer = last assistant turn.
std::pair<std::string, std::string> judge_inputs(const exec::DialogSample& sample);

struct VerifierReport {
  std::vector<std::size_t> subset_indices;
  std::vector<Verdict> verdicts;  // aligned with subset_indices
  double mean_score = 0.0;
  std::size_t judge_errors = 0;
};

/// Sum of grade scores over the verdicts divided by their count; 0 for none.
double mean_score(std::span<const Verdict> verdicts);

/// Judges a uniform without-replacement subset of min(subset_size, |d|)
/// samples. Unparseable or failed judgements get one retry, then count as
/// judge errors scored 0. Throws PreconditionError on an empty or
/// format-invalid dataset.
VerifierReport score_dataset(const exec::DialogDataset& dataset, const pool::TaskSpec& task,
                             std::size_t subset_size, std::uint64_t seed, llm::Gateway& gateway);

Json to_json(const Verdict& verdict);
Json to_json(const VerifierReport& report);
VerifierReport verifier_report_from_json(const Json& j);

/// One verdict per line, raw judge text included.
std::string verdicts_jsonl(const VerifierReport& report);

}  // namespace recipeforge::verifier
