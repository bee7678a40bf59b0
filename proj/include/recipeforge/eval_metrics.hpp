#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "recipeforge/executor.hpp"
#include "recipeforge/recipe.hpp"
#include "recipeforge/text.hpp"

namespace recipeforge::pool {
struct TaskSpec;
}

namespace recipeforge::metrics {

struct Candidate {
  std::string recipe_id;
  exec::ExecStatus status = exec::ExecStatus::exec_failure;
  std::optional<double> mean_score;  // nullopt = FAIL
  double reward = 0.0;
  std::size_t produced = 0;
  std::size_t judge_errors = 0;
  std::string failure_detail;
  std::map<std::string, std::string> artifacts;  // role -> path relative to the run dir
};

struct CandidateSet {
  std::string task_id;
  std::vector<Candidate> candidates;

  std::size_t n() const noexcept { return candidates.size(); }
  /// Throws ContractError when a FAIL entry has ok status or vice versa.
  void validate() const;
};

/// Mean over all candidates of (mean_score, or 0 for FAIL), times 100.
double dvs_avg(const CandidateSet& set);

/// k best by mean_score (FAIL lowest), descending, ties to the lower index.
/// BoundsError if k > N.
std::vector<std::string> oracle_topk(const CandidateSet& set, std::size_t k);

Json to_json(const CandidateSet& set);
CandidateSet candidate_set_from_json(const Json& j);

// ---------------------------------------------------------------------------
// review checklist

enum class Check { pass, flag, not_applicable };
std::string_view to_string(Check check) noexcept;

struct ChecklistItem {
  Check verdict = Check::not_applicable;
  std::string detail;
};

/// Machine-checkable review aid. Selection stays with the reviewer:
/// `selected` is never set here.
struct ReviewChecklist {
  std::string task_id;
  std::string recipe_id;
  ChecklistItem format_alignment;
  ChecklistItem context_integrity;
  std::vector<std::string> comprehensiveness_notes;
  std::string reviewer_notes;
  bool selected = false;
};

/// Answer shape implied by a benchmark's answer-format hint.
enum class AnswerShape { unknown, choice_letter, numeric, json };
AnswerShape answer_shape_from_hint(std::string_view hint);
/// Whether one assistant answer fits the shape (judged on its last line).
bool answer_matches_shape(std::string_view answer, AnswerShape shape);

/// `sample` (optional) is the recipe's produced dataset; format alignment
/// without it can only be judged from literal templates.
ReviewChecklist oracle_checklist(const lang::Recipe& recipe, const pool::TaskSpec& task,
                                 const exec::DialogDataset* sample = nullptr,
                                 std::string recipe_id = {});

Json to_json(const ReviewChecklist& checklist);
std::string render_checklist_markdown(const ReviewChecklist& checklist);

// ---------------------------------------------------------------------------
// correlation

struct CorrelationInput {
  std::string metric_label = "metric_score";
  std::string downstream_label = "downstream_score";
  std::vector<std::string> labels;  // optional, one per pair
  std::vector<double> metric;
  std::vector<double> downstream;
};

/// Product-moment coefficient. SizeError on unequal or fewer than two
/// values; DegenerateError on a constant series.
double pearson_r(std::span<const double> x, std::span<const double> y);
double pearson_r(const CorrelationInput& input);

/// Two-sided p-value of r under the t distribution with n - 2 degrees of
/// freedom. BoundsError when n < 3.
double pearson_p(double r, std::size_t n);

/// Regularized incomplete beta I_x(a, b).
double regularized_incomplete_beta(double a, double b, double x);
/// P(|T| >= |t|) for Student's t with `df` degrees of freedom.
double student_t_two_sided(double t, double df);

/// Header row plus two numeric columns, or label + two numeric columns.
/// Throws ParseError on malformed rows and BoundsError when fewer than three
/// pairs remain.
CorrelationInput parse_correlation_csv(std::string_view csv);
CorrelationInput load_correlation_csv(const std::filesystem::path& path);

}  // namespace recipeforge::metrics
