#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "recipeforge/data_verifier.hpp"
#include "recipeforge/eval_metrics.hpp"
#include "recipeforge/executor.hpp"
#include "recipeforge/recipe.hpp"
#include "recipeforge/reward_engine.hpp"

namespace recipeforge::llm {
class Gateway;
}
namespace recipeforge::pool {
struct TaskSpec;
}

namespace recipeforge::rollout {

struct RolloutConfig {
  std::size_t n = 32;
  double temperature = 1.0;
  std::uint64_t seed = 0;
  exec::Budget budget;
  exec::Limits limits;
  reward::RewardConfig reward;
  std::string generator = "policy";
};

struct CandidateOutcome {
  metrics::Candidate candidate;
  reward::Rollout rollout;
  std::optional<lang::Recipe> recipe;
  exec::ExecReport exec;
  std::optional<verifier::VerifierReport> verdicts;
};

struct GroupEval {
  metrics::CandidateSet set;
  std::vector<CandidateOutcome> outcomes;
};

/// "cand_07" style name for candidate `index`.
std::string candidate_name(std::size_t index);

/// One plan -> code -> extract -> parse -> validate -> execute -> verify ->
/// reward pass. Faults become a FAIL candidate; nothing throws for model or
/// data problems. With a run directory, artifacts land under recipes/,
/// data/processed/<name>/, verdicts/ and reports/.
CandidateOutcome run_candidate(const pool::TaskSpec& task, std::size_t index, const RolloutConfig& cfg,
                               llm::Gateway& gateway, const std::filesystem::path& run_dir = {});

/// N candidates plus reports/candidate_set.json, reports/group.json and
/// reports/rollouts.jsonl. Timings are kept out of persisted documents so
/// mock and replay runs are byte-identical.
GroupEval rollout_group_eval(const pool::TaskSpec& task, const RolloutConfig& cfg, llm::Gateway& gateway,
                             const std::filesystem::path& run_dir = {});

/// Exec report as persisted: per-op timings removed.
Json persisted_exec_report(const exec::ExecReport& report);

}  // namespace recipeforge::rollout
