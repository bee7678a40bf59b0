#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "recipeforge/data_verifier.hpp"
#include "recipeforge/executor.hpp"
#include "recipeforge/text.hpp"

namespace recipeforge::reward {

struct RewardConfig {
  double lambda_empty = 1.0;  // penalty for a failed pipeline
  double lambda_fmt = 0.5;    // penalty for a malformed dataset
  double delta = 1e-4;
  double epsilon = 0.2;
  double beta = 0.04;
  std::size_t group_size = 8;

  /// Throws ConfigError when an invariant does not hold.
  void validate() const;
};

/// ok -> verifier mean score; exec_failure -> -lambda_empty;
/// format_violation -> -lambda_fmt. The verifier score must be present iff
/// the status is ok (ContractError otherwise).
double recipe_reward(exec::ExecStatus status, std::optional<double> verifier_score, const RewardConfig& cfg);
double recipe_reward(const exec::ExecReport& report, const verifier::VerifierReport* verifier,
                     const RewardConfig& cfg);

/// (R_i - mean) / (population std + delta). SizeError on fewer than two.
std::vector<double> group_advantages(std::span<const double> rewards, double delta);

struct LogProbTrack {
  std::vector<double> logp_new;
  std::vector<double> logp_old;
  std::vector<double> logp_ref;
};

struct ObjectiveValue {
  double objective = 0.0;
  double clip_fraction = 0.0;  // members where the clipped branch is taken
  double mean_kl = 0.0;
};

/// Clipped surrogate minus beta * KL, averaged over members. The ratio is the
/// exp of the token-mean log-ratio; KL is the token-mean of
/// exp(ref - new) - (ref - new) - 1. ShapeError on mismatched lengths.
ObjectiveValue grpo_objective(std::span<const LogProbTrack> tracks, std::span<const double> advantages,
                              const RewardConfig& cfg);

struct GroupMember {
  std::string recipe_id;
  exec::ExecReport exec;
  std::optional<verifier::VerifierReport> verifier;
  double reward = 0.0;
  double advantage = 0.0;
};

struct GroupSample {
  std::string task_id;
  std::vector<GroupMember> members;
  std::vector<LogProbTrack> tracks;  // empty, or one per member
};

/// Fills reward and advantage of every member. SizeError when the member
/// count differs from cfg.group_size.
void score_group(GroupSample& group, const RewardConfig& cfg);

/// Rewards, advantages and (with tracks) objective components; numbers
/// carry 12 significant digits.
Json group_document(const GroupSample& group, const RewardConfig& cfg);

/// x rounded to 12 significant digits.
double round_sig12(double x);

struct Rollout {
  std::string task_id;
  std::string recipe_id;
  std::string plan_prompt;
  std::string plan;
  std::string code_prompt;
  std::string code;  // full model output holding the fenced blocks
  exec::ExecStatus status = exec::ExecStatus::exec_failure;
  double reward = 0.0;
};

struct Demonstration {
  std::string task_id;
  std::string recipe_id;
  double reward = 0.0;
  exec::DialogSample dialog;  // plan prompt, plan, code prompt, code
};

/// Keeps ok-status rollouts with reward >= min_reward, in order.
std::vector<Demonstration> coldstart_filter(std::span<const Rollout> rollouts, double min_reward);

Json to_json(const Rollout& rollout);
Rollout rollout_from_json(const Json& j);
Json to_json(const Demonstration& demo);

}  // namespace recipeforge::reward
