#include "recipeforge/reward_engine.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>

#include "recipeforge/error.hpp"

namespace recipeforge::reward {

void RewardConfig::validate() const {
  if (!(lambda_empty > 0)) throw ConfigError("lambda_empty must be positive");
  if (!(lambda_fmt > 0)) throw ConfigError("lambda_fmt must be positive");
  if (!(delta > 0)) throw ConfigError("delta must be positive");
  if (!(epsilon > 0 && epsilon < 1)) throw ConfigError("epsilon must lie in (0, 1)");
  if (!(beta >= 0)) throw ConfigError("beta must be non-negative");
  if (group_size < 2) throw ConfigError("group_size must be at least 2");
}

double recipe_reward(exec::ExecStatus status, std::optional<double> verifier_score, const RewardConfig& cfg) {
  switch (status) {
    case exec::ExecStatus::ok:
      if (!verifier_score) throw ContractError("ok status needs a verifier score");
      return *verifier_score;
    case exec::ExecStatus::exec_failure:
      if (verifier_score) throw ContractError("a failed pipeline cannot carry a verifier score");
      return -cfg.lambda_empty;
    case exec::ExecStatus::format_violation:
      if (verifier_score) throw ContractError("a malformed dataset cannot carry a verifier score");
      return -cfg.lambda_fmt;
  }
  throw ContractError("unknown status");
}

double recipe_reward(const exec::ExecReport& report, const verifier::VerifierReport* verifier,
                     const RewardConfig& cfg) {
  return recipe_reward(report.status, verifier ? std::optional<double>(verifier->mean_score) : std::nullopt, cfg);
}

std::vector<double> group_advantages(std::span<const double> rewards, double delta) {
  if (rewards.size() < 2) throw SizeError("a group needs at least two rewards");
  // a flat group carries no signal; rounding in the mean must not invent one
  if (std::all_of(rewards.begin(), rewards.end(), [&](double r) { return r == rewards.front(); }))
    return std::vector<double>(rewards.size(), 0.0);
  const double n = static_cast<double>(rewards.size());
  double mean = 0.0;
  for (const double r : rewards) mean += r;
  mean /= n;
  double var = 0.0;
  for (const double r : rewards) var += (r - mean) * (r - mean);
  const double sigma = std::sqrt(var / n);
  std::vector<double> out;
  out.reserve(rewards.size());
  for (const double r : rewards) out.push_back((r - mean) / (sigma + delta));
  return out;
}

ObjectiveValue grpo_objective(std::span<const LogProbTrack> tracks, std::span<const double> advantages,
                              const RewardConfig& cfg) {
  if (tracks.empty()) throw ShapeError("no members");
  if (tracks.size() != advantages.size())
    throw ShapeError(std::to_string(tracks.size()) + " tracks but " + std::to_string(advantages.size()) + " advantages");
  ObjectiveValue v;
  double term_sum = 0.0;
  double kl_sum = 0.0;
  std::size_t clipped = 0;
  for (std::size_t i = 0; i < tracks.size(); ++i) {
    const auto& t = tracks[i];
    const std::size_t len = t.logp_new.size();
    if (len == 0 || t.logp_old.size() != len || t.logp_ref.size() != len)
      throw ShapeError("member " + std::to_string(i) + " has mismatched or empty log-prob tracks");
    double log_ratio = 0.0;
    double kl = 0.0;
    for (std::size_t k = 0; k < len; ++k) {
      log_ratio += t.logp_new[k] - t.logp_old[k];
      const double d = t.logp_ref[k] - t.logp_new[k];
      kl += std::exp(d) - d - 1.0;
    }
    const double rho = std::exp(log_ratio / static_cast<double>(len));
    const double a = advantages[i];
    const double unclipped = rho * a;
    const double bounded = std::clamp(rho, 1.0 - cfg.epsilon, 1.0 + cfg.epsilon) * a;
    if (bounded < unclipped) ++clipped;
    term_sum += std::min(unclipped, bounded);
    kl_sum += kl / static_cast<double>(len);
  }
  const double n = static_cast<double>(tracks.size());
  v.mean_kl = kl_sum / n;
  v.objective = term_sum / n - cfg.beta * v.mean_kl;
  v.clip_fraction = static_cast<double>(clipped) / n;
  return v;
}

void score_group(GroupSample& group, const RewardConfig& cfg) {
  if (group.members.size() != cfg.group_size)
    throw SizeError("group has " + std::to_string(group.members.size()) + " members, expected " +
                    std::to_string(cfg.group_size));
  std::vector<double> rewards;
  for (auto& m : group.members) {
    m.reward = recipe_reward(m.exec, m.verifier ? &*m.verifier : nullptr, cfg);
    rewards.push_back(m.reward);
  }
  const auto adv = group_advantages(rewards, cfg.delta);
  for (std::size_t i = 0; i < adv.size(); ++i) group.members[i].advantage = adv[i];
}

double round_sig12(double x) {
  if (!std::isfinite(x) || x == 0.0) return x == 0.0 ? 0.0 : x;
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", x);
  return std::strtod(buf, nullptr);
}

Json group_document(const GroupSample& group, const RewardConfig& cfg) {
  Json members = Json::array();
  for (const auto& m : group.members) {
    Json j{{"recipe_id", m.recipe_id},
           {"status", exec::to_string(m.exec.status)},
           {"reward", round_sig12(m.reward)},
           {"advantage", round_sig12(m.advantage)}};
    if (m.verifier) j["verifier_score"] = round_sig12(m.verifier->mean_score);
    members.push_back(std::move(j));
  }
  Json doc{{"task_id", group.task_id},
           {"group_size", group.members.size()},
           {"config",
            {{"lambda_empty", cfg.lambda_empty},
             {"lambda_fmt", cfg.lambda_fmt},
             {"delta", cfg.delta},
             {"epsilon", cfg.epsilon},
             {"beta", cfg.beta}}},
           {"members", std::move(members)}};
  if (!group.tracks.empty()) {
    std::vector<double> adv;
    for (const auto& m : group.members) adv.push_back(m.advantage);
    const auto v = grpo_objective(group.tracks, adv, cfg);
    doc["objective"] = {{"objective", round_sig12(v.objective)},
                        {"clip_fraction", round_sig12(v.clip_fraction)},
                        {"mean_kl", round_sig12(v.mean_kl)}};
  }
  return doc;
}

std::vector<Demonstration> coldstart_filter(std::span<const Rollout> rollouts, double min_reward) {
  std::vector<Demonstration> out;
  for (const auto& r : rollouts) {
    if (r.status != exec::ExecStatus::ok || r.reward < min_reward) continue;
    Demonstration d;
    d.task_id = r.task_id;
    d.recipe_id = r.recipe_id;
    d.reward = r.reward;
    d.dialog.dialogs = {{exec::Role::user, r.plan_prompt},
                        {exec::Role::assistant, r.plan},
                        {exec::Role::user, r.code_prompt},
                        {exec::Role::assistant, r.code}};
    out.push_back(std::move(d));
  }
  return out;
}

Json to_json(const Rollout& r) {
  return Json{{"task_id", r.task_id},         {"recipe_id", r.recipe_id}, {"plan_prompt", r.plan_prompt},
              {"plan", r.plan},               {"code_prompt", r.code_prompt}, {"code", r.code},
              {"status", exec::to_string(r.status)}, {"reward", round_sig12(r.reward)}};
}

Rollout rollout_from_json(const Json& j) {
  Rollout r;
  r.task_id = j.value("task_id", std::string{});
  r.recipe_id = j.value("recipe_id", std::string{});
  r.plan_prompt = j.value("plan_prompt", std::string{});
  r.plan = j.value("plan", std::string{});
  r.code_prompt = j.value("code_prompt", std::string{});
  r.code = j.value("code", std::string{});
  r.status = exec::exec_status_from_string(j.at("status").get<std::string>());
  r.reward = j.at("reward").get<double>();
  return r;
}

Json to_json(const Demonstration& d) {
  Json dialogs = Json::array();
  for (const auto& t : d.dialog.dialogs) dialogs.push_back({{"role", exec::to_string(t.role)}, {"content", t.content}});
  return Json{{"task_id", d.task_id}, {"recipe_id", d.recipe_id}, {"reward", round_sig12(d.reward)}, {"dialogs", dialogs}};
}

}  // namespace recipeforge::reward
