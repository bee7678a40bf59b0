#include "recipeforge/rollout.hpp"

#include <cstdio>

#include "recipeforge/error.hpp"
#include "recipeforge/llm_gateway.hpp"
#include "recipeforge/recipe_lang.hpp"
#include "recipeforge/task_pool.hpp"

namespace recipeforge::rollout {

namespace fs = std::filesystem;

std::string candidate_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "cand_%02zu", index);
  return buf;
}

Json persisted_exec_report(const exec::ExecReport& report) {
  Json j = exec::to_json(report);
  for (auto& op : j["per_op"]) op.erase("millis");
  return j;
}

namespace {

void persist(const fs::path& run_dir, const std::string& rel, const std::string& content,
             metrics::Candidate& candidate, const std::string& role) {
  if (run_dir.empty()) return;
  write_file_atomic(run_dir / rel, content);
  candidate.artifacts[role] = rel;
}

}  // namespace

CandidateOutcome run_candidate(const pool::TaskSpec& task, std::size_t index, const RolloutConfig& cfg,
                               llm::Gateway& gateway, const fs::path& run_dir) {
  const std::string name = candidate_name(index);
  const std::uint64_t seed = derive_seed(cfg.seed, index);
  CandidateOutcome out;
  out.candidate.recipe_id = name;
  out.rollout.task_id = task.id;
  out.rollout.recipe_id = name;
  out.exec.seed = seed;

  const auto fail = [&](std::string detail) -> CandidateOutcome& {
    out.exec.status = exec::ExecStatus::exec_failure;
    out.exec.produced = 0;
    if (out.exec.failure_detail.empty()) out.exec.failure_detail = std::move(detail);
    return out;
  };

  [&] {
    try {
      out.rollout.plan_prompt = lang::render_plan_prompt(task);
      out.rollout.plan = gateway
                             .complete(gateway.make_request(llm::Tag::generate_plan,
                                                            {{"user", out.rollout.plan_prompt}}, cfg.temperature,
                                                            4096, index))
                             .text;
      out.rollout.code_prompt = lang::render_code_prompt(task, out.rollout.plan);
      out.rollout.code = gateway
                             .complete(gateway.make_request(llm::Tag::generate_code,
                                                            {{"user", out.rollout.code_prompt}}, cfg.temperature,
                                                            4096, index))
                             .text;
    } catch (const std::exception& e) {
      fail(std::string("generation failed: ") + e.what());
      return;
    }
    persist(run_dir, "recipes/" + name + ".txt", out.rollout.code, out.candidate, "generation");

    lang::RecipeBlocks blocks;
    try {
      blocks = lang::extract_recipe_blocks(out.rollout.code);
    } catch (const ExtractionError& e) {
      fail(std::string("extraction: ") + e.what());
      return;
    }
    auto parsed = lang::parse_recipe(blocks.pipeline_block);
    if (!parsed.ok()) {
      fail("parse: " + parsed.diagnostics.front().to_string());
      return;
    }
    lang::Recipe recipe = std::move(*parsed.recipe);
    if (recipe.plan.empty()) recipe.plan = std::string(trim(out.rollout.plan));
    if (recipe.selections.empty()) recipe.selections = lang::parse_plan_selections(out.rollout.plan);
    recipe.provenance = {cfg.generator, task.id, static_cast<std::int64_t>(index)};
    // each candidate dumps into its own directory
    for (auto& op : recipe.pipeline) {
      if (auto* dump = std::get_if<lang::DumpParams>(&op.params)) {
        const fs::path p(dump->path);
        dump->path = "data/processed/" + name + "/" + p.filename().generic_string();
      }
    }
    persist(run_dir, "recipes/" + name + ".recipe", lang::serialize_recipe(recipe), out.candidate, "recipe");
    if (!blocks.verification_block.empty())
      persist(run_dir, "recipes/" + name + ".verify.txt", blocks.verification_block, out.candidate, "verification");
    out.recipe = recipe;

    if (const auto diags = lang::validate_recipe(recipe, task); !diags.empty()) {
      fail("validation: " + diags.front().to_string());
      return;
    }

    auto result = exec::execute(recipe, task, cfg.budget, seed, &gateway, cfg.limits, run_dir);
    out.exec = result.report;
    if (!out.exec.output_path.empty()) out.candidate.artifacts["dataset"] = out.exec.output_path;
    if (out.exec.status != exec::ExecStatus::ok) return;

    try {
      out.verdicts = verifier::score_dataset(result.dataset, task, cfg.budget.verifier_subset,
                                             derive_seed(seed, fnv1a64("verify")), gateway);
    } catch (const std::exception& e) {
      out.verdicts.reset();
      fail(std::string("verification: ") + e.what());
      return;
    }
    persist(run_dir, "verdicts/" + name + ".jsonl", verifier::verdicts_jsonl(*out.verdicts), out.candidate,
            "verdicts");
  }();

  out.candidate.status = out.exec.status;
  out.candidate.failure_detail = out.exec.failure_detail;
  out.candidate.produced = out.exec.produced;
  if (out.verdicts) {
    out.candidate.mean_score = out.verdicts->mean_score;
    out.candidate.judge_errors = out.verdicts->judge_errors;
  }
  out.candidate.reward =
      reward::recipe_reward(out.exec.status, out.verdicts ? std::optional(out.verdicts->mean_score) : std::nullopt,
                            cfg.reward);
  out.rollout.status = out.exec.status;
  out.rollout.reward = out.candidate.reward;
  out.candidate.artifacts["report"] = "reports/" + name + ".exec.json";
  if (!run_dir.empty()) write_file_atomic(run_dir / out.candidate.artifacts["report"], pretty_dump(persisted_exec_report(out.exec)));
  else out.candidate.artifacts.erase("report");
  return out;
}

GroupEval rollout_group_eval(const pool::TaskSpec& task, const RolloutConfig& cfg, llm::Gateway& gateway,
                             const fs::path& run_dir) {
  if (cfg.n == 0) throw ConfigError("N must be positive");
  GroupEval eval;
  eval.set.task_id = task.id;
  for (std::size_t i = 0; i < cfg.n; ++i) {
    eval.outcomes.push_back(run_candidate(task, i, cfg, gateway, run_dir));
    eval.set.candidates.push_back(eval.outcomes.back().candidate);
  }
  eval.set.validate();
  if (run_dir.empty()) return eval;

  write_file_atomic(run_dir / "reports" / "candidate_set.json", pretty_dump(metrics::to_json(eval.set)));
  std::string rollouts;
  for (const auto& o : eval.outcomes) rollouts += canonical_dump(reward::to_json(o.rollout)) + "\n";
  write_file_atomic(run_dir / "reports" / "rollouts.jsonl", rollouts);
  if (cfg.n >= 2) {
    reward::RewardConfig group_cfg = cfg.reward;
    group_cfg.group_size = cfg.n;
    reward::GroupSample group;
    group.task_id = task.id;
    for (const auto& o : eval.outcomes)
      group.members.push_back({o.candidate.recipe_id, o.exec, o.verdicts, 0.0, 0.0});
    reward::score_group(group, group_cfg);
    write_file_atomic(run_dir / "reports" / "group.json", pretty_dump(reward::group_document(group, group_cfg)));
  }
  return eval;
}

}  // namespace recipeforge::rollout
