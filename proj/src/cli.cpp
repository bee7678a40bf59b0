#include "recipeforge/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <functional>
#include <set>

#include "recipeforge/data_verifier.hpp"
#include "recipeforge/error.hpp"
#include "recipeforge/eval_metrics.hpp"
#include "recipeforge/executor.hpp"
#include "recipeforge/llm_gateway.hpp"
#include "recipeforge/mock_policy.hpp"
#include "recipeforge/recipe_lang.hpp"
#include "recipeforge/reward_engine.hpp"
#include "recipeforge/rollout.hpp"
#include "recipeforge/task_pool.hpp"

namespace recipeforge::cli {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// settings

Settings::Settings() : values_(defaults()) {}

const Json& Settings::defaults() {
  static const Json kDefaults = {
      {"mode", "mock"},          {"model", "default"},      {"cache_dir", ""},
      {"seed", 0},               {"n", 32},                 {"group_size", 8},
      {"temperature", 1.0},      {"max_rows", 10000},       {"verifier_subset", 100},
      {"lambda_empty", 1.0},     {"lambda_fmt", 0.5},       {"delta", 1e-4},
      {"epsilon", 0.2},          {"beta", 0.04},            {"max_inflight", 8},
      {"wall_clock_s", 300},     {"per_op_rows", 200000},   {"min_reward", 0.7},
      {"target", 5000},          {"k", 8},                  {"min_sources", 8},
      {"max_sources", 15},
  };
  return kDefaults;
}

void Settings::assign(const std::string& key, const Json& value) {
  const auto it = defaults().find(key);
  if (it == defaults().end()) throw ConfigError("unknown setting '" + key + "'");
  if (it->is_string()) {
    if (!value.is_string()) throw ConfigError("setting '" + key + "' must be a string");
  } else if (it->is_number_integer()) {
    if (!value.is_number_integer() || value.get<std::int64_t>() < 0)
      throw ConfigError("setting '" + key + "' must be a non-negative integer");
  } else if (!value.is_number()) {
    throw ConfigError("setting '" + key + "' must be a number");
  }
  values_[key] = value;
}

void Settings::merge_file(const fs::path& path) {
  Json doc;
  try {
    doc = Json::parse(read_file(path));
  } catch (const Json::parse_error& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config " + path.string() + " must hold a JSON object");
  for (const auto& [k, v] : doc.items()) assign(k, v);
}

void Settings::set(const std::string& key, const std::string& value) {
  const auto it = defaults().find(key);
  if (it == defaults().end()) throw ConfigError("unknown setting '" + key + "'");
  if (it->is_string()) {
    assign(key, value);
    return;
  }
  Json parsed;
  try {
    parsed = Json::parse(value);
  } catch (const Json::parse_error&) {
    throw ConfigError("setting '" + key + "' expects a number, got '" + value + "'");
  }
  assign(key, parsed);
}

void Settings::merge_env() {
  for (const auto& [key, _] : defaults().items()) {
    std::string name = "RECIPEFORGE_";
    for (const char c : key) name += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    if (const char* v = std::getenv(name.c_str()); v != nullptr && *v != '\0') set(key, v);
  }
}

std::string Settings::str(const std::string& key) const { return values_.at(key).get<std::string>(); }
double Settings::num(const std::string& key) const { return values_.at(key).get<double>(); }
std::uint64_t Settings::count(const std::string& key) const { return values_.at(key).get<std::uint64_t>(); }

// ---------------------------------------------------------------------------
// commands

namespace {

struct Context {
  Settings settings;
  fs::path run_dir;
  std::ostream& out;
  std::map<std::string, std::string> input_hashes;
  std::optional<fs::path> mock_script;

  fs::path input(const std::string& path) {
    const std::string content = read_file(path);
    input_hashes[path] = hex64(fnv1a64(content));
    return path;
  }

  void write(const std::string& rel, const std::string& content) const { write_file_atomic(run_dir / rel, content); }

  exec::Budget budget() const {
    return {settings.count("max_rows"), settings.count("verifier_subset")};
  }
  exec::Limits limits() const {
    return {std::chrono::seconds(settings.count("wall_clock_s")), settings.count("per_op_rows")};
  }
  reward::RewardConfig reward_config() const {
    reward::RewardConfig cfg;
    cfg.lambda_empty = settings.num("lambda_empty");
    cfg.lambda_fmt = settings.num("lambda_fmt");
    cfg.delta = settings.num("delta");
    cfg.epsilon = settings.num("epsilon");
    cfg.beta = settings.num("beta");
    cfg.group_size = settings.count("group_size");
    cfg.validate();
    return cfg;
  }

  std::unique_ptr<llm::Gateway> gateway() {
    llm::GatewayConfig cfg;
    cfg.mode = llm::mode_from_string(settings.str("mode"));
    cfg.default_model = settings.str("model");
    cfg.cache_dir = settings.str("cache_dir").empty() ? run_dir / "cache" : fs::path(settings.str("cache_dir"));
    cfg.max_inflight = settings.count("max_inflight");
    llm::MockScript script;
    if (mock_script) script = llm::MockScript::from_json(Json::parse(read_file(input(mock_script->string()))));
    mock::install_builtin_policy(script);
    return llm::make_gateway(cfg, script);
  }
};

std::vector<std::string> split_csv_list(const std::string& text) {
  std::vector<std::string> out;
  std::string_view rest = text;
  while (!rest.empty()) {
    const auto comma = rest.find(',');
    const auto item = trim(rest.substr(0, comma));
    if (!item.empty()) out.emplace_back(item);
    if (comma == std::string_view::npos) break;
    rest.remove_prefix(comma + 1);
  }
  return out;
}

lang::Recipe read_recipe(const std::string& text) {
  if (text.find("```") != std::string::npos) return lang::parse_recipe_or_throw(lang::extract_recipe_blocks(text).pipeline_block);
  return lang::parse_recipe_or_throw(text);
}

// pool build
int cmd_pool_build(Context& ctx, const std::string& catalog_path) {
  const auto catalog = pool::load_catalog(ctx.input(catalog_path));
  pool::SeedPoolConfig cfg;
  cfg.min_sources = ctx.settings.count("min_sources");
  cfg.max_sources = ctx.settings.count("max_sources");
  const auto tasks = pool::build_seed_pool(catalog, cfg);
  Json summary = Json::array();
  for (const auto& t : tasks) {
    ctx.write("tasks/" + t.id + ".json", pretty_dump(pool::to_json(t)));
    summary.push_back({{"task_id", t.id}, {"sources", t.sources.size()}, {"path", "tasks/" + t.id + ".json"}});
  }
  ctx.write("reports/seed_pool.json", pretty_dump(summary));
  ctx.out << "seed pool: " << tasks.size() << " tasks\n";
  return 0;
}

// pool augment
int cmd_pool_augment(Context& ctx, const std::string& catalog_path) {
  const auto catalog = pool::load_catalog(ctx.input(catalog_path));
  pool::SeedPoolConfig seed_cfg;
  seed_cfg.min_sources = ctx.settings.count("min_sources");
  seed_cfg.max_sources = ctx.settings.count("max_sources");
  const auto seeds = pool::build_seed_pool(catalog, seed_cfg);
  pool::AugmentConfig cfg;
  cfg.target_count = ctx.settings.count("target");
  cfg.seed = ctx.settings.count("seed");
  const auto tasks = pool::augment_tasks(seeds, cfg);
  std::string lines;
  for (const auto& t : tasks) lines += canonical_dump(pool::to_json(t)) + "\n";
  ctx.write("reports/augmented_tasks.jsonl", lines);
  ctx.out << "augmented pool: " << tasks.size() << " unique tasks from " << seeds.size() << " seeds\n";
  return 0;
}

// retrieve
int cmd_retrieve(Context& ctx, const std::string& catalog_path, const std::string& benchmark_id,
                 const std::string& keywords_flag) {
  const auto catalog = pool::load_catalog(ctx.input(catalog_path));
  const auto* bench = catalog.find_benchmark(benchmark_id);
  if (bench == nullptr) throw CatalogError("unknown benchmark '" + benchmark_id + "'");
  std::vector<std::string> keywords;
  if (!keywords_flag.empty()) {
    keywords = split_csv_list(keywords_flag);
  } else {
    auto gw = ctx.gateway();
    keywords = pool::synthesize_keywords(bench->ref, *gw);
  }
  const auto ranked = pool::search_and_rank(keywords, catalog);
  Json list = Json::array();
  pool::TaskSpec task;
  task.id = bench->ref.id + "-retrieved";
  task.benchmark = bench->ref;
  for (const auto& src : ranked) {
    const auto report = pool::verify_no_leakage(src, bench->ref, catalog.base_dir);
    list.push_back({{"id", src.id},
                    {"popularity", src.popularity},
                    {"leakage_pass", report.pass},
                    {"offending_records", report.offending_records}});
    if (report.pass) task.sources.push_back(src);
  }
  task.instruction = pool::render_task_instruction(task.benchmark, task.sources);
  ctx.write("reports/retrieval.json", pretty_dump(Json{{"benchmark", bench->ref.id}, {"keywords", keywords}, {"ranked", list}}));
  ctx.write("tasks/" + task.id + ".json", pretty_dump(pool::to_json(task)));
  ctx.out << "retrieved " << ranked.size() << " sources, " << task.sources.size() << " pass the leakage check\n";
  return 0;
}

// gen
int cmd_gen(Context& ctx, const std::string& task_path, const std::string& plan_path, bool complete) {
  const auto task = pool::load_task(ctx.input(task_path));
  std::optional<std::string> plan;
  if (!plan_path.empty()) plan = read_file(ctx.input(plan_path));
  std::unique_ptr<llm::Gateway> gw;
  const double temperature = ctx.settings.num("temperature");
  if (complete && !plan) {
    gw = ctx.gateway();
    const auto prompts = lang::render_generation_prompts(task, std::nullopt);
    ctx.write("recipes/plan_prompt.txt", prompts.plan_prompt);
    plan = gw->complete(gw->make_request(llm::Tag::generate_plan, {{"user", prompts.plan_prompt}}, temperature)).text;
    ctx.write("recipes/plan.md", *plan);
  }
  const auto prompts = lang::render_generation_prompts(task, plan);
  ctx.write("recipes/plan_prompt.txt", prompts.plan_prompt);
  if (prompts.code_prompt) ctx.write("recipes/code_prompt.txt", *prompts.code_prompt);
  if (complete) {
    if (!gw) gw = ctx.gateway();
    const std::string code =
        gw->complete(gw->make_request(llm::Tag::generate_code, {{"user", *prompts.code_prompt}}, temperature)).text;
    ctx.write("recipes/generation.txt", code);
    const auto blocks = lang::extract_recipe_blocks(code);
    lang::Recipe recipe = lang::parse_recipe_or_throw(blocks.pipeline_block);
    if (recipe.plan.empty()) recipe.plan = std::string(trim(*plan));
    if (recipe.selections.empty()) recipe.selections = lang::parse_plan_selections(*plan);
    recipe.provenance = {"policy", task.id, 0};
    ctx.write("recipes/candidate.recipe", lang::serialize_recipe(recipe));
    ctx.out << "generated recipes/candidate.recipe with " << recipe.pipeline.size() << " ops\n";
  } else {
    ctx.out << "rendered " << (prompts.code_prompt ? "plan and code prompts" : "plan prompt") << "\n";
  }
  return 0;
}

// exec
int cmd_exec(Context& ctx, const std::string& task_path, const std::string& recipe_path,
             const std::string& script_path, const std::string& shim_workdir, const std::string& shim_report) {
  const auto task = pool::load_task(ctx.input(task_path));
  const std::uint64_t seed = ctx.settings.count("seed");
  exec::ExecResult result;
  if (!script_path.empty()) {
    exec::ShimInvocation inv;
    inv.script = read_file(ctx.input(script_path));
    inv.workdir = fs::absolute(ctx.run_dir / "shim");
    inv.limits = ctx.limits();
    inv.max_output_rows = ctx.settings.count("max_rows");
    for (const auto& s : task.sources) inv.sources[s.id] = s.location;
    fs::create_directories(inv.workdir);
    exec::write_shim_invocation(inv, ctx.run_dir / "reports" / "shim_invocation.json");
    ctx.out << "wrote reports/shim_invocation.json\n";
    return 0;
  }
  if (!shim_report.empty()) {
    result = exec::ingest_shim_output(shim_workdir, ctx.input(shim_report), ctx.settings.count("max_rows"), seed);
    if (!result.dataset.empty()) ctx.write("data/processed/shim.jsonl", exec::serialize_dataset(result.dataset));
    result.report.output_path = result.dataset.empty() ? "" : "data/processed/shim.jsonl";
  } else {
    const auto recipe = read_recipe(read_file(ctx.input(recipe_path)));
    auto gw = ctx.gateway();
    result = exec::execute(recipe, task, ctx.budget(), seed, gw.get(), ctx.limits(), ctx.run_dir);
  }
  ctx.write("reports/exec.json", pretty_dump(rollout::persisted_exec_report(result.report)));
  ctx.out << "status: " << exec::to_string(result.report.status) << ", rows: " << result.report.produced << "\n";
  if (result.report.status != exec::ExecStatus::ok) {
    ctx.out << result.report.failure_detail << "\n";
    return 1;
  }
  return 0;
}

// verify
int cmd_verify(Context& ctx, const std::string& task_path, const std::string& dataset_path) {
  const auto task = pool::load_task(ctx.input(task_path));
  const auto loaded = exec::load_dialog_file(ctx.input(dataset_path));
  if (!loaded.check.ok)
    throw PreconditionError("dataset violates the dialog format at sample " +
                            std::to_string(loaded.check.issues.front().sample_index) + ": " +
                            loaded.check.issues.front().message);
  auto gw = ctx.gateway();
  const auto report = verifier::score_dataset(loaded.dataset, task, ctx.settings.count("verifier_subset"),
                                              ctx.settings.count("seed"), *gw);
  ctx.write("verdicts/verdicts.jsonl", verifier::verdicts_jsonl(report));
  ctx.write("reports/verifier.json", pretty_dump(verifier::to_json(report)));
  ctx.out << "judged " << report.verdicts.size() << " samples, mean score " << format_number(report.mean_score)
          << ", judge errors " << report.judge_errors << "\n";
  return 0;
}

// reward
int cmd_reward(Context& ctx, const std::string& exec_path, const std::string& verifier_path,
               const std::string& rewards_flag) {
  const auto cfg = ctx.reward_config();
  if (exec_path.empty() && rewards_flag.empty()) throw ConfigError("give --exec-report or --rewards");
  Json doc = Json::object();
  if (!exec_path.empty()) {
    const auto report = exec::exec_report_from_json(Json::parse(read_file(ctx.input(exec_path))));
    std::optional<verifier::VerifierReport> ver;
    if (!verifier_path.empty())
      ver = verifier::verifier_report_from_json(Json::parse(read_file(ctx.input(verifier_path))));
    const double r = reward::recipe_reward(report, ver ? &*ver : nullptr, cfg);
    doc["status"] = exec::to_string(report.status);
    doc["reward"] = reward::round_sig12(r);
    ctx.out << "reward: " << format_number(r) << "\n";
  }
  if (!rewards_flag.empty()) {
    std::vector<double> rewards;
    for (const auto& item : split_csv_list(rewards_flag)) {
      try {
        rewards.push_back(std::stod(item));
      } catch (const std::exception&) {
        throw ConfigError("'" + item + "' is not a number");
      }
    }
    const auto adv = reward::group_advantages(rewards, cfg.delta);
    Json a = Json::array();
    for (const double v : adv) a.push_back(reward::round_sig12(v));
    doc["rewards"] = rewards;
    doc["advantages"] = a;
    ctx.out << "advantages:";
    for (const double v : adv) ctx.out << ' ' << format_number(v);
    ctx.out << "\n";
  }
  ctx.write("reports/reward.json", pretty_dump(doc));
  return 0;
}

// rollout
int cmd_rollout(Context& ctx, const std::string& task_path) {
  const auto task = pool::load_task(ctx.input(task_path));
  rollout::RolloutConfig cfg;
  cfg.n = ctx.settings.count("n");
  cfg.temperature = ctx.settings.num("temperature");
  cfg.seed = ctx.settings.count("seed");
  cfg.budget = ctx.budget();
  cfg.limits = ctx.limits();
  cfg.reward = ctx.reward_config();
  auto gw = ctx.gateway();
  const auto eval = rollout::rollout_group_eval(task, cfg, *gw, ctx.run_dir);
  std::size_t failed = 0;
  for (const auto& c : eval.set.candidates) failed += c.mean_score ? 0 : 1;
  ctx.out << "DVS_avg@" << cfg.n << " = " << format_number(metrics::dvs_avg(eval.set)) << " (" << failed
          << " FAIL)\n";
  return 0;
}

// oracle
int cmd_oracle(Context& ctx, const std::string& candidates_path, const std::string& task_path,
               const std::string& source_run) {
  const auto set = metrics::candidate_set_from_json(Json::parse(read_file(ctx.input(candidates_path))));
  const std::size_t k = ctx.settings.count("k");
  const auto top = metrics::oracle_topk(set, k);
  const fs::path origin = source_run.empty() ? fs::path(candidates_path).parent_path().parent_path() : fs::path(source_run);
  std::optional<pool::TaskSpec> task;
  if (!task_path.empty()) task = pool::load_task(ctx.input(task_path));
  Json reviews = Json::array();
  for (const auto& id : top) {
    const auto it = std::find_if(set.candidates.begin(), set.candidates.end(),
                                 [&](const metrics::Candidate& c) { return c.recipe_id == id; });
    Json entry{{"recipe_id", id}, {"mean_score", it->mean_score ? Json(*it->mean_score) : Json("FAIL")}};
    if (task && it->artifacts.contains("recipe")) {
      const auto recipe = lang::parse_recipe_or_throw(read_file(origin / it->artifacts.at("recipe")));
      std::optional<exec::DialogDataset> sample;
      if (it->artifacts.contains("dataset")) sample = exec::load_dialog_file(origin / it->artifacts.at("dataset")).dataset;
      const auto checklist = metrics::oracle_checklist(recipe, *task, sample ? &*sample : nullptr, id);
      ctx.write("reports/review_" + id + ".md", metrics::render_checklist_markdown(checklist));
      entry["checklist"] = metrics::to_json(checklist);
    }
    reviews.push_back(std::move(entry));
  }
  ctx.write("reports/oracle.json", pretty_dump(Json{{"task_id", set.task_id}, {"k", k}, {"top", reviews}}));
  ctx.out << "top-" << k << ":";
  for (const auto& id : top) ctx.out << ' ' << id;
  ctx.out << "\nselection is left to the reviewer\n";
  return 0;
}

// corr
int cmd_corr(Context& ctx, const std::string& csv_path) {
  const auto input = metrics::load_correlation_csv(ctx.input(csv_path));
  const double r = metrics::pearson_r(input);
  const double p = metrics::pearson_p(r, input.metric.size());
  ctx.write("reports/correlation.json",
            pretty_dump(Json{{"x", input.metric_label}, {"y", input.downstream_label}, {"n", input.metric.size()},
                             {"r", r}, {"p", p}}));
  ctx.out << "r = " << format_number(r) << ", p = " << format_number(p) << ", n = " << input.metric.size() << "\n";
  return 0;
}

// opstats
int cmd_opstats(Context& ctx, const std::vector<std::string>& paths) {
  std::vector<fs::path> files;
  for (const auto& p : paths) {
    if (fs::is_directory(p)) {
      for (const auto& e : fs::recursive_directory_iterator(p))
        if (e.is_regular_file() && e.path().extension() == ".recipe") files.push_back(e.path());
    } else {
      files.emplace_back(p);
    }
  }
  std::sort(files.begin(), files.end());
  std::vector<lang::Recipe> recipes;
  for (const auto& f : files) recipes.push_back(read_recipe(read_file(ctx.input(f.string()))));
  const auto freq = lang::op_frequency(recipes);
  Json table = Json::object();
  for (const auto& [kind, f] : freq) {
    table[std::string(lang::to_string(kind))] = f;
    ctx.out << lang::to_string(kind) << ' ' << format_number(f) << "\n";
  }
  ctx.write("reports/opstats.json", pretty_dump(Json{{"recipes", recipes.size()}, {"frequency", table}}));
  return 0;
}

// coldstart
int cmd_coldstart(Context& ctx, const std::vector<std::string>& paths) {
  std::vector<reward::Rollout> rollouts;
  for (const auto& p : paths)
    for (const auto& j : read_jsonl(ctx.input(p))) rollouts.push_back(reward::rollout_from_json(j));
  const auto demos = reward::coldstart_filter(rollouts, ctx.settings.num("min_reward"));
  std::string lines;
  std::string meta;
  for (const auto& d : demos) {
    lines += exec::serialize_dialog_line(d.dialog) + "\n";
    meta += canonical_dump(Json{{"task_id", d.task_id}, {"recipe_id", d.recipe_id}, {"reward", reward::round_sig12(d.reward)}}) + "\n";
  }
  ctx.write("data/processed/coldstart.jsonl", lines);
  ctx.write("reports/coldstart.jsonl", meta);
  ctx.out << "kept " << demos.size() << " of " << rollouts.size() << " rollouts\n";
  return 0;
}

std::vector<std::string> list_artifacts(const fs::path& run_dir) {
  std::vector<std::string> out;
  std::error_code ec;
  for (auto it = fs::recursive_directory_iterator(run_dir, ec); !ec && it != fs::recursive_directory_iterator();
       it.increment(ec)) {
    if (!it->is_regular_file()) continue;
    const std::string rel = fs::relative(it->path(), run_dir).generic_string();
    if (rel != "manifest.json") out.push_back(rel);
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Data recipe generation, execution and evaluation harness", "recipeforge"};
  app.require_subcommand(1);

  std::map<std::string, std::string> flags;
  std::string config_path;
  std::string run_dir;
  std::string mock_script;
  std::vector<CLI::App*> all;

  const auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON settings file");
    sub->add_option("--run-dir", run_dir, "Output directory (default: runs/<command>-<hash>)");
    sub->add_option("--mock-script", mock_script, "JSON rules answered before the built-in mock policy");
    for (const auto& [flag, key] : {std::pair{"--mode", "mode"}, {"--seed", "seed"}, {"--model", "model"},
                                    {"--cache-dir", "cache_dir"}}) {
      sub->add_option_function<std::string>(flag, [&flags, key = std::string(key)](const std::string& v) { flags[key] = v; },
                                            "Setting '" + std::string(key) + "'");
    }
    all.push_back(sub);
  };
  const auto setting = [&](CLI::App* sub, const std::string& flag, const std::string& key) {
    sub->add_option_function<std::string>(flag, [&flags, key](const std::string& v) { flags[key] = v; },
                                          "Setting '" + key + "'");
  };

  std::string catalog, benchmark, keywords, task, plan, recipe, script, shim_workdir, shim_report, dataset,
      exec_report, verifier_report, rewards, candidates, source_run, input;
  std::vector<std::string> paths;
  bool complete = false;

  auto* pool_cmd = app.add_subcommand("pool", "Task pool construction");
  pool_cmd->require_subcommand(1);
  auto* pool_build = pool_cmd->add_subcommand("build", "Build the seed pool from a catalog");
  common(pool_build);
  pool_build->add_option("--catalog", catalog, "Catalog JSON")->required();
  setting(pool_build, "--min-sources", "min_sources");
  setting(pool_build, "--max-sources", "max_sources");
  auto* pool_augment = pool_cmd->add_subcommand("augment", "Combinatorially augment the seed pool");
  common(pool_augment);
  pool_augment->add_option("--catalog", catalog, "Catalog JSON")->required();
  setting(pool_augment, "--target", "target");
  setting(pool_augment, "--min-sources", "min_sources");
  setting(pool_augment, "--max-sources", "max_sources");

  auto* retrieve = app.add_subcommand("retrieve", "Keyword retrieval and leakage checks for a benchmark");
  common(retrieve);
  retrieve->add_option("--catalog", catalog, "Catalog JSON")->required();
  retrieve->add_option("--benchmark", benchmark, "Benchmark id")->required();
  retrieve->add_option("--keywords", keywords, "Comma-separated keywords (skips the model)");

  auto* gen = app.add_subcommand("gen", "Render generation prompts, optionally sampling a recipe");
  common(gen);
  gen->add_option("--task", task, "Task JSON")->required();
  gen->add_option("--plan", plan, "Plan text for the code prompt");
  gen->add_flag("--complete", complete, "Call the gateway for plan and code");
  setting(gen, "--temperature", "temperature");

  auto* exec_cmd = app.add_subcommand("exec", "Execute a recipe (or fold in a script runner's output)");
  common(exec_cmd);
  exec_cmd->add_option("--task", task, "Task JSON")->required();
  auto* recipe_opt = exec_cmd->add_option("--recipe", recipe, "Recipe file");
  auto* script_opt = exec_cmd->add_option("--script", script, "Script for an external runner; writes the invocation");
  auto* shim_report_opt = exec_cmd->add_option("--shim-report", shim_report, "Runner report JSON");
  exec_cmd->add_option("--shim-workdir", shim_workdir, "Runner working directory")->needs(shim_report_opt);
  shim_report_opt->needs("--shim-workdir");
  recipe_opt->excludes(script_opt)->excludes(shim_report_opt);
  script_opt->excludes(shim_report_opt);
  setting(exec_cmd, "--max-rows", "max_rows");

  auto* verify = app.add_subcommand("verify", "Score a dialog dataset with the verifier");
  common(verify);
  verify->add_option("--task", task, "Task JSON")->required();
  verify->add_option("--dataset", dataset, "Dialog JSONL")->required();
  setting(verify, "--subset", "verifier_subset");

  auto* reward_cmd = app.add_subcommand("reward", "Recipe reward and group advantages");
  common(reward_cmd);
  reward_cmd->add_option("--exec-report", exec_report, "Executor report JSON");
  reward_cmd->add_option("--verifier-report", verifier_report, "Verifier report JSON");
  reward_cmd->add_option("--rewards", rewards, "Comma-separated group rewards");

  auto* rollout_cmd = app.add_subcommand("rollout", "Generate, execute and verify N candidate recipes");
  common(rollout_cmd);
  rollout_cmd->add_option("--task", task, "Task JSON")->required();
  setting(rollout_cmd, "--n", "n");
  setting(rollout_cmd, "--temperature", "temperature");
  setting(rollout_cmd, "--max-rows", "max_rows");
  setting(rollout_cmd, "--subset", "verifier_subset");

  auto* oracle = app.add_subcommand("oracle", "Top-k candidates and review checklists");
  common(oracle);
  oracle->add_option("--candidates", candidates, "candidate_set.json")->required();
  oracle->add_option("--task", task, "Task JSON (enables checklists)");
  oracle->add_option("--source-run", source_run, "Run directory the candidate artifacts live in");
  setting(oracle, "--k", "k");

  auto* corr = app.add_subcommand("corr", "Pearson correlation of metric vs downstream scores");
  common(corr);
  corr->add_option("--input", input, "Two-column CSV with a header row")->required();

  auto* opstats = app.add_subcommand("opstats", "Average operator usage per recipe");
  common(opstats);
  opstats->add_option("--recipes", paths, "Recipe files or directories")->required();

  auto* coldstart = app.add_subcommand("coldstart", "Filter rollouts into warm-up demonstrations");
  common(coldstart);
  coldstart->add_option("--rollouts", paths, "rollouts.jsonl files")->required();
  setting(coldstart, "--min-reward", "min_reward");

  std::vector<const char*> argv{"recipeforge"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return 0;
    }
    err << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  CLI::App* chosen = nullptr;
  for (auto* sub : all)
    if (sub->parsed()) chosen = sub;
  std::string command = chosen->get_name();
  if (chosen->get_parent() != &app) command = chosen->get_parent()->get_name() + " " + command;

  const auto started = std::chrono::steady_clock::now();
  Context ctx{Settings{}, {}, out, {}, {}};
  std::string status = "error";
  int code = 1;
  try {
    if (!config_path.empty()) ctx.settings.merge_file(config_path);
    ctx.settings.merge_env();
    for (const auto& [k, v] : flags) ctx.settings.set(k, v);
    if (!mock_script.empty()) ctx.mock_script = mock_script;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }

  if (run_dir.empty()) {
    std::string key = command;
    for (const auto& a : args) key += '\x1f' + a;
    std::string slug = command;
    std::replace(slug.begin(), slug.end(), ' ', '-');
    run_dir = "runs/" + slug + "-" + hex64(fnv1a64(key)).substr(0, 12);
  }
  ctx.run_dir = run_dir;

  try {
    fs::create_directories(ctx.run_dir);
    if (command == "pool build") code = cmd_pool_build(ctx, catalog);
    else if (command == "pool augment") code = cmd_pool_augment(ctx, catalog);
    else if (command == "retrieve") code = cmd_retrieve(ctx, catalog, benchmark, keywords);
    else if (command == "gen") code = cmd_gen(ctx, task, plan, complete);
    else if (command == "exec") {
      if (recipe.empty() && script.empty() && shim_report.empty())
        throw ConfigError("exec needs --recipe, --script or --shim-report");
      code = cmd_exec(ctx, task, recipe, script, shim_workdir, shim_report);
    } else if (command == "verify") code = cmd_verify(ctx, task, dataset);
    else if (command == "reward") code = cmd_reward(ctx, exec_report, verifier_report, rewards);
    else if (command == "rollout") code = cmd_rollout(ctx, task);
    else if (command == "oracle") code = cmd_oracle(ctx, candidates, task, source_run);
    else if (command == "corr") code = cmd_corr(ctx, input);
    else if (command == "opstats") code = cmd_opstats(ctx, paths);
    else if (command == "coldstart") code = cmd_coldstart(ctx, paths);
    status = code == 0 ? "ok" : "failed";
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    code = 1;
  }

  const auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - started);
  try {
    Json manifest{{"run_id", ctx.run_dir.filename().string()},
                  {"command", command},
                  {"args", args},
                  {"config", ctx.settings.values()},
                  {"seeds", {{"seed", ctx.settings.values().at("seed")}}},
                  {"gateway_mode", ctx.settings.str("mode")},
                  {"input_hashes", ctx.input_hashes},
                  {"artifacts", list_artifacts(ctx.run_dir)},
                  {"wall_clock_ms", elapsed.count()},
                  {"status", status}};
    write_file_atomic(ctx.run_dir / "manifest.json", pretty_dump(manifest));
  } catch (const std::exception& e) {
    err << "error: writing the manifest failed: " << e.what() << "\n";
    return 1;
  }
  if (code == 0) out << "run directory: " << ctx.run_dir.string() << "\n";
  return code;
}

}  // namespace recipeforge::cli
