#include <gtest/gtest.h>

#include <set>

#include "recipeforge/error.hpp"
#include "recipeforge/executor.hpp"
#include "recipeforge/llm_gateway.hpp"
#include "recipeforge/recipe_lang.hpp"
#include "recipeforge/task_pool.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace recipeforge;
using namespace recipeforge::exec;
namespace fs = std::filesystem;

namespace {

const char* kArithRecipe = R"(recipe 1
op src = load_source()
  source = "arith_qa"
op kept = select_by_filter(src)
  where = not(eq("answer", ""))
op unique = deduplicate(kept)
  key = "question"
  lowercase = true
  ignore_non_character = true
op d = to_dialogs(unique)
  user = "{{ question }}"
  assistant = "{{ answer }}"
op out = dump(d)
)";

Record row(std::initializer_list<std::pair<const char*, FieldValue>> fields) {
  Record r;
  for (const auto& [k, v] : fields) r.set(k, v);
  return r;
}

lang::FilterExpr cmp(lang::FilterExpr::Op op, std::string field, lang::Scalar operand) {
  lang::FilterExpr f;
  f.op = op;
  f.field = std::move(field);
  f.operand = std::move(operand);
  return f;
}

DialogSample exchange(std::string user, std::string assistant) {
  return DialogSample{{{Role::user, std::move(user)}, {Role::assistant, std::move(assistant)}}};
}

ExecResult run(std::string_view recipe_text, const fs::path& run_dir = {}, llm::Gateway* gw = nullptr,
               Limits limits = {}, Budget budget = {}) {
  return execute(lang::parse_recipe_or_throw(recipe_text), rftest::fixture_task(), budget, 7, gw, limits, run_dir);
}

}  // namespace

TEST(Record, FlattensJson) {
  const auto r = Record::from_json(Json::parse(R"({"a": "x", "n": 2.5, "b": true, "z": null, "o": {"k": [1]}, "": 1})"));
  EXPECT_EQ(r.fields().size(), 5u);
  EXPECT_EQ(r.text("n"), "2.5");
  EXPECT_EQ(r.text("b"), "true");
  EXPECT_EQ(r.text("z"), "");
  EXPECT_EQ(r.text("o"), "{\"k\":[1]}");
  EXPECT_FALSE(r.text("missing").has_value());
  EXPECT_EQ(Record::from_json(Json("plain")).text("text"), "plain");
}

TEST(Filter, Semantics) {
  using Op = lang::FilterExpr::Op;
  const Record r = row({{"n", 10.0}, {"s", std::string("Apple Pie")}, {"num_text", std::string(" 9 ")}});
  EXPECT_TRUE(evaluate_filter(cmp(Op::eq, "n", 10.0), r));
  EXPECT_TRUE(evaluate_filter(cmp(Op::gt, "n", 9.5), r));
  EXPECT_TRUE(evaluate_filter(cmp(Op::lt, "num_text", 10.0), r));  // numeric when both sides read as numbers
  EXPECT_TRUE(evaluate_filter(cmp(Op::lt, "s", std::string("B")), r));
  EXPECT_TRUE(evaluate_filter(cmp(Op::eq, "n", std::string("10")), r));
  // absent fields: only ne holds
  EXPECT_TRUE(evaluate_filter(cmp(Op::ne, "gone", 1.0), r));
  EXPECT_FALSE(evaluate_filter(cmp(Op::eq, "gone", 1.0), r));
  EXPECT_FALSE(evaluate_filter(cmp(Op::lt, "gone", 1.0), r));
  EXPECT_FALSE(evaluate_filter(cmp(Op::gt, "gone", 1.0), r));

  lang::FilterExpr contains;
  contains.op = Op::contains;
  contains.fields = {"gone", "s"};
  contains.keywords = {"zzz", "PIE"};
  EXPECT_TRUE(evaluate_filter(contains, r));
  contains.keywords = {"cake"};
  EXPECT_FALSE(evaluate_filter(contains, r));

  lang::FilterExpr all;
  all.op = Op::all_of;
  all.children = {cmp(Op::eq, "n", 10.0), contains};
  EXPECT_FALSE(evaluate_filter(all, r));
  lang::FilterExpr any = all;
  any.op = Op::any_of;
  EXPECT_TRUE(evaluate_filter(any, r));
  lang::FilterExpr neg;
  neg.op = Op::negate;
  neg.children = {any};
  EXPECT_FALSE(evaluate_filter(neg, r));
}

TEST(Dedup, MatchesQuadraticOracle) {
  Rng rng(11);
  const std::vector<std::string> bases{"What is 2 plus 2?", "name the river", "Caf\xC3\xA9 au lait", "x", "a b c"};
  for (int corpus = 0; corpus < 20; ++corpus) {
    std::vector<Record> rows;
    for (int i = 0; i < 1000; ++i) {
      std::string t = bases[rng.below(bases.size())];
      for (auto& c : t)
        if (rng.below(4) == 0) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
      if (rng.coin()) t = "  " + t;
      if (rng.coin()) t += rng.coin() ? "!!" : " .";
      if (rng.below(3) == 0) t.insert(rng.below(t.size() + 1), rng.coin() ? "\t " : ",");
      rows.push_back(row({{"q", t}, {"i", static_cast<double>(i)}}));
    }
    const bool lower = corpus % 2 == 0, strip = corpus % 4 < 2;
    const auto kept = deduplicate_by_text_hash(rows, "q", lower, strip);

    std::vector<Record> expected;
    for (const auto& r : rows) {
      const auto key = rftest::oracle_normalize(*r.text("q"), lower, strip);
      bool dup = false;
      for (const auto& e : expected) dup = dup || rftest::oracle_normalize(*e.text("q"), lower, strip) == key;
      if (!dup) expected.push_back(r);
    }
    ASSERT_EQ(kept, expected) << "corpus " << corpus;
    // idempotent
    EXPECT_EQ(deduplicate_by_text_hash(kept, "q", lower, strip), kept);
  }
}

TEST(Dedup, TemplateKeyAndMissingField) {
  std::vector<Record> rows{row({{"a", std::string("x")}, {"b", std::string("1")}}),
                           row({{"a", std::string("x")}, {"b", std::string("2")}}),
                           row({{"a", std::string("X")}, {"b", std::string("1")}})};
  EXPECT_EQ(deduplicate_by_text_hash(rows, "{{ a }}|{{ b }}", true, false).size(), 2u);
  EXPECT_EQ(deduplicate_by_text_hash(rows, "{{ a }}|{{ b }}", false, false).size(), 3u);
  EXPECT_THROW(deduplicate_by_text_hash(rows, "c", false, false), MissingFieldError);
  EXPECT_THROW(deduplicate_by_text_hash(rows, "{{ c }}", false, false), MissingFieldError);
}

TEST(Budget, CapsToExactlyMaxRows) {
  std::vector<int> items(12000);
  std::iota(items.begin(), items.end(), 0);
  const auto kept = enforce_budget(items, 10000, 5);
  ASSERT_EQ(kept.size(), 10000u);
  EXPECT_TRUE(std::is_sorted(kept.begin(), kept.end()));
  EXPECT_EQ(std::set<int>(kept.begin(), kept.end()).size(), 10000u);
  EXPECT_EQ(kept, enforce_budget(items, 10000, 5));
  EXPECT_NE(kept, enforce_budget(items, 10000, 6));
  EXPECT_EQ(enforce_budget(std::vector<int>(50, 1), 10000, 5).size(), 50u);
}

TEST(Budget, InclusionIsUniform) {
  std::vector<int> items(20);
  std::iota(items.begin(), items.end(), 0);
  std::vector<int> hits(20, 0);
  constexpr int kTrials = 20000;
  for (int s = 0; s < kTrials; ++s)
    for (const int v : enforce_budget(items, 5, static_cast<std::uint64_t>(s))) ++hits[v];
  for (const int h : hits) EXPECT_NEAR(static_cast<double>(h) / kTrials, 0.25, 0.015);
}

TEST(Dialogs, ConversionDropsEmpty) {
  std::vector<Record> rows{row({{"q", std::string("hi")}, {"a", std::string("there")}}),
                           row({{"q", std::string("  ")}, {"a", std::string("x")}}),
                           row({{"q", std::string("y")}, {"a", std::string("")}})};
  const auto conv = to_dialogs(rows, "Q: {{ q }}", "{{ a }}");
  ASSERT_EQ(conv.samples.size(), 2u);
  EXPECT_EQ(conv.samples[0], exchange("Q: hi", "there"));
  EXPECT_EQ(conv.dropped, 1u);
  EXPECT_THROW(to_dialogs(rows, "{{ nope }}", "{{ a }}"), TemplateError);
}

TEST(Dialogs, ExactLineShape) {
  // reference produced by a stock JSON serializer with its default separators
  const auto line = serialize_dialog_line(exchange("Tab\there \"q\" \\ / \x01 caf\xC3\xA9 \xE2\x82\xAC \x7f", "line\nbreak"));
  EXPECT_EQ(line,
            "{\"dialogs\": [{\"role\": \"user\", \"content\": \"Tab\\there \\\"q\\\" \\\\ / \\u0001 caf\xC3\xA9 \xE2\x82\xAC \x7f\"}, "
            "{\"role\": \"assistant\", \"content\": \"line\\nbreak\"}]}");
  EXPECT_EQ(serialize_dataset({exchange("a", "b"), exchange("c", "d")}),
            "{\"dialogs\": [{\"role\": \"user\", \"content\": \"a\"}, {\"role\": \"assistant\", \"content\": \"b\"}]}\n"
            "{\"dialogs\": [{\"role\": \"user\", \"content\": \"c\"}, {\"role\": \"assistant\", \"content\": \"d\"}]}\n");
}

TEST(FormatCheck, Rules) {
  EXPECT_TRUE(check_training_format({exchange("a", "b")}).ok);
  DialogSample four{{{Role::user, "a"}, {Role::assistant, "b"}, {Role::user, "c"}, {Role::assistant, "d"}}};
  EXPECT_TRUE(check_training_format({four}).ok);
  EXPECT_TRUE(check_training_format({}).ok);
  const DialogSample one{{{Role::user, "a"}}};
  const DialogSample three{{{Role::user, "a"}, {Role::assistant, "b"}, {Role::user, "c"}}};
  const DialogSample swapped{{{Role::assistant, "a"}, {Role::user, "b"}}};
  const DialogSample blank = exchange("a", " \n");
  const auto check = check_training_format({exchange("a", "b"), one, three, swapped, blank});
  EXPECT_FALSE(check.ok);
  ASSERT_EQ(check.issues.size(), 4u);
  EXPECT_EQ(check.issues[0].sample_index, 1u);
  EXPECT_EQ(check.issues[0].message, "fewer than two turns");
  EXPECT_EQ(check.issues[1].message, "odd number of turns");
  EXPECT_EQ(check.issues[2].message, "turn 0 should be user");
  EXPECT_EQ(check.issues[3].message, "turn 1 has empty content");
}

TEST(FormatCheck, FuzzedInvalidLinesAllFlagged) {
  Rng rng(17);
  const auto& corruptions = rftest::invalid_line_makers();
  std::size_t flagged_total = 0, corrupted_total = 0;
  for (int trial = 0; trial < 200; ++trial) {
    std::string text;
    std::set<std::size_t> corrupted;
    const std::size_t lines = 1 + rng.below(12);
    for (std::size_t i = 0; i < lines; ++i) {
      const std::string u = "question " + std::to_string(rng.below(1000));
      const std::string a = "answer " + std::to_string(rng.below(1000));
      if (rng.below(3) == 0) {
        corrupted.insert(i);
        text += corruptions[rng.below(corruptions.size())](u, a) + "\n";
      } else {
        text += serialize_dialog_line(exchange(u, a)) + "\n";
      }
    }
    const auto loaded = load_dialog_lines(text);
    std::set<std::size_t> flagged;
    for (const auto& issue : loaded.check.issues) flagged.insert(issue.sample_index);
    EXPECT_EQ(flagged, corrupted) << text;
    EXPECT_EQ(loaded.check.ok, corrupted.empty());
    flagged_total += flagged.size();
    corrupted_total += corrupted.size();
  }
  EXPECT_EQ(flagged_total, corrupted_total);
  EXPECT_GT(corrupted_total, 300u);
}

TEST(ExtractJson, FirstBalancedObject) {
  EXPECT_EQ(extract_json_object("noise {bad} then {\"a\": \"}\", \"b\": {\"c\": 1}} tail"),
            Json::parse(R"({"a": "}", "b": {"c": 1}})"));
  EXPECT_FALSE(extract_json_object("no object").has_value());
  EXPECT_FALSE(extract_json_object("{unclosed").has_value());
}

TEST(Execute, FixtureRecipeWritesContractFile) {
  rftest::TempDir dir("exec");
  const auto result = run(kArithRecipe, dir.path());
  ASSERT_EQ(result.report.status, ExecStatus::ok) << result.report.failure_detail;
  // 43 rows, one empty answer, three duplicate questions (counted by an external script)
  EXPECT_EQ(result.report.produced, 39u);
  ASSERT_EQ(result.report.per_op.size(), 5u);
  EXPECT_EQ(result.report.per_op[0].rows_out, 43u);
  EXPECT_EQ(result.report.per_op[1].rows_out, 42u);
  EXPECT_EQ(result.report.per_op[2].dropped, 3u);
  EXPECT_EQ(result.report.output_path, "data/processed/train.jsonl");
  const std::string written = read_file(dir / "data/processed/train.jsonl");
  EXPECT_EQ(written, serialize_dataset(result.dataset));
  EXPECT_EQ(split_lines(written)[38],
            "{\"dialogs\": [{\"role\": \"user\", \"content\": \"What is 20 plus 3?\"}, "
            "{\"role\": \"assistant\", \"content\": \"23\"}]}");
  const auto reloaded = load_dialog_lines(written);
  EXPECT_TRUE(reloaded.check.ok);
  EXPECT_EQ(reloaded.dataset, result.dataset);
}

TEST(Execute, BudgetAppliesAtDump) {
  Budget budget;
  budget.max_rows = 10;
  const auto a = run(kArithRecipe, {}, nullptr, {}, budget);
  const auto b = run(kArithRecipe, {}, nullptr, {}, budget);
  EXPECT_EQ(a.report.produced, 10u);
  EXPECT_EQ(a.dataset, b.dataset);
}

TEST(Execute, FaultsFoldIntoReport) {
  const std::string head = "recipe 1\nop src = load_source()\n  source = \"arith_qa\"\n";
  const std::string tail = "op out = dump(d)\n";

  auto r = run(head + "op d = to_dialogs(src)\n  user = \"{{ missing }}\"\n  assistant = \"{{ answer }}\"\n" + tail);
  EXPECT_EQ(r.report.status, ExecStatus::exec_failure);
  EXPECT_NE(r.report.failure_detail.find("op 'd' (to_dialogs)"), std::string::npos) << r.report.failure_detail;
  EXPECT_EQ(r.report.per_op.size(), 2u);

  r = run("recipe 1\nop src = load_source()\n  source = \"ghost\"\nop d = to_dialogs(src)\n  user = \"x\"\n  assistant = \"y\"\n" + tail);
  EXPECT_EQ(r.report.status, ExecStatus::exec_failure);
  EXPECT_NE(r.report.failure_detail.find("undeclared source"), std::string::npos);
  EXPECT_TRUE(r.report.per_op.empty());

  r = run(head + "op e = select_by_filter(src)\n  where = eq(\"answer\", \"never\")\n"
                 "op d = to_dialogs(e)\n  user = \"x\"\n  assistant = \"y\"\n" + tail);
  EXPECT_EQ(r.report.failure_detail, "pipeline produced an empty dataset");

  Limits small;
  small.per_op_rows = 20;
  r = run(head + "op d = to_dialogs(src)\n  user = \"{{ question }}\"\n  assistant = \"{{ answer }}\"\n" + tail, {}, nullptr, small);
  EXPECT_EQ(r.report.status, ExecStatus::exec_failure);
  EXPECT_NE(r.report.failure_detail.find("per-op limit"), std::string::npos);

  Limits no_time;
  no_time.wall_clock = std::chrono::milliseconds(0);
  r = run(kArithRecipe, {}, nullptr, no_time);
  EXPECT_NE(r.report.failure_detail.find("wall-clock limit"), std::string::npos);

  r = run(head + "op t = llm_transform(src)\n  prompt = \"{{ question }}\"\n  parser = \"raw\"\n"
                 "op d = to_dialogs(t)\n  user = \"x\"\n  assistant = \"{{ response }}\"\n" + tail);
  EXPECT_EQ(r.report.failure_detail, "op 't' (llm_transform): llm_transform needs a gateway");
  EXPECT_EQ(r.dataset.size(), 0u);
  EXPECT_EQ(r.report.produced, 0u);
}

TEST(Execute, LlmTransformParsers) {
  llm::MockScript script;
  script.on(llm::Tag::transform, std::vector<std::string>{"   "}, "raw-empty");
  script.on(llm::Tag::transform, [](const llm::ChatRequest& r) {
    const std::string& q = r.messages.back().content;
    if (q.find("json") != std::string::npos) return std::string("Sure: {\"rewritten\": \"R\", \"score\": 3} ok");
    if (q.find("grade") != std::string::npos) return std::string("fine \\boxed{D} - TASK_MISMATCH");
    return "raw:" + q;
  });
  llm::Gateway gw({}, nullptr, script);
  const std::string head = "recipe 1\nop src = load_source()\n  source = \"arith_qa\"\n  limit = 3\n";
  const auto with_parser = [&](const std::string& prompt, const std::string& parser, const std::string& assistant) {
    return run(head + "op t = llm_transform(src)\n  prompt = \"" + prompt + "\"\n  parser = \"" + parser +
                   "\"\n  system = \"be brief\"\n  output = \"out\"\n"
                   "op d = to_dialogs(t)\n  user = \"{{ question }}\"\n  assistant = \"" + assistant + "\"\n"
                   "op o = dump(d)\n",
               {}, &gw);
  };
  auto r = with_parser("{{ question }}", "raw", "{{ out }}");
  ASSERT_EQ(r.report.status, ExecStatus::ok) << r.report.failure_detail;
  EXPECT_EQ(r.dataset[0].dialogs[1].content, "raw:What is 30 plus 57?");
  r = with_parser("json {{ question }}", "json", "{{ rewritten }}/{{ score }}");
  ASSERT_EQ(r.report.status, ExecStatus::ok) << r.report.failure_detail;
  EXPECT_EQ(r.dataset[0].dialogs[1].content, "R/3");
  r = with_parser("grade {{ question }}", "grade_box", "{{ grade }} {{ reason }}");
  ASSERT_EQ(r.report.status, ExecStatus::ok) << r.report.failure_detail;
  EXPECT_EQ(r.dataset[0].dialogs[1].content, "D TASK_MISMATCH");
  r = with_parser("raw-empty {{ question }}", "raw", "{{ out }}");
  EXPECT_EQ(r.report.failure_detail, "pipeline produced an empty dataset");
  EXPECT_EQ(r.report.per_op[1].dropped, 3u);
}

TEST(ExecReport, JsonRoundTrip) {
  ExecReport r;
  r.status = ExecStatus::format_violation;
  r.produced = 4;
  r.seed = 99;
  r.failure_detail = "sample 1: odd number of turns";
  r.output_path = "data/processed/x.jsonl";
  r.per_op.push_back({"a", lang::OpKind::sample_n, 10, 4, 3, 0});
  const auto back = exec_report_from_json(to_json(r));
  EXPECT_EQ(to_json(back), to_json(r));
  EXPECT_THROW(exec_status_from_string("fine"), Error);
}

TEST(Shim, InvocationRoundTrip) {
  ShimInvocation inv;
  inv.script = "print('x')";
  inv.verification = "assert True";
  inv.workdir = "/tmp/w";
  inv.limits.wall_clock = std::chrono::milliseconds(1500);
  inv.limits.per_op_rows = 77;
  inv.max_output_rows = 12;
  inv.sources = {{"a", "/data/a.jsonl"}};
  inv.gateway_proxy = "http://127.0.0.1:9";
  const auto back = shim_invocation_from_json(to_json(inv));
  EXPECT_EQ(to_json(back), to_json(inv));
  EXPECT_EQ(back.limits.wall_clock.count(), 1500);
  rftest::TempDir dir("shim");
  write_shim_invocation(inv, dir / "invocation.json");
  EXPECT_EQ(shim_invocation_from_json(Json::parse(read_file(dir / "invocation.json"))).script, inv.script);
}

TEST(Shim, IngestRechecksAndCaps) {
  rftest::TempDir dir("shim");
  const auto report = dir / "report.json";
  const auto write_report = [&](const std::string& status, const std::string& output = "") {
    write_file_atomic(report, Json{{"status", status}, {"produced", 999}, {"output_path", output}}.dump());
  };

  write_report("ok");
  auto r = ingest_shim_output(dir.path(), report, 10000, 1);
  EXPECT_EQ(r.report.status, ExecStatus::exec_failure);
  EXPECT_EQ(r.report.failure_detail, "runner produced no output under data/processed/");

  DialogDataset big;
  for (int i = 0; i < 12000; ++i) big.push_back(exchange("q" + std::to_string(i), "a"));
  write_file_atomic(dir / "data/processed/out.jsonl", serialize_dataset(big));
  r = ingest_shim_output(dir.path(), report, 10000, 1);
  EXPECT_EQ(r.report.status, ExecStatus::ok);
  EXPECT_EQ(r.report.produced, 10000u);
  EXPECT_EQ(r.dataset.size(), 10000u);
  EXPECT_EQ(r.report.output_path, "data/processed/out.jsonl");

  // the runner's own verdict does not override the re-check
  write_file_atomic(dir / "data/processed/out.jsonl",
                    serialize_dialog_line(exchange("a", "b")) + "\n{\"dialogs\": [{\"role\": \"user\", \"content\": \"x\"}]}\n");
  r = ingest_shim_output(dir.path(), report, 10000, 1);
  EXPECT_EQ(r.report.status, ExecStatus::format_violation);
  EXPECT_EQ(r.report.failure_detail, "sample 1: fewer than two turns");

  write_report("exec_failure");
  r = ingest_shim_output(dir.path(), report, 10000, 1);
  EXPECT_EQ(r.report.status, ExecStatus::exec_failure);

  write_file_atomic(report, "not json");
  r = ingest_shim_output(dir.path(), report, 10000, 1);
  EXPECT_NE(r.report.failure_detail.find("unreadable runner report"), std::string::npos);
}
