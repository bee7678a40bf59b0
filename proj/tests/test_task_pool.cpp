#include <gtest/gtest.h>

#include <chrono>
#include <map>
#include <set>

#include "recipeforge/error.hpp"
#include "recipeforge/llm_gateway.hpp"
#include "recipeforge/task_pool.hpp"
#include "leakage_corpus.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace recipeforge;
using namespace recipeforge::pool;

using rftest::lenient;
using rftest::synthetic_catalog;

TEST(SeedPool, FromFixtureCatalog) {
  const auto catalog = load_catalog(rftest::fixture_dir() / "catalog.json");
  const auto pool = build_seed_pool(catalog);
  ASSERT_EQ(pool.size(), 2u);  // the test-usage benchmark is skipped
  EXPECT_EQ(pool[0].id, "toy-mcq");
  EXPECT_EQ(pool[0].sources.size(), 8u);
  for (const auto& s : pool[0].sources) {
    EXPECT_TRUE(std::filesystem::path(s.location).is_absolute());
    EXPECT_TRUE(std::filesystem::exists(s.location));
  }
  EXPECT_NE(pool[0].instruction.find("toy-mcq"), std::string::npos);
}

TEST(SeedPool, Errors) {
  auto c = synthetic_catalog(1);
  c.benchmarks[0].candidate_sources.resize(7);
  EXPECT_THROW(build_seed_pool(c, lenient()), CatalogError);

  c = synthetic_catalog(1);
  c.benchmarks[0].candidate_sources.push_back("bench0");
  EXPECT_THROW(build_seed_pool(c, lenient()), CatalogError);

  c = synthetic_catalog(1);
  c.benchmarks[0].candidate_sources.push_back("ghost");
  EXPECT_THROW(build_seed_pool(c, lenient()), CatalogError);

  c = synthetic_catalog(1);
  EXPECT_THROW(build_seed_pool(c), CatalogError);  // locations do not resolve

  c = synthetic_catalog(1);
  c.benchmarks[0].candidate_sources.clear();
  EXPECT_THROW(build_seed_pool(c, lenient()), CatalogError);
}

TEST(SeedPool, TruncatesToMax) {
  auto c = synthetic_catalog(1);
  c.benchmarks[0].candidate_sources.clear();
  for (int s = 0; s < 20; ++s) c.benchmarks[0].candidate_sources.push_back("src" + std::to_string(s));
  const auto pool = build_seed_pool(c, lenient());
  ASSERT_EQ(pool[0].sources.size(), 15u);
  EXPECT_EQ(pool[0].sources.front().id, "src0");
  EXPECT_EQ(pool[0].sources.back().id, "src14");
}

TEST(Keywords, Parse) {
  EXPECT_EQ(parse_keywords("- math\n2. Algebra\n\"word problems\"\nMATH\n"),
            (std::vector<std::string>{"math", "Algebra", "word problems"}));
  EXPECT_EQ(parse_keywords("a, b ,c"), (std::vector<std::string>{"a", "b", "c"}));
  EXPECT_TRUE(parse_keywords("\n\n").empty());
}

TEST(Keywords, RetryThenFail) {
  BenchmarkRef b;
  b.id = "x";
  {
    llm::MockScript script;
    script.on(llm::Tag::keywords, std::vector<std::string>{"only", "alpha\nbeta\ngamma"});
    llm::Gateway gw({}, nullptr, script);
    EXPECT_EQ(synthesize_keywords(b, gw), (std::vector<std::string>{"alpha", "beta", "gamma"}));
  }
  {
    llm::MockScript script;
    script.on(llm::Tag::keywords, std::vector<std::string>{"one"});
    llm::Gateway gw({}, nullptr, script);
    EXPECT_THROW(synthesize_keywords(b, gw), JudgeParseError);
  }
}

TEST(Retrieval, RanksByPopularityThenId) {
  Catalog c;
  const auto add = [&](std::string id, std::string desc, std::uint64_t pop) {
    DataSourceMeta s;
    s.id = std::move(id);
    s.description = std::move(desc);
    s.popularity = pop;
    s.field_names = {"x"};
    c.sources.push_back(s);
  };
  add("b-math", "Math problems", 10);
  add("a-math", "more MATH", 10);
  add("c-math", "math", 50);
  add("d-math", "math", 1);
  add("e-math", "math", 0);
  add("chem", "chemistry questions", 99);
  const auto ranked = search_and_rank({"math", "chem", "MATH"}, c);
  std::vector<std::string> ids;
  for (const auto& s : ranked) ids.push_back(s.id);
  EXPECT_EQ(ids, (std::vector<std::string>{"c-math", "a-math", "b-math", "d-math", "chem"}));
}

TEST(Leakage, FixtureSource) {
  const auto catalog = load_catalog(rftest::fixture_dir() / "catalog.json");
  const auto& bench = catalog.find_benchmark("toy-mcq")->ref;
  const auto leaky = verify_no_leakage(*catalog.find_source("leaky_copy"), bench, catalog.base_dir);
  EXPECT_FALSE(leaky.pass);
  EXPECT_EQ(leaky.offending_records, (std::vector<std::size_t>{0, 1, 2}));
  const auto clean = verify_no_leakage(*catalog.find_source("arith_qa"), bench, catalog.base_dir);
  EXPECT_TRUE(clean.pass);
  DataSourceMeta missing;
  missing.id = "gone";
  missing.location = "/nonexistent.jsonl";
  EXPECT_THROW(verify_no_leakage(missing, bench), IoError);
}

TEST(Leakage, NineOfTenConsecutiveTokens) {
  BenchmarkRef b;
  b.items = {normalize_for_match("one two three four five six seven eight nine ten")};
  EXPECT_FALSE(verify_no_leakage(std::vector<Json>{Json{{"q", "One two three four five six seven eight nine"}}}, b).pass);
  EXPECT_FALSE(verify_no_leakage(std::vector<Json>{Json{{"q", "two three four five six seven eight nine ten"}}}, b).pass);
  // eight of ten is exactly 0.8, not above it
  EXPECT_TRUE(verify_no_leakage(std::vector<Json>{Json{{"q", "one two three four five six seven eight"}}}, b).pass);
  EXPECT_TRUE(verify_no_leakage(std::vector<Json>{Json{{"q", "ten nine eight seven six five four three two one"}}}, b).pass);
}

TEST(Leakage, CoverageOracle) {
  // brute force: token j is covered iff some 8-window containing j appears in the candidate
  Rng rng(5);
  for (int round = 0; round < 200; ++round) {
    std::vector<std::string> vocab{"a", "b", "c", "d"};
    std::vector<std::string> item_s, cand_s;
    const std::size_t ni = 8 + rng.below(10), nc = rng.below(30);
    for (std::size_t i = 0; i < ni; ++i) item_s.push_back(vocab[rng.below(2)]);
    for (std::size_t i = 0; i < nc; ++i) cand_s.push_back(vocab[rng.below(2)]);
    std::vector<std::string_view> item(item_s.begin(), item_s.end()), cand(cand_s.begin(), cand_s.end());
    std::vector<bool> covered(ni, false);
    for (std::size_t s = 0; s + 8 <= ni; ++s)
      for (std::size_t t = 0; t + 8 <= nc; ++t)
        if (std::equal(item.begin() + s, item.begin() + s + 8, cand.begin() + t))
          for (std::size_t k = s; k < s + 8; ++k) covered[k] = true;
    const double expected = static_cast<double>(std::count(covered.begin(), covered.end(), true)) / ni;
    EXPECT_DOUBLE_EQ(ngram_coverage(cand, item), expected);
  }
}

TEST(Leakage, InvariantToOrderCaseAndPunctuation) {
  BenchmarkRef b;
  b.items = {normalize_for_match("how many moons does the fourth planet of the toy system have")};
  std::vector<Json> records{Json{{"q", "clean"}}, Json{{"q", "HOW many moons, does the fourth planet of the toy system have?!"}}};
  const auto forward = verify_no_leakage(records, b);
  std::reverse(records.begin(), records.end());
  const auto backward = verify_no_leakage(records, b);
  EXPECT_EQ(forward.offending_records, (std::vector<std::size_t>{1}));
  EXPECT_EQ(backward.offending_records, (std::vector<std::size_t>{0}));
}

TEST(Augment, SamplerProportionalToSourceCount) {
  const auto pool = build_seed_pool(synthetic_catalog(25), lenient());
  AugmentSampler sampler(pool, 99);
  std::vector<double> counts(pool.size(), 0);
  constexpr int kDraws = 100000;
  std::size_t total_sources = 0;
  for (const auto& t : pool) total_sources += t.sources.size();
  for (int i = 0; i < kDraws; ++i) {
    const auto d = sampler.draw();
    ASSERT_FALSE(d.source_indices.empty());
    ASSERT_TRUE(std::is_sorted(d.source_indices.begin(), d.source_indices.end()));
    ++counts[d.task_index];
  }
  for (std::size_t b = 0; b < pool.size(); ++b) {
    const double expected = static_cast<double>(pool[b].sources.size()) / total_sources;
    EXPECT_NEAR(counts[b] / kDraws, expected, 0.02 * expected + 0.002);
  }
}

TEST(Augment, FiveThousandUniqueInstances) {
  const auto pool = build_seed_pool(synthetic_catalog(25), lenient());
  const auto start = std::chrono::steady_clock::now();
  const auto tasks = augment_tasks(pool, {5000, 3, 0});
  EXPECT_LT(std::chrono::steady_clock::now() - start, std::chrono::seconds(60));
  ASSERT_EQ(tasks.size(), 5000u);
  std::set<std::string> ids, keys;
  for (const auto& t : tasks) {
    ids.insert(t.id);
    std::string key = t.benchmark.id;
    for (const auto& s : t.sources) key += "|" + s.id;
    keys.insert(key);
    EXPECT_FALSE(t.sources.empty());
    for (const auto& s : t.sources) EXPECT_NE(s.id, t.benchmark.id);
  }
  EXPECT_EQ(ids.size(), 5000u);
  EXPECT_EQ(keys.size(), 5000u);
  // deterministic under the same seed
  const auto again = augment_tasks(pool, {5000, 3, 0});
  for (std::size_t i = 0; i < tasks.size(); i += 97) EXPECT_EQ(tasks[i].id, again[i].id);
}

TEST(Augment, ExhaustionWhenTooFewCombinations) {
  auto c = synthetic_catalog(1);
  const auto pool = build_seed_pool(c, lenient());  // 8 sources -> 255 subsets
  EXPECT_THROW(augment_tasks(pool, {300, 1, 0}), ExhaustionError);
  EXPECT_EQ(augment_tasks(pool, {255, 1, 0}).size(), 255u);
}

TEST(TaskJson, RoundTrip) {
  const auto task = rftest::fixture_task();
  const auto again = task_from_json(to_json(task));
  EXPECT_EQ(again.id, task.id);
  EXPECT_EQ(again.sources.size(), task.sources.size());
  EXPECT_EQ(again.benchmark.items, task.benchmark.items);
  EXPECT_EQ(again.sources[1].field_names, (std::vector<std::string>{"passage", "question", "answer"}));
}

TEST(Leakage, PlantedCorpusHasNoFalseNegatives) {
  const auto corpus = rftest::make_leakage_corpus(2024);
  std::vector<Json> records;
  for (const auto& c : corpus.cases) records.push_back(c.record);
  const auto report = verify_no_leakage(records, corpus.benchmark);
  const std::set<std::size_t> flagged(report.offending_records.begin(), report.offending_records.end());
  std::size_t planted = 0;
  for (std::size_t i = 0; i < corpus.cases.size(); ++i) {
    if (corpus.cases[i].contaminated) {
      ++planted;
      EXPECT_TRUE(flagged.contains(i)) << "missed planted record " << i;
    } else {
      EXPECT_FALSE(flagged.contains(i)) << "clean record " << i << " flagged";
    }
  }
  EXPECT_EQ(planted, 200u);
}
