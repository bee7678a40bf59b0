#include <gtest/gtest.h>

#include <set>

#include "recipeforge/error.hpp"
#include "recipeforge/rng.hpp"
#include "recipeforge/template.hpp"
#include "recipeforge/text.hpp"
#include "support.hpp"

using namespace recipeforge;

TEST(Fnv, PublishedVectors) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(fnv1a64("foobar"), 0x85944171f73967e8ULL);
  EXPECT_EQ(hex64(0xabcULL), "0000000000000abc");
}

TEST(Normalize, Options) {
  EXPECT_EQ(normalize_text("  Hello,   World! ", false, false), "Hello, World!");
  EXPECT_EQ(normalize_text("Hello,   World!", true, false), "hello, world!");
  EXPECT_EQ(normalize_text("Hello,   World!", true, true), "hello world");
  EXPECT_EQ(normalize_for_match("A-b\tC"), "ab c");
  // non-ASCII bytes survive character stripping
  EXPECT_EQ(normalize_text("caf\xC3\xA9!", true, true), "caf\xC3\xA9");
}

TEST(Text, SplitLinesStripsCarriageReturns) {
  const auto lines = split_lines("a\r\nb\n\nc");
  ASSERT_EQ(lines.size(), 4u);
  EXPECT_EQ(lines[0], "a");
  EXPECT_EQ(lines[2], "");
  EXPECT_EQ(lines[3], "c");
}

TEST(Text, Numbers) {
  EXPECT_EQ(shortest_number(3.0), "3");
  EXPECT_EQ(shortest_number(0.25), "0.25");
  EXPECT_EQ(format_number(1.0 / 3.0), "0.333333333333");
}

TEST(Text, AtomicWriteAndJsonl) {
  rftest::TempDir dir("text");
  const auto path = dir / "nested/out.jsonl";
  write_file_atomic(path, "{\"a\": 1}\n\n{\"a\": 2}\n");
  const auto rows = read_jsonl(path);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[1]["a"], 2);
  write_file_atomic(path, "{bad\n");
  EXPECT_THROW(read_jsonl(path), ParseError);
  EXPECT_THROW(read_file(dir / "missing"), IoError);
}

TEST(Rng, ReproducibleAndDistinctStreams) {
  Rng a(42), b(42), c(derive_seed(42, 1));
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next();
    EXPECT_EQ(x, b.next());
    EXPECT_NE(x, c.next());
  }
}

TEST(Rng, BelowIsRoughlyUniform) {
  Rng rng(7);
  std::vector<int> counts(10, 0);
  constexpr int kDraws = 100000;
  for (int i = 0; i < kDraws; ++i) ++counts[rng.below(10)];
  for (const int c : counts) EXPECT_NEAR(c, kDraws / 10, 600);
}

TEST(SampleIndices, Properties) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng sizes(seed);
    const std::size_t n = 1 + sizes.below(300);
    const std::size_t k = sizes.below(n + 1);
    const auto idx = sample_indices(n, k, seed);
    ASSERT_EQ(idx.size(), k);
    EXPECT_TRUE(std::is_sorted(idx.begin(), idx.end()));
    EXPECT_EQ(std::set<std::size_t>(idx.begin(), idx.end()).size(), k);
    if (!idx.empty()) EXPECT_LT(idx.back(), n);
    EXPECT_EQ(idx, sample_indices(n, k, seed));
  }
}

TEST(Template, Placeholders) {
  const auto lookup = [](std::string_view name) -> std::optional<std::string> {
    if (name == "q") return "What?";
    if (name == "braces") return "{{ q }}";
    return std::nullopt;
  };
  EXPECT_EQ(render_placeholders("Q: {{ q }} / {{q}}", lookup), "Q: What? / What?");
  // substituted values are not rendered again
  EXPECT_EQ(render_placeholders("{{ braces }}", lookup), "{{ q }}");
  EXPECT_THROW(render_placeholders("{{ nope }}", lookup), TemplateError);
  EXPECT_THROW(render_placeholders("{{ q ", lookup), TemplateError);
  EXPECT_EQ(template_placeholders("{{ a }} x {{ b }} {{ a }}"), (std::vector<std::string>{"a", "b", "a"}));
}

TEST(Template, PromptLoopsAndDottedPaths) {
  const Json ctx{{"bench", {{"name", "B"}}}, {"items", Json::array({Json{{"id", "x"}}, Json{{"id", "y"}}})}};
  const std::string tmpl = "# {{ bench.name }}\n{% for it in items -%}\n## {{ it.id }}\n{% endfor -%}\nend";
  EXPECT_EQ(render_prompt_template(tmpl, ctx), "# B\n## x\n## y\nend");
  EXPECT_THROW(render_prompt_template("{{ missing }}", ctx), TemplateError);
  EXPECT_THROW(render_prompt_template("{% for a in items %}x", ctx), TemplateError);
}
