#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "recipeforge/rng.hpp"
#include "recipeforge/text.hpp"

namespace recipeforge::llm {
class Gateway;
}

namespace recipeforge::pool {

enum class BenchmarkUsage { train, test };

struct BenchmarkRef {
  std::string id;
  std::string domain;
  std::string description;
  BenchmarkUsage usage = BenchmarkUsage::train;
  std::string answer_format_hint;
  /// Normalized question texts; only ever used for leakage checks.
  std::vector<std::string> items;
};

struct DataSourceMeta {
  std::string id;
  std::string location;
  std::string description;
  std::vector<std::string> field_names;
  std::uint64_t popularity = 0;
  std::vector<Json> preview;  // at most 3 records
};

struct TaskSpec {
  std::string id;
  std::string instruction;
  BenchmarkRef benchmark;
  std::vector<DataSourceMeta> sources;

  const DataSourceMeta* find_source(std::string_view source_id) const noexcept;
};

struct CatalogBenchmark {
  BenchmarkRef ref;
  std::vector<std::string> candidate_sources;
};

/// Benchmarks plus the sources they may draw from. Relative source
/// locations resolve against base_dir.
struct Catalog {
  std::vector<CatalogBenchmark> benchmarks;
  std::vector<DataSourceMeta> sources;
  std::filesystem::path base_dir;

  const DataSourceMeta* find_source(std::string_view source_id) const noexcept;
  const CatalogBenchmark* find_benchmark(std::string_view benchmark_id) const noexcept;
};

/// Throws CatalogError on malformed documents (missing ids, duplicate ids,
/// empty field lists).
Catalog catalog_from_json(const Json& document, const std::filesystem::path& base_dir);
Catalog load_catalog(const std::filesystem::path& path);

Json to_json(const BenchmarkRef& benchmark);
Json to_json(const DataSourceMeta& source);
Json to_json(const TaskSpec& task);
BenchmarkRef benchmark_from_json(const Json& j);
DataSourceMeta source_from_json(const Json& j);
TaskSpec task_from_json(const Json& j);
/// Relative source locations resolve against the task file's directory.
TaskSpec load_task(const std::filesystem::path& path);

/// Records of a source, one flat object per JSONL line.
std::vector<Json> load_source_records(const DataSourceMeta& source,
                                      const std::filesystem::path& base_dir = {});

struct SeedPoolConfig {
  std::size_t min_sources = 8;
  std::size_t max_sources = 15;
  bool require_resolvable = true;
};

/// Instruction text for a benchmark over a given source list; shared by seed
/// and augmented tasks.
std::string render_task_instruction(const BenchmarkRef& benchmark,
                                    const std::vector<DataSourceMeta>& sources);

/// One task per train-usage benchmark, in catalog order. Sources keep their
/// candidate order and are truncated to max_sources. Source locations in the
/// returned tasks are absolute, resolved against the catalog directory.
std::vector<TaskSpec> build_seed_pool(const Catalog& catalog, const SeedPoolConfig& config = {});

/// Asks the gateway for 3-5 search keywords; one retry, then JudgeParseError.
std::vector<std::string> synthesize_keywords(const BenchmarkRef& benchmark, llm::Gateway& gateway);

/// Splits a keyword response into trimmed, case-insensitively distinct
/// keywords (bullets, numbering and quotes removed).
std::vector<std::string> parse_keywords(std::string_view response);

/// Per keyword: sources whose id or description contains it
/// (case-insensitive), by popularity descending then id, top 4. The union
/// keeps first appearance.
std::vector<DataSourceMeta> search_and_rank(const std::vector<std::string>& keywords,
                                            const Catalog& catalog,
                                            std::size_t per_keyword = 4);

struct LeakageHit {
  std::size_t record_index = 0;
  std::size_t item_index = 0;
  bool exact = false;
  double overlap = 0.0;
};

struct LeakageReport {
  bool pass = true;
  std::vector<std::size_t> offending_records;  // ascending
  std::vector<LeakageHit> hits;
};

/// Fraction of the item's tokens covered by 8-grams that also occur in the
/// candidate token stream. Both inputs are already-normalized word lists.
double ngram_coverage(const std::vector<std::string_view>& candidate,
                      const std::vector<std::string_view>& item, std::size_t n = 8);

/// Fails a candidate if any record's normalized text (whole record or any
/// single field) equals a benchmark item, or its 8-gram coverage of an item
/// exceeds 0.8.
LeakageReport verify_no_leakage(const std::vector<Json>& records, const BenchmarkRef& benchmark,
                                double max_overlap = 0.8);
/// Reads the candidate's records first; IoError when unreadable.
LeakageReport verify_no_leakage(const DataSourceMeta& candidate, const BenchmarkRef& benchmark,
                                const std::filesystem::path& base_dir = {});

/// Draws (benchmark, subset) pairs: benchmark index with probability
/// proportional to its source count, then a uniform nonempty subset via
/// per-source coin flips redrawn until nonempty.
class AugmentSampler {
public:
  AugmentSampler(const std::vector<TaskSpec>& seed_pool, std::uint64_t seed);

  struct Draw {
    std::size_t task_index = 0;
    std::vector<std::size_t> source_indices;  // ascending
  };

  Draw draw();

private:
  const std::vector<TaskSpec>& pool_;
  std::vector<std::uint64_t> cumulative_;
  Rng rng_;
};

struct AugmentConfig {
  std::size_t target_count = 5000;
  std::uint64_t seed = 0;
  /// 0 means 50 x target_count.
  std::size_t attempt_cap = 0;
};

/// Unique instances keyed by (benchmark id, sorted source ids). Throws
/// ExhaustionError when the attempt cap is hit first.
std::vector<TaskSpec> augment_tasks(const std::vector<TaskSpec>& seed_pool, const AugmentConfig& config);

}  // namespace recipeforge::pool
