#include "recipeforge/task_pool.hpp"

#include <algorithm>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "recipeforge/error.hpp"
#include "recipeforge/llm_gateway.hpp"

namespace recipeforge::pool {

namespace fs = std::filesystem;

const DataSourceMeta* TaskSpec::find_source(std::string_view source_id) const noexcept {
  for (const auto& s : sources)
    if (s.id == source_id) return &s;
  return nullptr;
}

const DataSourceMeta* Catalog::find_source(std::string_view source_id) const noexcept {
  for (const auto& s : sources)
    if (s.id == source_id) return &s;
  return nullptr;
}

const CatalogBenchmark* Catalog::find_benchmark(std::string_view benchmark_id) const noexcept {
  for (const auto& b : benchmarks)
    if (b.ref.id == benchmark_id) return &b;
  return nullptr;
}

// ---------------------------------------------------------------------------
// serialization

namespace {

std::string required_string(const Json& j, const char* key, const char* what) {
  if (!j.is_object() || !j.contains(key) || !j[key].is_string() || j[key].get<std::string>().empty())
    throw CatalogError(std::string(what) + " is missing a nonempty \"" + key + "\"");
  return j[key].get<std::string>();
}

fs::path resolve_location(const std::string& location, const fs::path& base_dir) {
  fs::path p(location);
  if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
  return p.lexically_normal();
}

}  // namespace

Json to_json(const BenchmarkRef& b) {
  return Json{{"id", b.id},
              {"domain", b.domain},
              {"description", b.description},
              {"usage", b.usage == BenchmarkUsage::train ? "train" : "test"},
              {"answer_format_hint", b.answer_format_hint},
              {"items", b.items}};
}

Json to_json(const DataSourceMeta& s) {
  return Json{{"id", s.id},
              {"location", s.location},
              {"description", s.description},
              {"field_names", s.field_names},
              {"popularity", s.popularity},
              {"preview", s.preview}};
}

Json to_json(const TaskSpec& t) {
  Json sources = Json::array();
  for (const auto& s : t.sources) sources.push_back(to_json(s));
  return Json{{"id", t.id},
              {"instruction", t.instruction},
              {"benchmark", to_json(t.benchmark)},
              {"sources", std::move(sources)}};
}

BenchmarkRef benchmark_from_json(const Json& j) {
  BenchmarkRef b;
  b.id = required_string(j, "id", "benchmark");
  b.domain = j.value("domain", std::string{});
  b.description = j.value("description", std::string{});
  const std::string usage = j.value("usage", std::string{"train"});
  if (usage == "train") {
    b.usage = BenchmarkUsage::train;
  } else if (usage == "test") {
    b.usage = BenchmarkUsage::test;
  } else {
    throw CatalogError("benchmark " + b.id + " has unknown usage '" + usage + "'");
  }
  b.answer_format_hint = j.value("answer_format_hint", std::string{});
  if (j.contains("items")) {
    for (const auto& item : j["items"]) b.items.push_back(normalize_for_match(item.get<std::string>()));
  }
  return b;
}

DataSourceMeta source_from_json(const Json& j) {
  DataSourceMeta s;
  s.id = required_string(j, "id", "source");
  s.location = required_string(j, "location", ("source " + s.id).c_str());
  s.description = j.value("description", std::string{});
  if (j.contains("field_names")) s.field_names = j["field_names"].get<std::vector<std::string>>();
  if (j.contains("popularity")) {
    if (!j["popularity"].is_number_unsigned() && !(j["popularity"].is_number_integer() && j["popularity"].get<std::int64_t>() >= 0))
      throw CatalogError("source " + s.id + " popularity must be a non-negative integer");
    s.popularity = j["popularity"].get<std::uint64_t>();
  }
  if (j.contains("preview")) {
    for (const auto& r : j["preview"]) {
      if (s.preview.size() == 3) break;
      s.preview.push_back(r);
    }
  }
  if (s.field_names.empty() && !s.preview.empty() && s.preview.front().is_object()) {
    for (const auto& [k, v] : s.preview.front().items()) s.field_names.push_back(k);
  }
  return s;
}

TaskSpec task_from_json(const Json& j) {
  TaskSpec t;
  t.id = required_string(j, "id", "task");
  t.instruction = j.value("instruction", std::string{});
  if (!j.contains("benchmark")) throw CatalogError("task " + t.id + " has no benchmark");
  t.benchmark = benchmark_from_json(j["benchmark"]);
  if (!j.contains("sources") || !j["sources"].is_array() || j["sources"].empty())
    throw CatalogError("task " + t.id + " has no sources");
  for (const auto& s : j["sources"]) {
    t.sources.push_back(source_from_json(s));
    if (t.sources.back().id == t.benchmark.id)
      throw CatalogError("task " + t.id + " lists its benchmark among sources");
  }
  return t;
}

TaskSpec load_task(const fs::path& path) {
  try {
    TaskSpec task = task_from_json(Json::parse(read_file(path)));
    for (auto& s : task.sources) s.location = resolve_location(s.location, path.parent_path()).string();
    return task;
  } catch (const Json::exception& e) {
    throw CatalogError(path.string() + ": " + e.what());
  }
}

Catalog catalog_from_json(const Json& document, const fs::path& base_dir) {
  if (!document.is_object() || !document.contains("benchmarks") || !document.contains("sources"))
    throw CatalogError("catalog needs \"benchmarks\" and \"sources\" arrays");
  Catalog catalog;
  catalog.base_dir = base_dir;
  std::set<std::string> seen;
  for (const auto& s : document["sources"]) {
    catalog.sources.push_back(source_from_json(s));
    if (!seen.insert(catalog.sources.back().id).second)
      throw CatalogError("duplicate source id " + catalog.sources.back().id);
  }
  std::set<std::string> bench_ids;
  for (const auto& b : document["benchmarks"]) {
    CatalogBenchmark entry;
    entry.ref = benchmark_from_json(b);
    if (!bench_ids.insert(entry.ref.id).second) throw CatalogError("duplicate benchmark id " + entry.ref.id);
    if (b.contains("candidate_sources"))
      entry.candidate_sources = b["candidate_sources"].get<std::vector<std::string>>();
    catalog.benchmarks.push_back(std::move(entry));
  }
  return catalog;
}

Catalog load_catalog(const fs::path& path) {
  try {
    return catalog_from_json(Json::parse(read_file(path)), path.parent_path());
  } catch (const Json::exception& e) {
    throw CatalogError(path.string() + ": " + e.what());
  }
}

std::vector<Json> load_source_records(const DataSourceMeta& source, const fs::path& base_dir) {
  return read_jsonl(resolve_location(source.location, base_dir));
}

// ---------------------------------------------------------------------------
// seed pool

std::string render_task_instruction(const BenchmarkRef& benchmark,
                                    const std::vector<DataSourceMeta>& sources) {
  std::string ids;
  for (const auto& s : sources) {
    if (!ids.empty()) ids += ", ";
    ids += s.id;
  }
  std::string text = "Construct supervised fine-tuning data that improves a model on the ";
  text += benchmark.domain.empty() ? std::string("target") : benchmark.domain;
  text += " benchmark \"" + benchmark.id + "\".\n";
  if (!benchmark.description.empty()) text += "Benchmark description: " + benchmark.description + "\n";
  text += "Evaluation protocol: the model is scored on held-out " + benchmark.id + " questions";
  if (!benchmark.answer_format_hint.empty()) text += "; expected answer format: " + benchmark.answer_format_hint;
  text += ".\nUse only the listed training sources (" + std::to_string(sources.size()) + "): " + ids +
          ". Never train on benchmark data.";
  return text;
}

std::vector<TaskSpec> build_seed_pool(const Catalog& catalog, const SeedPoolConfig& config) {
  std::vector<TaskSpec> pool;
  for (const auto& entry : catalog.benchmarks) {
    if (entry.ref.usage != BenchmarkUsage::train) continue;
    const std::string& bid = entry.ref.id;
    if (entry.candidate_sources.empty()) throw CatalogError("benchmark " + bid + " has no candidate sources");
    TaskSpec task;
    task.id = bid;
    task.benchmark = entry.ref;
    std::set<std::string> used;
    for (const auto& sid : entry.candidate_sources) {
      if (sid == bid) throw CatalogError("benchmark " + bid + " lists itself as a source");
      if (!used.insert(sid).second) continue;
      const DataSourceMeta* src = catalog.find_source(sid);
      if (src == nullptr) throw CatalogError("benchmark " + bid + " references unknown source " + sid);
      if (src->field_names.empty()) throw CatalogError("source " + sid + " declares no fields");
      DataSourceMeta resolved = *src;
      const fs::path location = resolve_location(src->location, catalog.base_dir);
      if (config.require_resolvable && !fs::exists(location))
        throw CatalogError("source " + sid + " location does not resolve: " + location.string());
      resolved.location = fs::absolute(location).lexically_normal().string();
      task.sources.push_back(std::move(resolved));
    }
    if (task.sources.size() < config.min_sources)
      throw CatalogError("benchmark " + bid + " has " + std::to_string(task.sources.size()) +
                         " sources, fewer than the minimum " + std::to_string(config.min_sources));
    if (task.sources.size() > config.max_sources) task.sources.resize(config.max_sources);
    task.instruction = render_task_instruction(task.benchmark, task.sources);
    pool.push_back(std::move(task));
  }
  return pool;
}

// ---------------------------------------------------------------------------
// retrieval

std::vector<std::string> parse_keywords(std::string_view response) {
  std::vector<std::string> pieces;
  std::vector<std::string> lines;
  for (auto& line : split_lines(response))
    if (!trim(line).empty()) lines.push_back(line);
  if (lines.size() == 1 && lines.front().find(',') != std::string::npos) {
    std::string_view rest = lines.front();
    while (!rest.empty()) {
      const auto comma = rest.find(',');
      pieces.emplace_back(rest.substr(0, comma));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
  } else {
    pieces = std::move(lines);
  }

  std::vector<std::string> keywords;
  std::set<std::string> seen;
  for (const auto& piece : pieces) {
    std::string_view k = trim(piece);
    // bullets and list numbering
    if (!k.empty() && (k.front() == '-' || k.front() == '*')) k = trim(k.substr(1));
    std::size_t digits = 0;
    while (digits < k.size() && std::isdigit(static_cast<unsigned char>(k[digits]))) ++digits;
    if (digits > 0 && digits < k.size() && (k[digits] == '.' || k[digits] == ')')) k = trim(k.substr(digits + 1));
    while (!k.empty() && (k.front() == '"' || k.front() == '\'' || k.front() == '`')) k.remove_prefix(1);
    while (!k.empty() && (k.back() == '"' || k.back() == '\'' || k.back() == '`')) k.remove_suffix(1);
    k = trim(k);
    if (k.empty()) continue;
    if (seen.insert(to_lower_ascii(k)).second) keywords.emplace_back(k);
  }
  return keywords;
}

std::vector<std::string> synthesize_keywords(const BenchmarkRef& benchmark, llm::Gateway& gateway) {
  std::string prompt =
      "Generate 3-5 high-relevance search keywords for finding training datasets that would help a "
      "model on the benchmark below.\n";
  prompt += "Benchmark: " + benchmark.id + "\n";
  if (!benchmark.domain.empty()) prompt += "Domain: " + benchmark.domain + "\n";
  if (!benchmark.description.empty()) prompt += "Description: " + benchmark.description + "\n";
  if (!benchmark.answer_format_hint.empty()) prompt += "Answer format: " + benchmark.answer_format_hint + "\n";
  prompt += "Return one keyword per line and nothing else.";

  std::vector<llm::Message> messages{{"user", prompt}};
  std::size_t last_count = 0;
  for (int attempt = 0; attempt < 2; ++attempt) {
    auto request = gateway.make_request(llm::Tag::keywords, messages, 0.0, 256);
    const auto response = gateway.complete(request);
    auto keywords = parse_keywords(response.text);
    if (keywords.size() >= 3 && keywords.size() <= 5) return keywords;
    last_count = keywords.size();
    messages.push_back({"assistant", response.text});
    messages.push_back({"user", "That answer contained " + std::to_string(last_count) +
                                    " distinct keywords. Return between 3 and 5 distinct keywords, "
                                    "one per line."});
  }
  throw JudgeParseError("keyword response yielded " + std::to_string(last_count) +
                        " keywords after retry (need 3-5)");
}

std::vector<DataSourceMeta> search_and_rank(const std::vector<std::string>& keywords,
                                            const Catalog& catalog, std::size_t per_keyword) {
  std::vector<std::string> haystacks;
  haystacks.reserve(catalog.sources.size());
  for (const auto& s : catalog.sources) haystacks.push_back(to_lower_ascii(s.id + " " + s.description));

  std::vector<DataSourceMeta> out;
  std::set<std::string> taken;
  for (const auto& keyword : keywords) {
    const std::string needle = to_lower_ascii(trim(keyword));
    if (needle.empty()) continue;
    std::vector<const DataSourceMeta*> hits;
    for (std::size_t i = 0; i < catalog.sources.size(); ++i)
      if (haystacks[i].find(needle) != std::string::npos) hits.push_back(&catalog.sources[i]);
    std::sort(hits.begin(), hits.end(), [](const DataSourceMeta* a, const DataSourceMeta* b) {
      if (a->popularity != b->popularity) return a->popularity > b->popularity;
      return a->id < b->id;
    });
    if (hits.size() > per_keyword) hits.resize(per_keyword);
    for (const auto* s : hits)
      if (taken.insert(s->id).second) out.push_back(*s);
  }
  return out;
}

// ---------------------------------------------------------------------------
// leakage

double ngram_coverage(const std::vector<std::string_view>& candidate,
                      const std::vector<std::string_view>& item, std::size_t n) {
  if (item.size() < n || candidate.size() < n) return 0.0;
  const auto gram_hash = [n](const std::vector<std::string_view>& words, std::size_t start) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t k = 0; k < n; ++k) {
      for (const char c : words[start + k]) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
      }
      h ^= 0x20;  // word separator
      h *= 0x100000001b3ULL;
    }
    return h;
  };
  std::unordered_set<std::uint64_t> grams;
  grams.reserve(candidate.size());
  for (std::size_t i = 0; i + n <= candidate.size(); ++i) grams.insert(gram_hash(candidate, i));

  std::vector<char> covered(item.size(), 0);
  for (std::size_t i = 0; i + n <= item.size(); ++i) {
    if (grams.count(gram_hash(item, i)) != 0) std::fill_n(covered.begin() + static_cast<std::ptrdiff_t>(i), n, 1);
  }
  const auto hit = static_cast<double>(std::count(covered.begin(), covered.end(), 1));
  return hit / static_cast<double>(item.size());
}

namespace {

std::string value_text(const Json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number()) return shortest_number(v.get<double>());
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_null()) return {};
  return canonical_dump(v);
}

}  // namespace

LeakageReport verify_no_leakage(const std::vector<Json>& records, const BenchmarkRef& benchmark,
                                double max_overlap) {
  LeakageReport report;
  std::unordered_map<std::string, std::size_t> exact;
  std::vector<std::vector<std::string_view>> item_words;
  item_words.reserve(benchmark.items.size());
  for (std::size_t i = 0; i < benchmark.items.size(); ++i) {
    exact.emplace(benchmark.items[i], i);
    item_words.push_back(split_words(benchmark.items[i]));
  }

  for (std::size_t r = 0; r < records.size(); ++r) {
    std::vector<std::string> texts;
    if (records[r].is_object()) {
      for (const auto& [k, v] : records[r].items()) texts.push_back(normalize_for_match(value_text(v)));
    } else {
      texts.push_back(normalize_for_match(value_text(records[r])));
    }
    std::string whole;
    for (const auto& t : texts) {
      if (t.empty()) continue;
      if (!whole.empty()) whole += ' ';
      whole += t;
    }
    texts.push_back(whole);

    std::optional<LeakageHit> hit;
    for (const auto& t : texts) {
      if (auto it = exact.find(t); it != exact.end() && !t.empty()) {
        hit = LeakageHit{r, it->second, true, 1.0};
        break;
      }
    }
    if (!hit) {
      const auto words = split_words(whole);
      for (std::size_t i = 0; i < item_words.size(); ++i) {
        const double overlap = ngram_coverage(words, item_words[i]);
        if (overlap > max_overlap) {
          hit = LeakageHit{r, i, false, overlap};
          break;
        }
      }
    }
    if (hit) {
      report.pass = false;
      report.offending_records.push_back(r);
      report.hits.push_back(*hit);
    }
  }
  return report;
}

LeakageReport verify_no_leakage(const DataSourceMeta& candidate, const BenchmarkRef& benchmark,
                                const fs::path& base_dir) {
  std::vector<Json> records;
  try {
    records = load_source_records(candidate, base_dir);
  } catch (const ParseError& e) {
    throw IoError(e.what());
  }
  return verify_no_leakage(records, benchmark);
}

// ---------------------------------------------------------------------------
// augmentation

AugmentSampler::AugmentSampler(const std::vector<TaskSpec>& seed_pool, std::uint64_t seed)
    : pool_(seed_pool), rng_(seed) {
  std::uint64_t total = 0;
  for (const auto& t : pool_) {
    total += t.sources.size();
    cumulative_.push_back(total);
  }
  if (total == 0) throw PreconditionError("seed pool has no sources to sample");
}

AugmentSampler::Draw AugmentSampler::draw() {
  Draw d;
  const std::uint64_t pick = rng_.below(cumulative_.back());
  d.task_index = static_cast<std::size_t>(
      std::upper_bound(cumulative_.begin(), cumulative_.end(), pick) - cumulative_.begin());
  const std::size_t n = pool_[d.task_index].sources.size();
  do {
    d.source_indices.clear();
    for (std::size_t i = 0; i < n; ++i)
      if (rng_.coin()) d.source_indices.push_back(i);
  } while (d.source_indices.empty());
  return d;
}

std::vector<TaskSpec> augment_tasks(const std::vector<TaskSpec>& seed_pool, const AugmentConfig& config) {
  if (seed_pool.empty()) throw PreconditionError("seed pool is empty");
  if (config.target_count < 1) throw PreconditionError("target_count must be at least 1");
  const std::size_t cap = config.attempt_cap != 0 ? config.attempt_cap : 50 * config.target_count;

  AugmentSampler sampler(seed_pool, config.seed);
  std::unordered_set<std::string> keys;
  std::vector<TaskSpec> out;
  out.reserve(config.target_count);
  for (std::size_t attempt = 0; attempt < cap && out.size() < config.target_count; ++attempt) {
    const auto d = sampler.draw();
    const TaskSpec& seed = seed_pool[d.task_index];
    std::vector<std::string> ids;
    for (const std::size_t i : d.source_indices) ids.push_back(seed.sources[i].id);
    std::sort(ids.begin(), ids.end());
    std::string key = seed.benchmark.id;
    for (const auto& id : ids) key += '\x1f' + id;
    if (!keys.insert(key).second) continue;

    TaskSpec task;
    task.benchmark = seed.benchmark;
    for (const std::size_t i : d.source_indices) task.sources.push_back(seed.sources[i]);
    task.id = seed.benchmark.id + "-" + hex64(fnv1a64(key));
    task.instruction = render_task_instruction(task.benchmark, task.sources);
    out.push_back(std::move(task));
  }
  if (out.size() < config.target_count)
    throw ExhaustionError("only " + std::to_string(out.size()) + " unique instances after " +
                          std::to_string(cap) + " attempts (target " +
                          std::to_string(config.target_count) + ")");
  return out;
}

}  // namespace recipeforge::pool
