#pragma once

// Independent reference implementations and generators shared by the unit
// tests and the acceptance binary.

#include <cctype>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "recipeforge/reward_engine.hpp"
#include "recipeforge/task_pool.hpp"
#include "recipeforge/text.hpp"

namespace rftest {

using recipeforge::Json;
using recipeforge::json_quote;

/// Independent normalization: drop ASCII punctuation, then collapse whitespace.
inline std::string oracle_normalize(const std::string& text, bool lowercase, bool strip) {
  std::string kept;
  for (const char c : text) {
    const auto u = static_cast<unsigned char>(c);
    if (strip && u < 0x80 && !std::isalnum(u) && !std::isspace(u)) continue;
    kept.push_back(lowercase && u < 0x80 ? static_cast<char>(std::tolower(u)) : c);
  }
  std::string out;
  std::size_t i = 0;
  while (i < kept.size()) {
    while (i < kept.size() && std::isspace(static_cast<unsigned char>(kept[i]))) ++i;
    const std::size_t start = i;
    while (i < kept.size() && !std::isspace(static_cast<unsigned char>(kept[i]))) ++i;
    if (i > start) {
      if (!out.empty()) out += ' ';
      out.append(kept, start, i - start);
    }
  }
  return out;
}

/// Ways to break one dialog line; each result must be flagged.
inline const std::vector<std::function<std::string(const std::string&, const std::string&)>>& invalid_line_makers() {
  static const std::vector<std::function<std::string(const std::string&, const std::string&)>> kMakers{
      [](const std::string& u, const std::string&) {
        return Json{{"dialogs", {{{"role", "user"}, {"content", u}}}}}.dump();
      },
      [](const std::string& u, const std::string& a) {
        return "{\"dialogs\": [{\"role\": \"assistant\", \"content\": " + json_quote(a) +
               "}, {\"role\": \"user\", \"content\": " + json_quote(u) + "}]}";
      },
      [](const std::string& u, const std::string&) {
        return "{\"dialogs\": [{\"role\": \"user\", \"content\": " + json_quote(u) +
               "}, {\"role\": \"assistant\", \"content\": \"  \"}]}";
      },
      [](const std::string& u, const std::string& a) {
        return "{\"dialogs\": [{\"role\": \"user\", \"content\": " + json_quote(u) +
               "}, {\"role\": \"assistant\", \"content\": " + json_quote(a) + "}], \"id\": 1}";
      },
      [](const std::string& u, const std::string& a) {
        return "{\"dialogs\": [{\"role\": \"system\", \"content\": " + json_quote(u) +
               "}, {\"role\": \"assistant\", \"content\": " + json_quote(a) + "}]}";
      },
      [](const std::string& u, const std::string&) {
        return "{\"dialogs\": [{\"role\": \"user\", \"content\": " + json_quote(u) +
               "}, {\"role\": \"assistant\", \"content\": 5}]}";
      },
      [](const std::string& u, const std::string& a) {
        return "{\"dialogs\": [{\"role\": \"user\", \"content\": " + json_quote(u) +
               "}, {\"role\": \"assistant\", \"content\": " + json_quote(a) + ", \"name\": \"x\"}]}";
      },
      [](const std::string& u, const std::string& a) {
        return "{\"messages\": [{\"role\": \"user\", \"content\": " + json_quote(u) +
               "}, {\"role\": \"assistant\", \"content\": " + json_quote(a) + "}]}";
      },
      [](const std::string& u, const std::string& a) {
        return "{\"dialogs\": [{\"role\": \"user\", \"content\": " + json_quote(u) +
               "}, {\"role\": \"assistant\", \"content\": " + json_quote(a) + "}]";
      },
      [](const std::string& u, const std::string& a) {
        return "[{\"role\": \"user\", \"content\": " + json_quote(u) + "}, {\"role\": \"assistant\", \"content\": " +
               json_quote(a) + "}]";
      },
      [](const std::string& u, const std::string& a) {
        return "{\"dialogs\": [{\"role\": \"user\", \"content\": " + json_quote(u) +
               "}, {\"role\": \"assistant\", \"content\": " + json_quote(a) + "}, {\"role\": \"user\", \"content\": \"more\"}]}";
      },
      [](const std::string&, const std::string& a) {
        return "{\"dialogs\": [{\"role\": \"user\", \"content\": \"\"}, {\"role\": \"assistant\", \"content\": " +
               json_quote(a) + "}]}";
      },
  };
  return kMakers;
}

/// Catalog of `benchmarks` train benchmarks; benchmark b lists
/// 8 + (b % 8) of the shared sources.
inline recipeforge::pool::Catalog synthetic_catalog(std::size_t benchmarks, std::size_t shared_sources = 24) {
  recipeforge::pool::Catalog c;
  for (std::size_t s = 0; s < shared_sources; ++s) {
    recipeforge::pool::DataSourceMeta src;
    src.id = "src" + std::to_string(s);
    src.location = "/nonexistent/" + src.id + ".jsonl";
    src.field_names = {"question", "answer"};
    src.popularity = s;
    c.sources.push_back(src);
  }
  for (std::size_t b = 0; b < benchmarks; ++b) {
    recipeforge::pool::CatalogBenchmark entry;
    entry.ref.id = "bench" + std::to_string(b);
    entry.ref.domain = "math";
    const std::size_t count = 8 + b % 8;
    for (std::size_t k = 0; k < count; ++k)
      entry.candidate_sources.push_back("src" + std::to_string((b + k) % shared_sources));
    c.benchmarks.push_back(entry);
  }
  return c;
}

inline recipeforge::pool::SeedPoolConfig lenient() {
  recipeforge::pool::SeedPoolConfig cfg;
  cfg.require_resolvable = false;
  return cfg;
}

/// Long-double reference for the normalized advantages.
inline std::vector<long double> oracle_advantages(const std::vector<double>& r, long double delta) {
  long double mean = 0;
  for (const double x : r) mean += x;
  mean /= r.size();
  long double ss = 0;
  for (const double x : r) ss += (x - mean) * (x - mean);
  const long double sd = std::sqrt(ss / r.size());
  std::vector<long double> out;
  for (const double x : r) out.push_back((x - mean) / (sd + delta));
  return out;
}

/// Long-double reference for the clipped objective, written per token.
inline recipeforge::reward::ObjectiveValue oracle_objective(
    const std::vector<recipeforge::reward::LogProbTrack>& tracks, const std::vector<double>& adv, long double eps,
    long double beta) {
  long double terms = 0, kls = 0;
  std::size_t clipped = 0;
  for (std::size_t i = 0; i < tracks.size(); ++i) {
    const auto& t = tracks[i];
    long double sum_new = 0, sum_old = 0, kl = 0;
    for (std::size_t k = 0; k < t.logp_new.size(); ++k) {
      sum_new += t.logp_new[k];
      sum_old += t.logp_old[k];
      const long double d = static_cast<long double>(t.logp_ref[k]) - t.logp_new[k];
      kl += std::exp(d) - d - 1;
    }
    const long double rho = std::exp((sum_new - sum_old) / t.logp_new.size());
    const long double bounded_rho = rho < 1 - eps ? 1 - eps : (rho > 1 + eps ? 1 + eps : rho);
    const long double u = rho * adv[i], c = bounded_rho * adv[i];
    if (c < u) ++clipped;
    terms += u < c ? u : c;
    kls += kl / t.logp_new.size();
  }
  const long double n = tracks.size();
  return recipeforge::reward::ObjectiveValue{static_cast<double>(terms / n - beta * kls / n),
                                             static_cast<double>(clipped / n), static_cast<double>(kls / n)};
}

/// Group of eight 16-token tracks whose objective is frozen in the tests.
inline std::vector<recipeforge::reward::LogProbTrack> frozen_tracks() {
  std::vector<recipeforge::reward::LogProbTrack> tracks(8);
  for (int i = 0; i < 8; ++i) {
    for (int k = 0; k < 16; ++k) {
      const double old = -0.1 * (k + 1) - 0.05 * i;
      tracks[i].logp_old.push_back(old);
      tracks[i].logp_new.push_back(old + 0.3 * std::sin(i * 16 + k) + 0.3 * (i - 3.5) / 3.5);
      tracks[i].logp_ref.push_back(old + 0.02 * std::cos(i + k));
    }
  }
  return tracks;
}

struct PCase {
  double r;
  std::size_t n;
  double p;
};

// quadrature of the Student-t density, see tools/pvalue_oracle.py
inline const PCase kPGrid[] = {
    {0.5, 20, 0.024769558804109734},   {0.0, 10, 1.0000000000000004},    {0.1, 3, 0.93623143914148},
    {0.9, 3, 0.2871325862574124},      {-0.3, 4, 0.7000000000000001},    {0.75, 5, 0.14429361281438752},
    {0.2, 8, 0.63488},                 {-0.6, 10, 0.06668800000000004},  {0.45, 12, 0.14213639115730298},
    {0.33, 15, 0.22966518995027646},   {0.8, 16, 0.00019857097279999973}, {-0.1, 25, 0.6343614915786995},
    {0.25, 30, 0.1827304913532766},    {0.4, 40, 0.010546950704392329},  {-0.55, 7, 0.20085237229155098},
    {0.15, 100, 0.1363339604666172},   {0.05, 200, 0.4819843684854934},  {0.99, 6, 0.00014950000000000057},
    {0.6, 9, 0.08762282904140258},     {-0.85, 11, 0.0009201220299836434},
};

}  // namespace rftest
