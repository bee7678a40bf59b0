#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "recipeforge/recipe.hpp"
#include "recipeforge/rng.hpp"
#include "recipeforge/text.hpp"

namespace recipeforge::llm {
class Gateway;
}
namespace recipeforge::pool {
struct TaskSpec;
}

namespace recipeforge::exec {

// ---------------------------------------------------------------------------
// rows and dialogs

using FieldValue = std::variant<std::string, double>;

/// Text form of a field value: strings as-is, numbers in shortest form.
std::string field_text(const FieldValue& value);

/// Flat row with fields in source order.
class Record {
public:
  Record() = default;

  /// Flattens one JSON object. Nested arrays/objects become their compact
  /// JSON text, booleans become "true"/"false", nulls become "".
  static Record from_json(const Json& object);

  const FieldValue* get(std::string_view name) const noexcept;
  std::optional<std::string> text(std::string_view name) const;
  void set(std::string name, FieldValue value);

  const std::vector<std::pair<std::string, FieldValue>>& fields() const noexcept { return fields_; }
  bool operator==(const Record&) const = default;

private:
  std::vector<std::pair<std::string, FieldValue>> fields_;
};

enum class Role { user, assistant };
std::string_view to_string(Role role) noexcept;

struct Turn {
  Role role = Role::user;
  std::string content;
  bool operator==(const Turn&) const = default;
};

struct DialogSample {
  std::vector<Turn> dialogs;
  bool operator==(const DialogSample&) const = default;
};

using DialogDataset = std::vector<DialogSample>;

/// `{"dialogs": [{"role": "user", "content": ...}, ...]}` with exactly this
/// key order and spacing, no trailing newline.
std::string serialize_dialog_line(const DialogSample& sample);
/// One line per sample, each newline-terminated.
std::string serialize_dataset(const DialogDataset& dataset);

// ---------------------------------------------------------------------------
// format checking

struct FormatIssue {
  std::size_t sample_index = 0;
  std::string message;
};

struct FormatCheck {
  bool ok = true;
  std::vector<FormatIssue> issues;
};

/// Violation iff some sample has fewer than two turns, an odd count, roles
/// not alternating user/assistant starting with user, or empty content.
FormatCheck check_training_format(const DialogDataset& dataset);

struct LoadedDataset {
  DialogDataset dataset;
  FormatCheck check;
};

/// Parses JSONL produced outside the executor (e.g. by a script runner).
/// Lines must be objects whose only key is "dialogs", holding objects whose
/// only keys are "role" and "content". Structural problems are reported as
/// issues against the line index rather than thrown.
LoadedDataset load_dialog_lines(std::string_view jsonl);
LoadedDataset load_dialog_file(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// operators

bool evaluate_filter(const lang::FilterExpr& expr, const Record& row);

/// First occurrence kept. `key` names a field, or is a `{{ field }}`
/// template when it contains "{{". Normalization and hashing as in
/// normalize_text + FNV-1a-64, with full-text confirmation on collision.
/// Throws MissingFieldError when the key does not resolve on some row.
std::vector<Record> deduplicate_by_text_hash(std::vector<Record> rows, std::string_view key,
                                             bool lowercase, bool ignore_non_character);

struct DialogConversion {
  DialogDataset samples;
  std::size_t dropped = 0;
};

/// One single-exchange sample per row; rows whose rendered user or
/// assistant content is empty (after trimming) are dropped and counted.
/// Throws TemplateError on an unresolved placeholder.
DialogConversion to_dialogs(const std::vector<Record>& rows, std::string_view user_template,
                            std::string_view assistant_template);

/// Uniform sample of exactly `cap` items without replacement, kept in
/// original order, when there are more than `cap`; identity otherwise.
template <typename T>
std::vector<T> enforce_budget(std::vector<T> samples, std::size_t cap, std::uint64_t seed) {
  if (samples.size() <= cap) return samples;
  std::vector<T> kept;
  kept.reserve(cap);
  for (const std::size_t i : sample_indices(samples.size(), cap, seed)) kept.push_back(std::move(samples[i]));
  return kept;
}

/// First balanced {...} in the text that parses as a JSON object.
std::optional<Json> extract_json_object(std::string_view text);

// ---------------------------------------------------------------------------
// execution

enum class ExecStatus { ok, exec_failure, format_violation };
std::string_view to_string(ExecStatus status) noexcept;
ExecStatus exec_status_from_string(std::string_view name);

struct OpStats {
  std::string label;
  lang::OpKind kind = lang::OpKind::load_source;
  std::size_t rows_in = 0;
  std::size_t rows_out = 0;
  std::int64_t millis = 0;
  std::size_t dropped = 0;
};

struct ExecReport {
  ExecStatus status = ExecStatus::exec_failure;
  std::size_t produced = 0;
  std::vector<OpStats> per_op;
  std::uint64_t seed = 0;
  std::string failure_detail;
  std::string output_path;  // relative to the run directory; empty if nothing written
};

Json to_json(const ExecReport& report);
ExecReport exec_report_from_json(const Json& j);

struct Budget {
  std::size_t max_rows = 10000;
  std::size_t verifier_subset = 100;
};

struct Limits {
  std::chrono::milliseconds wall_clock{std::chrono::seconds(300)};
  std::size_t per_op_rows = 200000;
};

struct ExecResult {
  DialogDataset dataset;
  ExecReport report;
};

/// Runs a recipe. Never throws for recipe or data faults: every fault is
/// folded into the report. When `run_dir` is set, the dump target is written
/// under it.
ExecResult execute(const lang::Recipe& recipe, const pool::TaskSpec& task, const Budget& budget,
                   std::uint64_t seed, llm::Gateway* gateway, const Limits& limits = {},
                   const std::filesystem::path& run_dir = {});

// ---------------------------------------------------------------------------
// script-runner file contract

/// Invocation document handed to an external script runner.
struct ShimInvocation {
  std::string script;
  std::optional<std::string> verification;
  std::filesystem::path workdir;
  Limits limits;
  std::size_t max_output_rows = 10000;
  std::map<std::string, std::string> sources;  // id -> read-only path
  std::string gateway_proxy;
};

Json to_json(const ShimInvocation& invocation);
ShimInvocation shim_invocation_from_json(const Json& j);
void write_shim_invocation(const ShimInvocation& invocation, const std::filesystem::path& path);

/// Folds a runner's report file and its output under `workdir/data/processed/`
/// into an ExecResult. The output is re-checked with the primary format
/// checker and capped at `max_rows`. A missing or empty output is an
/// exec_failure.
ExecResult ingest_shim_output(const std::filesystem::path& workdir,
                              const std::filesystem::path& report_path, std::size_t max_rows,
                              std::uint64_t seed);

}  // namespace recipeforge::exec
