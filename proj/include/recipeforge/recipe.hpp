#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace recipeforge::lang {

enum class OpKind {
  load_source,
  select_by_filter,
  map_fields,
  llm_transform,
  concatenate,
  deduplicate,
  sample_n,
  to_dialogs,
  dump,
};

inline constexpr std::array<OpKind, 9> kAllOpKinds = {
    OpKind::load_source, OpKind::select_by_filter, OpKind::map_fields,
    OpKind::llm_transform, OpKind::concatenate, OpKind::deduplicate,
    OpKind::sample_n, OpKind::to_dialogs, OpKind::dump,
};

std::string_view to_string(OpKind kind) noexcept;
std::optional<OpKind> op_kind_from_string(std::string_view name) noexcept;

/// Scalar operand of a field comparison.
using Scalar = std::variant<std::string, double>;

struct FilterExpr {
  enum class Op { eq, ne, lt, gt, contains, all_of, any_of, negate };

  Op op = Op::eq;
  std::string field;                  // comparisons
  Scalar operand;                     // comparisons
  std::vector<std::string> fields;    // contains
  std::vector<std::string> keywords;  // contains
  std::vector<FilterExpr> children;   // and / or / not

  std::size_t depth() const noexcept;
  bool operator==(const FilterExpr&) const = default;
};

inline constexpr std::size_t kMaxFilterDepth = 16;

enum class ResponseParser { raw, json, grade_box };
std::string_view to_string(ResponseParser parser) noexcept;

struct LoadSourceParams {
  std::string source;
  std::string split = "train";
  std::optional<std::int64_t> limit;
  bool operator==(const LoadSourceParams&) const = default;
};

struct SelectByFilterParams {
  FilterExpr where;
  bool operator==(const SelectByFilterParams&) const = default;
};

struct MapFieldsParams {
  std::vector<std::pair<std::string, std::string>> set;  // field -> template
  bool keep = true;
  bool operator==(const MapFieldsParams&) const = default;
};

struct LlmTransformParams {
  std::string prompt;
  std::string system;
  ResponseParser parser = ResponseParser::raw;
  std::string output = "response";
  double temperature = 1.0;
  bool operator==(const LlmTransformParams&) const = default;
};

struct ConcatenateParams {
  bool operator==(const ConcatenateParams&) const = default;
};

struct DeduplicateParams {
  std::string key;  // a field name, or a template when it contains "{{"
  bool lowercase = false;
  bool ignore_non_character = false;
  bool operator==(const DeduplicateParams&) const = default;
};

struct SampleNParams {
  std::int64_t n = 0;
  std::optional<std::int64_t> seed;
  bool operator==(const SampleNParams&) const = default;
};

struct ToDialogsParams {
  std::string user;
  std::string assistant;
  bool operator==(const ToDialogsParams&) const = default;
};

struct DumpParams {
  std::string path = "data/processed/train.jsonl";
  bool operator==(const DumpParams&) const = default;
};

/// Alternative index matches OpKind.
using OpParams = std::variant<LoadSourceParams, SelectByFilterParams, MapFieldsParams,
                              LlmTransformParams, ConcatenateParams, DeduplicateParams,
                              SampleNParams, ToDialogsParams, DumpParams>;

OpParams default_params(OpKind kind);

struct PipelineOp {
  std::string label;
  std::vector<std::string> inputs;
  OpParams params;

  OpKind kind() const noexcept { return static_cast<OpKind>(params.index()); }
  bool operator==(const PipelineOp&) const = default;
};

struct Selection {
  std::string dataset_id;
  std::string split = "train";
  std::string name = "default";
  std::int64_t sample_num = 0;
  std::string reason;
  bool operator==(const Selection&) const = default;
};

struct Provenance {
  std::string generator;
  std::string task_id;
  std::int64_t rollout = 0;
  bool operator==(const Provenance&) const = default;
};

struct Recipe {
  std::string plan;
  std::vector<PipelineOp> pipeline;
  std::vector<Selection> selections;
  Provenance provenance;

  const PipelineOp* find_op(std::string_view label) const noexcept;
  bool operator==(const Recipe&) const = default;
};

}  // namespace recipeforge::lang
