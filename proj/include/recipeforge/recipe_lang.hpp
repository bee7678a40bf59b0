#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "recipeforge/recipe.hpp"

namespace recipeforge::pool {
struct TaskSpec;
}

namespace recipeforge::lang {

struct Diagnostic {
  enum class Kind { syntax, schema, validation };

  Kind kind = Kind::syntax;
  std::size_t line = 0;    // 1-based, 0 when not tied to a line
  std::size_t column = 0;  // 1-based
  std::string code;        // short stable identifier, e.g. "undeclared source"
  std::string message;

  std::string to_string() const;
};

struct ParseOutcome {
  std::optional<Recipe> recipe;
  std::vector<Diagnostic> diagnostics;

  bool ok() const noexcept { return recipe.has_value(); }
};

/// Total over arbitrary bytes: either a Recipe with no diagnostics, or at
/// least one diagnostic.
ParseOutcome parse_recipe(std::string_view text);

/// Throws ParseError or SchemaError carrying the first diagnostic.
Recipe parse_recipe_or_throw(std::string_view text);

/// Canonical document: fixed section order, fixed per-kind parameter order,
/// every defaulted parameter spelled out.
std::string serialize_recipe(const Recipe& recipe);

/// serialize(parse(text)); throws like parse_recipe_or_throw.
std::string normalize_recipe(std::string_view text);

std::string serialize_filter(const FilterExpr& expr);

/// Static checks of a parsed recipe against its task. Empty means valid.
std::vector<Diagnostic> validate_recipe(const Recipe& recipe, const pool::TaskSpec& task);

/// Examples block for one source: field list followed by preview records,
/// one JSON object per line.
std::string render_source_examples(const pool::TaskSpec& task, std::size_t source_index);

std::string render_plan_prompt(const pool::TaskSpec& task);
/// Throws PreconditionError when plan is absent.
std::string render_code_prompt(const pool::TaskSpec& task, const std::optional<std::string>& plan);

struct GenerationPrompts {
  std::string plan_prompt;
  std::optional<std::string> code_prompt;  // present iff a plan was supplied
};

GenerationPrompts render_generation_prompts(const pool::TaskSpec& task,
                                            const std::optional<std::string>& plan);

struct RecipeBlocks {
  std::string pipeline_block;
  std::string verification_block;
};

/// First two triple-backtick fenced blocks, in order. Throws ExtractionError
/// when fewer than two complete blocks exist.
RecipeBlocks extract_recipe_blocks(std::string_view model_output);

/// Pulls the JSON list under a "## Training Data" heading out of a plan.
/// Tolerant: returns an empty list when absent or unparseable. sample_num
/// accepts integers and digit strings.
std::vector<Selection> parse_plan_selections(std::string_view plan);

/// Mean occurrences per recipe for each operator kind that occurs at least
/// once. Throws EmptyInputError on an empty list.
std::map<OpKind, double> op_frequency(std::span<const Recipe> recipes);

}  // namespace recipeforge::lang
