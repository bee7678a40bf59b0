#pragma once

#include <stdexcept>
#include <string>

namespace recipeforge {

/// Base of every domain error raised by the harness. The CLI maps these to
/// exit code 1; anything else escaping is a bug.
class Error : public std::runtime_error {
public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(kind + ": " + message), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

private:
  std::string kind_;
};

#define RECIPEFORGE_DEFINE_ERROR(Name)                                        \
  class Name : public Error {                                                 \
  public:                                                                     \
    explicit Name(const std::string& message) : Error(#Name, message) {}      \
  }

// task pool
RECIPEFORGE_DEFINE_ERROR(CatalogError);
RECIPEFORGE_DEFINE_ERROR(ExhaustionError);
RECIPEFORGE_DEFINE_ERROR(IoError);
// recipe language
RECIPEFORGE_DEFINE_ERROR(ParseError);
RECIPEFORGE_DEFINE_ERROR(SchemaError);
RECIPEFORGE_DEFINE_ERROR(PreconditionError);
RECIPEFORGE_DEFINE_ERROR(ExtractionError);
RECIPEFORGE_DEFINE_ERROR(EmptyInputError);
// executor
RECIPEFORGE_DEFINE_ERROR(MissingFieldError);
RECIPEFORGE_DEFINE_ERROR(TemplateError);
// gateway
RECIPEFORGE_DEFINE_ERROR(CacheMissError);
RECIPEFORGE_DEFINE_ERROR(UpstreamError);
RECIPEFORGE_DEFINE_ERROR(NoRuleError);
// verifier
RECIPEFORGE_DEFINE_ERROR(JudgeParseError);
RECIPEFORGE_DEFINE_ERROR(EmptyFieldError);
// reward engine
RECIPEFORGE_DEFINE_ERROR(ContractError);
RECIPEFORGE_DEFINE_ERROR(SizeError);
RECIPEFORGE_DEFINE_ERROR(ShapeError);
// metrics
RECIPEFORGE_DEFINE_ERROR(BoundsError);
RECIPEFORGE_DEFINE_ERROR(DegenerateError);
// configuration
RECIPEFORGE_DEFINE_ERROR(ConfigError);

#undef RECIPEFORGE_DEFINE_ERROR

}  // namespace recipeforge
