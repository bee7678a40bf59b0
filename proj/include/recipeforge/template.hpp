#pragma once

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "recipeforge/text.hpp"

namespace recipeforge {

/// Names referenced by `{{ name }}` placeholders, in order of appearance
/// (duplicates kept). Throws TemplateError on an unterminated placeholder or
/// an empty name.
std::vector<std::string> template_placeholders(std::string_view tmpl);

using PlaceholderLookup = std::function<std::optional<std::string>(std::string_view)>;

/// Single-pass substitution; substituted text is never re-scanned. Throws
/// TemplateError when lookup yields nothing for a name.
std::string render_placeholders(std::string_view tmpl, const PlaceholderLookup& lookup);

/// Prompt-asset renderer: `{{ a.b }}` paths into `context`, plus
/// `{% for x in list -%} ... {% endfor -%}` loops. A `-%}` closer drops the
/// whitespace that follows the tag and `{%-` drops the whitespace before it.
std::string render_prompt_template(std::string_view tmpl, const Json& context);

}  // namespace recipeforge
