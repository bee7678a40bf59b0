#pragma once

#include <string_view>

// Versioned prompt templates, compiled in from assets/prompts/.
namespace recipeforge::assets {

std::string_view verifier_prompt_v1();
std::string_view plan_prompt_v1();
std::string_view code_prompt_v1();
std::string_view tool_info_v1();

}  // namespace recipeforge::assets
