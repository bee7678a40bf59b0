#pragma once

#include <string>

#include "recipeforge/llm_gateway.hpp"

namespace recipeforge::mock {

// Deterministic stand-ins for every model role, driven only by the request
// content and sample_index. Used by mock mode so whole runs work offline.

/// Three to five keywords from the benchmark lines of a keyword prompt.
std::string keywords_response(const llm::ChatRequest& request);
/// Plan selecting one or two of the listed datasets, rotated by sample_index.
std::string plan_response(const llm::ChatRequest& request);
/// A ```recipe block built from the datasets and plan in a code prompt,
/// followed by a short verification block.
std::string code_response(const llm::ChatRequest& request);
/// A rubric verdict ending in \boxed{X} - REASON; the grade is a hash of
/// the rendered prompt (mostly E, some D, few A-C).
std::string judge_response(const llm::ChatRequest& request);
/// Echo-style rewrite of the last message.
std::string transform_response(const llm::ChatRequest& request);

/// Appends one rule per tag; rules already in `script` take precedence.
llm::MockScript& install_builtin_policy(llm::MockScript& script);
llm::MockScript builtin_policy();

}  // namespace recipeforge::mock
