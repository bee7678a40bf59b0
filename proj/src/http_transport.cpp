#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "recipeforge/error.hpp"
#include "recipeforge/llm_gateway.hpp"

namespace recipeforge::llm {

HttpTransport::HttpTransport(std::string api_base, std::string api_key, std::chrono::seconds timeout)
    : api_key_(std::move(api_key)), timeout_(timeout) {
  // split "https://host[:port]/prefix" into the client origin and path prefix
  const auto scheme_end = api_base.find("://");
  const auto path_start = api_base.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
  scheme_host_ = api_base.substr(0, path_start);
  path_prefix_ = path_start == std::string::npos ? "" : api_base.substr(path_start);
  while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
}

Json HttpTransport::wire_body(const ChatRequest& request) {
  Json messages = Json::array();
  for (const auto& m : request.messages) messages.push_back({{"role", m.role}, {"content", m.content}});
  return Json{{"model", request.model},
              {"messages", std::move(messages)},
              {"temperature", request.temperature},
              {"max_tokens", request.max_tokens}};
}

ChatResponse HttpTransport::parse_wire_response(std::string_view body) {
  Json doc;
  try {
    doc = Json::parse(body);
  } catch (const Json::parse_error& e) {
    throw UpstreamError(std::string("malformed response body: ") + e.what());
  }
  const Json* content = nullptr;
  if (doc.contains("choices") && doc["choices"].is_array() && !doc["choices"].empty()) {
    const Json& first = doc["choices"][0];
    if (first.contains("message") && first["message"].contains("content") &&
        first["message"]["content"].is_string())
      content = &first["message"]["content"];
  }
  if (content == nullptr) throw UpstreamError("response carries no choices[0].message.content");
  ChatResponse response;
  response.text = content->get<std::string>();
  if (doc.contains("usage") && doc["usage"].is_object()) {
    response.usage.prompt_tokens = doc["usage"].value("prompt_tokens", std::int64_t{0});
    response.usage.completion_tokens = doc["usage"].value("completion_tokens", std::int64_t{0});
  }
  return response;
}

ChatResponse HttpTransport::send(const ChatRequest& request) {
  httplib::Client client(scheme_host_);
  client.set_connection_timeout(timeout_);
  client.set_read_timeout(timeout_);
  client.set_write_timeout(timeout_);
  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
  const auto result = client.Post(path_prefix_ + "/chat/completions", headers,
                                  canonical_dump(wire_body(request)), "application/json");
  if (!result) throw UpstreamError("transport error: " + httplib::to_string(result.error()));
  if (result->status < 200 || result->status >= 300)
    throw UpstreamError("HTTP " + std::to_string(result->status) + ": " + result->body.substr(0, 512));
  return parse_wire_response(result->body);
}

}  // namespace recipeforge::llm
