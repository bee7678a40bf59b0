#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "recipeforge/text.hpp"

namespace recipeforge::llm {

enum class Tag { generate_plan, generate_code, verify, transform, keywords };

std::string_view to_string(Tag tag) noexcept;
Tag tag_from_string(std::string_view name);

struct Message {
  std::string role;
  std::string content;
  bool operator==(const Message&) const = default;
};

struct ChatRequest {
  std::string model;
  std::vector<Message> messages;
  double temperature = 1.0;
  int max_tokens = 4096;
  Tag tag = Tag::transform;
  /// Distinguishes otherwise identical requests (e.g. the i-th of N sampled
  /// rollouts). Part of the cache key, never sent upstream.
  std::uint64_t sample_index = 0;

  bool operator==(const ChatRequest&) const = default;
};

struct Usage {
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
};

struct ChatResponse {
  std::string text;
  Usage usage;
  bool cached = false;
};

/// Throws ConfigError on empty messages or temperature outside [0, 2].
void check_request(const ChatRequest& request);
Json canonical_json(const ChatRequest& request);
/// Stable key over the canonicalized request (16 hex digits).
std::string cache_key(const ChatRequest& request);

enum class Mode { live, replay, mock };
std::string_view to_string(Mode mode) noexcept;
Mode mode_from_string(std::string_view name);

/// Upstream wire. Implementations throw UpstreamError on any failure; the
/// gateway owns retry policy.
class Transport {
public:
  virtual ~Transport() = default;
  virtual ChatResponse send(const ChatRequest& request) = 0;
};

/// Chat-completions over HTTP(S) with a bearer token.
class HttpTransport final : public Transport {
public:
  HttpTransport(std::string api_base, std::string api_key,
                std::chrono::seconds timeout = std::chrono::seconds(120));
  ChatResponse send(const ChatRequest& request) override;

  /// Request body as sent on the wire.
  static Json wire_body(const ChatRequest& request);
  /// Extracts text and usage from a chat-completions response body.
  static ChatResponse parse_wire_response(std::string_view body);

private:
  std::string scheme_host_;
  std::string path_prefix_;
  std::string api_key_;
  std::chrono::seconds timeout_;
};

/// Scripted responses for mock mode. Rules are tried in insertion order; the
/// first whose tag and substring match wins, and its responses are served
/// cyclically. A fallback responder, when set, handles unmatched requests.
class MockScript {
public:
  struct Rule {
    std::optional<Tag> tag;
    std::string contains;  // substring of the last message; empty matches all
    std::vector<std::string> responses;
    std::function<std::string(const ChatRequest&)> responder;
  };

  MockScript() = default;
  MockScript(const MockScript& other);
  MockScript& operator=(const MockScript& other);

  MockScript& add(Rule rule);
  MockScript& on(Tag tag, std::vector<std::string> responses, std::string contains = {});
  MockScript& on(Tag tag, std::function<std::string(const ChatRequest&)> responder,
                 std::string contains = {});
  MockScript& fallback(std::function<std::string(const ChatRequest&)> responder);

  /// Rules document: {"rules": [{"tag": "...", "contains": "...", "responses": [...]}]}.
  static MockScript from_json(const Json& document);

  /// Throws NoRuleError when nothing matches.
  std::string respond(const ChatRequest& request);

private:
  std::vector<Rule> rules_;
  std::vector<std::size_t> served_;
  std::function<std::string(const ChatRequest&)> fallback_;
  std::mutex mutex_;
};

struct GatewayConfig {
  Mode mode = Mode::mock;
  std::string default_model = "default";
  std::map<Tag, std::string> routes;
  std::filesystem::path cache_dir;
  std::size_t max_inflight = 8;
  int max_attempts = 3;
  std::chrono::milliseconds backoff{500};
};

/// One item of complete_batch: either a response or the error that ended it.
struct BatchItem {
  std::optional<ChatResponse> response;
  std::string error_kind;
  std::string error;

  bool ok() const noexcept { return response.has_value(); }
};

/// The single choke point for model calls. Thread-safe.
///
/// live:   cache hit served as-is; otherwise wire call (bounded attempts with
///         exponential backoff) followed by an atomic cache write.
/// replay: cache hit required, CacheMissError otherwise.
/// mock:   MockScript answers; nothing touches the cache or the network.
class Gateway {
public:
  explicit Gateway(GatewayConfig config, std::unique_ptr<Transport> transport = nullptr,
                   MockScript script = {});

  const GatewayConfig& config() const noexcept { return config_; }

  ChatRequest make_request(Tag tag, std::vector<Message> messages, double temperature,
                           int max_tokens = 4096, std::uint64_t sample_index = 0) const;

  ChatResponse complete(const ChatRequest& request);

  /// Results come back in input order. Live mode fans out over at most
  /// max_inflight workers; replay and mock run sequentially so scripted
  /// sequences stay deterministic.
  std::vector<BatchItem> complete_batch(std::span<const ChatRequest> requests);

  std::uint64_t upstream_calls() const;
  std::uint64_t cache_hits() const;
  std::size_t peak_inflight() const;

private:
  std::optional<ChatResponse> cache_lookup(const ChatRequest& request, const std::string& key) const;
  void cache_store(const ChatRequest& request, const std::string& key, const ChatResponse& response) const;
  ChatResponse call_upstream(const ChatRequest& request);

  void acquire_slot();
  void release_slot();

  GatewayConfig config_;
  std::unique_ptr<Transport> transport_;
  MockScript script_;

  mutable std::mutex mutex_;
  std::condition_variable slot_cv_;
  std::deque<std::uint64_t> waiting_;
  std::uint64_t next_ticket_ = 0;
  std::size_t inflight_ = 0;
  std::size_t peak_inflight_ = 0;
  std::uint64_t upstream_calls_ = 0;
  std::uint64_t cache_hits_ = 0;
};

/// Builds a gateway from a config, reading RECIPEFORGE_API_BASE and
/// RECIPEFORGE_API_KEY for live mode.
std::unique_ptr<Gateway> make_gateway(GatewayConfig config, MockScript script = {});

}  // namespace recipeforge::llm
