#include "recipeforge/llm_gateway.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <thread>

#include "recipeforge/error.hpp"

namespace recipeforge::llm {

namespace {

constexpr std::pair<Tag, std::string_view> kTagNames[] = {
    {Tag::generate_plan, "generate_plan"}, {Tag::generate_code, "generate_code"},
    {Tag::verify, "verify"},               {Tag::transform, "transform"},
    {Tag::keywords, "keywords"},
};

}  // namespace

std::string_view to_string(Tag tag) noexcept {
  for (const auto& [t, name] : kTagNames)
    if (t == tag) return name;
  return "transform";
}

Tag tag_from_string(std::string_view name) {
  for (const auto& [t, n] : kTagNames)
    if (n == name) return t;
  throw ConfigError("unknown request tag '" + std::string(name) + "'");
}

std::string_view to_string(Mode mode) noexcept {
  switch (mode) {
    case Mode::live: return "live";
    case Mode::replay: return "replay";
    case Mode::mock: return "mock";
  }
  return "mock";
}

Mode mode_from_string(std::string_view name) {
  if (name == "live") return Mode::live;
  if (name == "replay") return Mode::replay;
  if (name == "mock") return Mode::mock;
  throw ConfigError("unknown gateway mode '" + std::string(name) + "' (live|replay|mock)");
}

void check_request(const ChatRequest& request) {
  if (request.messages.empty()) throw ConfigError("chat request has no messages");
  if (!(request.temperature >= 0.0 && request.temperature <= 2.0))
    throw ConfigError("temperature must lie in [0, 2]");
}

Json canonical_json(const ChatRequest& request) {
  Json messages = Json::array();
  for (const auto& m : request.messages) messages.push_back({{"role", m.role}, {"content", m.content}});
  return Json{{"model", request.model},
              {"messages", std::move(messages)},
              {"temperature", request.temperature},
              {"max_tokens", request.max_tokens},
              {"tag", to_string(request.tag)},
              {"sample_index", request.sample_index}};
}

std::string cache_key(const ChatRequest& request) {
  return hex64(fnv1a64(canonical_dump(canonical_json(request))));
}

// ---------------------------------------------------------------------------
// MockScript

MockScript::MockScript(const MockScript& other) {
  std::lock_guard lock(const_cast<std::mutex&>(other.mutex_));
  rules_ = other.rules_;
  served_ = other.served_;
  fallback_ = other.fallback_;
}

MockScript& MockScript::operator=(const MockScript& other) {
  if (this == &other) return *this;
  std::scoped_lock lock(mutex_, const_cast<std::mutex&>(other.mutex_));
  rules_ = other.rules_;
  served_ = other.served_;
  fallback_ = other.fallback_;
  return *this;
}

MockScript& MockScript::add(Rule rule) {
  std::lock_guard lock(mutex_);
  rules_.push_back(std::move(rule));
  served_.push_back(0);
  return *this;
}

MockScript& MockScript::on(Tag tag, std::vector<std::string> responses, std::string contains) {
  return add(Rule{tag, std::move(contains), std::move(responses), {}});
}

MockScript& MockScript::on(Tag tag, std::function<std::string(const ChatRequest&)> responder,
                           std::string contains) {
  return add(Rule{tag, std::move(contains), {}, std::move(responder)});
}

MockScript& MockScript::fallback(std::function<std::string(const ChatRequest&)> responder) {
  std::lock_guard lock(mutex_);
  fallback_ = std::move(responder);
  return *this;
}

MockScript MockScript::from_json(const Json& document) {
  MockScript script;
  if (!document.is_object() || !document.contains("rules") || !document["rules"].is_array())
    throw ConfigError("mock rules document needs a \"rules\" array");
  for (const auto& r : document["rules"]) {
    Rule rule;
    if (r.contains("tag")) rule.tag = tag_from_string(r.at("tag").get<std::string>());
    rule.contains = r.value("contains", std::string{});
    if (!r.contains("responses") || !r["responses"].is_array() || r["responses"].empty())
      throw ConfigError("mock rule needs a nonempty \"responses\" array");
    for (const auto& text : r["responses"]) rule.responses.push_back(text.get<std::string>());
    script.add(std::move(rule));
  }
  return script;
}

std::string MockScript::respond(const ChatRequest& request) {
  const std::string& last = request.messages.back().content;
  std::function<std::string(const ChatRequest&)> responder;
  {
    std::lock_guard lock(mutex_);
    for (std::size_t i = 0; i < rules_.size(); ++i) {
      const Rule& rule = rules_[i];
      if (rule.tag && *rule.tag != request.tag) continue;
      if (!rule.contains.empty() && last.find(rule.contains) == std::string::npos) continue;
      if (rule.responder) {
        responder = rule.responder;
        break;
      }
      const std::size_t n = served_[i]++;
      return rule.responses[n % rule.responses.size()];
    }
    if (!responder) responder = fallback_;
  }
  if (!responder)
    throw NoRuleError("no mock rule for tag " + std::string(to_string(request.tag)));
  return responder(request);
}

// ---------------------------------------------------------------------------
// Gateway

Gateway::Gateway(GatewayConfig config, std::unique_ptr<Transport> transport, MockScript script)
    : config_(std::move(config)), transport_(std::move(transport)), script_(std::move(script)) {
  if (config_.max_inflight == 0) config_.max_inflight = 1;
  if (config_.max_attempts < 1) config_.max_attempts = 1;
}

ChatRequest Gateway::make_request(Tag tag, std::vector<Message> messages, double temperature,
                                  int max_tokens, std::uint64_t sample_index) const {
  ChatRequest request;
  const auto route = config_.routes.find(tag);
  request.model = route != config_.routes.end() ? route->second : config_.default_model;
  request.messages = std::move(messages);
  request.temperature = temperature;
  request.max_tokens = max_tokens;
  request.tag = tag;
  request.sample_index = sample_index;
  return request;
}

std::optional<ChatResponse> Gateway::cache_lookup(const ChatRequest& request,
                                                  const std::string& key) const {
  if (config_.cache_dir.empty()) return std::nullopt;
  const auto path = config_.cache_dir / (key + ".json");
  std::error_code ec;
  if (!std::filesystem::exists(path, ec)) return std::nullopt;
  Json entry;
  try {
    entry = Json::parse(read_file(path));
  } catch (const Json::exception&) {
    return std::nullopt;
  }
  // a key collision must not serve another request's answer
  if (!entry.contains("request") || entry["request"] != canonical_json(request)) return std::nullopt;
  const Json& resp = entry.at("response");
  ChatResponse response;
  response.text = resp.at("text").get<std::string>();
  response.usage.prompt_tokens = resp.value("prompt_tokens", std::int64_t{0});
  response.usage.completion_tokens = resp.value("completion_tokens", std::int64_t{0});
  response.cached = true;
  return response;
}

void Gateway::cache_store(const ChatRequest& request, const std::string& key,
                          const ChatResponse& response) const {
  if (config_.cache_dir.empty()) return;
  Json entry{{"key", key},
             {"request", canonical_json(request)},
             {"response",
              {{"text", response.text},
               {"prompt_tokens", response.usage.prompt_tokens},
               {"completion_tokens", response.usage.completion_tokens}}}};
  write_file_atomic(config_.cache_dir / (key + ".json"), pretty_dump(entry));
}

void Gateway::acquire_slot() {
  std::unique_lock lock(mutex_);
  const std::uint64_t ticket = next_ticket_++;
  waiting_.push_back(ticket);
  slot_cv_.wait(lock, [&] { return waiting_.front() == ticket && inflight_ < config_.max_inflight; });
  waiting_.pop_front();
  ++inflight_;
  peak_inflight_ = std::max(peak_inflight_, inflight_);
  ++upstream_calls_;
  slot_cv_.notify_all();
}

void Gateway::release_slot() {
  {
    std::lock_guard lock(mutex_);
    --inflight_;
  }
  slot_cv_.notify_all();
}

ChatResponse Gateway::call_upstream(const ChatRequest& request) {
  if (!transport_) throw UpstreamError("live mode requires a transport");
  std::string last_error;
  for (int attempt = 0; attempt < config_.max_attempts; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(config_.backoff * (1LL << (attempt - 1)));
    acquire_slot();
    try {
      ChatResponse response = transport_->send(request);
      release_slot();
      response.cached = false;
      return response;
    } catch (const std::exception& e) {
      release_slot();
      last_error = e.what();
    }
  }
  throw UpstreamError("gave up after " + std::to_string(config_.max_attempts) +
                      " attempts: " + last_error);
}

ChatResponse Gateway::complete(const ChatRequest& request) {
  check_request(request);
  switch (config_.mode) {
    case Mode::mock: {
      ChatResponse response;
      response.text = script_.respond(request);
      return response;
    }
    case Mode::replay: {
      const std::string key = cache_key(request);
      auto hit = cache_lookup(request, key);
      if (!hit) throw CacheMissError("no recorded response for key " + key);
      std::lock_guard lock(mutex_);
      ++cache_hits_;
      return *hit;
    }
    case Mode::live: {
      const std::string key = cache_key(request);
      if (auto hit = cache_lookup(request, key)) {
        std::lock_guard lock(mutex_);
        ++cache_hits_;
        return *hit;
      }
      ChatResponse response = call_upstream(request);
      cache_store(request, key, response);
      return response;
    }
  }
  throw ConfigError("unreachable gateway mode");
}

std::vector<BatchItem> Gateway::complete_batch(std::span<const ChatRequest> requests) {
  std::vector<BatchItem> results(requests.size());
  const auto run_one = [&](std::size_t i) {
    try {
      results[i].response = complete(requests[i]);
    } catch (const Error& e) {
      results[i].error_kind = e.kind();
      results[i].error = e.what();
    } catch (const std::exception& e) {
      results[i].error_kind = "Error";
      results[i].error = e.what();
    }
  };
  if (config_.mode != Mode::live || requests.size() < 2) {
    for (std::size_t i = 0; i < requests.size(); ++i) run_one(i);
    return results;
  }
  std::atomic<std::size_t> next{0};
  const std::size_t workers = std::min(config_.max_inflight, requests.size());
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next.fetch_add(1); i < requests.size(); i = next.fetch_add(1)) run_one(i);
    });
  }
  for (auto& t : pool) t.join();
  return results;
}

std::uint64_t Gateway::upstream_calls() const {
  std::lock_guard lock(mutex_);
  return upstream_calls_;
}

std::uint64_t Gateway::cache_hits() const {
  std::lock_guard lock(mutex_);
  return cache_hits_;
}

std::size_t Gateway::peak_inflight() const {
  std::lock_guard lock(mutex_);
  return peak_inflight_;
}

std::unique_ptr<Gateway> make_gateway(GatewayConfig config, MockScript script) {
  std::unique_ptr<Transport> transport;
  if (config.mode == Mode::live) {
    const char* base = std::getenv("RECIPEFORGE_API_BASE");
    const char* key = std::getenv("RECIPEFORGE_API_KEY");
    if (base == nullptr || *base == '\0')
      throw ConfigError("live mode needs RECIPEFORGE_API_BASE");
    transport = std::make_unique<HttpTransport>(base, key != nullptr ? key : "");
  }
  return std::make_unique<Gateway>(std::move(config), std::move(transport), std::move(script));
}

}  // namespace recipeforge::llm
