#include <gtest/gtest.h>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <atomic>
#include <thread>

#include "recipeforge/error.hpp"
#include "recipeforge/llm_gateway.hpp"
#include "support.hpp"

using namespace recipeforge;
using namespace recipeforge::llm;

namespace {

ChatRequest request(std::string text, Tag tag = Tag::transform, std::uint64_t sample = 0) {
  ChatRequest r;
  r.model = "m";
  r.messages = {{"user", std::move(text)}};
  r.tag = tag;
  r.sample_index = sample;
  return r;
}

/// Fails the first `failures` sends, then echoes; tracks concurrency.
class FakeTransport final : public Transport {
public:
  explicit FakeTransport(int failures = 0, std::chrono::milliseconds delay = std::chrono::milliseconds(0))
      : failures_(failures), delay_(delay) {}

  ChatResponse send(const ChatRequest& r) override {
    const int now = ++inflight_;
    int seen = peak_.load();
    while (now > seen && !peak_.compare_exchange_weak(seen, now)) {}
    if (delay_.count() > 0) std::this_thread::sleep_for(delay_);
    --inflight_;
    ++sends_;
    if (failures_-- > 0) throw UpstreamError("HTTP 503");
    ChatResponse out;
    out.text = "echo:" + r.messages.back().content;
    out.usage = {3, 4};
    return out;
  }

  std::atomic<int> failures_;
  std::chrono::milliseconds delay_;
  std::atomic<int> inflight_{0};
  std::atomic<int> peak_{0};
  std::atomic<int> sends_{0};
};

GatewayConfig live_config(const std::filesystem::path& cache) {
  GatewayConfig cfg;
  cfg.mode = Mode::live;
  cfg.cache_dir = cache;
  cfg.backoff = std::chrono::milliseconds(1);
  return cfg;
}

}  // namespace

TEST(CacheKey, FrozenValueAndSensitivity) {
  ChatRequest r = request("hi \xC3\xA9", Tag::verify, 2);
  r.temperature = 0.5;
  r.max_tokens = 16;
  // fnv1a64 over the sorted compact JSON, computed independently
  EXPECT_EQ(cache_key(r), "5acb57209602dec7");
  EXPECT_EQ(canonical_dump(canonical_json(r)),
            "{\"max_tokens\":16,\"messages\":[{\"content\":\"hi \xC3\xA9\",\"role\":\"user\"}],\"model\":\"m\","
            "\"sample_index\":2,\"tag\":\"verify\",\"temperature\":0.5}");
  std::set<std::string> keys{cache_key(r)};
  ChatRequest v = r;
  v.sample_index = 3;
  keys.insert(cache_key(v));
  v = r;
  v.temperature = 0.6;
  keys.insert(cache_key(v));
  v = r;
  v.model = "n";
  keys.insert(cache_key(v));
  v = r;
  v.tag = Tag::transform;
  keys.insert(cache_key(v));
  v = r;
  v.messages[0].role = "system";
  keys.insert(cache_key(v));
  EXPECT_EQ(keys.size(), 6u);
}

TEST(Request, Checks) {
  ChatRequest r = request("x");
  EXPECT_NO_THROW(check_request(r));
  r.temperature = 2.5;
  EXPECT_THROW(check_request(r), ConfigError);
  r = request("x");
  r.messages.clear();
  EXPECT_THROW(check_request(r), ConfigError);
  EXPECT_THROW(mode_from_string("offline"), ConfigError);
  EXPECT_THROW(tag_from_string("plan"), ConfigError);
  EXPECT_EQ(tag_from_string("generate_code"), Tag::generate_code);
}

TEST(Gateway, RoutesModels) {
  GatewayConfig cfg;
  cfg.default_model = "base";
  cfg.routes[Tag::verify] = "judge";
  Gateway gw(cfg);
  EXPECT_EQ(gw.make_request(Tag::verify, {{"user", "x"}}, 0.0).model, "judge");
  EXPECT_EQ(gw.make_request(Tag::transform, {{"user", "x"}}, 0.0, 10, 4).model, "base");
  EXPECT_EQ(gw.make_request(Tag::transform, {{"user", "x"}}, 0.0, 10, 4).sample_index, 4u);
}

TEST(MockScript, RulesMatchInOrderAndCycle) {
  MockScript script;
  script.on(Tag::verify, std::vector<std::string>{"E", "A"}, "special");
  script.on(Tag::verify, std::vector<std::string>{"D"});
  script.on(Tag::transform, [](const ChatRequest& r) { return "len=" + std::to_string(r.messages.back().content.size()); });
  Gateway gw({}, nullptr, script);
  EXPECT_EQ(gw.complete(request("a special case", Tag::verify)).text, "E");
  EXPECT_EQ(gw.complete(request("plain", Tag::verify)).text, "D");
  EXPECT_EQ(gw.complete(request("special again", Tag::verify)).text, "A");
  EXPECT_EQ(gw.complete(request("special third", Tag::verify)).text, "E");
  EXPECT_EQ(gw.complete(request("abcd")).text, "len=4");
  EXPECT_THROW(gw.complete(request("x", Tag::keywords)), NoRuleError);
  EXPECT_EQ(gw.upstream_calls(), 0u);
}

TEST(MockScript, FromJsonAndFallback) {
  auto script = MockScript::from_json(Json::parse(R"({"rules": [{"tag": "keywords", "responses": ["k1\nk2"]}]})"));
  script.fallback([](const ChatRequest&) { return std::string("fallback"); });
  Gateway gw({}, nullptr, script);
  EXPECT_EQ(gw.complete(request("x", Tag::keywords)).text, "k1\nk2");
  EXPECT_EQ(gw.complete(request("x", Tag::verify)).text, "fallback");
  EXPECT_THROW(MockScript::from_json(Json::parse(R"({"rules": [{"responses": []}]})")), ConfigError);
  EXPECT_THROW(MockScript::from_json(Json::parse(R"([1])")), ConfigError);
}

TEST(Gateway, LiveRetriesThenCaches) {
  rftest::TempDir dir("gw");
  auto* fake = new FakeTransport(2);
  Gateway gw(live_config(dir.path()), std::unique_ptr<Transport>(fake));
  const auto first = gw.complete(request("q"));
  EXPECT_EQ(first.text, "echo:q");
  EXPECT_FALSE(first.cached);
  EXPECT_EQ(fake->sends_.load(), 3);
  const auto second = gw.complete(request("q"));
  EXPECT_TRUE(second.cached);
  EXPECT_EQ(second.usage.completion_tokens, 4);
  EXPECT_EQ(fake->sends_.load(), 3);
  EXPECT_EQ(gw.cache_hits(), 1u);

  // a different sample index is a different key
  EXPECT_FALSE(gw.complete(request("q", Tag::transform, 1)).cached);
}

TEST(Gateway, LiveGivesUpAfterMaxAttempts) {
  rftest::TempDir dir("gw");
  auto* fake = new FakeTransport(5);
  Gateway gw(live_config(dir.path()), std::unique_ptr<Transport>(fake));
  EXPECT_THROW(gw.complete(request("q")), UpstreamError);
  EXPECT_EQ(fake->sends_.load(), 3);
  EXPECT_TRUE(std::filesystem::is_empty(dir.path()));
}

TEST(Gateway, ReplayServesCacheOrMisses) {
  rftest::TempDir dir("gw");
  {
    Gateway live(live_config(dir.path()), std::make_unique<FakeTransport>());
    live.complete(request("recorded"));
  }
  GatewayConfig cfg;
  cfg.mode = Mode::replay;
  cfg.cache_dir = dir.path();
  Gateway replay(cfg);
  EXPECT_EQ(replay.complete(request("recorded")).text, "echo:recorded");
  EXPECT_THROW(replay.complete(request("never seen")), CacheMissError);

  // a tampered entry whose stored request differs is treated as a miss
  const auto path = dir.path() / (cache_key(request("recorded")) + ".json");
  Json entry = Json::parse(read_file(path));
  entry["request"]["model"] = "other";
  write_file_atomic(path, entry.dump());
  EXPECT_THROW(replay.complete(request("recorded")), CacheMissError);
}

TEST(Gateway, BatchBoundsInflightAndKeepsOrder) {
  rftest::TempDir dir("gw");
  auto* fake = new FakeTransport(0, std::chrono::milliseconds(20));
  GatewayConfig cfg = live_config(dir.path());
  cfg.max_inflight = 3;
  Gateway gw(cfg, std::unique_ptr<Transport>(fake));
  std::vector<ChatRequest> reqs;
  for (int i = 0; i < 24; ++i) reqs.push_back(request("r" + std::to_string(i)));
  reqs[5].temperature = 9.0;  // rejected before any call
  const auto results = gw.complete_batch(reqs);
  ASSERT_EQ(results.size(), 24u);
  for (int i = 0; i < 24; ++i) {
    if (i == 5) {
      EXPECT_FALSE(results[i].ok());
      EXPECT_EQ(results[i].error_kind, "ConfigError");
      continue;
    }
    ASSERT_TRUE(results[i].ok());
    EXPECT_EQ(results[i].response->text, "echo:r" + std::to_string(i));
  }
  EXPECT_LE(fake->peak_.load(), 3);
  EXPECT_LE(gw.peak_inflight(), 3u);
  EXPECT_GE(gw.peak_inflight(), 2u);
  EXPECT_EQ(gw.upstream_calls(), 23u);
}

TEST(HttpTransport, WireBodyAndParse) {
  ChatRequest r = request("hello", Tag::verify, 7);
  r.temperature = 0.0;
  const Json body = HttpTransport::wire_body(r);
  EXPECT_FALSE(body.contains("tag"));
  EXPECT_FALSE(body.contains("sample_index"));
  EXPECT_EQ(body["messages"][0]["content"], "hello");

  const auto ok = HttpTransport::parse_wire_response(
      R"({"choices": [{"message": {"role": "assistant", "content": "hi"}}], "usage": {"prompt_tokens": 5, "completion_tokens": 1}})");
  EXPECT_EQ(ok.text, "hi");
  EXPECT_EQ(ok.usage.prompt_tokens, 5);
  EXPECT_THROW(HttpTransport::parse_wire_response("{"), UpstreamError);
  EXPECT_THROW(HttpTransport::parse_wire_response(R"({"choices": []})"), UpstreamError);
}

TEST(HttpTransport, LoopbackServer) {
  httplib::Server server;
  std::atomic<int> hits{0};
  std::string seen_auth, seen_path;
  server.Post(R"(/v1/chat/completions)", [&](const httplib::Request& req, httplib::Response& res) {
    if (hits++ == 0) {
      res.status = 500;
      res.set_content("boom", "text/plain");
      return;
    }
    seen_auth = req.get_header_value("Authorization");
    const Json body = Json::parse(req.body);
    res.set_content(Json{{"choices", {{{"message", {{"content", "got " + body["messages"][0]["content"].get<std::string>()}}}}}}}.dump(),
                    "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  ASSERT_GT(port, 0);
  std::thread worker([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  rftest::TempDir dir("http");
  Gateway gw(live_config(dir.path()),
             std::make_unique<HttpTransport>("http://127.0.0.1:" + std::to_string(port) + "/v1/", "secret"));
  const auto resp = gw.complete(request("ping"));
  server.stop();
  worker.join();
  EXPECT_EQ(resp.text, "got ping");
  EXPECT_EQ(seen_auth, "Bearer secret");
  EXPECT_EQ(hits.load(), 2);
}
