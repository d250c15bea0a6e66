#include <gtest/gtest.h>

#include <atomic>
#include <cstdlib>
#include <random>
#include <thread>

#include "fixtures.hpp"
#include "httplib.h"
#include "trajsim/error.hpp"
#include "trajsim/gateway.hpp"
#include "trajsim/jsonl.hpp"
#include "trajsim/text.hpp"

namespace trajsim {
namespace {

using Kind = TransportResult::Kind;

Errc code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return Errc::kInvalidArgument;
}

// Records requested backoff delays instead of sleeping.
struct SleepLog {
  std::shared_ptr<std::vector<std::chrono::milliseconds>> delays =
      std::make_shared<std::vector<std::chrono::milliseconds>>();
  GatewayOptions options() const {
    GatewayOptions o;
    auto d = delays;
    o.sleeper = [d](std::chrono::milliseconds ms) { d->push_back(ms); };
    return o;
  }
};

BackendConfig config_with_retries(int retries) {
  BackendConfig c;
  c.max_retries = retries;
  return c;
}

TEST(BackendConfig, Validation) {
  BackendConfig c;
  EXPECT_NO_THROW(c.validate());
  c.timeout_ms = 0;
  EXPECT_EQ(code_of([&] { c.validate(); }), Errc::kInvalidConfig);
  c.timeout_ms = 10;
  c.max_retries = -1;
  EXPECT_EQ(code_of([&] { c.validate(); }), Errc::kInvalidConfig);
  c.max_retries = 0;
  EXPECT_NO_THROW(c.validate());
}

TEST(MockGateway, CannedReplyByPromptHash) {
  auto transport = std::make_shared<MockTransport>();
  transport->set_canned(text::sha256_hex("prompt one"), "好的。");
  Gateway g(BackendConfig{}, transport);
  const auto c = g.generate("prompt one");
  EXPECT_EQ(c.text, "好的。");
  EXPECT_EQ(c.attempt_count, 1);
  EXPECT_EQ(c.backend_id, BackendConfig{}.id());
  // No responder: an unknown prompt is a 404, which is not retried.
  EXPECT_EQ(code_of([&] { g.generate("prompt two"); }), Errc::kMalformedResponse);
  EXPECT_EQ(transport->calls(), 2u);
}

TEST(MockGateway, FailTwiceThenSucceed) {
  SleepLog sleeps;
  auto m = testing::mock_gateway([](const std::string&) { return "ok."; }, config_with_retries(3),
                                 sleeps.options());
  m.transport->script({TransportResult::http_error(503), TransportResult::transport_error("reset")});
  const auto c = m.gateway->generate("p");
  EXPECT_EQ(c.attempt_count, 3);
  EXPECT_EQ(c.text, "ok.");
  ASSERT_EQ(sleeps.delays->size(), 2u);
  EXPECT_GE(sleeps.delays->at(0).count(), 400);
  EXPECT_LE(sleeps.delays->at(0).count(), 600);
  EXPECT_GE(sleeps.delays->at(1).count(), 800);
  EXPECT_LE(sleeps.delays->at(1).count(), 1200);
}

TEST(MockGateway, AlwaysFiveHundredExhausts) {
  auto m = testing::mock_gateway({}, config_with_retries(2));
  m.transport->fail_always(TransportResult::http_error(500));
  EXPECT_EQ(code_of([&] { m.gateway->generate("p"); }), Errc::kRateLimited);
  EXPECT_EQ(m.transport->calls(), 3u);
}

TEST(MockGateway, TransportFailuresExhaustAsTimeout) {
  auto m = testing::mock_gateway({}, config_with_retries(1));
  m.transport->fail_always(TransportResult::transport_error("timed out"));
  EXPECT_EQ(code_of([&] { m.gateway->generate("p"); }), Errc::kTimeout);
  EXPECT_EQ(m.transport->calls(), 2u);
}

TEST(MockGateway, TooManyRequestsIsRetried) {
  auto m = testing::mock_gateway([](const std::string&) { return "fine"; }, config_with_retries(3));
  m.transport->script({TransportResult::http_error(429)});
  EXPECT_EQ(m.gateway->generate("p").attempt_count, 2);
}

TEST(MockGateway, AuthErrorIsNotRetried) {
  for (int status : {401, 403}) {
    auto m = testing::mock_gateway({}, config_with_retries(3));
    m.transport->fail_always(TransportResult::http_error(status));
    EXPECT_EQ(code_of([&] { m.gateway->generate("p"); }), Errc::kAuthError);
    EXPECT_EQ(m.transport->calls(), 1u);
  }
}

TEST(MockGateway, MalformedAndEmptyReplies) {
  auto m = testing::mock_gateway({}, config_with_retries(3));
  m.transport->script({TransportResult::malformed("no choices")});
  EXPECT_EQ(code_of([&] { m.gateway->generate("p"); }), Errc::kMalformedResponse);
  m.transport->script({TransportResult::ok("   ")});
  EXPECT_EQ(code_of([&] { m.gateway->generate("p"); }), Errc::kMalformedResponse);
  m.transport->script({TransportResult::http_error(400)});
  EXPECT_EQ(code_of([&] { m.gateway->generate("p"); }), Errc::kMalformedResponse);
  EXPECT_EQ(m.transport->calls(), 3u);
}

TEST(MockGateway, EmptyPromptRejected) {
  auto m = testing::mock_gateway();
  EXPECT_EQ(code_of([&] { m.gateway->generate(""); }), Errc::kInvalidArgument);
  EXPECT_EQ(m.transport->calls(), 0u);
}

TEST(GatewayProperty, AttemptsNeverExceedRetriesPlusOne) {
  std::mt19937_64 rng(41);
  for (int i = 0; i < 200; ++i) {
    const int retries = static_cast<int>(rng() % 5);
    auto m = testing::mock_gateway([](const std::string&) { return "ok"; },
                                   config_with_retries(retries));
    const int failures = static_cast<int>(rng() % 8);
    std::vector<TransportResult> script;
    for (int k = 0; k < failures; ++k) {
      script.push_back(rng() % 2 ? TransportResult::http_error(502)
                                 : TransportResult::transport_error("x"));
    }
    m.transport->script(script);
    try {
      const auto c = m.gateway->generate("p");
      EXPECT_EQ(c.attempt_count, failures + 1);
      EXPECT_LE(failures, retries);
    } catch (const Error& e) {
      EXPECT_GT(failures, retries);
      EXPECT_TRUE(e.code() == Errc::kRateLimited || e.code() == Errc::kTimeout);
    }
    EXPECT_LE(m.transport->calls(), static_cast<std::size_t>(retries + 1));
  }
}

TEST(GatewayProperty, PromptReachesTransportUnchangedAndHashIsLogged) {
  testing::TempDir dir;
  GatewayOptions o;
  o.log_path = dir / "llm_log.jsonl";
  o.log_prompts = true;
  auto m = testing::mock_gateway(counting_responder(), {}, o);
  std::mt19937_64 rng(2);
  std::vector<std::string> prompts;
  for (int i = 0; i < 50; ++i) {
    std::string p = "来访者 prompt " + std::to_string(rng()) + "\n{n} \t 生成2句话";
    prompts.push_back(p);
    m.gateway->generate(p);
  }
  EXPECT_EQ(m.transport->received(), prompts);
  const auto records = jsonl::read(dir / "llm_log.jsonl");
  ASSERT_EQ(records.size(), prompts.size());
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    EXPECT_EQ(records[i]["prompt_sha256"], text::sha256_hex(prompts[i]));
    EXPECT_EQ(records[i]["prompt"], prompts[i]);
    EXPECT_EQ(records[i]["outcome"], "ok");
    EXPECT_EQ(records[i]["attempts"], 1);
    EXPECT_TRUE(records[i].contains("latency_ms"));
  }
}

TEST(Gateway, LogOmitsPromptByDefaultAndRecordsFailures) {
  testing::TempDir dir;
  GatewayOptions o;
  o.log_path = dir / "llm_log.jsonl";
  auto m = testing::mock_gateway({}, config_with_retries(0), o);
  m.transport->fail_always(TransportResult::http_error(503));
  EXPECT_THROW(m.gateway->generate("secret"), Error);
  const auto records = jsonl::read(dir / "llm_log.jsonl");
  ASSERT_EQ(records.size(), 1u);
  EXPECT_FALSE(records[0].contains("prompt"));
  EXPECT_EQ(records[0]["outcome"], "RateLimited");
  EXPECT_EQ(records[0]["attempts"], 1);
}

TEST(Gateway, ConcurrencyLimitIsEnforced) {
  std::atomic<int> in_flight{0}, peak{0};
  GatewayOptions o;
  o.max_concurrency = 2;
  auto m = testing::mock_gateway(
      [&](const std::string&) {
        const int now = ++in_flight;
        int seen = peak.load();
        while (now > seen && !peak.compare_exchange_weak(seen, now)) {
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
        --in_flight;
        return std::string("ok");
      },
      {}, o);
  std::vector<std::thread> threads;
  for (int i = 0; i < 8; ++i) {
    threads.emplace_back([&, i] { m.gateway->generate("p" + std::to_string(i)); });
  }
  for (auto& t : threads) t.join();
  EXPECT_LE(peak.load(), 2);
  EXPECT_EQ(m.transport->calls(), 8u);
}

TEST(Backoff, DelayDoublesFromBase) {
  EXPECT_EQ(backoff_delay(0, 1.0).count(), 500);
  EXPECT_EQ(backoff_delay(1, 1.0).count(), 1000);
  EXPECT_EQ(backoff_delay(2, 1.0).count(), 2000);
  EXPECT_EQ(backoff_delay(0, 0.8).count(), 400);
  EXPECT_EQ(backoff_delay(1, 1.2).count(), 1200);
}

TEST(TokenBucket, DisabledAndLimited) {
  TokenBucket off(0, 1);
  for (int i = 0; i < 100; ++i) off.acquire();
  TokenBucket on(200.0, 1.0);
  const auto start = std::chrono::steady_clock::now();
  for (int i = 0; i < 5; ++i) on.acquire();
  const auto ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start);
  EXPECT_GE(ms.count(), 15.0);  // four refills at 5 ms each
}

TEST(SplitSentences, Examples) {
  auto r = split_sentences("我很累。谢谢你。", 2);
  EXPECT_EQ(r.sentences, (std::vector<std::string>{"我很累。", "谢谢你。"}));
  EXPECT_FALSE(r.count_mismatch);

  r = split_sentences("我很累。", 2);
  EXPECT_EQ(r.sentences.size(), 1u);
  EXPECT_TRUE(r.count_mismatch);

  r = split_sentences("嗯……我也不知道……", 2);
  EXPECT_EQ(r.sentences.size(), 1u);
  EXPECT_TRUE(r.count_mismatch);
}

TEST(SplitSentences, TerminatorRunsQuotesNewlinesAndDecimals) {
  EXPECT_EQ(split_sentences("真的吗？！我不信。", 2).sentences,
            (std::vector<std::string>{"真的吗？！", "我不信。"}));
  EXPECT_EQ(split_sentences("他说“算了。”然后走了。", 2).sentences,
            (std::vector<std::string>{"他说“算了。”", "然后走了。"}));
  EXPECT_EQ(split_sentences("I slept 6.5 hours. Not enough!", 2).sentences,
            (std::vector<std::string>{"I slept 6.5 hours.", "Not enough!"}));
  EXPECT_EQ(split_sentences("第一行\n第二行", 2).sentences,
            (std::vector<std::string>{"第一行", "第二行"}));
  EXPECT_EQ(split_sentences("  \n ", 1).sentences.size(), 0u);
  EXPECT_TRUE(split_sentences("", 1).count_mismatch);
}

TEST(SplitSentencesProperty, JoinedSentencesCoverNonSpaceText) {
  const std::vector<std::string> pieces = {"我很累", "。", "！", "？", "好", ".", "ok", "?", "\n",
                                           " ", "1.5", "”", "谢谢"};
  std::mt19937_64 rng(9);
  auto strip = [](const std::string& s) {
    std::string out;
    for (char c : s) {
      if (c != ' ' && c != '\n') out += c;
    }
    return out;
  };
  for (int i = 0; i < 500; ++i) {
    std::string s;
    for (int k = 0; k < 8; ++k) s += pieces[rng() % pieces.size()];
    const auto r = split_sentences(s, 2);
    std::string joined;
    for (const auto& x : r.sentences) {
      EXPECT_FALSE(text::trim(x).empty());
      joined += x;
    }
    EXPECT_EQ(strip(joined), strip(s)) << s;
    EXPECT_EQ(r.count_mismatch, r.sentences.size() != 2);
  }
}

TEST(CountingResponder, ProducesRequestedSentenceCount) {
  const auto responder = counting_responder();
  for (std::size_t n = 1; n <= 5; ++n) {
    const auto zh = "来访者 ... 生成" + std::to_string(n) + "句话以完成对话";
    EXPECT_EQ(requested_sentence_count(zh), n);
    EXPECT_EQ(split_sentences(responder(zh), n).sentences.size(), n);
    const auto en = "generate " + std::to_string(n) + " client utterances to continue";
    EXPECT_EQ(requested_sentence_count(en), n);
    EXPECT_EQ(split_sentences(responder(en), n).sentences.size(), n);
  }
  EXPECT_EQ(requested_sentence_count("no count here"), 1u);
  EXPECT_EQ(responder("来访者 x"), responder("来访者 x"));
}

TEST(OpenAiTransport, RequestBodyShape) {
  BackendConfig c;
  c.model_name = "m1";
  c.temperature = 0.5;
  c.seed = 42;
  const auto body = OpenAiTransport::request_body("hello", c);
  EXPECT_EQ(body["model"], "m1");
  EXPECT_EQ(body["messages"].size(), 1u);
  EXPECT_EQ(body["messages"][0]["role"], "user");
  EXPECT_EQ(body["messages"][0]["content"], "hello");
  EXPECT_EQ(body["temperature"], 0.5);
  EXPECT_EQ(body["seed"], 42);
}

TEST(OpenAiTransport, ParseResponse) {
  auto r = OpenAiTransport::parse_response(
      200, R"({"choices":[{"message":{"role":"assistant","content":"嗯。"}}],"seed":7})");
  EXPECT_EQ(r.kind, Kind::kOk);
  EXPECT_EQ(r.text, "嗯。");
  EXPECT_EQ(r.seed, 7);
  EXPECT_EQ(OpenAiTransport::parse_response(200, "not json").kind, Kind::kMalformed);
  EXPECT_EQ(OpenAiTransport::parse_response(200, R"({"choices":[]})").kind, Kind::kMalformed);
  EXPECT_EQ(OpenAiTransport::parse_response(200, R"({"choices":[{"message":{}}]})").kind,
            Kind::kMalformed);
  r = OpenAiTransport::parse_response(503, "busy");
  EXPECT_EQ(r.kind, Kind::kHttpError);
  EXPECT_EQ(r.http_status, 503);
}

// A local chat-completions endpoint exercising the real wire path.
class FakeBackend {
 public:
  FakeBackend() {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      const int n = ++hits_;
      last_auth_ = req.get_header_value("Authorization");
      last_body_ = Json::parse(req.body);
      if (n <= fail_first_) {
        res.status = 500;
        res.set_content("boom", "text/plain");
        return;
      }
      Json reply{{"choices", Json::array({Json{{"message",
                                                 Json{{"role", "assistant"},
                                                      {"content", "echo: " +
                                                                      last_body_["messages"][0]
                                                                                ["content"]
                                                                                    .get<std::string>()}}}}})}};
      res.set_content(reply.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeBackend() {
    server_.stop();
    thread_.join();
  }

  BackendConfig config() const {
    BackendConfig c;
    c.base_url = "http://127.0.0.1:" + std::to_string(port_) + "/v1";
    c.model_name = "fake";
    c.api_key_env = "TRAJSIM_TEST_FAKE_KEY";
    c.timeout_ms = 5000;
    return c;
  }

  int fail_first_ = 0;
  std::atomic<int> hits_{0};
  std::string last_auth_;
  Json last_body_;

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

TEST(OpenAiTransport, RoundTripOverHttpWithRetry) {
  FakeBackend backend;
  backend.fail_first_ = 1;
  ::setenv("TRAJSIM_TEST_FAKE_KEY", "sk-test", 1);
  GatewayOptions o;
  o.sleeper = [](std::chrono::milliseconds) {};
  Gateway g(backend.config(), std::make_shared<OpenAiTransport>(), o);
  const auto c = g.generate("你好");
  EXPECT_EQ(c.text, "echo: 你好");
  EXPECT_EQ(c.attempt_count, 2);
  EXPECT_EQ(backend.hits_.load(), 2);
  EXPECT_EQ(backend.last_auth_, "Bearer sk-test");
  EXPECT_EQ(backend.last_body_["model"], "fake");
  ::unsetenv("TRAJSIM_TEST_FAKE_KEY");
}

TEST(OpenAiTransport, UnreachableBackendIsTimeout) {
  BackendConfig c;
  c.base_url = "http://127.0.0.1:1/v1";
  c.timeout_ms = 200;
  c.max_retries = 1;
  GatewayOptions o;
  o.sleeper = [](std::chrono::milliseconds) {};
  Gateway g(c, std::make_shared<OpenAiTransport>(), o);
  EXPECT_EQ(code_of([&] { g.generate("x"); }), Errc::kTimeout);
}

TEST(BackendFromEnv, OverridesBaseUrlAndModel) {
  ::setenv("TRAJSIM_LLM_BASE_URL", "http://example.invalid/v1", 1);
  ::setenv("TRAJSIM_LLM_MODEL", "env-model", 1);
  const auto c = backend_from_env();
  EXPECT_EQ(c.base_url, "http://example.invalid/v1");
  EXPECT_EQ(c.model_name, "env-model");
  ::unsetenv("TRAJSIM_LLM_BASE_URL");
  ::unsetenv("TRAJSIM_LLM_MODEL");
  EXPECT_EQ(backend_from_env().model_name, BackendConfig{}.model_name);
}

}  // namespace
}  // namespace trajsim
