#pragma once

#include <chrono>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <semaphore>
#include <string>
#include <string_view>
#include <vector>

#include "trajsim/jsonl.hpp"

namespace trajsim {

struct BackendConfig {
  std::string base_url = "http://127.0.0.1:8000/v1";
  std::string model_name = "gpt-4o-mini";
  std::string api_key_env = "TRAJSIM_LLM_API_KEY";
  int timeout_ms = 60000;
  int max_retries = 3;
  double temperature = 0.7;
  std::optional<std::int64_t> seed;

  // Throws InvalidConfig when timeout_ms <= 0 or max_retries < 0.
  void validate() const;
  std::string id() const { return model_name + "@" + base_url; }
};

Json to_json(const BackendConfig& config);

struct Completion {
  std::string text;
  double latency_ms = 0.0;
  std::string backend_id;
  int attempt_count = 0;
  std::optional<std::int64_t> seed;  // echoed by the backend, if any
};

// Result of one wire attempt. Transports report failures as values so the
// gateway owns the retry policy.
struct TransportResult {
  enum class Kind { kOk, kTransportError, kHttpError, kMalformed };

  Kind kind = Kind::kOk;
  int http_status = 200;
  std::string text;
  std::string error;
  std::optional<std::int64_t> seed;

  static TransportResult ok(std::string text) {
    return {Kind::kOk, 200, std::move(text), {}, std::nullopt};
  }
  static TransportResult http_error(int status, std::string error = {}) {
    return {Kind::kHttpError, status, {}, std::move(error), std::nullopt};
  }
  static TransportResult transport_error(std::string error) {
    return {Kind::kTransportError, 0, {}, std::move(error), std::nullopt};
  }
  static TransportResult malformed(std::string error) {
    return {Kind::kMalformed, 200, {}, std::move(error), std::nullopt};
  }
};

class Transport {
 public:
  virtual ~Transport() = default;
  virtual TransportResult send(const std::string& prompt, const BackendConfig& config) = 0;
};

// OpenAI-compatible chat completions: the prompt goes out as a single user
// message to `<base_url>/chat/completions`.
class OpenAiTransport : public Transport {
 public:
  TransportResult send(const std::string& prompt, const BackendConfig& config) override;

  static Json request_body(const std::string& prompt, const BackendConfig& config);
  static TransportResult parse_response(int status, const std::string& body);
};

/// Deterministic in-process backend for tests and `--mock` runs.
///
/// Reply resolution order: scripted failures (consumed one per call), then the
/// canned map keyed by SHA-256 of the prompt, then the responder. Without a
/// responder an unmatched prompt yields an HTTP 404.
class MockTransport : public Transport {
 public:
  using Responder = std::function<std::string(const std::string& prompt)>;

  MockTransport() = default;
  explicit MockTransport(Responder responder) : responder_(std::move(responder)) {}

  void set_canned(const std::string& prompt_hash, std::string reply);
  void set_responder(Responder responder);
  void script(std::vector<TransportResult> results);
  // Every call fails with `result` until cleared with std::nullopt.
  void fail_always(std::optional<TransportResult> result);

  TransportResult send(const std::string& prompt, const BackendConfig& config) override;

  std::vector<std::string> received() const;
  std::size_t calls() const;

 private:
  mutable std::mutex mu_;
  std::map<std::string, std::string> canned_;
  Responder responder_;
  std::deque<TransportResult> scripted_;
  std::optional<TransportResult> always_;
  std::vector<std::string> received_;
};

// Reads the sentence count a composed prompt asks for ("generate 3 client
// utterances" / "生成3句话"); 1 when the prompt does not ask for a count.
std::size_t requested_sentence_count(std::string_view prompt);

// Canned client: answers with as many sentences as the prompt requests,
// chosen deterministically from the prompt hash, in the prompt's language.
MockTransport::Responder counting_responder();

class TokenBucket {
 public:
  // rate_per_sec <= 0 disables limiting.
  TokenBucket(double rate_per_sec, double burst);
  void acquire();

 private:
  std::mutex mu_;
  double rate_;
  double capacity_;
  double tokens_;
  std::chrono::steady_clock::time_point last_;
};

struct GatewayOptions {
  int max_concurrency = 4;
  double rate_per_sec = 0.0;
  double burst = 4.0;
  std::uint64_t jitter_seed = 0x5eed;
  std::function<void(std::chrono::milliseconds)> sleeper;  // default: sleep_for
  std::optional<std::filesystem::path> log_path;            // llm_log.jsonl
  bool log_prompts = false;
};

inline constexpr int kBackoffBaseMs = 500;

// Delay before retry number `retry` (0-based): base * 2^retry scaled by
// `jitter_factor`, which callers draw from [0.8, 1.2].
std::chrono::milliseconds backoff_delay(int retry, double jitter_factor);

/// The generator: one backend, bounded concurrency, retry with backoff.
class Gateway {
 public:
  Gateway(BackendConfig config, std::shared_ptr<Transport> transport,
          GatewayOptions options = {});

  // Retries transport errors, 429 and 5xx up to max_retries. Exhaustion
  // raises RateLimited when the last failure was an HTTP status and Timeout
  // when it was a transport failure. 401/403 raise AuthError at once; other
  // statuses and unusable bodies raise MalformedResponse.
  Completion generate(const std::string& prompt);

  const BackendConfig& config() const { return config_; }

 private:
  void log(const Json& record);
  double draw_jitter();

  BackendConfig config_;
  std::shared_ptr<Transport> transport_;
  GatewayOptions options_;
  std::counting_semaphore<> slots_;
  TokenBucket bucket_;
  std::mutex rng_mu_;
  std::mt19937_64 rng_;
  std::mutex log_mu_;
};

struct SplitResult {
  std::vector<std::string> sentences;
  bool count_mismatch = false;
};

// Splits after runs of 。！？.!? (plus any closing quotes or brackets that
// follow) and at newlines. A '.' between two digits does not split. The raw
// split is returned as-is; count_mismatch flags a count other than expected_n.
SplitResult split_sentences(std::string_view text, std::size_t expected_n);

// Backend settings from TRAJSIM_LLM_BASE_URL / TRAJSIM_LLM_MODEL on top of `base`.
BackendConfig backend_from_env(BackendConfig base = {});

}  // namespace trajsim
