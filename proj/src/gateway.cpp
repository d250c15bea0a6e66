#include "trajsim/gateway.hpp"

#include <cmath>
#include <cstdlib>
#include <regex>
#include <thread>

#include "httplib.h"
#include "trajsim/error.hpp"
#include "trajsim/text.hpp"

namespace trajsim {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

bool retryable(const TransportResult& r) {
  if (r.kind == TransportResult::Kind::kTransportError) return true;
  if (r.kind != TransportResult::Kind::kHttpError) return false;
  return r.http_status == 429 || r.http_status >= 500;
}

std::string describe_failure(const TransportResult& r) {
  if (r.kind == TransportResult::Kind::kHttpError) {
    return "HTTP " + std::to_string(r.http_status) + (r.error.empty() ? "" : ": " + r.error);
  }
  return r.error;
}

}  // namespace

void BackendConfig::validate() const {
  if (timeout_ms <= 0) throw Error(Errc::kInvalidConfig, "timeout_ms must be positive");
  if (max_retries < 0) throw Error(Errc::kInvalidConfig, "max_retries must be >= 0");
  if (base_url.empty()) throw Error(Errc::kInvalidConfig, "base_url is empty");
}

Json to_json(const BackendConfig& config) {
  Json j{{"base_url", config.base_url},
         {"model_name", config.model_name},
         {"api_key_env", config.api_key_env},
         {"timeout_ms", config.timeout_ms},
         {"max_retries", config.max_retries},
         {"temperature", config.temperature}};
  j["seed"] = config.seed ? Json(*config.seed) : Json(nullptr);
  return j;
}

// --- OpenAI-compatible transport -------------------------------------------

Json OpenAiTransport::request_body(const std::string& prompt, const BackendConfig& config) {
  Json body{{"model", config.model_name},
            {"messages", Json::array({Json{{"role", "user"}, {"content", prompt}}})},
            {"temperature", config.temperature}};
  if (config.seed) body["seed"] = *config.seed;
  return body;
}

TransportResult OpenAiTransport::parse_response(int status, const std::string& body) {
  if (status != 200) return TransportResult::http_error(status, body.substr(0, 200));
  Json j;
  try {
    j = Json::parse(body);
  } catch (const Json::parse_error& e) {
    return TransportResult::malformed(std::string("response is not JSON: ") + e.what());
  }
  const auto choices = j.find("choices");
  if (choices == j.end() || !choices->is_array() || choices->empty()) {
    return TransportResult::malformed("response has no choices");
  }
  const auto& first = (*choices)[0];
  if (!first.contains("message") || !first["message"].contains("content") ||
      !first["message"]["content"].is_string()) {
    return TransportResult::malformed("choices[0].message.content missing");
  }
  auto r = TransportResult::ok(first["message"]["content"].get<std::string>());
  if (j.contains("seed") && j["seed"].is_number_integer()) r.seed = j["seed"].get<std::int64_t>();
  return r;
}

TransportResult OpenAiTransport::send(const std::string& prompt, const BackendConfig& config) {
  const auto scheme_end = config.base_url.find("://");
  const auto path_start =
      config.base_url.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
  const std::string origin = config.base_url.substr(0, path_start);
  std::string prefix =
      path_start == std::string::npos ? std::string() : config.base_url.substr(path_start);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();

  httplib::Client client(origin);
  const auto timeout = std::chrono::milliseconds(config.timeout_ms);
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);

  httplib::Headers headers;
  if (const char* key = std::getenv(config.api_key_env.c_str()); key && *key) {
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }
  const auto body = jsonl::dump_line(request_body(prompt, config));
  auto res = client.Post(prefix + "/chat/completions", headers, body, "application/json");
  if (!res) return TransportResult::transport_error(httplib::to_string(res.error()));
  return parse_response(res->status, res->body);
}

// --- Mock transport ----------------------------------------------------------

void MockTransport::set_canned(const std::string& prompt_hash, std::string reply) {
  std::lock_guard lock(mu_);
  canned_[prompt_hash] = std::move(reply);
}

void MockTransport::set_responder(Responder responder) {
  std::lock_guard lock(mu_);
  responder_ = std::move(responder);
}

void MockTransport::script(std::vector<TransportResult> results) {
  std::lock_guard lock(mu_);
  for (auto& r : results) scripted_.push_back(std::move(r));
}

void MockTransport::fail_always(std::optional<TransportResult> result) {
  std::lock_guard lock(mu_);
  always_ = std::move(result);
}

TransportResult MockTransport::send(const std::string& prompt, const BackendConfig&) {
  Responder responder;
  {
    std::lock_guard lock(mu_);
    received_.push_back(prompt);
    if (always_) return *always_;
    if (!scripted_.empty()) {
      auto r = std::move(scripted_.front());
      scripted_.pop_front();
      return r;
    }
    if (auto it = canned_.find(text::sha256_hex(prompt)); it != canned_.end()) {
      return TransportResult::ok(it->second);
    }
    responder = responder_;
  }
  if (!responder) return TransportResult::http_error(404, "no canned reply for prompt");
  return TransportResult::ok(responder(prompt));
}

std::vector<std::string> MockTransport::received() const {
  std::lock_guard lock(mu_);
  return received_;
}

std::size_t MockTransport::calls() const {
  std::lock_guard lock(mu_);
  return received_.size();
}

std::size_t requested_sentence_count(std::string_view prompt) {
  static const std::regex en(R"(generate (\d+) client utterances)");
  static const std::regex zh("生成(\\d+)句话");
  std::match_results<std::string_view::const_iterator> m;
  if (std::regex_search(prompt.begin(), prompt.end(), m, en) ||
      std::regex_search(prompt.begin(), prompt.end(), m, zh)) {
    return static_cast<std::size_t>(std::stoul(m[1].str()));
  }
  return 1;
}

MockTransport::Responder counting_responder() {
  return [](const std::string& prompt) {
    static const std::vector<std::string> zh = {
        "嗯，是这样的。",         "最近晚上总是睡不好。",   "我也不知道该怎么办。",
        "其实我挺在意别人的看法。", "您说得对，我会试试看。", "工作上的事情让我很烦。",
        "我觉得自己做得不够好。",   "可以再说具体一点吗？",   "和家里人也聊不太来。"};
    static const std::vector<std::string> en = {
        "Yeah, that's right.",         "I haven't been sleeping well lately.",
        "I don't really know what to do.", "I care a lot about what people think.",
        "Okay, I'll give it a try.",   "Work has been really stressful.",
        "I feel like I'm not good enough.", "Could you say a bit more about that?",
        "It's hard to talk with my family."};
    const bool is_zh = prompt.find("来访者") != std::string::npos;
    const auto& pool = is_zh ? zh : en;
    const auto digest = text::sha256_hex(prompt);
    const auto n = requested_sentence_count(prompt);
    std::size_t start = std::stoul(digest.substr(0, 8), nullptr, 16);
    std::string out;
    for (std::size_t i = 0; i < n; ++i) {
      if (!is_zh && i > 0) out += " ";
      out += pool[(start + i) % pool.size()];
    }
    return out;
  };
}

// --- Rate limiting -----------------------------------------------------------

TokenBucket::TokenBucket(double rate_per_sec, double burst)
    : rate_(rate_per_sec),
      capacity_(std::max(1.0, burst)),
      tokens_(std::max(1.0, burst)),
      last_(Clock::now()) {}

void TokenBucket::acquire() {
  if (rate_ <= 0.0) return;
  std::unique_lock lock(mu_);
  for (;;) {
    const auto now = Clock::now();
    tokens_ = std::min(capacity_,
                       tokens_ + std::chrono::duration<double>(now - last_).count() * rate_);
    last_ = now;
    if (tokens_ >= 1.0) {
      tokens_ -= 1.0;
      return;
    }
    const auto wait = std::chrono::duration<double>((1.0 - tokens_) / rate_);
    lock.unlock();
    std::this_thread::sleep_for(wait);
    lock.lock();
  }
}

// --- Gateway -----------------------------------------------------------------

std::chrono::milliseconds backoff_delay(int retry, double jitter_factor) {
  const double ms = kBackoffBaseMs * std::ldexp(1.0, retry) * jitter_factor;
  return std::chrono::milliseconds(static_cast<std::int64_t>(std::llround(ms)));
}

Gateway::Gateway(BackendConfig config, std::shared_ptr<Transport> transport,
                 GatewayOptions options)
    : config_(std::move(config)),
      transport_(std::move(transport)),
      options_(std::move(options)),
      slots_(std::max(1, options_.max_concurrency)),
      bucket_(options_.rate_per_sec, options_.burst),
      rng_(options_.jitter_seed) {
  config_.validate();
  if (!transport_) throw Error(Errc::kInvalidConfig, "gateway needs a transport");
  if (!options_.sleeper) {
    options_.sleeper = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  }
}

double Gateway::draw_jitter() {
  std::lock_guard lock(rng_mu_);
  // 53 random bits mapped onto [0.8, 1.2).
  const double unit = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
  return 0.8 + 0.4 * unit;
}

void Gateway::log(const Json& record) {
  if (!options_.log_path) return;
  std::lock_guard lock(log_mu_);
  jsonl::append(*options_.log_path, record);
}

Completion Gateway::generate(const std::string& prompt) {
  if (prompt.empty()) throw Error(Errc::kInvalidArgument, "prompt is empty");

  slots_.acquire();
  struct Release {
    std::counting_semaphore<>& s;
    ~Release() { s.release(); }
  } release{slots_};

  const auto start = Clock::now();
  const auto hash = text::sha256_hex(prompt);
  Json record{{"ts", text::iso_utc_now()}, {"backend", config_.id()}, {"prompt_sha256", hash}};
  if (options_.log_prompts) record["prompt"] = prompt;

  auto fail = [&](Errc code, const std::string& message, int attempts) -> Error {
    record["latency_ms"] = elapsed_ms(start);
    record["attempts"] = attempts;
    record["outcome"] = std::string(errc_name(code));
    record["error"] = message;
    log(record);
    return Error(code, message);
  };

  TransportResult last;
  const int max_attempts = config_.max_retries + 1;
  for (int attempt = 1; attempt <= max_attempts; ++attempt) {
    bucket_.acquire();
    last = transport_->send(prompt, config_);

    if (last.kind == TransportResult::Kind::kOk) {
      if (text::trim(last.text).empty()) {
        throw fail(Errc::kMalformedResponse, "backend returned empty text", attempt);
      }
      Completion c{last.text, elapsed_ms(start), config_.id(), attempt,
                   last.seed ? last.seed : std::nullopt};
      record["latency_ms"] = c.latency_ms;
      record["attempts"] = attempt;
      record["outcome"] = "ok";
      if (c.seed) record["seed"] = *c.seed;
      if (options_.log_prompts) record["completion"] = c.text;
      log(record);
      return c;
    }
    if (last.kind == TransportResult::Kind::kMalformed) {
      throw fail(Errc::kMalformedResponse, last.error, attempt);
    }
    if (last.kind == TransportResult::Kind::kHttpError &&
        (last.http_status == 401 || last.http_status == 403)) {
      throw fail(Errc::kAuthError, describe_failure(last), attempt);
    }
    if (!retryable(last)) {
      throw fail(Errc::kMalformedResponse, describe_failure(last), attempt);
    }
    if (attempt < max_attempts) options_.sleeper(backoff_delay(attempt - 1, draw_jitter()));
  }
  const Errc code = last.kind == TransportResult::Kind::kHttpError ? Errc::kRateLimited
                                                                  : Errc::kTimeout;
  throw fail(code,
             "gave up after " + std::to_string(max_attempts) +
                 " attempts; last failure: " + describe_failure(last),
             max_attempts);
}

// --- Sentence splitting ------------------------------------------------------

SplitResult split_sentences(std::string_view input, std::size_t expected_n) {
  auto is_terminator = [](char32_t c) {
    return c == U'。' || c == U'！' || c == U'？' || c == U'.' || c == U'!' || c == U'?';
  };
  auto is_closer = [](char32_t c) {
    return c == U'”' || c == U'’' || c == U'」' || c == U'』' || c == U'）' || c == U')' ||
           c == U'"' || c == U'\'';
  };
  auto is_digit = [](char32_t c) { return c >= U'0' && c <= U'9'; };

  SplitResult result;
  std::string current;
  auto flush = [&] {
    auto piece = std::string(text::trim(current));
    if (!piece.empty()) result.sentences.push_back(std::move(piece));
    current.clear();
  };

  std::size_t pos = 0;
  char32_t prev = 0;
  while (pos < input.size()) {
    const std::size_t begin = pos;
    const char32_t c = text::next_codepoint(input, pos);
    if (c == U'\n' || c == U'\r') {
      flush();
      prev = c;
      continue;
    }
    current.append(input.substr(begin, pos - begin));
    if (!is_terminator(c)) {
      prev = c;
      continue;
    }
    if (c == U'.' && is_digit(prev) && pos < input.size()) {
      std::size_t peek = pos;
      if (is_digit(text::next_codepoint(input, peek))) {
        prev = c;
        continue;
      }
    }
    // Absorb the rest of the terminator run and any closing quotes.
    while (pos < input.size()) {
      std::size_t peek = pos;
      const char32_t next = text::next_codepoint(input, peek);
      if (!is_terminator(next) && !is_closer(next)) break;
      current.append(input.substr(pos, peek - pos));
      pos = peek;
    }
    flush();
    prev = c;
  }
  flush();
  result.count_mismatch = result.sentences.size() != expected_n;
  return result;
}

BackendConfig backend_from_env(BackendConfig base) {
  if (const char* v = std::getenv("TRAJSIM_LLM_BASE_URL"); v && *v) base.base_url = v;
  if (const char* v = std::getenv("TRAJSIM_LLM_MODEL"); v && *v) base.model_name = v;
  return base;
}

}  // namespace trajsim
