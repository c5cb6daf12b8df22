#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "cocot/domain.hpp"
#include "cocot/errors.hpp"
#include "cocot/wire.hpp"

namespace cocot {

// ---------------------------------------------------------------------------
// Transport
// ---------------------------------------------------------------------------

// status == 0 means the request never completed (connect failure, timeout);
// `error` then carries the transport's description.
struct HttpResult {
  int status = 0;
  std::string body;
  std::string error;
};

class HttpTransport {
 public:
  virtual ~HttpTransport() = default;
  virtual HttpResult post(const WireRequest& request, long timeout_ms) = 0;
};

// ---------------------------------------------------------------------------
// Mock rules
// ---------------------------------------------------------------------------

// Deterministic canned responses. Rules apply in file order; the first rule
// whose substring occurs in the prompt text (or whose digest equals the
// request digest) wins; otherwise default_response.
struct MockRule {
  std::string match_substring;  // empty when match_digest is set
  std::string match_digest;
  std::string response;
};

struct MockRuleSet {
  std::vector<MockRule> rules;
  std::string default_response;

  static MockRuleSet load(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) {
      throw Error(ErrorCode::FileMissing, "mock rules file not found: " + path.string());
    }
    MockRuleSet set;
    std::ifstream in(path);
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      json doc;
      try {
        doc = json::parse(line);
      } catch (const json::exception& e) {
        throw Error(ErrorCode::ConfigError,
                    path.string() + ":" + std::to_string(line_no) + ": " + e.what());
      }
      if (doc.contains("default_response")) {
        set.default_response = doc.at("default_response").get<std::string>();
        continue;
      }
      MockRule rule;
      rule.response = doc.at("response").get<std::string>();
      if (doc.contains("match")) {
        rule.match_substring = doc.at("match").get<std::string>();
      } else if (doc.contains("match_digest")) {
        rule.match_digest = doc.at("match_digest").get<std::string>();
      } else {
        throw Error(ErrorCode::ConfigError, path.string() + ":" + std::to_string(line_no) +
                                                ": rule needs \"match\" or \"match_digest\"");
      }
      set.rules.push_back(std::move(rule));
    }
    return set;
  }

  const std::string& respond(const std::string& prompt_text,
                             const std::string& request_digest) const {
    for (const auto& rule : rules) {
      if (!rule.match_substring.empty()) {
        if (prompt_text.find(rule.match_substring) != std::string::npos) return rule.response;
      } else if (rule.match_digest == request_digest) {
        return rule.response;
      }
    }
    return default_response;
  }
};

// ---------------------------------------------------------------------------
// Client-side throttling
// ---------------------------------------------------------------------------

namespace detail {

// Counting gate bounding in-flight requests; capacity comes from config at
// runtime, which std::counting_semaphore cannot express.
class BoundedGate {
 public:
  explicit BoundedGate(int capacity) : available_(capacity) {}

  void acquire() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return available_ > 0; });
    --available_;
  }

  void release() {
    {
      std::lock_guard lock(mu_);
      ++available_;
    }
    cv_.notify_one();
  }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  int available_;
};

struct GateGuard {
  explicit GateGuard(BoundedGate& gate) : gate_(gate) { gate_.acquire(); }
  ~GateGuard() { gate_.release(); }
  GateGuard(const GateGuard&) = delete;
  GateGuard& operator=(const GateGuard&) = delete;
  BoundedGate& gate_;
};

// Token bucket, contention-safe. rate==0 disables throttling.
class TokenBucket {
 public:
  explicit TokenBucket(double per_minute)
      : rate_per_sec_(per_minute / 60.0),
        capacity_(per_minute > 0 ? per_minute : 1),
        tokens_(capacity_),
        last_(std::chrono::steady_clock::now()) {}

  void acquire() {
    if (rate_per_sec_ <= 0) return;
    std::unique_lock lock(mu_);
    while (true) {
      refill();
      if (tokens_ >= 1.0) {
        tokens_ -= 1.0;
        return;
      }
      double deficit_sec = (1.0 - tokens_) / rate_per_sec_;
      lock.unlock();
      std::this_thread::sleep_for(std::chrono::duration<double>(deficit_sec));
      lock.lock();
    }
  }

 private:
  void refill() {
    auto now = std::chrono::steady_clock::now();
    double elapsed = std::chrono::duration<double>(now - last_).count();
    last_ = now;
    tokens_ = std::min(capacity_, tokens_ + elapsed * rate_per_sec_);
  }

  std::mutex mu_;
  double rate_per_sec_;
  double capacity_;
  double tokens_;
  std::chrono::steady_clock::time_point last_;
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Gateway
// ---------------------------------------------------------------------------

struct CompletionResult {
  std::string text;
  long latency_ms = 0;
  std::optional<TokenUsage> usage;
  int attempts = 1;
  bool truncated = false;
};

// One entry per provider invocation; the invocation log is how tests assert
// call counts for resumption and caption reuse.
struct MockCall {
  std::string request_digest;
  std::string prompt_text;
};

class ProviderGateway {
 public:
  // `transport` may be null for the Mock dialect; remote dialects require one.
  ProviderGateway(ProviderConfig cfg, std::shared_ptr<HttpTransport> transport)
      : cfg_(std::move(cfg)),
        transport_(std::move(transport)),
        gate_(cfg_.max_parallel),
        bucket_(cfg_.rate_limit_per_minute) {
    validate(cfg_);
    if (cfg_.dialect == Dialect::Mock) {
      rules_ = MockRuleSet::load(cfg_.mock_fixtures);
    } else if (!transport_) {
      throw Error(ErrorCode::ConfigError,
                  "provider " + cfg_.provider_id + " needs an HTTP transport");
    }
  }

  const ProviderConfig& config() const { return cfg_; }

  // Executes one call of a pipeline. Retries on 429/5xx/transport failure with
  // exponential backoff; all other HTTP errors throw immediately.
  CompletionResult complete(const AssembledPrompt& call) {
    detail::GateGuard guard(gate_);
    bucket_.acquire();
    log_call(call);
    if (cfg_.dialect == Dialect::Mock) return complete_mock(call);
    return complete_remote(call);
  }

  // Invocation log (all dialects), in call order.
  std::vector<MockCall> call_log() const {
    std::lock_guard lock(log_mu_);
    return log_;
  }

  size_t call_count() const {
    std::lock_guard lock(log_mu_);
    return log_.size();
  }

 private:
  void log_call(const AssembledPrompt& call) {
    MockCall entry{request_digest(call), call.joined_text()};
    std::lock_guard lock(log_mu_);
    log_.push_back(std::move(entry));
  }

  CompletionResult complete_mock(const AssembledPrompt& call) {
    CompletionResult result;
    result.text = rules_.respond(call.joined_text(), request_digest(call));
    result.latency_ms = 0;  // constant so mock transcripts are byte-identical
    TokenUsage usage;
    usage.prompt_tokens = static_cast<long>(call.joined_text().size() / 4);
    usage.completion_tokens = static_cast<long>(result.text.size() / 4);
    usage.total_tokens = usage.prompt_tokens + usage.completion_tokens;
    result.usage = usage;
    return result;
  }

  CompletionResult complete_remote(const AssembledPrompt& call) {
    const char* key = std::getenv(api_key_env_var(cfg_.dialect));
    if (!key || !*key) {
      throw Error(ErrorCode::ConfigError, std::string("environment variable ") +
                                              api_key_env_var(cfg_.dialect) +
                                              " is not set (required by " + cfg_.provider_id + ")");
    }
    WireRequest request = cfg_.dialect == Dialect::OpenAIChat
                              ? build_openai_request(call, cfg_, key)
                              : build_gemini_request(call, cfg_, key);

    auto start = std::chrono::steady_clock::now();
    for (int attempt = 1;; ++attempt) {
      HttpResult http = transport_->post(request, cfg_.timeout_ms);
      if (http.status == 200) {
        WireResponse parsed = cfg_.dialect == Dialect::OpenAIChat
                                  ? parse_openai_response(http.body)
                                  : parse_gemini_response(http.body);
        CompletionResult result;
        result.text = std::move(parsed.text);
        result.usage = parsed.usage;
        result.truncated = parsed.truncated;
        result.attempts = attempt;
        result.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                                std::chrono::steady_clock::now() - start)
                                .count();
        return result;
      }

      bool retryable = http.status == 429 || http.status >= 500 || http.status == 0;
      if (!retryable || attempt >= cfg_.retry.max_attempts) {
        std::string detail = http.status == 0 ? http.error : http.body.substr(0, 200);
        throw ProviderError(retryable, http.status,
                            cfg_.provider_id + " failed after " + std::to_string(attempt) +
                                " attempt(s)",
                            detail);
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(backoff_ms(attempt)));
    }
  }

  long backoff_ms(int attempt) const {
    double base = static_cast<double>(cfg_.retry.base_backoff_ms);
    for (int i = 1; i < attempt; ++i) base *= 2;
    thread_local std::mt19937_64 rng{std::random_device{}()};
    std::uniform_real_distribution<double> dist(1.0 - cfg_.retry.jitter, 1.0 + cfg_.retry.jitter);
    return static_cast<long>(base * dist(rng));
  }

  ProviderConfig cfg_;
  std::shared_ptr<HttpTransport> transport_;
  detail::BoundedGate gate_;
  detail::TokenBucket bucket_;
  MockRuleSet rules_;
  mutable std::mutex log_mu_;
  std::vector<MockCall> log_;
};

}  // namespace cocot
