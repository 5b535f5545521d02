#pragma once

// Synthesizer backed by an OpenAI-compatible chat-completions endpoint.

#include <chrono>
#include <condition_variable>
#include <functional>
#include <mutex>
#include <string>

#include "sempipes/synth.hpp"

namespace sempipes {

struct LlmConfig {
  std::string endpoint = "https://api.openai.com/v1";  // base URL or full .../chat/completions URL
  std::string model = "gpt-4o-mini";
  std::string api_key;
  int transport_retries = 3;
  int max_in_flight = 4;
  double requests_per_second = 2.0;
  int burst = 4;
  double backoff_ms = 500.0;  // doubled after every transport retry
  int timeout_seconds = 120;

  /// Reads the key from SEMPIPES_API_KEY. Throws AuthError when unset.
  static LlmConfig from_env(std::string endpoint, std::string model);
};

/// Split of an endpoint URL into the httplib host part and the request path.
struct EndpointUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;    // always ends in /chat/completions
};
EndpointUrl parse_endpoint(const std::string& url);

/// System message: grammar, program outline and contract for the operator.
std::string system_message(const SynthesisRequest& request);

/// Token bucket refilled continuously at `rate` tokens per second.
class TokenBucket {
 public:
  using Clock = std::chrono::steady_clock;
  TokenBucket(double rate, int burst);
  /// Blocks until a token is available.
  void acquire();

 private:
  std::mutex mu_;
  double rate_;
  double capacity_;
  double tokens_;
  Clock::time_point last_;
};

class LlmSynthesizer : public Synthesizer {
 public:
  explicit LlmSynthesizer(LlmConfig config);

  /// One chat-completion round trip plus fenced-block extraction. 429, 5xx
  /// and connection failures are retried with backoff; 401/403 raise
  /// AuthError; exhausted retries raise TransportError.
  SynthesisResult synthesize(const SynthesisRequest& request) override;

  /// Replaces the backoff sleep (tests).
  void set_sleeper(std::function<void(double ms)> sleeper) { sleep_ = std::move(sleeper); }
  int http_calls() const;

 private:
  nlohmann::json body_for(const SynthesisRequest& request) const;

  LlmConfig config_;
  EndpointUrl url_;
  TokenBucket bucket_;
  std::function<void(double)> sleep_;
  mutable std::mutex mu_;
  std::condition_variable slot_free_;
  int in_flight_ = 0;
  int http_calls_ = 0;
};

}  // namespace sempipes
