#include "sempipes/llm_client.hpp"

#include <cstdlib>
#include <sstream>
#include <thread>

#include <httplib.h>

#include "sempipes/errors.hpp"

namespace sempipes {

LlmConfig LlmConfig::from_env(std::string endpoint, std::string model) {
  LlmConfig cfg;
  if (!endpoint.empty()) cfg.endpoint = std::move(endpoint);
  if (!model.empty()) cfg.model = std::move(model);
  const char* key = std::getenv("SEMPIPES_API_KEY");
  if (key == nullptr || *key == '\0') throw AuthError("SEMPIPES_API_KEY is not set");
  cfg.api_key = key;
  return cfg;
}

EndpointUrl parse_endpoint(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("endpoint must start with http:// or https://: " + url);
  const std::string scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") throw ConfigError("unsupported endpoint scheme: " + scheme);
  const auto path_start = url.find('/', scheme_end + 3);
  EndpointUrl out;
  out.origin = url.substr(0, path_start);
  if (out.origin.size() <= scheme_end + 3) throw ConfigError("endpoint has no host: " + url);
  std::string path = path_start == std::string::npos ? "" : url.substr(path_start);
  while (!path.empty() && path.back() == '/') path.pop_back();
  const std::string suffix = "/chat/completions";
  if (path.size() < suffix.size() || path.compare(path.size() - suffix.size(), suffix.size(), suffix) != 0)
    path += suffix;
  out.path = path;
  return out;
}

namespace {

std::string contract_for(OperatorKind kind) {
  switch (kind) {
    case OperatorKind::GenFeatures:
      return "Add at most k new columns computed row by row from existing columns. Keep every input column "
             "unchanged and keep the row count.";
    case OperatorKind::AggFeatures:
      return "Join the auxiliary table on the given keys and add at most k aggregate columns per key. Rows "
             "without a match get missing aggregates. Keep every input column and the row count.";
    case OperatorKind::ExtractFeatures:
      return "Produce exactly the requested output columns from the source text with rules. Keep every "
             "input column and the row count.";
    case OperatorKind::Augment:
      return "Add k synthetic rows with the same schema. Existing rows stay as they are.";
    case OperatorKind::FillNa:
      return "Replace missing values of the target column only. Present cells stay as they are and no "
             "missing value remains in that column.";
    case OperatorKind::Clean:
      return "Rewrite values of the target column only, keeping its type. The column set does not change.";
    case OperatorKind::Refine:
      return "Derive at least one column and optionally drop others. The row count stays the same.";
    case OperatorKind::Select:
      return "Keep a nonempty subset of the existing columns, including any protected columns.";
    case OperatorKind::Choose:
      return "Assign a value inside the declared range to every listed parameter.";
  }
  return "";
}

bool retryable(int status) { return status == 429 || status >= 500; }

}  // namespace

std::string system_message(const SynthesisRequest& request) {
  std::ostringstream os;
  os << "You write programs in dslv1, a small language for table transformations. Programs are the "
        "persistent state of a data-preparation operator inside a machine learning pipeline.\n\n"
     << "Grammar:\n"
     << (request.grammar.empty() ? std::string(dsl::grammar_text()) : request.grammar) << "\n\n"
     << "Program outline for this operator:\n"
     << (request.skeleton.empty() ? skeleton_for(request.spec.kind) : request.skeleton) << "\n"
     << "Contract (" << operator_kind_name(request.spec.kind) << "): " << contract_for(request.spec.kind) << "\n\n"
     << "Answer with exactly one fenced code block tagged dslv1 that starts with the line 'dslv1 <Kind>', "
        "then a few sentences on what the program does.\n";
  return os.str();
}

TokenBucket::TokenBucket(double rate, int burst)
    : rate_(rate), capacity_(std::max(1, burst)), tokens_(std::max(1, burst)), last_(Clock::now()) {
  if (!(rate > 0.0)) throw ConfigError("rate limit must be positive");
}

void TokenBucket::acquire() {
  while (true) {
    std::chrono::duration<double> wait{};
    {
      std::lock_guard lock(mu_);
      const auto now = Clock::now();
      tokens_ = std::min(capacity_, tokens_ + std::chrono::duration<double>(now - last_).count() * rate_);
      last_ = now;
      if (tokens_ >= 1.0) {
        tokens_ -= 1.0;
        return;
      }
      wait = std::chrono::duration<double>((1.0 - tokens_) / rate_);
    }
    std::this_thread::sleep_for(wait);
  }
}

LlmSynthesizer::LlmSynthesizer(LlmConfig config)
    : config_(std::move(config)),
      url_(parse_endpoint(config_.endpoint)),
      bucket_(config_.requests_per_second, config_.burst),
      sleep_([](double ms) { std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(ms)); }) {
  if (config_.api_key.empty()) throw AuthError("no API key configured");
  if (config_.max_in_flight < 1 || config_.transport_retries < 0)
    throw ConfigError("in-flight cap must be positive and retries nonnegative");
}

int LlmSynthesizer::http_calls() const {
  std::lock_guard lock(mu_);
  return http_calls_;
}

nlohmann::json LlmSynthesizer::body_for(const SynthesisRequest& request) const {
  return {{"model", config_.model},
          {"temperature", request.temperature},
          {"seed", request.seed},
          {"messages",
           nlohmann::json::array({{{"role", "system"}, {"content", system_message(request)}},
                                  {{"role", "user"}, {"content", request.prompt()}}})}};
}

SynthesisResult LlmSynthesizer::synthesize(const SynthesisRequest& request) {
  const std::string body = body_for(request).dump();
  const httplib::Headers headers = {{"Authorization", "Bearer " + config_.api_key}};

  {
    std::unique_lock lock(mu_);
    slot_free_.wait(lock, [&] { return in_flight_ < config_.max_in_flight; });
    ++in_flight_;
  }
  struct Release {
    LlmSynthesizer* self;
    ~Release() {
      {
        std::lock_guard lock(self->mu_);
        --self->in_flight_;
      }
      self->slot_free_.notify_one();
    }
  } release{this};

  std::string last_error;
  double backoff = config_.backoff_ms;
  for (int attempt = 0; attempt <= config_.transport_retries; ++attempt) {
    if (attempt > 0) {
      sleep_(backoff);
      backoff *= 2.0;
    }
    bucket_.acquire();
    {
      std::lock_guard lock(mu_);
      ++http_calls_;
    }
    httplib::Client client(url_.origin);
    client.set_connection_timeout(config_.timeout_seconds, 0);
    client.set_read_timeout(config_.timeout_seconds, 0);
    client.set_write_timeout(config_.timeout_seconds, 0);
    auto res = client.Post(url_.path, headers, body, "application/json");
    if (!res) {
      last_error = "connection failed: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 401 || res->status == 403)
      throw AuthError("endpoint rejected the API key (HTTP " + std::to_string(res->status) + ")");
    if (retryable(res->status)) {
      last_error = "HTTP " + std::to_string(res->status);
      if (res->has_header("Retry-After")) {
        const std::string ra = res->get_header_value("Retry-After");
        char* end = nullptr;
        const double secs = std::strtod(ra.c_str(), &end);
        if (end != ra.c_str() && secs > 0) backoff = std::max(backoff, secs * 1000.0);
      }
      continue;
    }
    if (res->status != 200) throw TransportError("HTTP " + std::to_string(res->status) + ": " + res->body);

    nlohmann::json reply;
    try {
      reply = nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
      throw TransportError(std::string("malformed response body: ") + e.what());
    }
    const auto* content = reply.contains("choices") && reply["choices"].is_array() && !reply["choices"].empty()
                              ? &reply["choices"][0]["message"]["content"]
                              : nullptr;
    if (content == nullptr || !content->is_string()) throw TransportError("response has no message content");
    SynthesisResult out = extract_program(content->get<std::string>());
    out.metadata["backend"] = "llm";
    out.metadata["model"] = config_.model;
    out.metadata["attempt"] = request.attempt;
    out.metadata["transport_retries"] = attempt;
    if (reply.contains("usage")) out.metadata["usage"] = reply["usage"];
    return out;
  }
  throw TransportError("giving up after " + std::to_string(config_.transport_retries) +
                       " transport retries: " + last_error);
}

}  // namespace sempipes
