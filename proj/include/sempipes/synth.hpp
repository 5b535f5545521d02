#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sempipes/operators.hpp"
#include "sempipes/table.hpp"

namespace sempipes {

struct MemoryEntry {
  std::string source;
  std::optional<double> utility;
  std::string commentary;
  std::string validation;  // one-line summary of the validation outcome
};

struct Inspiration {
  std::string source;
  double utility = 0.0;
};

struct NamedProfile {
  std::string name;  // "input" or "aux"
  TableProfile profile;
};

/// Everything a synthesizer sees for one candidate.
struct SynthesisRequest {
  OperatorSpec spec;
  PipelineContext context;
  std::vector<NamedProfile> profiles;
  std::string grammar;
  std::string skeleton;
  std::vector<std::string> feedback;  // errors from earlier attempts, oldest first
  // Optimization extras.
  std::vector<double> utility_history;
  std::vector<MemoryEntry> memories;
  std::vector<Inspiration> inspirations;
  double temperature = 0.0;
  std::uint64_t seed = 0;
  int attempt = 1;

  nlohmann::json to_json() const;
  /// Deterministic user-message text.
  std::string prompt() const;
  /// SHA-256 of `prompt()`.
  std::string fingerprint() const;
};

struct SynthesisResult {
  std::string source;
  std::string commentary;
  nlohmann::json metadata = nlohmann::json::object();
};

class Synthesizer {
 public:
  virtual ~Synthesizer() = default;
  /// Throws TransportError / AuthError for backend faults and
  /// ExtractionError when the reply holds no program.
  virtual SynthesisResult synthesize(const SynthesisRequest& request) = 0;
};

/// Kind-specific program outline shipped with every request.
std::string skeleton_for(OperatorKind kind);

struct MockOptions {
  // Attempts 1..fail_first of every retry loop return unparseable text.
  int fail_first = 0;
};

/// Deterministic template synthesizer. Each operator kind has a fixed,
/// ordered menu of program pieces; the mutation step
/// (|memories| + |inspirations|, plus a seeded 0-2 offset at nonzero
/// temperature) decides how far along the menu a candidate goes.
class MockSynthesizer : public Synthesizer {
 public:
  explicit MockSynthesizer(MockOptions options = {}) : options_(options) {}
  SynthesisResult synthesize(const SynthesisRequest& request) override;

  static int mutation_step(const SynthesisRequest& request);

 private:
  MockOptions options_;
};

/// Counts calls and forwards to another backend.
class CountingSynthesizer : public Synthesizer {
 public:
  explicit CountingSynthesizer(Synthesizer& inner) : inner_(inner) {}
  SynthesisResult synthesize(const SynthesisRequest& request) override {
    ++calls_;
    return inner_.synthesize(request);
  }
  std::size_t calls() const { return calls_; }
  void reset() { calls_ = 0; }

 private:
  Synthesizer& inner_;
  std::atomic<std::size_t> calls_{0};
};

/// Fails every call; stands in for a disconnected backend.
class UnavailableSynthesizer : public Synthesizer {
 public:
  SynthesisResult synthesize(const SynthesisRequest& request) override;
};

/// Source of the first fenced block whose body starts with the DSL header;
/// everything outside that block becomes commentary. Throws ExtractionError.
SynthesisResult extract_program(const std::string& reply);

}  // namespace sempipes
