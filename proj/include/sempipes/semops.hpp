#pragma once

// Semantic operators: request assembly, candidate validation with retries,
// and application of a validated program to full data.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sempipes/dsl.hpp"
#include "sempipes/errors.hpp"
#include "sempipes/operators.hpp"
#include "sempipes/synth.hpp"
#include "sempipes/table.hpp"

namespace sempipes {

inline constexpr std::size_t kValidationRows = 100;
inline constexpr std::size_t kExtractionRows = 50;
inline constexpr double kJoinKeyRetention = 0.9;
inline constexpr int kDefaultMaxRetries = 5;

/// What an operator node receives: its main table and, for agg_features,
/// the auxiliary table.
struct OperatorInput {
  Table table;
  std::optional<Table> aux;
};

struct ValidationCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct ValidationReport {
  bool passed = false;
  std::vector<ValidationCheck> checks;
  int attempts_used = 0;

  void add(std::string name, bool ok, std::string detail = {});
  /// Failed checks joined into one line, or "ok".
  std::string summary() const;
  nlohmann::json to_json() const;
};

/// Thrown when every attempt for one operator fails validation.
class SynthesisError : public FitError {
 public:
  SynthesisError(std::string node, ValidationReport report)
      : FitError("synthesis failed for node '" + node + "' after " + std::to_string(report.attempts_used) +
                 " attempts: " + report.summary()),
        node_(std::move(node)),
        report_(std::move(report)) {}
  const std::string& node() const { return node_; }
  const ValidationReport& report() const { return report_; }

 private:
  std::string node_;
  ValidationReport report_;
};

/// Optimization-time additions to a request.
struct SearchExtras {
  std::vector<double> utility_history;
  std::vector<MemoryEntry> memories;
  std::vector<Inspiration> inspirations;
  double temperature = 0.0;
};

SynthesisRequest assemble_request(const OperatorSpec& spec, const PipelineContext& context,
                                  const OperatorInput& input, std::uint64_t seed,
                                  const SearchExtras& extras = {});

/// The sample a candidate is validated on: 100 rows (50 for extraction);
/// for agg_features the auxiliary table keeps rows for 90% of the sampled
/// join keys.
OperatorInput validation_sample(const OperatorSpec& spec, const OperatorInput& input, std::uint64_t seed);

/// Runs `candidate` on the validation sample and checks the operator's
/// output contract. Never throws for candidate faults; they become failed
/// checks.
ValidationReport validate_candidate(const OperatorSpec& spec, const dsl::Program& candidate,
                                    const OperatorInput& input, std::uint64_t seed,
                                    const dsl::EvalLimits& limits = {});

/// The operator's output contract, checked on a produced table. `typed` is
/// the type-checked program that produced `output` from `input`.
ValidationReport check_contract(const OperatorSpec& spec, const dsl::Program& typed, const OperatorInput& input,
                                const Table& output);

struct SynthesisOutcome {
  dsl::Program program;  // parsed, validated; commentary attached
  ValidationReport report;
  SynthesisResult result;
  std::vector<std::string> feedback;  // feedback sent along the way
};

/// Requests candidates until one validates, feeding failures back. Makes at
/// most max_retries + 1 synthesizer calls. Transport errors propagate.
SynthesisOutcome synthesize_with_retry(const OperatorSpec& spec, SynthesisRequest request, Synthesizer& synth,
                                       const OperatorInput& input, int max_retries = kDefaultMaxRetries,
                                       const dsl::EvalLimits& limits = {});

enum class Mode { Fit, Predict };

/// Full-data application. Augmentation only acts in fit mode; choose
/// returns its input (see chosen_values).
Table apply_operator(const OperatorSpec& spec, const dsl::Program& program, const OperatorInput& input, Mode mode,
                     const dsl::EvalLimits& limits = {});

std::map<std::string, double> chosen_values(const dsl::Program& program);

}  // namespace sempipes
