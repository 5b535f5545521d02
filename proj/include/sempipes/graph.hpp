#pragma once

// Pipeline DAG: declared in a spec document, executed lazily in fit or
// predict mode, with semantic-operator states synthesized at fit time.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sempipes/dsl.hpp"
#include "sempipes/learners.hpp"
#include "sempipes/operators.hpp"
#include "sempipes/semops.hpp"
#include "sempipes/synth.hpp"
#include "sempipes/table.hpp"

namespace sempipes {

enum class NodeOp { Input, MarkX, MarkY, Describe, Drop, Select, Join, SemOp, Vectorize, Estimate };

std::string_view node_op_name(NodeOp op);
std::optional<NodeOp> parse_node_op(std::string_view name);

struct Node {
  std::string id;
  NodeOp op = NodeOp::Input;
  std::vector<std::size_t> parents;  // indices into PipelineGraph::nodes()
  std::string description;           // Describe text or a node's own description
  std::string input_name;            // Input
  std::vector<std::string> columns;  // Drop, Select, MarkX exclusions
  std::string target;                // MarkY; empty means "the only column"
  dsl::JoinKeys join;                // Join
  OperatorSpec semop;                // SemOp
  std::optional<LearnerKind> learner;       // Estimate override
  std::optional<Hyperparameters> hyper;     // Estimate override
};

using DataMap = std::map<std::string, Table>;
using StateMap = std::map<std::string, dsl::Program>;

class PipelineGraph {
 public:
  /// Validates a parsed spec document. Throws ConfigError for malformed
  /// fields and GraphError for structural problems.
  static PipelineGraph build(const nlohmann::json& spec);
  static PipelineGraph from_file(const std::filesystem::path& path);

  const std::vector<Node>& nodes() const { return nodes_; }
  const Node& node(std::size_t i) const { return nodes_[i]; }
  std::size_t index_of(std::string_view id) const;  // throws GraphError
  const std::vector<std::size_t>& topo_order() const { return topo_; }
  /// SemOp node indices in topological order.
  const std::vector<std::size_t>& semop_order() const { return semops_; }
  const std::vector<std::size_t>& children(std::size_t i) const { return children_[i]; }
  /// SemOp nodes at or above `i`.
  const std::vector<std::size_t>& upstream_semops(std::size_t i) const { return upstream_semops_[i]; }
  bool is_ancestor(std::size_t a, std::size_t b) const;  // a at or above b

  std::size_t mark_x() const { return mark_x_; }
  std::size_t mark_y() const { return mark_y_; }
  std::optional<std::size_t> vectorize() const { return vectorize_; }
  std::optional<std::size_t> estimate() const { return estimate_; }

  std::vector<std::string> input_names() const;
  LearnerKind learner_kind() const { return learner_kind_; }
  const Hyperparameters& hyperparameters() const { return hyper_; }
  std::optional<Metric> metric() const { return metric_; }
  /// Metric from the spec, else auroc for classifiers and rmse for ridge.
  Metric effective_metric() const;
  const nlohmann::json& document() const { return document_; }

 private:
  std::vector<Node> nodes_;
  std::vector<std::size_t> topo_;
  std::vector<std::size_t> semops_;
  std::vector<std::vector<std::size_t>> children_;
  std::vector<std::vector<std::size_t>> upstream_semops_;
  std::vector<std::vector<bool>> ancestor_;
  std::size_t mark_x_ = 0;
  std::size_t mark_y_ = 0;
  std::optional<std::size_t> vectorize_;
  std::optional<std::size_t> estimate_;
  LearnerKind learner_kind_ = LearnerKind::Logistic;
  Hyperparameters hyper_;
  std::optional<Metric> metric_;
  nlohmann::json document_;
};

/// Memoized node outputs keyed by (node id, mode, data tag, fingerprint of
/// the upstream operator states). Thread-safe.
class EvalCache {
 public:
  std::optional<Table> find(const std::string& key) const;
  void store(const std::string& key, const Table& t);
  std::size_t hits() const;
  std::size_t size() const;

 private:
  mutable std::mutex mu_;
  std::map<std::string, Table> entries_;
  mutable std::size_t hits_ = 0;
};

struct ExecOptions {
  Mode mode = Mode::Fit;
  // Rows kept at the X and y markers; everything upstream sees full data.
  std::optional<std::vector<std::size_t>> rows;
  dsl::EvalLimits limits{};
  EvalCache* cache = nullptr;
  std::string data_tag;  // identifies `data` + `rows` for the cache
  // When set, a SemOp without a state is an error instead of a pass-through.
  bool require_states = false;
};

/// Lazy evaluator for one (data, states, options) combination. A SemOp node
/// without a state passes its first parent through unchanged.
class Executor {
 public:
  Executor(const PipelineGraph& g, const DataMap& data, const StateMap& states, ExecOptions options);

  const Table& output(std::size_t node);
  OperatorInput operator_input(std::size_t semop_node);
  /// Name of the prediction target.
  const std::string& target();
  /// Target column at the y marker, after augmentation when present.
  Column labels();
  /// Table handed to the vectorizer.
  const Table& features();

 private:
  Table compute(std::size_t node);
  std::string cache_key(std::size_t node) const;

  const PipelineGraph& g_;
  const DataMap& data_;
  const StateMap& states_;
  ExecOptions options_;
  std::map<std::size_t, Table> memo_;
  std::optional<std::string> target_;
  std::optional<Column> augmented_y_;
};

struct FitConfig {
  std::uint64_t seed = 0;
  int max_retries = kDefaultMaxRetries;
  double temperature = 0.0;
  dsl::EvalLimits limits{};
};

struct SynthesisRecord {
  int attempts = 0;
  std::string program_sha256;
  std::string commentary;
  std::vector<std::string> feedback;
};

struct FittedPipeline {
  PipelineGraph graph;
  StateMap states;
  std::map<std::string, SynthesisRecord> synthesis;
  std::string target;
  std::optional<VectorizerState> vectorizer;
  std::optional<LabelEncoding> labels;
  std::optional<LearnerParams> learner;
  std::map<std::string, dsl::Schema> input_schemas;  // target column excluded
  dsl::Schema x_schema;                              // X marker output at fit time
};

/// Synthesizes every SemOp state (temperature cfg.temperature, validation
/// with retries), then trains the vectorizer and learner.
FittedPipeline fit(const PipelineGraph& g, const DataMap& data, Synthesizer& synth, const FitConfig& cfg = {});

struct PinnedFitOptions {
  std::optional<std::vector<std::size_t>> rows;
  EvalCache* cache = nullptr;
  std::string data_tag;
  // Label coding to use instead of fitting one on the training rows.
  std::optional<LabelEncoding> labels;
};

/// Trains with the given states and no synthesizer. SemOps without a state
/// are inactive.
FittedPipeline fit_with_states(const PipelineGraph& g, const DataMap& data, const StateMap& states,
                               const FitConfig& cfg = {}, const PinnedFitOptions& options = {});

/// Positive-class probabilities or regression outputs, one per X row
/// (optionally restricted to `rows`). Never synthesizes.
Eigen::VectorXd predict_scores(const FittedPipeline& fp, const DataMap& data,
                               const std::optional<std::vector<std::size_t>>& rows = std::nullopt,
                               const dsl::EvalLimits& limits = {}, EvalCache* cache = nullptr,
                               const std::string& data_tag = {});

/// Decoded predictions in a column named "prediction". Throws
/// SchemaDriftError when fit-time columns are missing.
Column predict(const FittedPipeline& fp, const DataMap& data, const dsl::EvalLimits& limits = {});

/// The input SemOp `upto` receives when every upstream SemOp runs the given
/// state. Throws GraphError when an upstream state is missing.
OperatorInput partial_eval(const PipelineGraph& g, const DataMap& data, std::string_view upto,
                           const StateMap& states, EvalCache* cache = nullptr);

PipelineContext infer_context(const PipelineGraph& g, const std::string& target = {});

/// Hyperparameters after ChoiceMap states are applied.
Hyperparameters effective_hyperparameters(const PipelineGraph& g, const StateMap& states);

}  // namespace sempipes
