#pragma once

// Tree-structured evolutionary search over semantic-operator states.

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sempipes/graph.hpp"
#include "sempipes/random.hpp"

namespace sempipes {

enum class Policy { Mcts, Truncation, Greedy, Random };

std::string_view policy_name(Policy p);
std::optional<Policy> parse_policy(std::string_view name);

struct PolicyConfig {
  Policy policy = Policy::Mcts;
  double c = 0.5;
  int root_expansion = 3;
  int inner_expansion = 2;
  int truncation_k = 6;
  int greedy_drafts = 2;
  int inspirations = 3;
  int budget = 24;
  int folds = 5;
  std::uint64_t seed = 0;
  double temperature = 2.0;
  int max_retries = kDefaultMaxRetries;
  std::optional<Metric> metric;  // defaults to the graph's metric
  dsl::EvalLimits limits{};
};

struct SearchNode {
  int id = 0;
  std::optional<int> parent;
  int step = 0;
  StateMap states;
  std::map<std::string, MemoryEntry> memories;
  std::map<std::string, SynthesisRecord> records;
  std::optional<double> utility;
  bool failed = false;
  std::string failure;
  std::vector<int> children;
  // Subtree aggregates, maintained by backpropagation.
  int visits = 0;
  int successes = 0;
  double utility_sum = 0.0;
};

/// Tree with optional read tracing (which node ids a policy looked at).
class SearchTree {
 public:
  int add(SearchNode node);  // assigns the id, links the parent, backpropagates
  const SearchNode& node(int id) const;
  SearchNode& mutable_node(int id) { return nodes_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return nodes_.size(); }
  const std::vector<SearchNode>& nodes() const { return nodes_; }

  /// Min and max raw utility over successful nodes.
  std::optional<std::pair<double, double>> utility_range() const;
  /// Utility shifted by the observed minimum and scaled to [0, 1]; 0 when
  /// every observed utility is equal.
  double normalized(double utility) const;
  /// Sum of normalized utilities over the subtree (failed nodes add 0).
  double reward(int id) const;

  std::vector<int> path_to(int id) const;  // root first

  void set_tracing(bool on) { tracing_ = on; }
  const std::set<int>& accessed() const { return accessed_; }
  void clear_trace() { accessed_.clear(); }

  nlohmann::json to_json() const;

 private:
  std::vector<SearchNode> nodes_;
  bool tracing_ = false;
  mutable std::set<int> accessed_;
};

double uct_score(double reward, int visits, int parent_visits, double c);

/// MCTS descent: stop at the first node with fewer children than its
/// expansion threshold; otherwise move to the non-failed child with the
/// highest UCT score, lowest index on ties.
int select_mcts(const SearchTree& tree, const PolicyConfig& cfg);

/// Index drawn with probability proportional to `weights`; uniform when
/// the weights sum to zero.
std::size_t sample_truncation(std::span<const double> weights, Rng& rng);

/// Top-k successful nodes by utility (ties: lower id), then a weighted draw
/// on their normalized utilities.
int select_truncation(const SearchTree& tree, const PolicyConfig& cfg, Rng& rng);

/// Highest-utility successful node (ties: lower id).
int best_node(const SearchTree& tree);

struct CvResult {
  std::optional<double> utility;
  std::vector<double> fold_utilities;
  std::string error;
};

/// k-fold cross-validated utility with the given states pinned. Folds are
/// stratified for classifiers; a fold with a single class falls back from
/// auroc to accuracy.
CvResult cv_utility(const PipelineGraph& g, const DataMap& data, const StateMap& states, Metric metric, int folds,
                    std::uint64_t seed, const dsl::EvalLimits& limits = {}, EvalCache* cache = nullptr);

/// Fold assignment used by cv_utility: fold index per row.
std::vector<int> assign_folds(const Column& y, bool stratified, int folds, std::uint64_t seed);

struct OptimizationResult {
  int best_id = 0;
  StateMap best_states;
  double best_utility = 0.0;
  SearchTree tree;
  std::vector<nlohmann::json> log;
};

/// Milliseconds elapsed for the step log; injectable for reproducible logs.
using StepClock = std::function<double()>;
StepClock wall_clock();

class Optimizer {
 public:
  Optimizer(const PipelineGraph& g, const DataMap& data, Synthesizer& synth, PolicyConfig cfg);

  void set_clock(StepClock clock) { clock_ = std::move(clock); }
  /// Called with every finished log record.
  void on_step(std::function<void(const nlohmann::json&)> cb) { on_step_ = std::move(cb); }
  /// Observes every evolved operator input (node id, table) for tests.
  void on_operator_input(std::function<void(int step, const std::string&, const OperatorInput&)> cb) {
    on_input_ = std::move(cb);
  }
  SearchTree& tree() { return tree_; }

  OptimizationResult run();

  /// One policy decision: the node to evolve, and whether the request
  /// carries the tree's top states as inspirations.
  struct Selection {
    int node = 0;
    bool inspire = false;
  };
  Selection select();

 private:
  SearchNode evolve(int parent, bool inspire, int step);
  std::vector<Inspiration> top_inspirations(const std::string& op) const;

  const PipelineGraph& g_;
  const DataMap& data_;
  Synthesizer& synth_;
  PolicyConfig cfg_;
  Metric metric_;
  SearchTree tree_;
  Rng rng_;
  int drafts_left_ = 0;
  std::string target_;
  EvalCache cache_;
  StepClock clock_;
  std::function<void(const nlohmann::json&)> on_step_;
  std::function<void(int, const std::string&, const OperatorInput&)> on_input_;
};

}  // namespace sempipes
