#include "sempipes/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sempipes/errors.hpp"
#include "sempipes/hashing.hpp"

namespace sempipes {

std::string_view policy_name(Policy p) {
  switch (p) {
    case Policy::Mcts: return "mcts";
    case Policy::Truncation: return "truncation";
    case Policy::Greedy: return "greedy";
    case Policy::Random: return "random";
  }
  return "?";
}

std::optional<Policy> parse_policy(std::string_view name) {
  for (auto p : {Policy::Mcts, Policy::Truncation, Policy::Greedy, Policy::Random})
    if (policy_name(p) == name) return p;
  return std::nullopt;
}

// ------------------------------------------------------------------ tree

int SearchTree::add(SearchNode node) {
  node.id = static_cast<int>(nodes_.size());
  node.children.clear();
  node.visits = 1;
  node.successes = node.failed || !node.utility ? 0 : 1;
  node.utility_sum = node.successes ? *node.utility : 0.0;
  const int id = node.id;
  const auto parent = node.parent;
  const int successes = node.successes;
  const double sum = node.utility_sum;
  nodes_.push_back(std::move(node));
  if (parent) {
    nodes_.at(static_cast<std::size_t>(*parent)).children.push_back(id);
    for (std::optional<int> a = parent; a; a = nodes_[static_cast<std::size_t>(*a)].parent) {
      SearchNode& anc = nodes_[static_cast<std::size_t>(*a)];
      anc.visits += 1;
      anc.successes += successes;
      anc.utility_sum += sum;
    }
  }
  return id;
}

const SearchNode& SearchTree::node(int id) const {
  if (tracing_) accessed_.insert(id);
  return nodes_.at(static_cast<std::size_t>(id));
}

std::optional<std::pair<double, double>> SearchTree::utility_range() const {
  std::optional<std::pair<double, double>> r;
  for (const auto& n : nodes_) {
    if (n.failed || !n.utility) continue;
    if (!r) r = std::make_pair(*n.utility, *n.utility);
    r->first = std::min(r->first, *n.utility);
    r->second = std::max(r->second, *n.utility);
  }
  return r;
}

double SearchTree::normalized(double utility) const {
  const auto r = utility_range();
  if (!r || r->second <= r->first) return 0.0;
  return (utility - r->first) / (r->second - r->first);
}

double SearchTree::reward(int id) const {
  const SearchNode& n = node(id);
  const auto r = utility_range();
  if (!r || r->second <= r->first || n.successes == 0) return 0.0;
  // Normalization is affine, so the subtree sum follows from the raw sum.
  return (n.utility_sum - n.successes * r->first) / (r->second - r->first);
}

std::vector<int> SearchTree::path_to(int id) const {
  std::vector<int> path;
  for (std::optional<int> a = id; a; a = node(*a).parent) path.push_back(*a);
  std::reverse(path.begin(), path.end());
  return path;
}

nlohmann::json SearchTree::to_json() const {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& n : nodes_) {
    nlohmann::json j;
    j["id"] = n.id;
    j["parent"] = n.parent ? nlohmann::json(*n.parent) : nlohmann::json(nullptr);
    j["step"] = n.step;
    j["utility"] = n.utility ? nlohmann::json(*n.utility) : nlohmann::json(nullptr);
    j["failed"] = n.failed;
    if (!n.failure.empty()) j["failure"] = n.failure;
    j["visits"] = n.visits;
    j["successes"] = n.successes;
    j["utility_sum"] = n.utility_sum;
    j["children"] = n.children;
    j["states"] = nlohmann::json::object();
    for (const auto& [op, prog] : n.states) j["states"][op] = prog.source_text;
    j["memories"] = nlohmann::json::object();
    for (const auto& [op, m] : n.memories)
      j["memories"][op] = {{"source", m.source},
                           {"utility", m.utility ? nlohmann::json(*m.utility) : nlohmann::json(nullptr)},
                           {"commentary", m.commentary},
                           {"validation", m.validation}};
    out.push_back(std::move(j));
  }
  return out;
}

// -------------------------------------------------------------- policies

double uct_score(double reward, int visits, int parent_visits, double c) {
  const double n = static_cast<double>(visits);
  return reward / n + c * std::sqrt(std::log(static_cast<double>(parent_visits)) / n);
}

int select_mcts(const SearchTree& tree, const PolicyConfig& cfg) {
  int at = 0;
  while (true) {
    const SearchNode& n = tree.node(at);
    const int threshold = n.parent ? cfg.inner_expansion : cfg.root_expansion;
    if (static_cast<int>(n.children.size()) < threshold) return at;
    int best = -1;
    double best_score = 0.0;
    for (int c : n.children) {
      const SearchNode& child = tree.node(c);
      if (child.failed) continue;
      const double s = uct_score(tree.reward(c), child.visits, n.visits, cfg.c);
      if (best < 0 || s > best_score) {
        best = c;
        best_score = s;
      }
    }
    if (best < 0) return at;
    at = best;
  }
}

std::size_t sample_truncation(std::span<const double> weights, Rng& rng) {
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (!(total > 0.0)) return rng.below(weights.size());
  return rng.weighted(weights);
}

namespace {

std::vector<int> ranked_successes(const SearchTree& tree) {
  std::vector<int> ids;
  for (const auto& n : tree.nodes())
    if (!n.failed && n.utility) ids.push_back(n.id);
  std::stable_sort(ids.begin(), ids.end(),
                   [&](int a, int b) { return *tree.node(a).utility > *tree.node(b).utility; });
  return ids;
}

}  // namespace

int select_truncation(const SearchTree& tree, const PolicyConfig& cfg, Rng& rng) {
  std::vector<int> ids = ranked_successes(tree);
  if (ids.empty()) throw SearchError("every search node failed");
  if (ids.size() > static_cast<std::size_t>(cfg.truncation_k)) ids.resize(static_cast<std::size_t>(cfg.truncation_k));
  std::vector<double> weights;
  for (int id : ids) weights.push_back(tree.normalized(*tree.node(id).utility));
  return ids[sample_truncation(weights, rng)];
}

int best_node(const SearchTree& tree) {
  const auto ids = ranked_successes(tree);
  if (ids.empty()) throw SearchError("every search node failed");
  return ids.front();
}

// ------------------------------------------------------- cross-validation

std::vector<int> assign_folds(const Column& y, bool stratified, int folds, std::uint64_t seed) {
  Rng rng(derive_seed(seed, seed_tag("folds")));
  std::vector<int> out(y.size(), 0);
  std::vector<std::vector<std::size_t>> groups;
  if (stratified) {
    std::map<Cell, std::vector<std::size_t>, CellLess> by_class;
    for (std::size_t i = 0; i < y.size(); ++i) by_class[y[i]].push_back(i);
    for (auto& [cls, rows] : by_class) groups.push_back(std::move(rows));
  } else {
    groups.emplace_back(y.size());
    std::iota(groups[0].begin(), groups[0].end(), std::size_t{0});
  }
  // Deal shuffled rows round-robin, continuing across classes.
  std::size_t next = 0;
  for (auto& rows : groups) {
    rng.shuffle(rows);
    for (std::size_t r : rows) out[r] = static_cast<int>(next++ % static_cast<std::size_t>(folds));
  }
  return out;
}

CvResult cv_utility(const PipelineGraph& g, const DataMap& data, const StateMap& states, Metric metric, int folds,
                    std::uint64_t seed, const dsl::EvalLimits& limits, EvalCache* cache) {
  if (folds < 2) throw ConfigError("cross-validation needs at least 2 folds");
  if (!g.estimate()) throw ConfigError("cross-validation needs a pipeline with an estimate node");
  CvResult out;
  try {
    ExecOptions eo;
    eo.limits = limits;
    eo.cache = cache;
    eo.data_tag = "full";
    Executor ex(g, data, states, eo);
    const std::string target = ex.target();
    const Column y = ex.output(g.mark_y()).column(target);
    if (y.size() < static_cast<std::size_t>(folds)) throw ConfigError("fewer rows than folds");
    const bool classify = g.learner_kind() == LearnerKind::Logistic;
    std::optional<LabelEncoding> labels;
    if (classify) labels = fit_labels(y);
    const auto fold_of = assign_folds(y, classify, folds, seed);
    FitConfig fc;
    fc.seed = seed;
    fc.limits = limits;
    for (int f = 0; f < folds; ++f) {
      std::vector<std::size_t> train, test;
      for (std::size_t i = 0; i < fold_of.size(); ++i) (fold_of[i] == f ? test : train).push_back(i);
      PinnedFitOptions po;
      po.rows = train;
      po.cache = cache;
      po.data_tag = "fold" + std::to_string(f) + "/train";
      po.labels = labels;
      const FittedPipeline fp = fit_with_states(g, data, states, fc, po);
      const Eigen::VectorXd scores =
          predict_scores(fp, data, test, limits, cache, "fold" + std::to_string(f) + "/test");
      const Column y_test = y.take(test);
      const Eigen::VectorXd truth = classify ? encode_labels(*labels, y_test) : numeric_targets(y_test);
      Metric m = metric;
      if (m == Metric::Auroc && (truth.minCoeff() == truth.maxCoeff())) m = Metric::Accuracy;
      const double u = utility(m, truth, scores);
      if (!std::isfinite(u)) throw FitError("non-finite utility on fold " + std::to_string(f));
      out.fold_utilities.push_back(u);
    }
    out.utility = std::accumulate(out.fold_utilities.begin(), out.fold_utilities.end(), 0.0) /
                  static_cast<double>(out.fold_utilities.size());
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    out.utility.reset();
    out.error = e.what();
  }
  return out;
}

// -------------------------------------------------------------- optimizer

StepClock wall_clock() {
  return [] {
    using namespace std::chrono;
    return duration<double, std::milli>(steady_clock::now().time_since_epoch()).count();
  };
}

Optimizer::Optimizer(const PipelineGraph& g, const DataMap& data, Synthesizer& synth, PolicyConfig cfg)
    : g_(g),
      data_(data),
      synth_(synth),
      cfg_(cfg),
      metric_(cfg.metric.value_or(g.effective_metric())),
      rng_(derive_seed(cfg.seed, seed_tag("policy"))),
      drafts_left_(cfg.greedy_drafts),
      clock_(wall_clock()) {
  if (cfg_.budget < 1) throw ConfigError("budget must be at least 1");
  if (cfg_.c <= 0 || cfg_.root_expansion < 1 || cfg_.inner_expansion < 1 || cfg_.truncation_k < 1 ||
      cfg_.greedy_drafts < 0 || cfg_.inspirations < 0 || cfg_.folds < 2)
    throw ConfigError("search constants must be positive (folds >= 2)");
}

Optimizer::Selection Optimizer::select() {
  switch (cfg_.policy) {
    case Policy::Mcts: return {select_mcts(tree_, cfg_), false};
    case Policy::Truncation: return {select_truncation(tree_, cfg_, rng_), false};
    case Policy::Greedy:
      if (drafts_left_ > 0) {
        --drafts_left_;
        return {0, true};
      }
      return {best_node(tree_), true};
    case Policy::Random: return {0, false};
  }
  return {0, false};
}

std::vector<Inspiration> Optimizer::top_inspirations(const std::string& op) const {
  std::vector<Inspiration> out;
  for (int id : ranked_successes(tree_)) {
    const SearchNode& n = tree_.node(id);
    auto it = n.states.find(op);
    if (it == n.states.end()) continue;
    out.push_back({it->second.source_text, *n.utility});
    if (out.size() == static_cast<std::size_t>(cfg_.inspirations)) break;
  }
  return out;
}

SearchNode Optimizer::evolve(int parent, bool inspire, int step) {
  SearchNode child;
  child.parent = parent;
  child.step = step;
  child.states = tree_.node(parent).states;
  const std::vector<int> path = tree_.path_to(parent);
  SearchExtras base;
  base.temperature = cfg_.temperature;
  for (int id : path)
    if (tree_.node(id).utility) base.utility_history.push_back(*tree_.node(id).utility);
  const PipelineContext ctx = infer_context(g_, target_);
  for (std::size_t j : g_.semop_order()) {
    const Node& n = g_.node(j);
    SearchExtras extras = base;
    for (int id : path) {
      const auto& mem = tree_.node(id).memories;
      if (auto it = mem.find(n.id); it != mem.end()) extras.memories.push_back(it->second);
    }
    if (inspire) extras.inspirations = top_inspirations(n.id);
    try {
      const OperatorInput input = partial_eval(g_, data_, n.id, child.states, &cache_);
      if (on_input_) on_input_(step, n.id, input);
      OperatorSpec spec = n.semop;
      spec.protected_columns = {target_};
      const auto request = assemble_request(spec, ctx, input,
                                            derive_seed(cfg_.seed, static_cast<std::uint64_t>(step), seed_tag(n.id)),
                                            extras);
      auto outcome = synthesize_with_retry(spec, request, synth_, input, cfg_.max_retries, cfg_.limits);
      child.records[n.id] = SynthesisRecord{outcome.report.attempts_used, sha256_hex(outcome.program.source_text),
                                            outcome.program.commentary, outcome.feedback};
      child.memories[n.id] = MemoryEntry{outcome.program.source_text, std::nullopt, outcome.program.commentary,
                                         outcome.report.summary()};
      child.states[n.id] = std::move(outcome.program);
    } catch (const SynthesisError& e) {
      child.failed = true;
      child.failure = e.what();
      child.records[n.id] = SynthesisRecord{e.report().attempts_used, "", "", {}};
      child.memories[n.id] = MemoryEntry{"", std::nullopt, "", e.report().summary()};
      return child;
    } catch (const TransportError&) {
      throw;
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      child.failed = true;
      child.failure = e.what();
      return child;
    }
  }
  return child;
}

OptimizationResult Optimizer::run() {
  {
    ExecOptions eo;
    Executor ex(g_, data_, {}, eo);
    target_ = ex.target();
  }
  const double started = clock_();
  double best_so_far = 0.0;
  OptimizationResult result;

  auto emit = [&](const SearchNode& n) {
    nlohmann::json rec;
    rec["step"] = n.step;
    rec["node_id"] = n.id;
    rec["parent_id"] = n.parent ? nlohmann::json(*n.parent) : nlohmann::json(nullptr);
    rec["policy"] = policy_name(cfg_.policy);
    rec["utility"] = n.utility ? nlohmann::json(*n.utility) : nlohmann::json(nullptr);
    rec["failed"] = n.failed;
    rec["operators"] = nlohmann::json::object();
    for (const auto& [op, r] : n.records) rec["operators"][op] = {{"program_sha256", r.program_sha256}, {"attempts", r.attempts}};
    rec["wall_time_ms"] = std::llround(clock_() - started);
    rec["best_so_far"] = best_so_far;
    if (on_step_) on_step_(rec);
    result.log.push_back(std::move(rec));
  };

  SearchNode root;
  root.step = 0;
  const CvResult root_cv = cv_utility(g_, data_, {}, metric_, cfg_.folds, cfg_.seed, cfg_.limits, &cache_);
  if (!root_cv.utility) throw SearchError("evaluating the initial pipeline failed: " + root_cv.error);
  root.utility = root_cv.utility;
  best_so_far = *root.utility;
  emit(tree_.node(tree_.add(std::move(root))));

  for (int step = 1; step < cfg_.budget; ++step) {
    const Selection sel = select();
    SearchNode child = evolve(sel.node, sel.inspire, step);
    if (!child.failed) {
      const CvResult cv = cv_utility(g_, data_, child.states, metric_, cfg_.folds, cfg_.seed, cfg_.limits, &cache_);
      if (cv.utility) {
        child.utility = cv.utility;
        for (auto& [op, m] : child.memories) m.utility = cv.utility;
        best_so_far = std::max(best_so_far, *cv.utility);
      } else {
        child.failed = true;
        child.failure = cv.error;
      }
    }
    emit(tree_.node(tree_.add(std::move(child))));
  }

  result.best_id = best_node(tree_);
  result.best_states = tree_.node(result.best_id).states;
  result.best_utility = *tree_.node(result.best_id).utility;
  result.tree = tree_;
  return result;
}

}  // namespace sempipes
