#include "sempipes/graph.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <set>

#include "sempipes/errors.hpp"
#include "sempipes/hashing.hpp"
#include "sempipes/random.hpp"
#include "sempipes/spec_file.hpp"

namespace sempipes {

namespace {

using json = nlohmann::json;

constexpr std::pair<NodeOp, std::string_view> kOpNames[] = {
    {NodeOp::Input, "input"},         {NodeOp::MarkX, "mark_x"},   {NodeOp::MarkY, "mark_y"},
    {NodeOp::Describe, "describe"},   {NodeOp::Drop, "drop"},      {NodeOp::Select, "select"},
    {NodeOp::Join, "join"},           {NodeOp::SemOp, "semop"},    {NodeOp::Vectorize, "vectorize"},
    {NodeOp::Estimate, "estimate"},
};

std::string where_of(const std::string& id) { return "node '" + id + "'"; }

std::string req_string(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw ConfigError(where + ": missing '" + key + "'");
  if (!j[key].is_string()) throw ConfigError(where + ": '" + key + "' must be a string");
  return j[key].get<std::string>();
}

std::optional<std::string> opt_string(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) return std::nullopt;
  if (!j[key].is_string()) throw ConfigError(where + ": '" + key + "' must be a string");
  return j[key].get<std::string>();
}

std::optional<double> opt_number(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) return std::nullopt;
  if (!j[key].is_number()) throw ConfigError(where + ": '" + key + "' must be a number");
  return j[key].get<double>();
}

std::vector<std::string> string_list(const json& j, const char* key, const std::string& where) {
  std::vector<std::string> out;
  if (!j.contains(key)) return out;
  if (!j[key].is_array()) throw ConfigError(where + ": '" + key + "' must be an array of strings");
  for (const auto& v : j[key]) {
    if (!v.is_string()) throw ConfigError(where + ": '" + key + "' must be an array of strings");
    out.push_back(v.get<std::string>());
  }
  return out;
}

Hyperparameters read_hyper(const json& j, Hyperparameters h, const std::string& where) {
  if (auto v = opt_number(j, "l2", where)) h.l2 = *v;
  if (auto v = opt_number(j, "learning_rate", where)) h.learning_rate = *v;
  if (auto v = opt_number(j, "epochs", where)) h.epochs = static_cast<int>(*v);
  if (h.l2 < 0 || !(h.learning_rate > 0) || h.epochs < 1)
    throw ConfigError(where + ": need l2 >= 0, learning_rate > 0 and epochs >= 1");
  return h;
}

OperatorSpec read_semop(const std::string& id, const json& node, const json& params) {
  const std::string where = where_of(id);
  OperatorSpec s;
  const std::string kind = req_string(params, "kind", where);
  auto k = parse_operator_kind(kind);
  if (!k) throw ConfigError(where + ": unknown operator kind '" + kind + "'");
  s.kind = *k;
  s.name = id;
  s.instruction = opt_string(node, "nl_prompt", where).value_or(opt_string(params, "instruction", where).value_or(""));
  if (params.contains("k")) {
    if (!params["k"].is_number_integer()) throw ConfigError(where + ": 'k' must be an integer");
    s.k = params["k"].get<int>();
  }
  s.column = opt_string(params, "column", where);
  const auto lk = opt_string(params, "left_key", where);
  const auto rk = opt_string(params, "right_key", where);
  if (lk || rk) {
    if (!lk || !rk) throw ConfigError(where + ": join needs both left_key and right_key");
    s.join = dsl::JoinKeys{*lk, *rk};
  }
  if (params.contains("outputs")) {
    const auto& o = params["outputs"];
    if (o.is_object()) {
      for (const auto& [name, desc] : o.items()) {
        if (!desc.is_string()) throw ConfigError(where + ": output descriptions must be strings");
        s.outputs.emplace_back(name, desc.get<std::string>());
      }
    } else {
      for (const auto& name : string_list(params, "outputs", where)) s.outputs.emplace_back(name, "");
    }
  }
  if (params.contains("ranges")) {
    if (!params["ranges"].is_object()) throw ConfigError(where + ": 'ranges' must be a table");
    for (const auto& [p, r] : params["ranges"].items()) {
      if (!r.is_array() || r.size() != 2 || !r[0].is_number() || !r[1].is_number())
        throw ConfigError(where + ": range for '" + p + "' must be [lo, hi]");
      s.ranges[p] = ValueRange{r[0].get<double>(), r[1].get<double>()};
    }
  }
  s.check();
  return s;
}

}  // namespace

std::string_view node_op_name(NodeOp op) {
  for (const auto& [o, n] : kOpNames)
    if (o == op) return n;
  return "?";
}

std::optional<NodeOp> parse_node_op(std::string_view name) {
  for (const auto& [o, n] : kOpNames)
    if (n == name) return o;
  return std::nullopt;
}

PipelineGraph PipelineGraph::from_file(const std::filesystem::path& path) { return build(read_toml(path)); }

PipelineGraph PipelineGraph::build(const json& spec) {
  PipelineGraph g;
  g.document_ = spec;
  if (!spec.is_object()) throw ConfigError("pipeline spec must be a table");
  if (!spec.contains("version")) throw ConfigError("pipeline spec needs a 'version' key");
  if (!spec["version"].is_number_integer() || spec["version"].get<int>() != 1)
    throw ConfigError("unsupported pipeline spec version (expected 1)");

  std::map<std::string, std::string> inputs;
  if (spec.contains("inputs")) {
    if (!spec["inputs"].is_object()) throw ConfigError("[inputs] must be a table of name = description");
    for (const auto& [name, desc] : spec["inputs"].items())
      inputs[name] = desc.is_string() ? desc.get<std::string>() : "";
  }
  if (!spec.contains("nodes") || !spec["nodes"].is_array() || spec["nodes"].empty())
    throw ConfigError("pipeline spec needs at least one [[nodes]] entry");

  if (spec.contains("learner")) {
    const auto& l = spec["learner"];
    if (auto kind = opt_string(l, "kind", "[learner]")) {
      auto k = parse_learner_kind(*kind);
      if (!k) throw ConfigError("[learner]: unknown kind '" + *kind + "'");
      g.learner_kind_ = *k;
    }
    g.hyper_ = read_hyper(l, g.hyper_, "[learner]");
  }
  if (spec.contains("metric")) {
    const auto& m = spec["metric"];
    const std::string name = m.is_string() ? m.get<std::string>() : req_string(m, "name", "[metric]");
    auto metric = parse_metric(name);
    if (!metric) throw ConfigError("unknown metric '" + name + "'");
    g.metric_ = *metric;
  }

  // Declared nodes, plus implicit Input nodes for parents named in [inputs].
  std::vector<std::pair<Node, std::vector<std::string>>> declared;
  std::set<std::string> ids;
  for (const auto& n : spec["nodes"]) {
    if (!n.is_object()) throw ConfigError("every [[nodes]] entry must be a table");
    Node node;
    node.id = req_string(n, "id", "[[nodes]]");
    const std::string where = where_of(node.id);
    if (node.id.empty()) throw ConfigError("node ids must be nonempty");
    if (!ids.insert(node.id).second) throw GraphError("duplicate node id '" + node.id + "'");
    const std::string op = req_string(n, "op", where);
    auto parsed = parse_node_op(op);
    if (!parsed) throw GraphError(where + ": unknown op '" + op + "'");
    node.op = *parsed;
    node.description = opt_string(n, "description", where).value_or("");
    const json params = n.contains("params") ? n["params"] : json::object();
    if (!params.is_object()) throw ConfigError(where + ": 'params' must be a table");
    switch (node.op) {
      case NodeOp::Input:
        node.input_name = opt_string(params, "name", where).value_or(node.id);
        if (!inputs.empty() && !inputs.count(node.input_name))
          throw ConfigError(where + ": input '" + node.input_name + "' is not declared in [inputs]");
        if (node.description.empty() && inputs.count(node.input_name)) node.description = inputs[node.input_name];
        break;
      case NodeOp::MarkX: node.columns = string_list(params, "exclude", where); break;
      case NodeOp::MarkY: node.target = opt_string(params, "column", where).value_or(""); break;
      case NodeOp::Describe:
        if (auto text = opt_string(params, "text", where)) node.description = *text;
        break;
      case NodeOp::Drop:
      case NodeOp::Select:
        node.columns = string_list(params, "columns", where);
        if (node.op == NodeOp::Select && node.columns.empty()) throw ConfigError(where + ": select needs columns");
        break;
      case NodeOp::Join:
        node.join = {req_string(params, "left_key", where), req_string(params, "right_key", where)};
        break;
      case NodeOp::SemOp: node.semop = read_semop(node.id, n, params); break;
      case NodeOp::Vectorize: break;
      case NodeOp::Estimate:
        if (auto kind = opt_string(params, "kind", where)) {
          auto k = parse_learner_kind(*kind);
          if (!k) throw ConfigError(where + ": unknown learner kind '" + *kind + "'");
          node.learner = *k;
        }
        if (params.contains("l2") || params.contains("learning_rate") || params.contains("epochs"))
          node.hyper = read_hyper(params, g.hyper_, where);
        break;
    }
    declared.emplace_back(std::move(node), string_list(n, "parents", where));
  }

  std::vector<std::string> implicit;
  for (const auto& [node, parents] : declared)
    for (const auto& p : parents)
      if (!ids.count(p) && inputs.count(p) && std::find(implicit.begin(), implicit.end(), p) == implicit.end())
        implicit.push_back(p);
  for (const auto& name : implicit) {
    Node in;
    in.id = name;
    in.op = NodeOp::Input;
    in.input_name = name;
    in.description = inputs[name];
    g.nodes_.push_back(std::move(in));
  }
  for (auto& [node, parents] : declared) g.nodes_.push_back(std::move(node));
  for (std::size_t i = 0; i < declared.size(); ++i) {
    Node& node = g.nodes_[implicit.size() + i];
    for (const auto& p : declared[i].second) node.parents.push_back(g.index_of(p));
  }

  // Arity and marker checks.
  std::vector<std::size_t> mark_x, mark_y, vec, est;
  for (std::size_t i = 0; i < g.nodes_.size(); ++i) {
    const Node& n = g.nodes_[i];
    const std::string where = where_of(n.id);
    std::size_t want = 1;
    if (n.op == NodeOp::Input) want = 0;
    if (n.op == NodeOp::Join || (n.op == NodeOp::SemOp && n.semop.kind == OperatorKind::AggFeatures)) want = 2;
    if (n.parents.size() != want)
      throw GraphError(where + ": " + std::string(node_op_name(n.op)) + " takes " + std::to_string(want) +
                       " parent(s), got " + std::to_string(n.parents.size()));
    if (n.op == NodeOp::MarkX) mark_x.push_back(i);
    if (n.op == NodeOp::MarkY) mark_y.push_back(i);
    if (n.op == NodeOp::Vectorize) vec.push_back(i);
    if (n.op == NodeOp::Estimate) {
      est.push_back(i);
      if (n.learner) g.learner_kind_ = *n.learner;
      if (n.hyper) g.hyper_ = *n.hyper;
    }
  }
  if (mark_x.size() != 1) throw GraphError("pipeline needs exactly one mark_x node, found " + std::to_string(mark_x.size()));
  if (mark_y.size() != 1) throw GraphError("pipeline needs exactly one mark_y node, found " + std::to_string(mark_y.size()));
  if (vec.size() > 1) throw GraphError("pipeline has more than one vectorize node");
  if (est.size() > 1) throw GraphError("pipeline has more than one estimate node");
  g.mark_x_ = mark_x[0];
  g.mark_y_ = mark_y[0];
  if (!vec.empty()) g.vectorize_ = vec[0];
  if (!est.empty()) g.estimate_ = est[0];

  // Kahn's algorithm, declaration order breaking ties.
  const std::size_t n = g.nodes_.size();
  g.children_.assign(n, {});
  std::vector<std::size_t> indegree(n, 0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t p : g.nodes_[i].parents) {
      g.children_[p].push_back(i);
      ++indegree[i];
    }
  std::priority_queue<std::size_t, std::vector<std::size_t>, std::greater<>> ready;
  for (std::size_t i = 0; i < n; ++i)
    if (indegree[i] == 0) ready.push(i);
  while (!ready.empty()) {
    const std::size_t i = ready.top();
    ready.pop();
    g.topo_.push_back(i);
    for (std::size_t c : g.children_[i])
      if (--indegree[c] == 0) ready.push(c);
  }
  if (g.topo_.size() != n) throw GraphError("pipeline graph has a cycle");

  g.ancestor_.assign(n, std::vector<bool>(n, false));
  g.upstream_semops_.assign(n, {});
  for (std::size_t i : g.topo_) {
    g.ancestor_[i][i] = true;
    for (std::size_t p : g.nodes_[i].parents)
      for (std::size_t a = 0; a < n; ++a)
        if (g.ancestor_[a][p]) g.ancestor_[a][i] = true;
    for (std::size_t a : g.topo_)
      if (g.ancestor_[a][i] && g.nodes_[a].op == NodeOp::SemOp) g.upstream_semops_[i].push_back(a);
    if (g.nodes_[i].op == NodeOp::SemOp) g.semops_.push_back(i);
  }

  if (g.estimate_) {
    const Node& e = g.nodes_[*g.estimate_];
    if (!g.vectorize_ || e.parents[0] != *g.vectorize_) throw GraphError("the estimate node's parent must be the vectorize node");
  }
  if (g.vectorize_ && !g.is_ancestor(g.mark_x_, *g.vectorize_))
    throw GraphError("the vectorize node must be downstream of mark_x");
  for (std::size_t i : g.semops_) {
    const Node& s = g.nodes_[i];
    if (s.semop.kind != OperatorKind::Augment) continue;
    if (!g.vectorize_ || g.children_[i] != std::vector<std::size_t>{*g.vectorize_})
      throw GraphError(where_of(s.id) + ": augment must feed the vectorize node directly");
    if (!g.is_ancestor(g.mark_x_, i)) throw GraphError(where_of(s.id) + ": augment must be downstream of mark_x");
  }
  if (g.is_ancestor(g.mark_y_, g.mark_x_) || g.is_ancestor(g.mark_x_, g.mark_y_))
    throw GraphError("mark_x and mark_y must be on separate branches");
  return g;
}

std::size_t PipelineGraph::index_of(std::string_view id) const {
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    if (nodes_[i].id == id) return i;
  throw GraphError("unknown node '" + std::string(id) + "'");
}

bool PipelineGraph::is_ancestor(std::size_t a, std::size_t b) const { return ancestor_[a][b]; }

std::vector<std::string> PipelineGraph::input_names() const {
  std::vector<std::string> out;
  for (const auto& n : nodes_)
    if (n.op == NodeOp::Input && std::find(out.begin(), out.end(), n.input_name) == out.end())
      out.push_back(n.input_name);
  return out;
}

Metric PipelineGraph::effective_metric() const {
  if (metric_) return *metric_;
  return learner_kind_ == LearnerKind::Ridge ? Metric::Rmse : Metric::Auroc;
}

// ---------------------------------------------------------------- cache

std::optional<Table> EvalCache::find(const std::string& key) const {
  std::lock_guard lock(mu_);
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  ++hits_;
  return it->second;
}

void EvalCache::store(const std::string& key, const Table& t) {
  std::lock_guard lock(mu_);
  entries_.emplace(key, t);
}

std::size_t EvalCache::hits() const {
  std::lock_guard lock(mu_);
  return hits_;
}

std::size_t EvalCache::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

// ------------------------------------------------------------- executor

Executor::Executor(const PipelineGraph& g, const DataMap& data, const StateMap& states, ExecOptions options)
    : g_(g), data_(data), states_(states), options_(std::move(options)) {}

std::string Executor::cache_key(std::size_t node) const {
  std::string key = g_.node(node).id;
  key += '\x1f';
  key += options_.mode == Mode::Fit ? "fit" : "predict";
  key += '\x1f';
  key += options_.data_tag;
  for (std::size_t s : g_.upstream_semops(node)) {
    key += '\x1f';
    auto it = states_.find(g_.node(s).id);
    key += it == states_.end() ? std::string("-") : sha256_hex(it->second.source_text);
  }
  return key;
}

const Table& Executor::output(std::size_t node) {
  if (auto it = memo_.find(node); it != memo_.end()) return it->second;
  // Augmentation also produces labels, so it is never served from the cache.
  const bool cacheable = options_.cache && !(g_.node(node).op == NodeOp::SemOp &&
                                             g_.node(node).semop.kind == OperatorKind::Augment) &&
                         !(g_.vectorize() && node == *g_.vectorize());
  if (cacheable) {
    if (auto hit = options_.cache->find(cache_key(node))) return memo_.emplace(node, std::move(*hit)).first->second;
  }
  Table t = compute(node);
  if (cacheable) options_.cache->store(cache_key(node), t);
  return memo_.emplace(node, std::move(t)).first->second;
}

const std::string& Executor::target() {
  if (!target_) {
    const Node& y = g_.node(g_.mark_y());
    if (!y.target.empty()) {
      target_ = y.target;
    } else {
      const Table& parent = output(y.parents[0]);
      if (parent.column_count() != 1)
        throw ConfigError("mark_y needs params.column unless its input has exactly one column");
      target_ = parent.column(0).name();
    }
  }
  return *target_;
}

OperatorInput Executor::operator_input(std::size_t node) {
  const Node& n = g_.node(node);
  if (n.op != NodeOp::SemOp) throw GraphError(where_of(n.id) + " is not a semantic operator");
  OperatorInput in{output(n.parents[0]), std::nullopt};
  if (n.semop.kind == OperatorKind::AggFeatures) in.aux = output(n.parents[1]);
  if (n.semop.kind == OperatorKind::Augment && !in.table.has(target()))
    in.table = in.table.with_column(output(g_.mark_y()).column(target()));
  return in;
}

Table Executor::compute(std::size_t node) {
  const Node& n = g_.node(node);
  auto parent = [&](std::size_t i) -> const Table& { return output(n.parents[i]); };
  auto restrict_rows = [&](Table t) {
    if (options_.rows) {
      for (std::size_t r : *options_.rows)
        if (r >= t.row_count()) throw GraphError("row index out of range at " + where_of(n.id));
      t = t.take(*options_.rows);
    }
    return t;
  };
  switch (n.op) {
    case NodeOp::Input: {
      auto it = data_.find(n.input_name);
      if (it == data_.end()) throw ConfigError("input '" + n.input_name + "' is not bound to any data");
      return it->second;
    }
    case NodeOp::MarkX: {
      std::vector<std::string> drop = n.columns;
      drop.push_back(target());
      std::vector<std::string> present;
      for (const auto& c : drop)
        if (parent(0).has(c)) present.push_back(c);
      return restrict_rows(parent(0).without(present));
    }
    case NodeOp::MarkY: {
      const Table& p = parent(0);
      if (!p.has(target())) throw SchemaError("target column '" + target() + "' not found");
      const std::vector<std::string> cols{target()};
      return restrict_rows(p.select(cols));
    }
    case NodeOp::Describe:
    case NodeOp::Vectorize: return parent(0);
    case NodeOp::Drop: {
      std::vector<std::string> present;
      for (const auto& c : n.columns)
        if (parent(0).has(c)) present.push_back(c);
      return parent(0).without(present);
    }
    case NodeOp::Select: {
      for (const auto& c : n.columns)
        if (!parent(0).has(c)) throw SchemaError(where_of(n.id) + ": unknown column '" + c + "'");
      return parent(0).select(n.columns);
    }
    case NodeOp::Join: return left_outer_join(parent(0), n.join.left, parent(1), n.join.right);
    case NodeOp::SemOp: {
      auto it = states_.find(n.id);
      if (it == states_.end()) {
        if (options_.require_states) throw GraphError(where_of(n.id) + " has no operator state");
        return parent(0);
      }
      if (n.semop.kind == OperatorKind::Augment && options_.mode == Mode::Predict) return parent(0);
      OperatorSpec spec = n.semop;
      spec.protected_columns = {target()};
      const OperatorInput in = operator_input(node);
      Table out;
      try {
        out = apply_operator(spec, it->second, in, options_.mode, options_.limits);
      } catch (const LimitExceeded& e) {
        throw LimitExceeded(e.limit() + " in " + where_of(n.id));
      }
      if (spec.kind == OperatorKind::Augment) {
        augmented_y_ = out.column(target());
        if (!parent(0).has(target())) {
          const std::vector<std::string> y{target()};
          out = out.without(y);
        }
      }
      return out;
    }
    case NodeOp::Estimate: throw GraphError("the estimate node has no table output");
  }
  return {};
}

const Table& Executor::features() {
  if (!g_.vectorize()) throw GraphError("pipeline has no vectorize node");
  return output(*g_.vectorize());
}

Column Executor::labels() {
  if (g_.vectorize()) {
    const Node& v = g_.node(*g_.vectorize());
    const Node& p = g_.node(v.parents[0]);
    if (options_.mode == Mode::Fit && p.op == NodeOp::SemOp && p.semop.kind == OperatorKind::Augment &&
        states_.count(p.id)) {
      output(v.parents[0]);
      if (augmented_y_) return *augmented_y_;
    }
  }
  return output(g_.mark_y()).column(target());
}

// --------------------------------------------------------------- fitting

Hyperparameters effective_hyperparameters(const PipelineGraph& g, const StateMap& states) {
  Hyperparameters h = g.hyperparameters();
  for (std::size_t i : g.semop_order()) {
    const Node& n = g.node(i);
    if (n.semop.kind != OperatorKind::Choose) continue;
    auto it = states.find(n.id);
    if (it == states.end()) continue;
    for (const auto& [param, value] : chosen_values(it->second)) {
      if (param == "l2") h.l2 = std::max(0.0, value);
      else if (param == "learning_rate" && value > 0) h.learning_rate = value;
      else if (param == "epochs") h.epochs = std::max(1, static_cast<int>(std::lround(value)));
    }
  }
  return h;
}

namespace {

std::map<std::string, dsl::Schema> input_schemas(const PipelineGraph& g, const DataMap& data,
                                                 const std::string& target) {
  std::map<std::string, dsl::Schema> out;
  for (const auto& name : g.input_names()) {
    auto it = data.find(name);
    if (it == data.end()) continue;
    auto schema = it->second.schema();
    schema.erase(target);
    out[name] = std::move(schema);
  }
  return out;
}

void check_bound(const PipelineGraph& g, const DataMap& data) {
  for (const auto& name : g.input_names())
    if (!data.count(name)) throw ConfigError("input '" + name + "' is not bound to any data");
}

}  // namespace

FittedPipeline fit_with_states(const PipelineGraph& g, const DataMap& data, const StateMap& states,
                               const FitConfig& cfg, const PinnedFitOptions& options) {
  check_bound(g, data);
  ExecOptions eo;
  eo.mode = Mode::Fit;
  eo.rows = options.rows;
  eo.limits = cfg.limits;
  eo.cache = options.cache;
  eo.data_tag = options.data_tag;
  Executor ex(g, data, states, eo);

  FittedPipeline fp;
  fp.graph = g;
  fp.states = states;
  fp.target = ex.target();
  fp.input_schemas = input_schemas(g, data, fp.target);
  fp.x_schema = ex.output(g.mark_x()).schema();
  // Operators off the learner's path still run so their states are exercised.
  for (std::size_t i : g.semop_order()) ex.output(i);
  if (!g.estimate()) return fp;

  const Table& X = ex.features();
  const Column y = ex.labels();
  if (X.row_count() != y.size())
    throw FitError("feature rows (" + std::to_string(X.row_count()) + ") and labels (" + std::to_string(y.size()) +
                   ") differ");
  fp.vectorizer = vectorize_fit(X);
  const Eigen::MatrixXd M = vectorize_transform(*fp.vectorizer, X);
  const LearnerKind kind = g.learner_kind();
  Eigen::VectorXd targets;
  if (kind == LearnerKind::Logistic) {
    fp.labels = options.labels ? *options.labels : fit_labels(y);
    targets = encode_labels(*fp.labels, y);
  } else {
    if (y.kind() != Kind::Numeric || y.missing_count() > 0) throw FitError("ridge needs a complete numeric target");
    targets = numeric_targets(y);
  }
  fp.learner = learner_fit(kind, M, targets, effective_hyperparameters(g, states), derive_seed(cfg.seed, seed_tag("learner")));
  if (!fp.learner->weights.allFinite() || !std::isfinite(fp.learner->bias))
    throw FitError("learner diverged (non-finite weights)");
  return fp;
}

FittedPipeline fit(const PipelineGraph& g, const DataMap& data, Synthesizer& synth, const FitConfig& cfg) {
  check_bound(g, data);
  StateMap states;
  std::map<std::string, SynthesisRecord> records;
  for (std::size_t j : g.semop_order()) {
    const Node& n = g.node(j);
    ExecOptions eo;
    eo.limits = cfg.limits;
    Executor ex(g, data, states, eo);
    const OperatorInput input = ex.operator_input(j);
    OperatorSpec spec = n.semop;
    spec.protected_columns = {ex.target()};
    SearchExtras extras;
    extras.temperature = cfg.temperature;
    const auto request =
        assemble_request(spec, infer_context(g, ex.target()), input, derive_seed(cfg.seed, seed_tag(n.id)), extras);
    auto outcome = synthesize_with_retry(spec, request, synth, input, cfg.max_retries, cfg.limits);
    records[n.id] = SynthesisRecord{outcome.report.attempts_used, sha256_hex(outcome.program.source_text),
                                    outcome.program.commentary, outcome.feedback};
    states[n.id] = std::move(outcome.program);
  }
  FittedPipeline fp = fit_with_states(g, data, states, cfg);
  fp.synthesis = std::move(records);
  return fp;
}

Eigen::VectorXd predict_scores(const FittedPipeline& fp, const DataMap& data,
                               const std::optional<std::vector<std::size_t>>& rows, const dsl::EvalLimits& limits,
                               EvalCache* cache, const std::string& data_tag) {
  if (!fp.learner || !fp.vectorizer) throw FitError("pipeline has no trained learner");
  const PipelineGraph& g = fp.graph;
  std::vector<std::string> missing;
  for (const auto& [name, schema] : fp.input_schemas) {
    auto it = data.find(name);
    if (it == data.end()) throw ConfigError("input '" + name + "' is not bound to any data");
    for (const auto& [col, kind] : schema)
      if (!it->second.has(col)) missing.push_back(name + "." + col);
  }
  if (!missing.empty()) throw SchemaDriftError(missing);

  ExecOptions eo;
  eo.mode = Mode::Predict;
  eo.rows = rows;
  eo.limits = limits;
  eo.cache = cache;
  eo.data_tag = data_tag;
  Executor ex(g, data, fp.states, eo);
  // The y marker may be absent at inference time; the target name is known.
  ex.target();
  const Table& X = ex.features();
  return learner_predict(*fp.learner, vectorize_transform(*fp.vectorizer, X));
}

Column predict(const FittedPipeline& fp, const DataMap& data, const dsl::EvalLimits& limits) {
  const Eigen::VectorXd scores = predict_scores(fp, data, std::nullopt, limits);
  std::vector<Cell> cells;
  cells.reserve(static_cast<std::size_t>(scores.size()));
  Kind kind = Kind::Numeric;
  if (fp.labels) {
    kind = fp.labels->kind;
    for (Eigen::Index i = 0; i < scores.size(); ++i) cells.push_back(decode_label(*fp.labels, scores[i]));
  } else {
    for (Eigen::Index i = 0; i < scores.size(); ++i) cells.emplace_back(scores[i]);
  }
  return Column("prediction", kind, std::move(cells));
}

OperatorInput partial_eval(const PipelineGraph& g, const DataMap& data, std::string_view upto, const StateMap& states,
                           EvalCache* cache) {
  const std::size_t j = g.index_of(upto);
  if (g.node(j).op != NodeOp::SemOp) throw GraphError("partial evaluation must stop at a semantic operator");
  for (std::size_t s : g.upstream_semops(j))
    if (s != j && !states.count(g.node(s).id))
      throw GraphError("node '" + g.node(s).id + "' upstream of '" + std::string(upto) + "' has no operator state");
  ExecOptions eo;
  eo.cache = cache;
  eo.data_tag = "full";
  eo.require_states = true;
  Executor ex(g, data, states, eo);
  return ex.operator_input(j);
}

PipelineContext infer_context(const PipelineGraph& g, const std::string& target) {
  PipelineContext ctx;
  if (g.estimate()) {
    ctx.task = g.learner_kind() == LearnerKind::Logistic ? Task::Classification : Task::Regression;
    ctx.model_kind = std::string(learner_kind_name(g.learner_kind()));
  }
  ctx.target_column = target.empty() ? g.node(g.mark_y()).target : target;
  auto gather = [&](std::size_t marker) -> std::optional<std::string> {
    std::string out;
    for (std::size_t i : g.topo_order()) {
      const Node& n = g.node(i);
      if (!g.is_ancestor(i, marker) || n.description.empty()) continue;
      if (!out.empty()) out += "; ";
      out += n.description;
    }
    if (out.empty()) return std::nullopt;
    return out;
  };
  ctx.target_description = gather(g.mark_y());
  ctx.x_description = gather(g.mark_x());
  for (std::size_t i : g.topo_order()) {
    const Node& n = g.node(i);
    ctx.graph_summary.push_back(n.op == NodeOp::SemOp ? std::string(operator_kind_name(n.semop.kind))
                                                      : std::string(node_op_name(n.op)));
  }
  return ctx;
}

}  // namespace sempipes
