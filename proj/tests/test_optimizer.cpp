#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "uct_oracle.hpp"
#include "sempipes/errors.hpp"
#include "sempipes/optimizer.hpp"

using namespace sempipes;

namespace {

class RecordingSynthesizer : public Synthesizer {
 public:
  SynthesisResult synthesize(const SynthesisRequest& r) override {
    requests.push_back(r);
    return mock.synthesize(r);
  }
  std::vector<SynthesisRequest> requests;
  MockSynthesizer mock;
};

// Fraud pipeline with a second operator between the aggregation and the
// vectorizer.
std::string chained_spec() {
  std::string s = fixtures::kFraudSpec;
  const std::string from = "id = \"vec\"\nop = \"vectorize\"\nparents = [\"basket_features\"]";
  const auto at = s.find(from);
  REQUIRE(at != std::string::npos);
  s.replace(at, from.size(), "id = \"vec\"\nop = \"vectorize\"\nparents = [\"derive\"]");
  s += R"(
[[nodes]]
id = "derive"
op = "semop"
parents = ["basket_features"]
nl_prompt = "Derive ratio features."
params = { kind = "gen_features", k = 2 }
)";
  return s;
}

StepClock logical_clock() {
  return [n = 0.0]() mutable { return n++; };
}

PolicyConfig small(Policy p, int budget, std::uint64_t seed = 11) {
  PolicyConfig cfg;
  cfg.policy = p;
  cfg.budget = budget;
  cfg.seed = seed;
  cfg.folds = 3;
  return cfg;
}

}  // namespace

TEST_CASE("uct_score against hand values") {
  // Two sibling leaves under a parent with N = 2 visits.
  CHECK(uct_score(0.9, 1, 2, 0.5) == doctest::Approx(1.3163).epsilon(1e-4));
  CHECK(uct_score(0.4, 1, 2, 0.5) == doctest::Approx(0.8163).epsilon(1e-4));
  CHECK(uct_score(2.0, 4, 4, 0.5) == doctest::Approx(0.5 + 0.5 * std::sqrt(std::log(4.0) / 4.0)));
  // A root with a single visit has no exploration term.
  CHECK(uct_score(1.0, 1, 1, 0.5) == doctest::Approx(1.0));
}

TEST_CASE("backpropagated statistics match a recount") {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const SearchTree t = oracle::random_tree(rng, 2 + static_cast<int>(rng.below(40)));
    const oracle::UctOracle o(t);
    for (const auto& n : t.nodes()) {
      const auto i = static_cast<std::size_t>(n.id);
      REQUIRE(n.visits == o.visits[i]);
      REQUIRE(t.reward(n.id) == doctest::Approx(o.reward[i]).epsilon(1e-9));
      REQUIRE(n.children == o.kids[i]);
    }
  }
}

TEST_CASE("select_mcts agrees with an exhaustive oracle on random trees") {
  Rng rng(17);
  PolicyConfig cfg;
  int expanded_inner = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const SearchTree t = oracle::random_tree(rng, 1 + static_cast<int>(rng.below(30)));
    const oracle::UctOracle o(t);
    const int got = select_mcts(t, cfg);
    REQUIRE(got == o.select(t, cfg.c, cfg.root_expansion, cfg.inner_expansion));
    if (got != 0) ++expanded_inner;
  }
  // The sample must exercise descents past the root.
  CHECK(expanded_inner > 100);
}

TEST_CASE("select_mcts: expansion thresholds and failed children") {
  PolicyConfig cfg;
  SearchTree t;
  SearchNode root;
  root.utility = 0.5;
  t.add(root);
  for (int i = 0; i < 2; ++i) {
    SearchNode c;
    c.parent = 0;
    c.utility = 0.6 + 0.1 * i;
    t.add(c);
  }
  CHECK(select_mcts(t, cfg) == 0);  // root needs 3 children
  SearchNode bad;
  bad.parent = 0;
  bad.failed = true;
  t.add(bad);
  CHECK(select_mcts(t, cfg) != 0);
  CHECK(select_mcts(t, cfg) != 3);
  // A node whose children all failed is expanded again.
  SearchTree u;
  u.add(root);
  for (int i = 0; i < 3; ++i) u.add(bad);
  CHECK(select_mcts(u, cfg) == 0);
}

TEST_CASE("truncation sampling matches its weights") {
  const std::vector<double> w = {0.0, 0.1, 0.3, 0.6, 1.0, 0.5};
  const double total = 2.5;
  Rng rng(5);
  std::vector<double> counts(w.size(), 0.0);
  const int draws = 200000;
  for (int i = 0; i < draws; ++i) counts[sample_truncation(w, rng)] += 1.0;
  double tv = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) tv += std::abs(counts[i] / draws - w[i] / total);
  CHECK(tv / 2.0 < 0.01);
  CHECK(counts[0] == 0.0);

  const std::vector<double> zeros(4, 0.0);
  std::vector<double> uni(4, 0.0);
  for (int i = 0; i < 40000; ++i) uni[sample_truncation(zeros, rng)] += 1.0;
  for (double c : uni) CHECK(c / 40000.0 == doctest::Approx(0.25).epsilon(0.05));
}

TEST_CASE("select_truncation draws only from the top k") {
  SearchTree t;
  for (int i = 0; i < 12; ++i) {
    SearchNode n;
    if (i > 0) n.parent = 0;
    n.utility = static_cast<double>(i);
    t.add(n);
  }
  PolicyConfig cfg;
  Rng rng(1);
  std::map<int, int> seen;
  for (int i = 0; i < 5000; ++i) ++seen[select_truncation(t, cfg, rng)];
  for (const auto& [id, count] : seen) CHECK(id >= 6);
  CHECK(seen.size() == 6);
  CHECK(best_node(t) == 11);
}

TEST_CASE("fold assignment is balanced and stratified") {
  std::vector<std::optional<bool>> labels;
  for (int i = 0; i < 103; ++i) labels.push_back(i % 3 == 0);
  const Column y = Column::booleans("y", labels);
  const auto folds = assign_folds(y, true, 5, 42);
  std::map<int, int> size, pos;
  for (std::size_t i = 0; i < folds.size(); ++i) {
    ++size[folds[i]];
    if (*labels[i]) ++pos[folds[i]];
  }
  for (const auto& [f, n] : size) CHECK(std::abs(n - 103 / 5) <= 1);
  for (const auto& [f, n] : pos) CHECK(std::abs(n - 35 / 5) <= 1);
  CHECK(folds == assign_folds(y, true, 5, 42));
  CHECK(folds != assign_folds(y, true, 5, 43));
}

TEST_CASE("budget of one evaluates the initial pipeline only") {
  const auto d = fixtures::fraud_data(200, 1);
  const auto data = fixtures::fraud_map(d);
  const auto g = fixtures::graph_of(fixtures::kFraudSpec);
  MockSynthesizer mock;
  CountingSynthesizer counting(mock);
  Optimizer opt(g, data, counting, small(Policy::Mcts, 1));
  const auto r = opt.run();
  CHECK(counting.calls() == 0);
  CHECK(r.log.size() == 1);
  CHECK(r.best_id == 0);
  CHECK(r.best_states.empty());
  CHECK(r.log[0]["parent_id"].is_null());
}

TEST_CASE("search improves on the initial pipeline and logs a monotone best") {
  const auto d = fixtures::fraud_data(300, 2);
  const auto data = fixtures::fraud_map(d);
  const auto g = fixtures::graph_of(fixtures::kFraudSpec);
  for (Policy p : {Policy::Mcts, Policy::Truncation, Policy::Greedy, Policy::Random}) {
    CAPTURE(policy_name(p));
    MockSynthesizer mock;
    Optimizer opt(g, data, mock, small(p, 6));
    const auto r = opt.run();
    REQUIRE(r.log.size() == 6);
    double best = -INFINITY;
    for (std::size_t i = 0; i < r.log.size(); ++i) {
      CHECK(r.log[i]["step"] == i);
      CHECK(r.log[i]["node_id"] == i);
      if (!r.log[i]["utility"].is_null()) best = std::max(best, r.log[i]["utility"].get<double>());
      CHECK(r.log[i]["best_so_far"].get<double>() == best);
    }
    CHECK(r.best_utility == best);
    CHECK(r.best_utility > r.tree.node(0).utility.value() + 0.2);
  }
}

TEST_CASE("greedy spends its drafts on the root, then exploits the best node") {
  const auto d = fixtures::fraud_data(200, 4);
  const auto data = fixtures::fraud_map(d);
  const auto g = fixtures::graph_of(fixtures::kFraudSpec);
  RecordingSynthesizer rec;
  Optimizer opt(g, data, rec, small(Policy::Greedy, 7));
  const auto r = opt.run();
  CHECK(r.log[1]["parent_id"] == 0);
  CHECK(r.log[2]["parent_id"] == 0);
  for (std::size_t s = 3; s < r.log.size(); ++s) {
    int best = 0;
    for (std::size_t i = 1; i < s; ++i)
      if (!r.log[i]["utility"].is_null() &&
          r.log[i]["utility"].get<double>() > r.log[static_cast<std::size_t>(best)]["utility"].get<double>())
        best = static_cast<int>(i);
    CHECK(r.log[s]["parent_id"] == best);
  }
  // One request per step; inspirations are the top states seen so far.
  REQUIRE(rec.requests.size() == 6);
  for (std::size_t s = 1; s <= 6; ++s) CHECK(rec.requests[s - 1].inspirations.size() == std::min<std::size_t>(3, s - 1));
}

TEST_CASE("random search only ever reads the root") {
  const auto d = fixtures::fraud_data(150, 5);
  const auto data = fixtures::fraud_map(d);
  const auto g = fixtures::graph_of(fixtures::kFraudSpec);
  MockSynthesizer mock;
  Optimizer opt(g, data, mock, small(Policy::Random, 5));
  const auto r = opt.run();
  for (const auto& rec : r.log)
    if (rec["step"] != 0) CHECK(rec["parent_id"] == 0);
  opt.tree().set_tracing(true);
  opt.tree().clear_trace();
  const auto sel = opt.select();
  CHECK(sel.node == 0);
  CHECK_FALSE(sel.inspire);
  for (int id : opt.tree().accessed()) CHECK(id == 0);

  // MCTS, by contrast, inspects the root's children.
  Optimizer mcts(g, data, mock, small(Policy::Mcts, 5));
  mcts.run();
  mcts.tree().set_tracing(true);
  mcts.select();
  CHECK(mcts.tree().accessed().size() > 1);
}

TEST_CASE("search is deterministic under a fixed seed and logical clock") {
  const auto d = fixtures::fraud_data(200, 6);
  const auto data = fixtures::fraud_map(d);
  const auto g = fixtures::graph_of(fixtures::kFraudSpec);
  auto run_once = [&](std::uint64_t seed) {
    MockSynthesizer mock;
    Optimizer opt(g, data, mock, small(Policy::Truncation, 6, seed));
    opt.set_clock(logical_clock());
    std::string out;
    for (const auto& rec : opt.run().log) out += rec.dump() + "\n";
    return out;
  };
  const std::string a = run_once(21);
  CHECK(a == run_once(21));
  CHECK(a.find("\"wall_time_ms\":1") != std::string::npos);
}

TEST_CASE("evolution feeds downstream operators the upstream candidate") {
  const auto d = fixtures::fraud_data(150, 7);
  const auto data = fixtures::fraud_map(d);
  const auto g = fixtures::graph_of(chained_spec());
  RecordingSynthesizer rec;
  Optimizer opt(g, data, rec, small(Policy::Mcts, 6));
  std::map<int, Table> derive_inputs;
  opt.on_operator_input([&](int step, const std::string& op, const OperatorInput& in) {
    if (op == "derive") derive_inputs.emplace(step, in.table);
  });
  const auto r = opt.run();
  REQUIRE(derive_inputs.size() == 5);
  for (const auto& [step, table] : derive_inputs) {
    const SearchNode& n = r.tree.node(step);
    REQUIRE(n.states.count("basket_features"));
    const StateMap upstream = {{"basket_features", n.states.at("basket_features")}};
    const Table expected = partial_eval(g, data, "derive", upstream).table;
    CHECK(table == expected);
    // The aggregation adds columns, so the input differs from the raw marker.
    CHECK(table.column_count() > d.baskets.column_count() - 1);
  }

  // Two requests per step; utility history and memories follow the path.
  REQUIRE(rec.requests.size() == 10);
  for (int step = 1; step < 6; ++step) {
    const auto parent = *r.tree.node(step).parent;
    const auto path = r.tree.path_to(parent);
    for (int k = 0; k < 2; ++k) {
      const auto& req = rec.requests[static_cast<std::size_t>(2 * (step - 1) + k)];
      CHECK(req.utility_history.size() == path.size());
      CHECK(req.memories.size() == path.size() - 1);
      CHECK(req.temperature == 2.0);
      CHECK(req.inspirations.empty());
    }
  }
}

TEST_CASE("synthesis failures mark the node failed and the search continues") {
  const auto d = fixtures::fraud_data(120, 8);
  const auto data = fixtures::fraud_map(d);
  const auto g = fixtures::graph_of(fixtures::kFraudSpec);
  MockSynthesizer always_bad(MockOptions{.fail_first = 100});
  auto cfg = small(Policy::Mcts, 4);
  cfg.max_retries = 1;
  Optimizer opt(g, data, always_bad, cfg);
  const auto r = opt.run();
  REQUIRE(r.log.size() == 4);
  for (std::size_t i = 1; i < 4; ++i) {
    CHECK(r.log[i]["failed"] == true);
    CHECK(r.log[i]["utility"].is_null());
    CHECK(r.log[i]["operators"]["basket_features"]["attempts"] == 2);
  }
  CHECK(r.best_id == 0);
}

TEST_CASE("invalid search settings are rejected") {
  const auto d = fixtures::fraud_data(50, 9);
  const auto data = fixtures::fraud_map(d);
  const auto g = fixtures::graph_of(fixtures::kFraudSpec);
  MockSynthesizer mock;
  auto cfg = small(Policy::Mcts, 0);
  CHECK_THROWS_AS(Optimizer(g, data, mock, cfg), ConfigError);
  cfg.budget = 3;
  cfg.folds = 1;
  CHECK_THROWS_AS(Optimizer(g, data, mock, cfg), ConfigError);
  CHECK(parse_policy("truncation") == Policy::Truncation);
  CHECK_FALSE(parse_policy("beam"));
}
