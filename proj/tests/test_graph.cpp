#include <doctest.h>

#include "fixtures.hpp"
#include "sempipes/errors.hpp"

using namespace sempipes;
using fixtures::graph_of;

namespace {

const char* kLinear = R"(
version = 1
[[nodes]]
id = "data"
op = "input"
[[nodes]]
id = "x"
op = "mark_x"
parents = ["data"]
[[nodes]]
id = "y"
op = "mark_y"
parents = ["data"]
params = { column = "t" }
[[nodes]]
id = "vec"
op = "vectorize"
parents = ["x"]
[[nodes]]
id = "model"
op = "estimate"
parents = ["vec"]
params = { kind = "ridge", l2 = 0.0 }
)";

std::string two_semops_spec() {
  return std::string(fixtures::kFraudSpec) + R"(
[[nodes]]
id = "tidy"
op = "semop"
parents = ["basket_features"]
params = { kind = "fillna", column = "noise" }
)";
}

class RecordingSynthesizer : public Synthesizer {
 public:
  SynthesisResult synthesize(const SynthesisRequest& r) override {
    requests.push_back(r);
    return mock.synthesize(r);
  }
  std::vector<SynthesisRequest> requests;
  MockSynthesizer mock;
};

Table linear_data(std::size_t n) {
  std::vector<std::optional<double>> a, t;
  for (std::size_t i = 0; i < n; ++i) {
    a.push_back(static_cast<double>(i));
    t.push_back(3.0 * static_cast<double>(i) + 1.0);
  }
  return Table({Column::numeric("a", a), Column::numeric("t", t)});
}

}  // namespace

TEST_CASE("build: linear pipeline") {
  const auto g = graph_of(kLinear);
  CHECK(g.nodes().size() == 5);
  CHECK(g.topo_order() == std::vector<std::size_t>{0, 1, 2, 3, 4});
  CHECK(g.semop_order().empty());
  CHECK(g.learner_kind() == LearnerKind::Ridge);
  CHECK(g.effective_metric() == Metric::Rmse);
}

TEST_CASE("build: fraud pipeline with implicit inputs") {
  const auto g = graph_of(fixtures::kFraudSpec);
  CHECK(g.nodes().size() == 7);
  CHECK(g.input_names() == std::vector<std::string>{"baskets", "products"});
  REQUIRE(g.semop_order().size() == 1);
  const Node& agg = g.node(g.semop_order()[0]);
  CHECK(agg.semop.kind == OperatorKind::AggFeatures);
  CHECK(agg.parents.size() == 2);
  CHECK(g.node(agg.parents[1]).op == NodeOp::Input);
}

TEST_CASE("build: structural errors") {
  std::string two_x = std::string(kLinear) + "[[nodes]]\nid = \"x2\"\nop = \"mark_x\"\nparents = [\"data\"]\n";
  CHECK_THROWS_AS(graph_of(two_x), GraphError);
  std::string unknown = std::string(kLinear) + "[[nodes]]\nid = \"u\"\nop = \"teleport\"\nparents = [\"data\"]\n";
  CHECK_THROWS_AS(graph_of(unknown), GraphError);
  CHECK_THROWS_AS(graph_of("[[nodes]]\nid = \"a\"\nop = \"input\"\n"), ConfigError);
  const char* cycle = R"(
version = 1
[[nodes]]
id = "data"
op = "input"
[[nodes]]
id = "y"
op = "mark_y"
parents = ["data"]
[[nodes]]
id = "a"
op = "describe"
parents = ["b"]
[[nodes]]
id = "b"
op = "describe"
parents = ["a"]
[[nodes]]
id = "x"
op = "mark_x"
parents = ["a"]
)";
  CHECK_THROWS_AS(graph_of(cycle), GraphError);
  std::string bad_arity = std::string(kLinear) + "[[nodes]]\nid = \"j\"\nop = \"join\"\nparents = [\"data\"]\n"
                                                 "params = { left_key = \"a\", right_key = \"a\" }\n";
  CHECK_THROWS_AS(graph_of(bad_arity), GraphError);
  std::string missing_col = std::string(kLinear) + "[[nodes]]\nid = \"f\"\nop = \"semop\"\nparents = [\"data\"]\n"
                                                   "params = { kind = \"fillna\" }\n";
  CHECK_THROWS_AS(graph_of(missing_col), ConfigError);
}

TEST_CASE("fit: no semantic operators never calls the synthesizer") {
  const auto g = graph_of(kLinear);
  UnavailableSynthesizer none;
  const DataMap data{{"data", linear_data(30)}};
  const auto fp = fit(g, data, none);
  const Column pred = predict(fp, data);
  REQUIRE(pred.size() == 30);
  for (std::size_t i = 0; i < 30; ++i) CHECK(pred.number(i) == doctest::Approx(3.0 * i + 1.0).epsilon(1e-6));
}

TEST_CASE("fit: one call per operator, none at predict, independent of size") {
  for (std::size_t n : {100u, 10000u}) {
    const auto d = fixtures::fraud_data(n, 11);
    const auto g = graph_of(two_semops_spec());
    MockSynthesizer mock;
    CountingSynthesizer counting(mock);
    const auto fp = fit(g, fixtures::fraud_map(d), counting);
    CHECK(counting.calls() == 2);
    counting.reset();
    const Column pred = predict(fp, fixtures::fraud_map(d));
    CHECK(pred.size() == n);
    CHECK(counting.calls() == 0);
  }
}

TEST_CASE("fit/predict end to end, deterministic, held-out rows") {
  const auto d = fixtures::fraud_data(200, 3);
  const auto g = graph_of(fixtures::kFraudSpec);
  std::vector<std::size_t> train, test;
  for (std::size_t i = 0; i < 200; ++i) (i % 4 == 0 ? test : train).push_back(i);
  const DataMap train_data{{"baskets", d.baskets.take(train)}, {"products", d.products}};
  const DataMap test_data{{"baskets", d.baskets.take(test)}, {"products", d.products}};
  MockSynthesizer mock;
  const auto fp = fit(g, train_data, mock, FitConfig{.seed = 7});
  const auto again = fit(g, train_data, mock, FitConfig{.seed = 7});
  CHECK(fp.states.at("basket_features").source_text == again.states.at("basket_features").source_text);
  CHECK(fp.learner->weights == again.learner->weights);
  CHECK(fp.synthesis.at("basket_features").attempts == 1);

  // Labels are not needed at prediction time.
  const std::vector<std::string> label{"label"};
  const DataMap unlabeled{{"baskets", test_data.at("baskets").without(label)}, {"products", d.products}};
  const Column pred = predict(fp, unlabeled);
  REQUIRE(pred.size() == test.size());
  std::size_t correct = 0;
  for (std::size_t i = 0; i < test.size(); ++i)
    correct += pred[i] == test_data.at("baskets").column("label")[i] ? 1 : 0;
  // The first mock plan aggregates counts and quantities only, which
  // correlate with the label without determining it.
  CHECK(static_cast<double>(correct) / test.size() > 0.65);
}

TEST_CASE("predict: schema drift lists missing columns") {
  const auto d = fixtures::fraud_data(60, 4);
  const auto g = graph_of(fixtures::kFraudSpec);
  MockSynthesizer mock;
  const auto fp = fit(g, fixtures::fraud_map(d), mock);
  const std::vector<std::string> gone{"value"};
  try {
    predict(fp, {{"baskets", d.baskets}, {"products", d.products.without(gone)}});
    FAIL("expected drift");
  } catch (const SchemaDriftError& e) {
    CHECK(e.missing_columns() == std::vector<std::string>{"products.value"});
  }
}

TEST_CASE("partial_eval: marker table, join rows, cache, and equality with fit inputs") {
  const auto d = fixtures::fraud_data(80, 5);
  const auto data = fixtures::fraud_map(d);
  const auto g = graph_of(two_semops_spec());
  const auto first = partial_eval(g, data, "basket_features", {});
  const std::vector<std::string> label{"label"};
  CHECK(first.table == d.baskets.without(label));
  CHECK(*first.aux == d.products);

  RecordingSynthesizer rec;
  const auto fp = fit(g, data, rec, FitConfig{.seed = 2});
  REQUIRE(rec.requests.size() == 2);
  CHECK_THROWS_AS(partial_eval(g, data, "tidy", {}), GraphError);
  EvalCache cache;
  const auto second = partial_eval(g, data, "tidy", fp.states, &cache);
  const auto cached = partial_eval(g, data, "tidy", fp.states, &cache);
  CHECK(cache.hits() > 0);
  CHECK(second.table == cached.table);
  CHECK(second.table.row_count() == d.baskets.row_count());
  const auto replay = assemble_request(g.node(g.index_of("tidy")).semop, infer_context(g, "label"), second,
                                       derive_seed(2, seed_tag("tidy")));
  CHECK(replay.to_json()["tables"] == rec.requests[1].to_json()["tables"]);
}

TEST_CASE("infer_context") {
  const auto g = graph_of(fixtures::kFraudSpec);
  const auto ctx = infer_context(g);
  CHECK(ctx.task == Task::Classification);
  CHECK(ctx.model_kind == "logistic");
  CHECK(ctx.target_column == "label");
  REQUIRE(ctx.target_description);
  CHECK(ctx.target_description->find("fraud flag") != std::string::npos);
  CHECK(ctx.x_description->find("shopping basket") != std::string::npos);
  CHECK(infer_context(graph_of(kLinear)).task == Task::Regression);

  const char* no_learner = R"(
version = 1
[[nodes]]
id = "data"
op = "input"
[[nodes]]
id = "x"
op = "mark_x"
parents = ["data"]
[[nodes]]
id = "y"
op = "mark_y"
parents = ["data"]
params = { column = "t" }
[[nodes]]
id = "hp"
op = "semop"
parents = ["x"]
params = { kind = "choose", ranges = { l2 = [0.0, 1.0] } }
)";
  const auto g2 = graph_of(no_learner);
  CHECK(infer_context(g2).task == Task::Unknown);
  MockSynthesizer mock;
  const auto fp = fit(g2, {{"data", linear_data(10)}}, mock);
  CHECK(fp.states.count("hp") == 1);
  CHECK_FALSE(fp.learner.has_value());
}

TEST_CASE("choose states override learner hyperparameters") {
  const std::string spec = std::string(kLinear) +
                           "[[nodes]]\nid = \"hp\"\nop = \"semop\"\nparents = [\"x\"]\n"
                           "params = { kind = \"choose\", ranges = { l2 = [2.0, 4.0] } }\n";
  const auto g = graph_of(spec);
  MockSynthesizer mock;
  const auto fp = fit(g, {{"data", linear_data(20)}}, mock);
  CHECK(fp.learner->hyper.l2 == doctest::Approx(3.0));
}

TEST_CASE("augment acts at fit time only") {
  const std::string spec = std::string(fixtures::kFraudSpec).replace(
      std::string(fixtures::kFraudSpec).find("parents = [\"basket_features\"]"),
      std::string("parents = [\"basket_features\"]").size(), "parents = [\"more\"]") +
      "[[nodes]]\nid = \"more\"\nop = \"semop\"\nparents = [\"basket_features\"]\n"
      "params = { kind = \"augment\", k = 25 }\n";
  const auto g = graph_of(spec);
  const auto d = fixtures::fraud_data(100, 6);
  MockSynthesizer mock;
  const auto fp = fit(g, fixtures::fraud_map(d), mock);
  const DataMap data = fixtures::fraud_map(d);
  Executor ex(g, data, fp.states, ExecOptions{});
  CHECK(ex.features().row_count() == 125);
  CHECK(ex.labels().size() == 125);
  CHECK_FALSE(ex.features().has("label"));
  CHECK(predict(fp, fixtures::fraud_map(d)).size() == 100);
}

TEST_CASE("inactive operators leave learner behaviour unchanged") {
  const auto d = fixtures::fraud_data(90, 8);
  const auto with_op = graph_of(fixtures::kFraudSpec);
  std::string plain = fixtures::kFraudSpec;
  plain.replace(plain.find("parents = [\"basket_features\"]"), std::string("parents = [\"basket_features\"]").size(),
                "parents = [\"x\"]");
  const auto without = graph_of(plain);
  const auto a = fit_with_states(with_op, fixtures::fraud_map(d), {});
  const auto b = fit_with_states(without, fixtures::fraud_map(d), {});
  CHECK(a.learner->weights == b.learner->weights);
  CHECK(a.learner->bias == b.learner->bias);
}

TEST_CASE("unbound inputs are reported by name") {
  const auto g = graph_of(fixtures::kFraudSpec);
  MockSynthesizer mock;
  try {
    fit(g, {{"baskets", fixtures::fraud_data(10, 1).baskets}}, mock);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("products") != std::string::npos);
  }
}
