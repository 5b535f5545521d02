#include <doctest.h>

#include <filesystem>

#include "fixtures.hpp"
#include "sempipes/archive.hpp"
#include "sempipes/errors.hpp"

using namespace sempipes;

namespace {

FittedPipeline fitted_fraud(const DataMap& data) {
  MockSynthesizer mock;
  return fit(fixtures::graph_of(fixtures::kFraudSpec), data, mock, FitConfig{.seed = 3});
}

}  // namespace

TEST_CASE("archive round trip reproduces predictions exactly") {
  const auto d = fixtures::fraud_data(200, 1);
  const auto data = fixtures::fraud_map(d);
  const FittedPipeline fp = fitted_fraud(data);
  const auto path = std::filesystem::temp_directory_path() / "sempipes_archive_test.json";
  save_archive(fp, path);
  const FittedPipeline back = load_archive(path);
  std::filesystem::remove(path);

  CHECK(back.states.size() == fp.states.size());
  CHECK(back.states.at("basket_features").source_text == fp.states.at("basket_features").source_text);
  CHECK(back.learner->weights == fp.learner->weights);
  CHECK(archive_to_json(back) == archive_to_json(fp));

  const auto fresh = fixtures::fraud_data(80, 2);
  const auto fresh_map = fixtures::fraud_map(fresh);
  CHECK(predict_scores(back, fresh_map) == predict_scores(fp, fresh_map));
  CHECK(predict(back, fresh_map) == predict(fp, fresh_map));
}

TEST_CASE("archive rejects tampering and malformed documents") {
  const auto d = fixtures::fraud_data(120, 4);
  const auto data = fixtures::fraud_map(d);
  auto j = archive_to_json(fitted_fraud(data));

  auto tampered = j;
  tampered["states"]["basket_features"]["source"] = "dslv1 AggJoinPlan\njoin ID = basket_ID\nagg n = count(qty) by basket_ID\n";
  CHECK_THROWS_AS(archive_from_json(tampered), ConfigError);

  auto wrong_width = j;
  wrong_width["learner"]["weights"].push_back(1.0);
  CHECK_THROWS_AS(archive_from_json(wrong_width), ConfigError);

  auto not_archive = j;
  not_archive["format"] = "other";
  CHECK_THROWS_AS(archive_from_json(not_archive), ConfigError);

  auto missing = j;
  missing.erase("x_schema");
  CHECK_THROWS_AS(archive_from_json(missing), ConfigError);

  CHECK_THROWS_AS(load_archive("/nonexistent/archive.json"), ConfigError);
}

TEST_CASE("cell json conversion") {
  for (const Cell& c : {Cell{}, Cell{2.5}, Cell{true}, Cell{std::string("x")}}) CHECK(cell_from_json(cell_to_json(c)) == c);
}
