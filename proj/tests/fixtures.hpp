#pragma once

// Shared test data: a two-table "fraud" set whose label is a threshold on
// the per-basket sum of product values, plus pipeline specs over it.

#include <cmath>
#include <string>

#include "sempipes/graph.hpp"
#include "sempipes/random.hpp"
#include "sempipes/spec_file.hpp"

namespace fixtures {

using namespace sempipes;

struct FraudData {
  Table baskets;   // ID, noise, label
  Table products;  // basket_ID, qty, value
};

// label = (sum of value per basket) > median of those sums.
inline FraudData fraud_data(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::optional<double>> ids, noise, pb, qty, value, sums;
  for (std::size_t i = 0; i < n; ++i) {
    ids.push_back(static_cast<double>(1000 + i));
    noise.push_back(std::round(rng.normal() * 100.0) / 100.0);
    const std::size_t items = 1 + rng.below(5);
    double s = 0.0;
    for (std::size_t j = 0; j < items; ++j) {
      pb.push_back(static_cast<double>(1000 + i));
      qty.push_back(static_cast<double>(1 + rng.below(3)));
      const double v = std::round(rng.uniform() * 10000.0) / 100.0;
      value.push_back(v);
      s += v;
    }
    sums.push_back(s);
  }
  std::vector<double> sorted;
  for (const auto& s : sums) sorted.push_back(*s);
  std::sort(sorted.begin(), sorted.end());
  const double threshold = sorted[sorted.size() / 2];
  std::vector<std::optional<bool>> label;
  for (const auto& s : sums) label.push_back(*s > threshold);
  return {Table({Column::numeric("ID", ids), Column::numeric("noise", noise), Column::booleans("label", label)}),
          Table({Column::numeric("basket_ID", pb), Column::numeric("qty", qty), Column::numeric("value", value)})};
}

inline DataMap fraud_map(const FraudData& d) { return {{"baskets", d.baskets}, {"products", d.products}}; }

inline const char* kFraudSpec = R"(
version = 1

[inputs]
baskets = "one row per shopping basket"
products = "one row per product in a basket"

[[nodes]]
id = "x"
op = "mark_x"
parents = ["baskets"]

[[nodes]]
id = "y"
op = "mark_y"
parents = ["baskets"]
description = "fraud flag"
params = { column = "label" }

[[nodes]]
id = "basket_features"
op = "semop"
parents = ["x", "products"]
nl_prompt = "Aggregate product rows per basket into features that help detect fraud."
params = { kind = "agg_features", left_key = "ID", right_key = "basket_ID" }

[[nodes]]
id = "vec"
op = "vectorize"
parents = ["basket_features"]

[[nodes]]
id = "model"
op = "estimate"
parents = ["vec"]

[learner]
kind = "logistic"
l2 = 0.001
learning_rate = 0.5
epochs = 300

[metric]
name = "auroc"
)";

inline PipelineGraph graph_of(const std::string& toml) { return PipelineGraph::build(parse_toml(toml)); }

}  // namespace fixtures
