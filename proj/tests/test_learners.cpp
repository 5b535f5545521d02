#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "sempipes/errors.hpp"
#include "sempipes/learners.hpp"
#include "sempipes/random.hpp"

using namespace sempipes;

TEST_CASE("string columns are one-hot encoded with sorted categories") {
  const Table t({Column::strings("s", {"b", "a", "b"})});
  const auto state = vectorize_fit(t);
  CHECK(state.dimension() == 2);
  const Eigen::MatrixXd X = vectorize_transform(state, t);
  CHECK(X(0, 1) == 1.0);
  CHECK(X(1, 0) == 1.0);
  CHECK(X.row(0).sum() == 1.0);
}

TEST_CASE("unseen and missing categories map to the zero block") {
  const auto state = vectorize_fit(Table({Column::strings("s", {"a", "b"})}));
  const Eigen::MatrixXd X = vectorize_transform(state, Table({Column::strings("s", {"c", std::nullopt})}));
  CHECK(X.isZero());
}

TEST_CASE("numeric missing values take the fit mean") {
  const Table t({Column::numeric("x", {1, std::nullopt, 3})});
  const auto raw = vectorize_fit(t, VectorizerOptions{false});
  CHECK(raw.columns[0].mean == 2.0);
  const Eigen::MatrixXd X = vectorize_transform(raw, t);
  CHECK(X(1, 0) == 0.0);  // centered: the imputed mean sits at zero
  CHECK(X(0, 0) == -1.0);
  const auto std_state = vectorize_fit(t);
  CHECK(std_state.columns[0].scale == doctest::Approx(1.0));
}

TEST_CASE("vectorizer errors") {
  CHECK_THROWS_AS(vectorize_fit(Table()), FitError);
  const auto state = vectorize_fit(Table({Column::numeric("x", {1.0})}));
  CHECK_THROWS_AS(vectorize_transform(state, Table({Column::numeric("y", {1.0})})), SchemaDriftError);
}

TEST_CASE("property: transform output is missing-free with fixed width") {
  for (std::uint64_t trial = 0; trial < 100; ++trial) {
    Rng rng(derive_seed(5, trial));
    const Table fit = oracle::random_table(rng, 1 + rng.below(15), 1 + rng.below(5));
    const auto state = vectorize_fit(fit);
    Rng rng2(derive_seed(6, trial));
    const Table other = oracle::random_table(rng2, rng2.below(15), fit.column_count());
    std::vector<Column> cols;
    for (std::size_t c = 0; c < fit.column_count(); ++c) {
      const Column& src = fit.column(c);
      std::vector<Cell> cells;
      for (std::size_t r = 0; r < other.row_count(); ++r) cells.push_back(src[r % src.size()]);
      if (!cells.empty() && rng2.below(2)) cells[0] = Cell{};
      cols.emplace_back(src.name(), src.kind(), std::move(cells));
    }
    const Table probe(std::move(cols));
    const Eigen::MatrixXd X = vectorize_transform(state, probe);
    CHECK(X.allFinite());
    CHECK(static_cast<std::size_t>(X.cols()) == state.dimension());
  }
}

TEST_CASE("logistic separates blobs with a margin") {
  Rng rng(17);
  Eigen::MatrixXd X(40, 2);
  Eigen::VectorXd y(40);
  for (int i = 0; i < 40; ++i) {
    const double cls = i < 20 ? 0.0 : 1.0;
    const double cx = cls == 0.0 ? -2.0 : 2.0;
    X(i, 0) = cx + 0.4 * rng.normal();
    X(i, 1) = cx + 0.4 * rng.normal();
    y(i) = cls;
  }
  // Oracle: the line x0 + x1 = 0 separates with margin at least 1.
  for (int i = 0; i < 40; ++i) REQUIRE(((X(i, 0) + X(i, 1)) > 0) == (y(i) == 1.0));
  const auto p = learner_fit(LearnerKind::Logistic, X, y, Hyperparameters{});
  CHECK(accuracy(y, learner_predict(p, X)) == 1.0);
}

TEST_CASE("ridge recovers an exact line without regularization") {
  Eigen::MatrixXd X(5, 1);
  X << 0, 1, 2, 3, 4;
  const Eigen::VectorXd y = 2.0 * X.col(0);
  const auto p = learner_fit(LearnerKind::Ridge, X, y, Hyperparameters{0.0, 0.1, 1});
  CHECK(std::fabs(p.weights(0) - 2.0) < 1e-6);
  CHECK(std::fabs(p.bias) < 1e-6);
}

TEST_CASE("ridge shrinks toward zero as l2 grows") {
  Eigen::MatrixXd X(4, 1);
  X << -1, 0, 1, 2;
  const Eigen::VectorXd y = 3.0 * X.col(0);
  const auto a = learner_fit(LearnerKind::Ridge, X, y, Hyperparameters{1.0, 0.1, 1});
  const auto b = learner_fit(LearnerKind::Ridge, X, y, Hyperparameters{100.0, 0.1, 1});
  CHECK(std::fabs(b.weights(0)) < std::fabs(a.weights(0)));
  CHECK(a.weights(0) < 3.0);
}

TEST_CASE("identical labels give a constant model") {
  Eigen::MatrixXd X(3, 1);
  X << 1, 2, 3;
  const Eigen::VectorXd y = Eigen::VectorXd::Ones(3);
  const auto p = learner_fit(LearnerKind::Logistic, X, y, Hyperparameters{});
  const Eigen::VectorXd probs = learner_predict(p, X);
  CHECK(probs.minCoeff() > 0.5);
}

TEST_CASE("logistic gradient matches central differences") {
  for (std::uint64_t trial = 0; trial < 50; ++trial) {
    Rng rng(derive_seed(9, trial));
    Eigen::MatrixXd X(5, 3);
    Eigen::VectorXd y(5), w(3);
    for (int i = 0; i < 5; ++i) {
      for (int j = 0; j < 3; ++j) X(i, j) = rng.normal();
      y(i) = rng.below(2);
    }
    for (int j = 0; j < 3; ++j) w(j) = rng.normal();
    const double b = rng.normal();
    const double l2 = rng.uniform();
    const Eigen::VectorXd g = logistic_gradient(X, y, w, b, l2);
    const double h = 1e-6;
    for (int j = 0; j < 4; ++j) {
      Eigen::VectorXd wp = w, wm = w;
      double bp = b, bm = b;
      if (j < 3) {
        wp(j) += h;
        wm(j) -= h;
      } else {
        bp += h;
        bm -= h;
      }
      const double fd = (logistic_objective(X, y, wp, bp, l2) - logistic_objective(X, y, wm, bm, l2)) / (2 * h);
      CHECK(std::fabs(fd - g(j)) <= 1e-5 * std::max(1.0, std::fabs(fd)));
    }
  }
}

TEST_CASE("metric examples") {
  Eigen::VectorXd y(4), s(4);
  y << 0, 0, 1, 1;
  s << 0.1, 0.2, 0.8, 0.9;
  CHECK(auroc(y, s) == 1.0);
  CHECK(auroc(y, Eigen::VectorXd::Constant(4, 0.3)) == 0.5);
  CHECK_THROWS_AS(auroc(Eigen::VectorXd::Ones(3), Eigen::VectorXd::Ones(3)), FitError);
  Eigen::VectorXd t(2), p(2);
  t << 1, 2;
  p << 1, 4;
  // Residuals (0, -2): mean square 4/2.
  CHECK(rmse(t, p) == doctest::Approx(std::sqrt(2.0)));
  CHECK(utility(Metric::Rmse, t, p) == doctest::Approx(-std::sqrt(2.0)));
  CHECK(accuracy(y, s) == 1.0);
}

TEST_CASE("auroc equals the pairwise oracle and is invariant to monotone maps") {
  for (std::uint64_t trial = 0; trial < 100; ++trial) {
    Rng rng(derive_seed(12, trial));
    const int n = 4 + static_cast<int>(rng.below(20));
    Eigen::VectorXd y(n), s(n);
    for (int i = 0; i < n; ++i) {
      y(i) = i < 2 ? i : rng.below(2);
      s(i) = static_cast<double>(rng.below(6));
    }
    double wins = 0, pairs = 0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (y(i) == 1 && y(j) == 0) {
          pairs += 1;
          wins += s(i) > s(j) ? 1.0 : (s(i) == s(j) ? 0.5 : 0.0);
        }
    CHECK(auroc(y, s) == doctest::Approx(wins / pairs));
    const Eigen::VectorXd mapped = s.unaryExpr([](double v) { return std::exp(3 * v) - 7; });
    CHECK(auroc(y, mapped) == doctest::Approx(auroc(y, s)));
  }
}

TEST_CASE("binary label coding") {
  const Column y = Column::strings("y", {"yes", "no", "yes"});
  const auto enc = fit_labels(y);
  const Eigen::VectorXd v = encode_labels(enc, y);
  CHECK(v(0) == 1.0);
  CHECK(v(1) == 0.0);
  CHECK(decode_label(enc, 0.7) == Cell{std::string("yes")});
  CHECK_THROWS_AS(fit_labels(Column::numeric("y", {1, 2, 3})), FitError);
}
