#include "sempipes/learners.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "sempipes/errors.hpp"

namespace sempipes {

std::size_t VectorizerState::dimension() const {
  std::size_t d = 0;
  for (const auto& c : columns) d += c.width();
  return d;
}

VectorizerState vectorize_fit(const Table& t, const VectorizerOptions& options) {
  if (t.column_count() == 0) throw FitError("cannot vectorize a table with no columns");
  if (t.row_count() == 0) throw FitError("cannot vectorize an empty table");
  VectorizerState state;
  for (std::size_t i = 0; i < t.column_count(); ++i) {
    const Column& col = t.column(i);
    ColumnEncoding enc;
    enc.column = col.name();
    enc.kind = col.kind();
    if (col.kind() == Kind::Numeric) {
      double sum = 0.0;
      std::size_t n = 0;
      for (std::size_t r = 0; r < col.size(); ++r) {
        if (col.missing_at(r)) continue;
        sum += col.number(r);
        ++n;
      }
      enc.mean = n ? sum / static_cast<double>(n) : 0.0;
      if (options.standardize && n) {
        double ss = 0.0;
        for (std::size_t r = 0; r < col.size(); ++r)
          if (!col.missing_at(r)) ss += (col.number(r) - enc.mean) * (col.number(r) - enc.mean);
        const double sd = std::sqrt(ss / static_cast<double>(n));
        enc.scale = sd > 0.0 ? sd : 1.0;
      }
    } else {
      std::set<std::string> cats;
      for (const Cell& c : col.cells())
        if (!is_missing(c)) cats.insert(format_cell(c));
      enc.categories.assign(cats.begin(), cats.end());
    }
    state.columns.push_back(std::move(enc));
  }
  return state;
}

Eigen::MatrixXd vectorize_transform(const VectorizerState& state, const Table& t) {
  std::vector<std::string> missing;
  for (const auto& enc : state.columns)
    if (!t.has(enc.column)) missing.push_back(enc.column);
  if (!missing.empty()) throw SchemaDriftError(missing);

  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(t.row_count()),
                                            static_cast<Eigen::Index>(state.dimension()));
  Eigen::Index offset = 0;
  for (const auto& enc : state.columns) {
    const Column& col = t.column(enc.column);
    if (col.kind() != enc.kind) {
      throw SchemaDriftError({enc.column});
    }
    for (std::size_t r = 0; r < col.size(); ++r) {
      const auto row = static_cast<Eigen::Index>(r);
      if (enc.kind == Kind::Numeric) {
        const double x = col.missing_at(r) ? enc.mean : col.number(r);
        X(row, offset) = (x - enc.mean) / enc.scale;
        continue;
      }
      if (col.missing_at(r)) continue;
      const std::string v = format_cell(col[r]);
      auto it = std::lower_bound(enc.categories.begin(), enc.categories.end(), v);
      if (it != enc.categories.end() && *it == v) X(row, offset + (it - enc.categories.begin())) = 1.0;
    }
    offset += static_cast<Eigen::Index>(enc.width());
  }
  return X;
}

// ---------------------------------------------------------------- labels

LabelEncoding fit_labels(const Column& y) {
  LabelEncoding enc;
  enc.kind = y.kind();
  std::set<Cell, CellLess> classes;
  for (const Cell& c : y.cells()) {
    if (is_missing(c)) throw FitError("label column '" + y.name() + "' has missing values");
    classes.insert(c);
  }
  if (classes.size() > 2)
    throw FitError("classification needs at most two classes, '" + y.name() + "' has " +
                   std::to_string(classes.size()));
  enc.classes.assign(classes.begin(), classes.end());
  return enc;
}

Eigen::VectorXd encode_labels(const LabelEncoding& enc, const Column& y) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(y.size()));
  for (std::size_t i = 0; i < y.size(); ++i) {
    const Cell& c = y[i];
    auto it = std::find(enc.classes.begin(), enc.classes.end(), c);
    if (it == enc.classes.end()) throw FitError("label '" + format_cell(c) + "' was not seen during fit");
    out(static_cast<Eigen::Index>(i)) = enc.classes.size() == 2 && it != enc.classes.begin() ? 1.0 : 0.0;
  }
  return out;
}

Cell decode_label(const LabelEncoding& enc, double probability) {
  if (enc.classes.empty()) return Cell{};
  if (enc.classes.size() == 1) return enc.classes.front();
  return probability >= 0.5 ? enc.classes.back() : enc.classes.front();
}

Eigen::VectorXd numeric_targets(const Column& y) {
  if (y.kind() != Kind::Numeric) throw FitError("regression target '" + y.name() + "' is not numeric");
  Eigen::VectorXd out(static_cast<Eigen::Index>(y.size()));
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y.missing_at(i)) throw FitError("regression target '" + y.name() + "' has missing values");
    out(static_cast<Eigen::Index>(i)) = y.number(i);
  }
  return out;
}

// --------------------------------------------------------------- learners

std::string_view learner_kind_name(LearnerKind kind) {
  return kind == LearnerKind::Logistic ? "logistic" : "ridge";
}

std::optional<LearnerKind> parse_learner_kind(std::string_view name) {
  if (name == "logistic") return LearnerKind::Logistic;
  if (name == "ridge") return LearnerKind::Ridge;
  return std::nullopt;
}

namespace {

Eigen::VectorXd sigmoid(const Eigen::VectorXd& z) {
  return z.unaryExpr([](double v) {
    if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
  });
}

// log(1 + exp(v)) without overflow.
double softplus(double v) { return v > 0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); }

void check_problem(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  if (X.rows() != y.size()) throw FitError("feature rows and label count differ");
  if (X.rows() < 2) throw FitError("need at least two training rows");
  if (!X.allFinite()) throw FitError("non-finite feature values");
  if (!y.allFinite()) throw FitError("non-finite targets");
}

}  // namespace

double logistic_objective(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                          const Eigen::VectorXd& w, double b, double l2) {
  const Eigen::VectorXd z = (X * w).array() + b;
  double loss = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) loss += softplus(z(i)) - y(i) * z(i);
  return loss / static_cast<double>(z.size()) + 0.5 * l2 * w.squaredNorm();
}

Eigen::VectorXd logistic_gradient(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                  const Eigen::VectorXd& w, double b, double l2) {
  const Eigen::VectorXd r = sigmoid((X * w).array() + b) - y;
  const double n = static_cast<double>(y.size());
  Eigen::VectorXd g(w.size() + 1);
  g.head(w.size()) = X.transpose() * r / n + l2 * w;
  g(w.size()) = r.sum() / n;
  return g;
}

LearnerParams learner_fit(LearnerKind kind, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                          const Hyperparameters& h, std::uint64_t /*seed*/) {
  check_problem(X, y);
  if (!(h.l2 >= 0.0)) throw FitError("l2 must be nonnegative");
  LearnerParams p;
  p.kind = kind;
  p.hyper = h;
  const Eigen::Index d = X.cols();

  if (kind == LearnerKind::Logistic) {
    if (!(h.learning_rate > 0.0)) throw FitError("learning_rate must be positive");
    if (h.epochs < 1) throw FitError("epochs must be at least 1");
    for (Eigen::Index i = 0; i < y.size(); ++i)
      if (y(i) != 0.0 && y(i) != 1.0) throw FitError("logistic labels must be 0 or 1");
    p.weights = Eigen::VectorXd::Zero(d);
    for (int epoch = 0; epoch < h.epochs; ++epoch) {
      const Eigen::VectorXd g = logistic_gradient(X, y, p.weights, p.bias, h.l2);
      p.weights -= h.learning_rate * g.head(d);
      p.bias -= h.learning_rate * g(d);
    }
    return p;
  }

  const Eigen::RowVectorXd x_mean = X.colwise().mean();
  const double y_mean = y.mean();
  const Eigen::MatrixXd Xc = X.rowwise() - x_mean;
  const Eigen::VectorXd yc = y.array() - y_mean;
  if (d == 0) {
    p.weights = Eigen::VectorXd::Zero(0);
  } else if (h.l2 > 0.0) {
    Eigen::MatrixXd A = Xc.transpose() * Xc;
    A.diagonal().array() += h.l2;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
    if (ldlt.info() == Eigen::Success && ldlt.isPositive()) p.weights = ldlt.solve(Xc.transpose() * yc);
    else p.weights = A.completeOrthogonalDecomposition().solve(Xc.transpose() * yc);
  } else {
    p.weights = Xc.completeOrthogonalDecomposition().solve(yc);
  }
  p.bias = y_mean - x_mean.dot(p.weights);
  return p;
}

Eigen::VectorXd learner_predict(const LearnerParams& p, const Eigen::MatrixXd& X) {
  if (X.cols() != p.weights.size())
    throw FitError("feature dimension " + std::to_string(X.cols()) + " does not match the model's " +
                   std::to_string(p.weights.size()));
  const Eigen::VectorXd z = (X * p.weights).array() + p.bias;
  return p.kind == LearnerKind::Logistic ? sigmoid(z) : z;
}

// ---------------------------------------------------------------- metrics

std::string_view metric_name(Metric m) {
  switch (m) {
    case Metric::Accuracy: return "accuracy";
    case Metric::Auroc: return "auroc";
    case Metric::Rmse: return "rmse";
  }
  return "?";
}

std::optional<Metric> parse_metric(std::string_view name) {
  for (auto m : {Metric::Accuracy, Metric::Auroc, Metric::Rmse})
    if (metric_name(m) == name) return m;
  return std::nullopt;
}

bool higher_is_better(Metric m) { return m != Metric::Rmse; }

namespace {
void same_length(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size()) throw FitError("metric inputs have different lengths");
  if (a.size() == 0) throw FitError("metric needs at least one row");
}
}  // namespace

double accuracy(const Eigen::VectorXd& y_true, const Eigen::VectorXd& probabilities) {
  same_length(y_true, probabilities);
  Eigen::Index hits = 0;
  for (Eigen::Index i = 0; i < y_true.size(); ++i)
    hits += ((probabilities(i) >= 0.5 ? 1.0 : 0.0) == y_true(i));
  return static_cast<double>(hits) / static_cast<double>(y_true.size());
}

double auroc(const Eigen::VectorXd& y_true, const Eigen::VectorXd& scores) {
  same_length(y_true, scores);
  const Eigen::Index n = y_true.size();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores(a) < scores(b); });
  std::vector<double> rank(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores(order[j + 1]) == scores(order[i])) ++j;
    const double mid = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[static_cast<std::size_t>(order[k])] = mid;
    i = j + 1;
  }
  double pos = 0, rank_sum = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (y_true(i) == 1.0) {
      pos += 1;
      rank_sum += rank[static_cast<std::size_t>(i)];
    }
  }
  const double neg = static_cast<double>(n) - pos;
  if (pos == 0 || neg == 0) throw FitError("auroc needs both classes");
  return (rank_sum - pos * (pos + 1) / 2.0) / (pos * neg);
}

double rmse(const Eigen::VectorXd& y_true, const Eigen::VectorXd& predicted) {
  same_length(y_true, predicted);
  return std::sqrt((y_true - predicted).squaredNorm() / static_cast<double>(y_true.size()));
}

double score(Metric m, const Eigen::VectorXd& y_true, const Eigen::VectorXd& predicted) {
  switch (m) {
    case Metric::Accuracy: return accuracy(y_true, predicted);
    case Metric::Auroc: return auroc(y_true, predicted);
    case Metric::Rmse: return rmse(y_true, predicted);
  }
  return 0.0;
}

double utility(Metric m, const Eigen::VectorXd& y_true, const Eigen::VectorXd& predicted) {
  const double s = score(m, y_true, predicted);
  return higher_is_better(m) ? s : -s;
}

}  // namespace sempipes
