#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "sempipes/table.hpp"

namespace sempipes {

// ------------------------------------------------------------ vectorizer

struct ColumnEncoding {
  std::string column;
  Kind kind = Kind::Numeric;
  // Numeric: missing cells take `mean`; values are emitted as (x - mean) / scale.
  double mean = 0.0;
  double scale = 1.0;
  // String and boolean: one indicator per category, sorted by formatted value.
  std::vector<std::string> categories;

  std::size_t width() const { return kind == Kind::Numeric ? 1 : categories.size(); }
};

struct VectorizerOptions {
  bool standardize = true;
};

struct VectorizerState {
  std::vector<ColumnEncoding> columns;
  std::size_t dimension() const;
};

/// Throws FitError on an empty table or one with no columns.
VectorizerState vectorize_fit(const Table& t, const VectorizerOptions& options = {});
/// Dense, missing-free matrix. Extra columns in `t` are ignored; absent ones
/// raise SchemaDriftError.
Eigen::MatrixXd vectorize_transform(const VectorizerState& state, const Table& t);

// ---------------------------------------------------------------- labels

/// Binary label coding: classes sorted by value, the last one is positive.
struct LabelEncoding {
  Kind kind = Kind::Numeric;
  std::vector<Cell> classes;
};

/// Throws FitError on missing labels or more than two classes.
LabelEncoding fit_labels(const Column& y);
Eigen::VectorXd encode_labels(const LabelEncoding& enc, const Column& y);
Cell decode_label(const LabelEncoding& enc, double probability);

Eigen::VectorXd numeric_targets(const Column& y);

// --------------------------------------------------------------- learners

enum class LearnerKind { Logistic, Ridge };

std::string_view learner_kind_name(LearnerKind kind);
std::optional<LearnerKind> parse_learner_kind(std::string_view name);

struct Hyperparameters {
  double l2 = 0.01;
  double learning_rate = 0.5;
  int epochs = 300;
};

struct LearnerParams {
  LearnerKind kind = LearnerKind::Logistic;
  Eigen::VectorXd weights;
  double bias = 0.0;
  Hyperparameters hyper;
};

/// Logistic regression by full-batch gradient descent (weights start at zero,
/// so the result does not depend on `seed`); ridge in closed form.
LearnerParams learner_fit(LearnerKind kind, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                          const Hyperparameters& h, std::uint64_t seed = 0);

/// Positive-class probabilities (logistic) or predicted values (ridge).
Eigen::VectorXd learner_predict(const LearnerParams& p, const Eigen::MatrixXd& X);

/// Mean log loss plus 0.5 * l2 * |w|^2; the bias is not penalized.
double logistic_objective(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                          const Eigen::VectorXd& w, double b, double l2);
/// Gradient of `logistic_objective`; the last entry is d/db.
Eigen::VectorXd logistic_gradient(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                  const Eigen::VectorXd& w, double b, double l2);

// ---------------------------------------------------------------- metrics

enum class Metric { Accuracy, Auroc, Rmse };

std::string_view metric_name(Metric m);
std::optional<Metric> parse_metric(std::string_view name);
bool higher_is_better(Metric m);

double accuracy(const Eigen::VectorXd& y_true, const Eigen::VectorXd& probabilities);
/// Mann-Whitney estimate with midranks for ties. Throws FitError unless both
/// classes are present.
double auroc(const Eigen::VectorXd& y_true, const Eigen::VectorXd& scores);
double rmse(const Eigen::VectorXd& y_true, const Eigen::VectorXd& predicted);

/// Raw metric value (rmse is positive here).
double score(Metric m, const Eigen::VectorXd& y_true, const Eigen::VectorXd& predicted);
/// Higher-is-better utility: the metric, with rmse negated.
double utility(Metric m, const Eigen::VectorXd& y_true, const Eigen::VectorXd& predicted);

}  // namespace sempipes
