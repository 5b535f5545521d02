#pragma once

// Declarations shared by the graph, the semantic operators and the
// synthesizers: what an operator is asked to do, and what the pipeline
// around it looks like.

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "sempipes/dsl.hpp"

namespace sempipes {

enum class OperatorKind {
  GenFeatures,
  AggFeatures,
  ExtractFeatures,
  Augment,
  FillNa,
  Clean,
  Refine,
  Select,
  Choose,
};

std::string_view operator_kind_name(OperatorKind kind);
std::optional<OperatorKind> parse_operator_kind(std::string_view name);
/// The DSL program kind each operator's state is written in.
dsl::ProgramKind program_kind_for(OperatorKind kind);

struct ValueRange {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double v) const { return v >= lo && v <= hi; }
};

struct OperatorSpec {
  OperatorKind kind = OperatorKind::GenFeatures;
  std::string name;         // node id
  std::string instruction;  // natural-language instruction, may be empty
  std::optional<int> k;
  std::optional<std::string> column;
  std::optional<dsl::JoinKeys> join;
  std::vector<std::pair<std::string, std::string>> outputs;  // name -> description
  std::map<std::string, ValueRange> ranges;
  // Columns `select` must keep (the prediction target when it is visible).
  std::vector<std::string> protected_columns;

  /// Throws ConfigError when a field required by `kind` is absent.
  void check() const;
  nlohmann::json to_json() const;
};

enum class Task { Classification, Regression, Unknown };

std::string_view task_name(Task task);

struct PipelineContext {
  Task task = Task::Unknown;
  std::string model_kind;
  std::string target_column;
  std::optional<std::string> target_description;
  std::optional<std::string> x_description;
  std::vector<std::string> graph_summary;

  nlohmann::json to_json() const;
};

}  // namespace sempipes
