#include "sempipes/operators.hpp"

#include "sempipes/errors.hpp"

namespace sempipes {

std::string_view operator_kind_name(OperatorKind kind) {
  switch (kind) {
    case OperatorKind::GenFeatures: return "gen_features";
    case OperatorKind::AggFeatures: return "agg_features";
    case OperatorKind::ExtractFeatures: return "extract_features";
    case OperatorKind::Augment: return "augment";
    case OperatorKind::FillNa: return "fillna";
    case OperatorKind::Clean: return "clean";
    case OperatorKind::Refine: return "refine";
    case OperatorKind::Select: return "select";
    case OperatorKind::Choose: return "choose";
  }
  return "?";
}

std::optional<OperatorKind> parse_operator_kind(std::string_view name) {
  for (auto k : {OperatorKind::GenFeatures, OperatorKind::AggFeatures, OperatorKind::ExtractFeatures,
                 OperatorKind::Augment, OperatorKind::FillNa, OperatorKind::Clean, OperatorKind::Refine,
                 OperatorKind::Select, OperatorKind::Choose})
    if (operator_kind_name(k) == name) return k;
  return std::nullopt;
}

dsl::ProgramKind program_kind_for(OperatorKind kind) {
  using dsl::ProgramKind;
  switch (kind) {
    case OperatorKind::GenFeatures: return ProgramKind::FeatureMap;
    case OperatorKind::AggFeatures: return ProgramKind::AggJoinPlan;
    case OperatorKind::ExtractFeatures: return ProgramKind::ExtractRules;
    case OperatorKind::Augment: return ProgramKind::AugmentPlan;
    case OperatorKind::FillNa: return ProgramKind::ImputeRule;
    case OperatorKind::Clean: return ProgramKind::CleanRule;
    case OperatorKind::Refine: return ProgramKind::RefineRule;
    case OperatorKind::Select: return ProgramKind::SelectList;
    case OperatorKind::Choose: return ProgramKind::ChoiceMap;
  }
  return ProgramKind::FeatureMap;
}

void OperatorSpec::check() const {
  const std::string where = "operator '" + name + "' (" + std::string(operator_kind_name(kind)) + ")";
  if (k && *k < 0) throw ConfigError(where + ": k must be nonnegative");
  switch (kind) {
    case OperatorKind::AggFeatures:
      if (!join) throw ConfigError(where + " needs join keys (left_key, right_key)");
      break;
    case OperatorKind::FillNa:
    case OperatorKind::Clean:
    case OperatorKind::Refine:
      if (!column) throw ConfigError(where + " needs a target column");
      break;
    case OperatorKind::ExtractFeatures:
      if (outputs.empty()) throw ConfigError(where + " needs output columns");
      break;
    case OperatorKind::Choose:
      if (ranges.empty()) throw ConfigError(where + " needs parameter ranges");
      for (const auto& [param, r] : ranges)
        if (!(r.lo <= r.hi)) throw ConfigError(where + ": empty range for '" + param + "'");
      break;
    default: break;
  }
}

nlohmann::json OperatorSpec::to_json() const {
  nlohmann::json j;
  j["kind"] = operator_kind_name(kind);
  j["name"] = name;
  j["instruction"] = instruction;
  if (k) j["k"] = *k;
  if (column) j["column"] = *column;
  if (join) j["join"] = {{"left_key", join->left}, {"right_key", join->right}};
  if (!outputs.empty()) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& [n, d] : outputs) out.push_back({{"name", n}, {"description", d}});
    j["outputs"] = out;
  }
  if (!ranges.empty()) {
    nlohmann::json r = nlohmann::json::object();
    for (const auto& [p, v] : ranges) r[p] = {v.lo, v.hi};
    j["ranges"] = r;
  }
  if (!protected_columns.empty()) j["protected_columns"] = protected_columns;
  return j;
}

std::string_view task_name(Task task) {
  switch (task) {
    case Task::Classification: return "classification";
    case Task::Regression: return "regression";
    case Task::Unknown: return "unknown";
  }
  return "unknown";
}

nlohmann::json PipelineContext::to_json() const {
  nlohmann::json j;
  j["task"] = task_name(task);
  j["model_kind"] = model_kind;
  j["target_column"] = target_column;
  if (target_description) j["target_description"] = *target_description;
  if (x_description) j["x_description"] = *x_description;
  j["graph_summary"] = graph_summary;
  return j;
}

}  // namespace sempipes
