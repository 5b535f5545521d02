#include "sempipes/semops.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "sempipes/random.hpp"

namespace sempipes {

void ValidationReport::add(std::string name, bool ok, std::string detail) {
  checks.push_back({std::move(name), ok, std::move(detail)});
  passed = std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.passed; });
}

std::string ValidationReport::summary() const {
  std::string out;
  for (const auto& c : checks) {
    if (c.passed) continue;
    if (!out.empty()) out += "; ";
    out += c.name;
    if (!c.detail.empty()) out += ": " + c.detail;
  }
  return out.empty() ? "ok" : out;
}

nlohmann::json ValidationReport::to_json() const {
  nlohmann::json j;
  j["passed"] = passed;
  j["attempts_used"] = attempts_used;
  j["checks"] = nlohmann::json::array();
  for (const auto& c : checks) j["checks"].push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
  return j;
}

SynthesisRequest assemble_request(const OperatorSpec& spec, const PipelineContext& context,
                                  const OperatorInput& input, std::uint64_t seed, const SearchExtras& extras) {
  SynthesisRequest r;
  r.spec = spec;
  r.context = context;
  r.profiles.push_back({"input", profile(input.table, derive_seed(seed, seed_tag("profile")))});
  if (input.aux) r.profiles.push_back({"aux", profile(*input.aux, derive_seed(seed, seed_tag("profile-aux")))});
  r.grammar = std::string(dsl::grammar_text());
  r.skeleton = skeleton_for(spec.kind);
  r.utility_history = extras.utility_history;
  r.memories = extras.memories;
  r.inspirations = extras.inspirations;
  r.temperature = extras.temperature;
  r.seed = seed;
  return r;
}

OperatorInput validation_sample(const OperatorSpec& spec, const OperatorInput& input, std::uint64_t seed) {
  const std::size_t n = spec.kind == OperatorKind::ExtractFeatures ? kExtractionRows : kValidationRows;
  OperatorInput out{sample_rows(input.table, n, derive_seed(seed, seed_tag("validation"))), input.aux};
  if (spec.kind != OperatorKind::AggFeatures || !input.aux || !spec.join) return out;
  const Column* left = out.table.find(spec.join->left);
  const Column* right = input.aux->find(spec.join->right);
  if (!left || !right) return out;

  std::vector<Cell> keys;
  std::set<Cell, CellLess> seen;
  for (const auto& c : left->cells())
    if (!is_missing(c) && seen.insert(c).second) keys.push_back(c);
  const auto keep_n = static_cast<std::size_t>(std::ceil(kJoinKeyRetention * static_cast<double>(keys.size())));
  std::set<Cell, CellLess> kept;
  for (std::size_t i : sample_indices(keys.size(), keep_n, derive_seed(seed, seed_tag("join-keys"))))
    kept.insert(keys[i]);
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < right->size(); ++i)
    if (right->kind() == left->kind() && kept.count((*right)[i])) rows.push_back(i);
  out.aux = input.aux->take(rows);
  return out;
}

namespace {

std::string join_names(const std::vector<std::string>& names) {
  std::string out;
  for (const auto& n : names) out += (out.empty() ? "'" : ", '") + n + "'";
  return out;
}

void check_rows_preserved(ValidationReport& r, const Table& in, const Table& out) {
  r.add("row count preserved", in.row_count() == out.row_count(),
        in.row_count() == out.row_count() ? ""
                                          : "expected " + std::to_string(in.row_count()) + " rows, got " +
                                                std::to_string(out.row_count()));
}

void check_originals(ValidationReport& r, const Table& in, const Table& out, const std::set<std::string>& skip = {}) {
  std::vector<std::string> lost, changed;
  for (std::size_t i = 0; i < in.column_count(); ++i) {
    const Column& c = in.column(i);
    if (skip.count(c.name())) continue;
    const Column* o = out.find(c.name());
    if (!o) lost.push_back(c.name());
    else if (!(*o == c)) changed.push_back(c.name());
  }
  r.add("original columns retained", lost.empty(), lost.empty() ? "" : "missing " + join_names(lost));
  r.add("original columns unchanged", changed.empty(), changed.empty() ? "" : "rewritten " + join_names(changed));
}

std::vector<std::string> new_columns(const Table& in, const Table& out) {
  std::vector<std::string> added;
  for (const auto& n : out.names())
    if (!in.has(n)) added.push_back(n);
  return added;
}

void check_new_count(ValidationReport& r, const OperatorSpec& spec, const Table& in, const Table& out) {
  const std::size_t added = new_columns(in, out).size();
  const bool ok = added >= 1 && (!spec.k || added <= static_cast<std::size_t>(*spec.k));
  std::string detail;
  if (!ok) {
    detail = "added " + std::to_string(added) + " columns, expected 1";
    if (spec.k) detail += " to " + std::to_string(*spec.k);
    else detail += " or more";
  }
  r.add("new column count", ok, detail);
}

double column_std(const Column& c) {
  double sum = 0.0, sq = 0.0;
  std::size_t n = 0;
  for (const auto& cell : c.cells()) {
    if (const double* v = std::get_if<double>(&cell)) {
      sum += *v;
      sq += *v * *v;
      ++n;
    }
  }
  if (n == 0) return 0.0;
  const double mean = sum / static_cast<double>(n);
  return std::sqrt(std::max(0.0, sq / static_cast<double>(n) - mean * mean));
}

Table augment(const dsl::Program& program, const Table& t, const dsl::EvalLimits& limits) {
  const dsl::Program typed = dsl::typecheck(program, t.schema());
  const auto& spec = *typed.augment;
  if (spec.rows == 0 || t.row_count() == 0) return t;
  std::vector<std::size_t> pool;
  if (spec.where) {
    dsl::EvalBudget budget(limits);
    const auto mask = dsl::evaluate_expr(typed, *spec.where, t, budget);
    for (std::size_t i = 0; i < mask.size(); ++i)
      if (const bool* b = std::get_if<bool>(&mask[i]); b && *b) pool.push_back(i);
  }
  if (pool.empty()) {
    pool.resize(t.row_count());
    for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;
  }
  Rng rng(derive_seed(spec.seed, seed_tag("augment")));
  std::vector<std::size_t> picks(spec.rows);
  for (auto& p : picks) p = pool[rng.below(pool.size())];
  Table extra = t.take(picks);
  for (const auto& [name, scale] : spec.jitter) {
    const Column& src = t.column(name);
    const double sd = column_std(src) * scale;
    std::vector<Cell> cells = extra.column(name).cells();
    for (auto& cell : cells)
      if (double* v = std::get_if<double>(&cell)) *v += sd * rng.normal();
    extra = extra.with_replaced(Column(name, src.kind(), std::move(cells)));
  }
  return t.append_rows(extra);
}

Table protect(const Table& selected, const Table& input, const std::vector<std::string>& protected_columns) {
  Table out = selected;
  for (const auto& p : protected_columns)
    if (!out.has(p) && input.has(p)) out = out.with_column(input.column(p));
  return out;
}

void kind_checks(ValidationReport& r, const OperatorSpec& spec, const dsl::Program& typed, const OperatorInput& in,
                 const Table& out) {
  const Table& t = in.table;
  switch (spec.kind) {
    case OperatorKind::GenFeatures:
    case OperatorKind::AggFeatures:
      check_rows_preserved(r, t, out);
      check_originals(r, t, out);
      check_new_count(r, spec, t, out);
      if (spec.kind == OperatorKind::AggFeatures && spec.join) {
        const bool keys = typed.join && typed.join->left == spec.join->left && typed.join->right == spec.join->right;
        r.add("join keys match", keys, keys ? "" : "program must join " + spec.join->left + " = " + spec.join->right);
      }
      break;
    case OperatorKind::ExtractFeatures: {
      check_rows_preserved(r, t, out);
      check_originals(r, t, out);
      std::vector<std::string> absent;
      for (const auto& [name, desc] : spec.outputs)
        if (!out.has(name)) absent.push_back(name);
      r.add("output columns present", absent.empty(), absent.empty() ? "" : "missing " + join_names(absent));
      break;
    }
    case OperatorKind::FillNa: {
      const std::string& c = *spec.column;
      check_rows_preserved(r, t, out);
      const bool right_column = typed.impute && typed.impute->column == c;
      r.add("imputes target column", right_column, right_column ? "" : "program must fill '" + c + "'");
      if (!right_column || !out.has(c)) break;
      const Column& before = t.column(c);
      const Column& after = out.column(c);
      std::string missing_at, changed_at;
      for (std::size_t i = 0; i < after.size() && i < before.size(); ++i) {
        if (after.missing_at(i) && missing_at.empty()) missing_at = "row " + std::to_string(i) + " column '" + c + "'";
        if (!before.missing_at(i) && compare_cells(before[i], after[i]) != 0 && changed_at.empty())
          changed_at = "row " + std::to_string(i) + " column '" + c + "'";
      }
      r.add("no missing values", missing_at.empty(), missing_at.empty() ? "" : "missing at " + missing_at);
      r.add("present cells unchanged", changed_at.empty(), changed_at.empty() ? "" : "changed at " + changed_at);
      check_originals(r, t, out, {c});
      break;
    }
    case OperatorKind::Clean: {
      const std::string& c = *spec.column;
      check_rows_preserved(r, t, out);
      const bool same = out.names() == t.names();
      r.add("column set unchanged", same, same ? "" : "clean may only rewrite '" + c + "'");
      const bool kept = out.has(c) && t.has(c) && out.column(c).kind() == t.column(c).kind();
      r.add("target column kept", kept, kept ? "" : "'" + c + "' must keep its name and kind");
      check_originals(r, t, out, {c});
      break;
    }
    case OperatorKind::Refine: {
      check_rows_preserved(r, t, out);
      std::vector<std::string> absent;
      for (const auto& [name, desc] : spec.outputs)
        if (!out.has(name)) absent.push_back(name);
      r.add("output columns present", absent.empty(), absent.empty() ? "" : "missing " + join_names(absent));
      const bool touches = !typed.bindings.empty();
      r.add("derives a column", touches, touches ? "" : "program derives nothing");
      break;
    }
    case OperatorKind::Select: {
      const std::set<std::string> prot(spec.protected_columns.begin(), spec.protected_columns.end());
      const bool some = std::any_of(typed.selected.begin(), typed.selected.end(),
                                    [&](const auto& n) { return !prot.count(n); });
      r.add("nonempty selection", some, some ? "" : "select at least one feature column");
      std::vector<std::string> lost;
      for (const auto& p : spec.protected_columns)
        if (t.has(p) && !out.has(p)) lost.push_back(p);
      r.add("target lineage kept", lost.empty(), lost.empty() ? "" : "dropped " + join_names(lost));
      break;
    }
    case OperatorKind::Augment: {
      const bool schema_same = out.names() == t.names() && out.schema() == t.schema();
      r.add("schema identical", schema_same, schema_same ? "" : "augmentation must not change columns");
      const std::size_t k = spec.k ? static_cast<std::size_t>(*spec.k) : typed.augment->rows;
      const bool count = out.row_count() == t.row_count() + k && typed.augment->rows == k;
      r.add("adds k rows", count,
            count ? "" : "expected " + std::to_string(k) + " new rows, got " +
                             std::to_string(out.row_count() - std::min(out.row_count(), t.row_count())));
      break;
    }
    case OperatorKind::Choose: break;
  }
}

}  // namespace

ValidationReport check_contract(const OperatorSpec& spec, const dsl::Program& typed, const OperatorInput& input,
                                const Table& output) {
  ValidationReport r;
  kind_checks(r, spec, typed, input, output);
  if (r.checks.empty()) r.passed = true;
  return r;
}

ValidationReport validate_candidate(const OperatorSpec& spec, const dsl::Program& candidate,
                                    const OperatorInput& input, std::uint64_t seed, const dsl::EvalLimits& limits) {
  ValidationReport r;
  const bool kind_ok = candidate.kind == program_kind_for(spec.kind);
  r.add("program kind", kind_ok,
        kind_ok ? "" : "expected " + std::string(dsl::program_kind_name(program_kind_for(spec.kind))));
  if (!kind_ok) return r;

  if (spec.kind == OperatorKind::Choose) {
    r.add("proposes values", !candidate.choices.empty(), candidate.choices.empty() ? "no choose lines" : "");
    for (const auto& [param, value] : candidate.choices) {
      auto it = spec.ranges.find(param);
      if (it == spec.ranges.end()) {
        r.add("value in range", false, "unknown parameter '" + param + "'");
      } else {
        const bool ok = it->second.contains(value);
        r.add("value in range", ok,
              ok ? "" : "'" + param + "' = " + format_cell(Cell{value}) + " outside [" +
                            format_cell(Cell{it->second.lo}) + ", " + format_cell(Cell{it->second.hi}) + "]");
      }
    }
    return r;
  }

  const OperatorInput sample = validation_sample(spec, input, seed);
  if (spec.kind == OperatorKind::AggFeatures && !sample.aux) {
    r.add("auxiliary table", false, "agg_features needs a second input");
    return r;
  }
  dsl::Program typed;
  try {
    dsl::Schema aux_schema;
    if (sample.aux) aux_schema = sample.aux->schema();
    typed = dsl::typecheck(candidate, sample.table.schema(), sample.aux ? &aux_schema : nullptr);
    r.add("type check", true);
  } catch (const Error& e) {
    r.add("type check", false, e.what());
    return r;
  }
  Table out;
  try {
    out = apply_operator(spec, candidate, sample, Mode::Fit, limits);
    r.add("executes", true);
  } catch (const Error& e) {
    r.add("executes", false, e.what());
    return r;
  }
  kind_checks(r, spec, typed, sample, out);
  return r;
}

SynthesisOutcome synthesize_with_retry(const OperatorSpec& spec, SynthesisRequest request, Synthesizer& synth,
                                       const OperatorInput& input, int max_retries, const dsl::EvalLimits& limits) {
  SynthesisOutcome outcome;
  ValidationReport last;
  const int attempts = std::max(0, max_retries) + 1;
  for (int attempt = 1; attempt <= attempts; ++attempt) {
    request.attempt = attempt;
    ValidationReport report;
    SynthesisResult result;
    std::optional<dsl::Program> program;
    try {
      result = synth.synthesize(request);
      program = dsl::parse(result.source, program_kind_for(spec.kind));
      program->commentary = result.commentary;
    } catch (const ExtractionError&) {
      report.add("extraction", false, "emit exactly one fenced dslv1 block");
    } catch (const TransportError&) {
      throw;
    } catch (const ParseError& e) {
      report.add("parse", false, e.what());
    } catch (const TypeError& e) {
      report.add("parse", false, e.what());
    } catch (const SchemaError& e) {
      report.add("parse", false, e.what());
    }
    if (program) report = validate_candidate(spec, *program, input, request.seed, limits);
    report.attempts_used = attempt;
    if (report.passed) {
      outcome.program = std::move(*program);
      outcome.report = std::move(report);
      outcome.result = std::move(result);
      return outcome;
    }
    std::string fb = "attempt " + std::to_string(attempt) + " failed: " + report.summary();
    request.feedback.push_back(fb);
    outcome.feedback.push_back(std::move(fb));
    last = std::move(report);
  }
  throw SynthesisError(spec.name, std::move(last));
}

Table apply_operator(const OperatorSpec& spec, const dsl::Program& program, const OperatorInput& input, Mode mode,
                     const dsl::EvalLimits& limits) {
  switch (spec.kind) {
    case OperatorKind::Choose: return input.table;
    case OperatorKind::Augment: return mode == Mode::Fit ? augment(program, input.table, limits) : input.table;
    case OperatorKind::Select:
      return protect(dsl::evaluate(program, input.table, nullptr, limits), input.table, spec.protected_columns);
    case OperatorKind::AggFeatures:
      if (!input.aux) throw GraphError("node '" + spec.name + "': agg_features needs an auxiliary table");
      return dsl::evaluate(program, input.table, &*input.aux, limits);
    default: return dsl::evaluate(program, input.table, nullptr, limits);
  }
}

std::map<std::string, double> chosen_values(const dsl::Program& program) {
  return {program.choices.begin(), program.choices.end()};
}

}  // namespace sempipes
