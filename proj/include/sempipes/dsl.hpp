#pragma once

// The transformation DSL in which every synthesized operator state is
// written. Programs are line-oriented text with a versioned header:
//
//   dslv1 FeatureMap
//   feature ratio = amount / (n_items + 1)
//
// Parsing, type checking and evaluation are pure functions. The interpreter
// only walks the AST: no I/O, no loops, no recursion in user code, and every
// regex runs on a step-bounded VM.

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sempipes/regex.hpp"
#include "sempipes/table.hpp"

namespace sempipes::dsl {

inline constexpr std::size_t kMaxAstNodes = 10000;
inline constexpr std::string_view kHeader = "dslv1";

enum class ProgramKind {
  FeatureMap,
  AggJoinPlan,
  ExtractRules,
  AugmentPlan,
  ImputeRule,
  CleanRule,
  RefineRule,
  SelectList,
  ChoiceMap,
};

std::string_view program_kind_name(ProgramKind kind);
std::optional<ProgramKind> parse_program_kind(std::string_view name);

enum class Op : std::uint8_t {
  Literal,
  Column,
  Regex,
  Neg,
  Add,
  Sub,
  Mul,
  Div,
  Eq,
  Ne,
  Lt,
  Le,
  Gt,
  Ge,
  And,
  Or,
  Not,
  If,
  Call,
};

enum class Builtin : std::uint8_t {
  Lowercase,
  Trim,
  RegexReplace,
  RegexMatch,
  Contains,
  SplitPart,
  Length,
  Log1p,
  Abs,
  Clip,
  IsMissing,
  Coalesce,
  ToNumber,
};

std::string_view builtin_name(Builtin fn);

using ExprId = std::uint32_t;

struct ExprNode {
  Op op = Op::Literal;
  Builtin fn = Builtin::Lowercase;
  Cell literal;             // Literal
  std::string name;         // Column
  std::uint32_t regex = 0;  // Regex: index into Program::regexes
  std::vector<ExprId> args;
  // Filled by the type checker; nullopt after checking means the `null`
  // literal, which unifies with any kind.
  std::optional<Kind> kind;
  std::uint32_t line = 0;
  std::uint32_t column = 0;
};

struct Binding {
  std::string name;
  ExprId expr = 0;
};

struct AggBinding {
  std::string name;
  AggFunction function = AggFunction::Count;
  ExprId source = 0;
  std::string key;
};

struct JoinKeys {
  std::string left;
  std::string right;
};

struct ExtractRule {
  std::string output;
  std::string source;  // empty until resolved by the type checker
  std::optional<std::uint32_t> regex;
  std::vector<std::string> keywords;
  // Either a literal or a capture group reference.
  std::optional<Cell> emit_literal;
  std::uint32_t emit_group = 0;
};

struct AugmentSpec {
  std::size_t rows = 0;
  std::optional<ExprId> where;
  std::vector<std::pair<std::string, double>> jitter;
  std::uint64_t seed = 0;
};

struct ImputeSpec {
  std::string column;
  ExprId expr = 0;
  std::optional<Cell> fallback;
};

using Schema = std::map<std::string, Kind>;

/// A parsed program. Which body fields are populated depends on `kind`.
struct Program {
  ProgramKind kind = ProgramKind::FeatureMap;
  std::string source_text;
  std::string commentary;

  std::vector<ExprNode> nodes;
  std::vector<Regex> regexes;

  // FeatureMap features, AggJoinPlan post-aggregation features, CleanRule
  // assignments and RefineRule derivations, in source order.
  std::vector<Binding> bindings;
  std::optional<JoinKeys> join;
  std::vector<AggBinding> aggs;
  std::vector<ExtractRule> rules;
  std::vector<std::pair<std::string, Cell>> defaults;
  std::optional<AugmentSpec> augment;
  std::optional<ImputeSpec> impute;
  std::vector<std::string> drops;
  std::vector<std::string> selected;
  std::vector<std::pair<std::string, double>> choices;

  bool typed = false;

  std::size_t node_count() const;
  /// Names of the columns this program adds or rewrites, in order.
  std::vector<std::string> output_names() const;
};

/// Parses `source`; the header must name `expected_kind`.
/// Throws ParseError (syntax, with line/column), TypeError (kind mismatch)
/// or SchemaError (size cap).
Program parse(std::string_view source, ProgramKind expected_kind);

/// Resolves references and annotates every expression with a kind.
/// `aux` is the right-hand table schema for AggJoinPlan.
/// Throws TypeError.
Program typecheck(Program program, const Schema& input, const Schema* aux = nullptr);

/// Kind map of the table `evaluate` would produce.
Schema output_schema(const Program& typed, const Schema& input);

struct EvalLimits {
  std::uint64_t max_rows_scanned = 50'000'000;
  std::uint64_t max_regex_steps = 500'000'000;
  std::chrono::milliseconds wall_time{60'000};
};

/// Shared accounting for one evaluation. Throws LimitExceeded naming the
/// exhausted budget.
class EvalBudget {
 public:
  explicit EvalBudget(const EvalLimits& limits);
  void scan(std::size_t rows);
  RegexBudget& regex() { return regex_; }

 private:
  EvalLimits limits_;
  std::uint64_t rows_scanned_ = 0;
  RegexBudget regex_;
  std::chrono::steady_clock::time_point start_;
};

/// Vectorized evaluation of one typed expression over every row of `t`.
std::vector<Cell> evaluate_expr(const Program& typed, ExprId expr, const Table& t,
                                EvalBudget& budget);

/// Runs a program. FeatureMap, ExtractRules, ImputeRule, CleanRule,
/// RefineRule and SelectList take one table; AggJoinPlan takes the left
/// table and `aux`. AugmentPlan and ChoiceMap are applied by the semantic
/// operator layer. The program is type checked against the inputs first.
/// Arithmetic faults become missing cells.
Table evaluate(const Program& program, const Table& input, const Table* aux = nullptr,
               const EvalLimits& limits = {});

/// Grammar reference shipped to synthesizers.
std::string_view grammar_text();

}  // namespace sempipes::dsl
