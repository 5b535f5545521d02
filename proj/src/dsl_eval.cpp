#include <algorithm>
#include <charconv>
#include <cmath>

#include "sempipes/dsl.hpp"
#include "sempipes/errors.hpp"

namespace sempipes::dsl {

EvalBudget::EvalBudget(const EvalLimits& limits)
    : limits_(limits), regex_(limits.max_regex_steps), start_(std::chrono::steady_clock::now()) {}

void EvalBudget::scan(std::size_t rows) {
  rows_scanned_ += rows;
  if (rows_scanned_ > limits_.max_rows_scanned) throw LimitExceeded("max_rows_scanned");
  if (std::chrono::steady_clock::now() - start_ > limits_.wall_time)
    throw LimitExceeded("wall_time");
}

namespace {

using Cells = std::vector<Cell>;

Cell number_or_missing(double v) {
  if (!std::isfinite(v)) return Cell{};
  return v;
}

std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out)
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  return out;
}

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return std::string(s.substr(b, e - b));
}

double codepoints(std::string_view s) {
  std::size_t n = 0;
  for (unsigned char c : s)
    if ((c & 0xC0) != 0x80) ++n;
  return static_cast<double>(n);
}

Cell parse_number(std::string_view s) {
  const std::string t = trim(s);
  if (t.empty()) return Cell{};
  const char* b = t.data();
  const char* e = t.data() + t.size();
  if (*b == '+') ++b;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || ptr != e) return Cell{};
  return number_or_missing(v);
}

Cell split_part(const std::string& s, const std::string& sep, double n) {
  if (!(n >= 1.0) || n != std::floor(n)) return Cell{};
  const auto want = static_cast<std::size_t>(n);
  if (sep.empty()) return want == 1 ? Cell{s} : Cell{};
  std::size_t start = 0;
  for (std::size_t part = 1;; ++part) {
    const std::size_t hit = s.find(sep, start);
    if (part == want) return s.substr(start, hit == std::string::npos ? std::string::npos : hit - start);
    if (hit == std::string::npos) return Cell{};
    start = hit + sep.size();
  }
}

class Evaluator {
 public:
  Evaluator(const Program& p, const Table& t, EvalBudget& budget) : p_(p), t_(t), budget_(budget) {}

  Cells eval(ExprId id) {
    const ExprNode& n = p_.nodes.at(id);
    const std::size_t rows = t_.row_count();
    budget_.scan(rows);
    switch (n.op) {
      case Op::Literal: return Cells(rows, n.literal);
      case Op::Column: return t_.column(n.name).cells();
      case Op::Regex: throw TypeError("regex literal evaluated as a value");
      case Op::Neg: {
        Cells a = eval(n.args[0]);
        for (auto& c : a)
          if (!is_missing(c)) c = -std::get<double>(c);
        return a;
      }
      case Op::Add:
      case Op::Sub:
      case Op::Mul:
      case Op::Div: {
        Cells a = eval(n.args[0]);
        const Cells b = eval(n.args[1]);
        for (std::size_t i = 0; i < rows; ++i) {
          if (is_missing(a[i]) || is_missing(b[i])) {
            a[i] = Cell{};
            continue;
          }
          const double x = std::get<double>(a[i]);
          const double y = std::get<double>(b[i]);
          switch (n.op) {
            case Op::Add: a[i] = number_or_missing(x + y); break;
            case Op::Sub: a[i] = number_or_missing(x - y); break;
            case Op::Mul: a[i] = number_or_missing(x * y); break;
            default: a[i] = y == 0.0 ? Cell{} : number_or_missing(x / y);
          }
        }
        return a;
      }
      case Op::Eq:
      case Op::Ne:
      case Op::Lt:
      case Op::Le:
      case Op::Gt:
      case Op::Ge: {
        Cells a = eval(n.args[0]);
        const Cells b = eval(n.args[1]);
        for (std::size_t i = 0; i < rows; ++i) {
          if (is_missing(a[i]) || is_missing(b[i])) {
            a[i] = Cell{};
            continue;
          }
          const int c = compare_cells(a[i], b[i]);
          bool r = false;
          switch (n.op) {
            case Op::Eq: r = c == 0; break;
            case Op::Ne: r = c != 0; break;
            case Op::Lt: r = c < 0; break;
            case Op::Le: r = c <= 0; break;
            case Op::Gt: r = c > 0; break;
            default: r = c >= 0;
          }
          a[i] = r;
        }
        return a;
      }
      case Op::And:
      case Op::Or: {
        // Kleene logic: a decisive operand wins over a missing one.
        Cells a = eval(n.args[0]);
        const Cells b = eval(n.args[1]);
        const bool decisive = n.op == Op::Or;
        for (std::size_t i = 0; i < rows; ++i) {
          const bool am = is_missing(a[i]);
          const bool bm = is_missing(b[i]);
          if ((!am && std::get<bool>(a[i]) == decisive) || (!bm && std::get<bool>(b[i]) == decisive))
            a[i] = decisive;
          else if (am || bm)
            a[i] = Cell{};
          else
            a[i] = !decisive;
        }
        return a;
      }
      case Op::Not: {
        Cells a = eval(n.args[0]);
        for (auto& c : a)
          if (!is_missing(c)) c = !std::get<bool>(c);
        return a;
      }
      case Op::If: {
        const Cells cond = eval(n.args[0]);
        const Cells yes = eval(n.args[1]);
        Cells no = eval(n.args[2]);
        for (std::size_t i = 0; i < rows; ++i) {
          if (is_missing(cond[i])) no[i] = Cell{};
          else if (std::get<bool>(cond[i])) no[i] = yes[i];
        }
        return no;
      }
      case Op::Call: return call(n);
    }
    throw TypeError("unknown expression");
  }

 private:
  Cells call(const ExprNode& n) {
    const std::size_t rows = t_.row_count();
    auto str = [](const Cell& c) -> const std::string& { return std::get<std::string>(c); };
    auto num = [](const Cell& c) { return std::get<double>(c); };
    switch (n.fn) {
      case Builtin::Lowercase:
      case Builtin::Trim: {
        Cells a = eval(n.args[0]);
        for (auto& c : a)
          if (!is_missing(c)) c = n.fn == Builtin::Lowercase ? ascii_lower(str(c)) : trim(str(c));
        return a;
      }
      case Builtin::RegexReplace: {
        Cells a = eval(n.args[0]);
        const Cells rep = eval(n.args[2]);
        const Regex& re = regex_of(n.args[1]);
        for (std::size_t i = 0; i < rows; ++i) {
          if (is_missing(a[i])) continue;
          if (is_missing(rep[i])) {
            a[i] = Cell{};
            continue;
          }
          a[i] = re.replace_all(str(a[i]), str(rep[i]), budget_.regex());
        }
        return a;
      }
      case Builtin::RegexMatch: {
        Cells a = eval(n.args[0]);
        const Regex& re = regex_of(n.args[1]);
        for (auto& c : a)
          if (!is_missing(c)) c = re.contains_match(str(c), budget_.regex());
        return a;
      }
      case Builtin::Contains: {
        Cells a = eval(n.args[0]);
        const Cells sub = eval(n.args[1]);
        for (std::size_t i = 0; i < rows; ++i) {
          if (is_missing(a[i]) || is_missing(sub[i])) a[i] = Cell{};
          else a[i] = str(a[i]).find(str(sub[i])) != std::string::npos;
        }
        return a;
      }
      case Builtin::SplitPart: {
        Cells a = eval(n.args[0]);
        const Cells sep = eval(n.args[1]);
        const Cells idx = eval(n.args[2]);
        for (std::size_t i = 0; i < rows; ++i) {
          if (is_missing(a[i]) || is_missing(sep[i]) || is_missing(idx[i])) a[i] = Cell{};
          else a[i] = split_part(str(a[i]), str(sep[i]), num(idx[i]));
        }
        return a;
      }
      case Builtin::Length: {
        Cells a = eval(n.args[0]);
        for (auto& c : a)
          if (!is_missing(c)) c = codepoints(str(c));
        return a;
      }
      case Builtin::Log1p: {
        Cells a = eval(n.args[0]);
        for (auto& c : a) {
          if (is_missing(c)) continue;
          const double x = num(c);
          c = x < 0.0 ? Cell{} : number_or_missing(std::log1p(x));
        }
        return a;
      }
      case Builtin::Abs: {
        Cells a = eval(n.args[0]);
        for (auto& c : a)
          if (!is_missing(c)) c = std::fabs(num(c));
        return a;
      }
      case Builtin::Clip: {
        Cells a = eval(n.args[0]);
        const Cells lo = eval(n.args[1]);
        const Cells hi = eval(n.args[2]);
        for (std::size_t i = 0; i < rows; ++i) {
          if (is_missing(a[i]) || is_missing(lo[i]) || is_missing(hi[i]) || num(lo[i]) > num(hi[i]))
            a[i] = Cell{};
          else
            a[i] = std::min(std::max(num(a[i]), num(lo[i])), num(hi[i]));
        }
        return a;
      }
      case Builtin::IsMissing: {
        Cells a = eval(n.args[0]);
        for (auto& c : a) c = is_missing(c);
        return a;
      }
      case Builtin::Coalesce: {
        Cells a = eval(n.args[0]);
        for (std::size_t k = 1; k < n.args.size(); ++k) {
          if (std::none_of(a.begin(), a.end(), [](const Cell& c) { return is_missing(c); })) break;
          const Cells b = eval(n.args[k]);
          for (std::size_t i = 0; i < rows; ++i)
            if (is_missing(a[i])) a[i] = b[i];
        }
        return a;
      }
      case Builtin::ToNumber: {
        Cells a = eval(n.args[0]);
        for (auto& c : a) {
          if (auto* b = std::get_if<bool>(&c)) c = *b ? 1.0 : 0.0;
          else if (auto* s = std::get_if<std::string>(&c)) c = parse_number(*s);
        }
        return a;
      }
    }
    throw TypeError("unknown function");
  }

  const Regex& regex_of(ExprId id) const { return p_.regexes.at(p_.nodes.at(id).regex); }

  const Program& p_;
  const Table& t_;
  EvalBudget& budget_;
};

Kind kind_or_numeric(const Program& p, ExprId id) { return p.nodes.at(id).kind.value_or(Kind::Numeric); }

Table apply_bindings(const Program& p, Table t, EvalBudget& budget, bool replace_only) {
  for (const auto& b : p.bindings) {
    Cells cells = Evaluator(p, t, budget).eval(b.expr);
    Kind kind = kind_or_numeric(p, b.expr);
    if (replace_only) kind = t.column(b.name).kind();
    Column col(b.name, kind, std::move(cells));
    t = t.has(b.name) ? t.with_replaced(std::move(col)) : t.with_column(std::move(col));
  }
  return t;
}

Table eval_agg_join(const Program& p, const Table& left, const Table& right, EvalBudget& budget) {
  const std::string& key = p.join->right;
  std::vector<Column> staged{right.column(key)};
  std::vector<AggSpec> specs;
  for (std::size_t i = 0; i < p.aggs.size(); ++i) {
    const auto& a = p.aggs[i];
    const ExprNode& src = p.nodes.at(a.source);
    std::string name;
    if (src.op == Op::Column && src.name != key) {
      name = src.name;
      if (std::none_of(staged.begin(), staged.end(), [&](const Column& c) { return c.name() == name; }))
        staged.push_back(right.column(name));
    } else {
      name = "\x01src" + std::to_string(i);
      staged.emplace_back(name, kind_or_numeric(p, a.source), Evaluator(p, right, budget).eval(a.source));
    }
    specs.push_back(AggSpec{name, a.function, a.name});
  }
  budget.scan(right.row_count());
  Table grouped = group_aggregate(Table(std::move(staged)), key, specs);
  grouped = apply_bindings(p, grouped, budget, false);
  budget.scan(left.row_count());
  return left_outer_join(left, p.join->left, grouped, key);
}

Table eval_extract(const Program& p, const Table& t, EvalBudget& budget) {
  const Schema out_kinds = output_schema(p, t.schema());
  std::vector<std::string> outputs;
  for (const auto& r : p.rules)
    if (std::find(outputs.begin(), outputs.end(), r.output) == outputs.end()) outputs.push_back(r.output);

  Table out = t;
  for (const auto& name : outputs) {
    budget.scan(t.row_count());
    Cell fallback;
    for (const auto& [d, v] : p.defaults)
      if (d == name) fallback = v;
    std::vector<const ExtractRule*> rules;
    for (const auto& r : p.rules)
      if (r.output == name) rules.push_back(&r);
    std::vector<std::string> lowered_keywords;

    Cells cells(t.row_count(), fallback);
    for (std::size_t i = 0; i < t.row_count(); ++i) {
      for (const ExtractRule* r : rules) {
        const Cell& src = t.column(r->source)[i];
        if (is_missing(src)) continue;
        const std::string& text = std::get<std::string>(src);
        if (r->regex) {
          auto m = p.regexes[*r->regex].search(text, budget.regex());
          if (!m) continue;
          if (r->emit_literal) {
            cells[i] = *r->emit_literal;
          } else {
            auto g = m->group(text, r->emit_group);
            cells[i] = g ? Cell{std::string(*g)} : Cell{};
          }
          break;
        }
        const std::string lower = ascii_lower(text);
        const bool hit = std::any_of(r->keywords.begin(), r->keywords.end(), [&](const std::string& k) {
          return lower.find(ascii_lower(k)) != std::string::npos;
        });
        if (hit) {
          cells[i] = *r->emit_literal;
          break;
        }
      }
    }
    out = out.with_column(Column(name, out_kinds.at(name), std::move(cells)));
  }
  return out;
}

Table eval_impute(const Program& p, const Table& t, EvalBudget& budget) {
  const auto& s = *p.impute;
  const Column& col = t.column(s.column);
  const Cells filled = Evaluator(p, t, budget).eval(s.expr);
  Cells cells = col.cells();
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (!is_missing(cells[i])) continue;
    if (!is_missing(filled[i])) cells[i] = filled[i];
    else if (s.fallback) cells[i] = *s.fallback;
  }
  return t.with_replaced(Column(s.column, col.kind(), std::move(cells)));
}

}  // namespace

std::vector<Cell> evaluate_expr(const Program& typed, ExprId expr, const Table& t, EvalBudget& budget) {
  if (!typed.typed) throw TypeError("evaluate_expr needs a type-checked program");
  return Evaluator(typed, t, budget).eval(expr);
}

Table evaluate(const Program& program, const Table& input, const Table* aux, const EvalLimits& limits) {
  Schema aux_schema;
  if (aux) aux_schema = aux->schema();
  const Program p = typecheck(program, input.schema(), aux ? &aux_schema : nullptr);
  EvalBudget budget(limits);
  switch (p.kind) {
    case ProgramKind::FeatureMap: return apply_bindings(p, input, budget, false);
    case ProgramKind::AggJoinPlan: return eval_agg_join(p, input, *aux, budget);
    case ProgramKind::ExtractRules: return eval_extract(p, input, budget);
    case ProgramKind::ImputeRule: return eval_impute(p, input, budget);
    case ProgramKind::CleanRule: return apply_bindings(p, input, budget, true);
    case ProgramKind::RefineRule: {
      Table t = apply_bindings(p, input, budget, false);
      return t.without(p.drops);
    }
    case ProgramKind::SelectList: return input.select(p.selected);
    case ProgramKind::AugmentPlan:
    case ProgramKind::ChoiceMap: return input;
  }
  return input;
}

}  // namespace sempipes::dsl
