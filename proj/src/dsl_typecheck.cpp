#include <algorithm>
#include <cmath>
#include <set>

#include "sempipes/dsl.hpp"
#include "sempipes/errors.hpp"

namespace sempipes::dsl {

namespace {

using MaybeKind = std::optional<Kind>;

std::string kind_text(MaybeKind k) { return k ? std::string(kind_name(*k)) : "null"; }

std::optional<Kind> literal_kind(const Cell& c) {
  if (std::holds_alternative<double>(c)) return Kind::Numeric;
  if (std::holds_alternative<bool>(c)) return Kind::Boolean;
  if (std::holds_alternative<std::string>(c)) return Kind::String;
  return std::nullopt;
}

class Checker {
 public:
  explicit Checker(Program& p) : p_(p) {}

  MaybeKind check(ExprId id, const Schema& env) {
    ExprNode& n = p_.nodes.at(id);
    n.kind = infer(n, env);
    return n.kind;
  }

  [[noreturn]] void fail(const ExprNode& n, const std::string& what) const {
    throw TypeError("type error at line " + std::to_string(n.line) + ", column " +
                    std::to_string(n.column) + ": " + what);
  }

  void require(const ExprNode& at, ExprId arg, const Schema& env, Kind want, std::string_view ctx) {
    const MaybeKind k = check(arg, env);
    if (k && *k != want)
      fail(at, std::string(ctx) + " expects " + std::string(kind_name(want)) + ", got " +
                   kind_text(k));
  }

  MaybeKind unify(const ExprNode& at, MaybeKind a, MaybeKind b, std::string_view ctx) const {
    if (!a) return b;
    if (!b) return a;
    if (*a != *b)
      fail(at, std::string(ctx) + " mixes " + kind_text(a) + " and " + kind_text(b));
    return a;
  }

 private:
  void arity(const ExprNode& n, std::size_t lo, std::size_t hi) const {
    if (n.args.size() < lo || n.args.size() > hi) {
      std::string want = lo == hi ? std::to_string(lo)
                                  : std::to_string(lo) + (hi == SIZE_MAX ? "+" : "-" + std::to_string(hi));
      fail(n, std::string(builtin_name(n.fn)) + " takes " + want + " argument(s), got " +
                  std::to_string(n.args.size()));
    }
  }

  MaybeKind infer(const ExprNode& n, const Schema& env) {
    switch (n.op) {
      case Op::Literal: return literal_kind(n.literal);
      case Op::Column: {
        auto it = env.find(n.name);
        if (it == env.end()) fail(n, "unknown column '" + n.name + "'");
        return it->second;
      }
      case Op::Regex: fail(n, "a regex literal is only allowed as a pattern argument");
      case Op::Neg:
        require(n, n.args[0], env, Kind::Numeric, "unary '-'");
        return Kind::Numeric;
      case Op::Add:
      case Op::Sub:
      case Op::Mul:
      case Op::Div: {
        static const char* names[] = {"'+'", "'-'", "'*'", "'/'"};
        const char* name = names[static_cast<int>(n.op) - static_cast<int>(Op::Add)];
        require(n, n.args[0], env, Kind::Numeric, name);
        require(n, n.args[1], env, Kind::Numeric, name);
        return Kind::Numeric;
      }
      case Op::Eq:
      case Op::Ne:
        unify(n, check(n.args[0], env), check(n.args[1], env), "comparison");
        return Kind::Boolean;
      case Op::Lt:
      case Op::Le:
      case Op::Gt:
      case Op::Ge: {
        const MaybeKind k = unify(n, check(n.args[0], env), check(n.args[1], env), "comparison");
        if (k == Kind::Boolean) fail(n, "ordering comparison on boolean values");
        return Kind::Boolean;
      }
      case Op::And:
      case Op::Or:
        require(n, n.args[0], env, Kind::Boolean, n.op == Op::And ? "'and'" : "'or'");
        require(n, n.args[1], env, Kind::Boolean, n.op == Op::And ? "'and'" : "'or'");
        return Kind::Boolean;
      case Op::Not:
        require(n, n.args[0], env, Kind::Boolean, "'not'");
        return Kind::Boolean;
      case Op::If:
        require(n, n.args[0], env, Kind::Boolean, "if condition");
        return unify(n, check(n.args[1], env), check(n.args[2], env), "if branches");
      case Op::Call: return call(n, env);
    }
    fail(n, "unknown expression");
  }

  MaybeKind call(const ExprNode& n, const Schema& env) {
    const std::string fname(builtin_name(n.fn));
    switch (n.fn) {
      case Builtin::Lowercase:
      case Builtin::Trim:
        arity(n, 1, 1);
        require(n, n.args[0], env, Kind::String, fname);
        return Kind::String;
      case Builtin::RegexReplace:
        arity(n, 3, 3);
        require(n, n.args[0], env, Kind::String, fname);
        require(n, n.args[2], env, Kind::String, fname);
        return Kind::String;
      case Builtin::RegexMatch:
        arity(n, 2, 2);
        require(n, n.args[0], env, Kind::String, fname);
        return Kind::Boolean;
      case Builtin::Contains:
        arity(n, 2, 2);
        require(n, n.args[0], env, Kind::String, fname);
        require(n, n.args[1], env, Kind::String, fname);
        return Kind::Boolean;
      case Builtin::SplitPart:
        arity(n, 3, 3);
        require(n, n.args[0], env, Kind::String, fname);
        require(n, n.args[1], env, Kind::String, fname);
        require(n, n.args[2], env, Kind::Numeric, fname);
        return Kind::String;
      case Builtin::Length:
        arity(n, 1, 1);
        require(n, n.args[0], env, Kind::String, fname);
        return Kind::Numeric;
      case Builtin::Log1p:
      case Builtin::Abs:
        arity(n, 1, 1);
        require(n, n.args[0], env, Kind::Numeric, fname);
        return Kind::Numeric;
      case Builtin::Clip:
        arity(n, 3, 3);
        for (ExprId a : n.args) require(n, a, env, Kind::Numeric, fname);
        return Kind::Numeric;
      case Builtin::IsMissing:
        arity(n, 1, 1);
        check(n.args[0], env);
        return Kind::Boolean;
      case Builtin::Coalesce: {
        arity(n, 1, SIZE_MAX);
        MaybeKind k;
        for (ExprId a : n.args) k = unify(n, k, check(a, env), fname);
        return k;
      }
      case Builtin::ToNumber:
        arity(n, 1, 1);
        check(n.args[0], env);
        return Kind::Numeric;
    }
    fail(n, "unknown function");
  }

  Program& p_;
};

[[noreturn]] void fail_program(const std::string& what) { throw TypeError("type error: " + what); }

// Columns whose kind is unconstrained (an all-null expression) default to
// numeric.
Kind concrete(MaybeKind k) { return k.value_or(Kind::Numeric); }

void check_literal_kind(const Cell& c, Kind want, const std::string& ctx) {
  const MaybeKind k = literal_kind(c);
  if (k && *k != want)
    fail_program(ctx + " expects " + std::string(kind_name(want)) + ", got " + kind_text(k));
}

}  // namespace

Program typecheck(Program p, const Schema& input, const Schema* aux) {
  Checker ck(p);
  Schema env = input;
  switch (p.kind) {
    case ProgramKind::FeatureMap: {
      if (p.bindings.empty()) fail_program("FeatureMap defines no features");
      for (const auto& b : p.bindings) {
        if (env.count(b.name))
          fail_program("duplicate output name '" + b.name + "'");
        env[b.name] = concrete(ck.check(b.expr, env));
      }
      break;
    }
    case ProgramKind::AggJoinPlan: {
      if (!aux) fail_program("AggJoinPlan needs a right-hand table");
      if (!p.join) fail_program("AggJoinPlan has no join statement");
      if (p.aggs.empty()) fail_program("AggJoinPlan defines no aggregations");
      auto lk = input.find(p.join->left);
      if (lk == input.end()) fail_program("unknown column '" + p.join->left + "' in left table");
      auto rk = aux->find(p.join->right);
      if (rk == aux->end()) fail_program("unknown column '" + p.join->right + "' in right table");
      if (lk->second != rk->second)
        fail_program("join keys have different kinds: " + std::string(kind_name(lk->second)) +
                     " and " + std::string(kind_name(rk->second)));
      Schema grouped{{p.join->right, rk->second}};
      for (const auto& a : p.aggs) {
        if (a.key != p.join->right)
          fail_program("aggregation '" + a.name + "' groups by '" + a.key +
                       "' but the join uses '" + p.join->right + "'");
        const Kind src = concrete(ck.check(a.source, *aux));
        if (!agg_accepts(a.function, src))
          fail_program(std::string(agg_function_name(a.function)) + " is a numeric aggregation, got " +
                       std::string(kind_name(src)) + " in '" + a.name + "'");
        if (grouped.count(a.name)) fail_program("duplicate output name '" + a.name + "'");
        grouped[a.name] = agg_output_kind(a.function, src);
      }
      for (const auto& b : p.bindings) {
        if (grouped.count(b.name)) fail_program("duplicate output name '" + b.name + "'");
        grouped[b.name] = concrete(ck.check(b.expr, grouped));
      }
      for (const auto& name : p.output_names())
        if (input.count(name))
          fail_program("output '" + name + "' collides with a left table column");
      break;
    }
    case ProgramKind::ExtractRules: {
      if (p.rules.empty()) fail_program("ExtractRules defines no rules");
      std::map<std::string, MaybeKind> emitted;
      for (auto& r : p.rules) {
        if (r.source.empty()) {
          std::vector<std::string> strings;
          for (const auto& [name, kind] : input)
            if (kind == Kind::String) strings.push_back(name);
          if (strings.size() != 1)
            fail_program("rule for '" + r.output + "' needs 'on COLUMN' (input has " +
                         std::to_string(strings.size()) + " string columns)");
          r.source = strings.front();
        }
        auto it = input.find(r.source);
        if (it == input.end()) fail_program("unknown column '" + r.source + "'");
        if (it->second != Kind::String)
          fail_program("rule source '" + r.source + "' must be string, got " +
                       std::string(kind_name(it->second)));
        if (input.count(r.output))
          fail_program("output '" + r.output + "' collides with an input column");
        MaybeKind k;
        if (r.emit_literal) {
          k = literal_kind(*r.emit_literal);
        } else {
          if (!r.regex)
            fail_program("keyword rule for '" + r.output + "' cannot emit a capture group");
          if (r.emit_group > p.regexes[*r.regex].group_count())
            fail_program("rule for '" + r.output + "' emits $" + std::to_string(r.emit_group) +
                         " but the pattern has " +
                         std::to_string(p.regexes[*r.regex].group_count()) + " group(s)");
          k = Kind::String;
        }
        auto [slot, inserted] = emitted.try_emplace(r.output, k);
        if (!inserted) {
          if (slot->second && k && *slot->second != *k)
            fail_program("rules for '" + r.output + "' emit both " + kind_text(slot->second) +
                         " and " + kind_text(k));
          if (!slot->second) slot->second = k;
        }
      }
      for (const auto& [name, value] : p.defaults) {
        auto it = emitted.find(name);
        if (it == emitted.end()) fail_program("default for '" + name + "' has no rule");
        const MaybeKind k = literal_kind(value);
        if (it->second && k && *it->second != *k)
          fail_program("default for '" + name + "' is " + kind_text(k) + " but rules emit " +
                       kind_text(it->second));
      }
      for (const auto& [name, _] : emitted) {
        const bool has_default = std::any_of(p.defaults.begin(), p.defaults.end(),
                                             [&](const auto& d) { return d.first == name; });
        if (!has_default) fail_program("output '" + name + "' has no default");
      }
      break;
    }
    case ProgramKind::AugmentPlan: {
      if (!p.augment) fail_program("AugmentPlan has no augment statement");
      if (p.augment->where) {
        const MaybeKind k = ck.check(*p.augment->where, env);
        if (k && *k != Kind::Boolean)
          fail_program("augment filter must be boolean, got " + kind_text(k));
      }
      for (const auto& [col, scale] : p.augment->jitter) {
        auto it = env.find(col);
        if (it == env.end()) fail_program("unknown column '" + col + "'");
        if (it->second != Kind::Numeric) fail_program("jitter column '" + col + "' is not numeric");
        if (!(scale >= 0.0)) fail_program("jitter scale for '" + col + "' must be nonnegative");
      }
      break;
    }
    case ProgramKind::ImputeRule: {
      if (!p.impute) fail_program("ImputeRule has no fill statement");
      const auto& s = *p.impute;
      auto it = env.find(s.column);
      if (it == env.end()) fail_program("unknown column '" + s.column + "'");
      const MaybeKind k = ck.check(s.expr, env);
      if (k && *k != it->second)
        fail_program("fill for '" + s.column + "' is " + kind_text(k) + " but the column is " +
                     std::string(kind_name(it->second)));
      const ExprNode& e = p.nodes[s.expr];
      const bool total = e.op == Op::Literal && !is_missing(e.literal);
      if (s.fallback) {
        if (is_missing(*s.fallback)) fail_program("fill fallback must not be null");
        check_literal_kind(*s.fallback, it->second, "fill fallback");
      } else if (!total) {
        fail_program("fill for '" + s.column + "' needs an 'else LITERAL' fallback");
      }
      break;
    }
    case ProgramKind::CleanRule: {
      if (p.bindings.empty()) fail_program("CleanRule has no clean statement");
      std::set<std::string> seen;
      for (const auto& b : p.bindings) {
        auto it = env.find(b.name);
        if (it == env.end()) fail_program("unknown column '" + b.name + "'");
        if (!seen.insert(b.name).second) fail_program("duplicate output name '" + b.name + "'");
        const MaybeKind k = ck.check(b.expr, env);
        if (k && *k != it->second)
          fail_program("clean must keep the kind of '" + b.name + "' (" +
                       std::string(kind_name(it->second)) + "), got " + kind_text(k));
      }
      break;
    }
    case ProgramKind::RefineRule: {
      if (p.bindings.empty() && p.drops.empty()) fail_program("RefineRule is empty");
      std::set<std::string> seen;
      for (const auto& b : p.bindings) {
        if (!seen.insert(b.name).second) fail_program("duplicate output name '" + b.name + "'");
        env[b.name] = concrete(ck.check(b.expr, env));
      }
      for (const auto& d : p.drops) {
        if (!env.count(d)) fail_program("unknown column '" + d + "'");
        if (seen.count(d)) fail_program("column '" + d + "' is both derived and dropped");
      }
      break;
    }
    case ProgramKind::SelectList: {
      if (p.selected.empty()) fail_program("SelectList selects no columns");
      std::set<std::string> seen;
      for (const auto& s : p.selected) {
        if (!env.count(s)) fail_program("unknown column '" + s + "'");
        if (!seen.insert(s).second) fail_program("column '" + s + "' selected twice");
      }
      break;
    }
    case ProgramKind::ChoiceMap: {
      if (p.choices.empty()) fail_program("ChoiceMap makes no choices");
      std::set<std::string> seen;
      for (const auto& [name, value] : p.choices) {
        if (!seen.insert(name).second) fail_program("parameter '" + name + "' chosen twice");
        if (!std::isfinite(value)) fail_program("parameter '" + name + "' is not finite");
      }
      break;
    }
  }
  p.typed = true;
  return p;
}

Schema output_schema(const Program& p, const Schema& input) {
  Schema out = input;
  auto kind_of = [&](ExprId id) { return concrete(p.nodes.at(id).kind); };
  switch (p.kind) {
    case ProgramKind::FeatureMap:
    case ProgramKind::RefineRule:
      for (const auto& b : p.bindings) out[b.name] = kind_of(b.expr);
      for (const auto& d : p.drops) out.erase(d);
      break;
    case ProgramKind::AggJoinPlan: {
      for (const auto& a : p.aggs) {
        const Kind src = kind_of(a.source);
        out[a.name] = agg_output_kind(a.function, src);
      }
      for (const auto& b : p.bindings) out[b.name] = kind_of(b.expr);
      break;
    }
    case ProgramKind::ExtractRules: {
      std::map<std::string, MaybeKind> kinds;
      auto note = [&](const std::string& name, MaybeKind k) {
        auto& slot = kinds[name];
        if (!slot) slot = k;
      };
      for (const auto& r : p.rules)
        note(r.output, r.emit_literal ? literal_kind(*r.emit_literal) : MaybeKind(Kind::String));
      for (const auto& [name, value] : p.defaults) note(name, literal_kind(value));
      // Outputs with only null emits fall back to string.
      for (const auto& [name, k] : kinds) out[name] = k.value_or(Kind::String);
      break;
    }
    case ProgramKind::SelectList: {
      Schema sel;
      for (const auto& s : p.selected) sel[s] = input.at(s);
      return sel;
    }
    default: break;
  }
  return out;
}

}  // namespace sempipes::dsl
