#include <cctype>
#include <charconv>
#include <set>

#include "sempipes/dsl.hpp"
#include "sempipes/errors.hpp"

namespace sempipes::dsl {

std::string_view program_kind_name(ProgramKind kind) {
  switch (kind) {
    case ProgramKind::FeatureMap: return "FeatureMap";
    case ProgramKind::AggJoinPlan: return "AggJoinPlan";
    case ProgramKind::ExtractRules: return "ExtractRules";
    case ProgramKind::AugmentPlan: return "AugmentPlan";
    case ProgramKind::ImputeRule: return "ImputeRule";
    case ProgramKind::CleanRule: return "CleanRule";
    case ProgramKind::RefineRule: return "RefineRule";
    case ProgramKind::SelectList: return "SelectList";
    case ProgramKind::ChoiceMap: return "ChoiceMap";
  }
  return "?";
}

std::optional<ProgramKind> parse_program_kind(std::string_view name) {
  for (auto k : {ProgramKind::FeatureMap, ProgramKind::AggJoinPlan, ProgramKind::ExtractRules,
                 ProgramKind::AugmentPlan, ProgramKind::ImputeRule, ProgramKind::CleanRule,
                 ProgramKind::RefineRule, ProgramKind::SelectList, ProgramKind::ChoiceMap})
    if (program_kind_name(k) == name) return k;
  return std::nullopt;
}

std::string_view builtin_name(Builtin fn) {
  switch (fn) {
    case Builtin::Lowercase: return "lowercase";
    case Builtin::Trim: return "trim";
    case Builtin::RegexReplace: return "regex_replace";
    case Builtin::RegexMatch: return "regex_match";
    case Builtin::Contains: return "contains";
    case Builtin::SplitPart: return "split_part";
    case Builtin::Length: return "length";
    case Builtin::Log1p: return "log1p";
    case Builtin::Abs: return "abs";
    case Builtin::Clip: return "clip";
    case Builtin::IsMissing: return "is_missing";
    case Builtin::Coalesce: return "coalesce";
    case Builtin::ToNumber: return "to_number";
  }
  return "?";
}

namespace {

std::optional<Builtin> parse_builtin(std::string_view name) {
  for (auto fn : {Builtin::Lowercase, Builtin::Trim, Builtin::RegexReplace, Builtin::RegexMatch,
                  Builtin::Contains, Builtin::SplitPart, Builtin::Length, Builtin::Log1p,
                  Builtin::Abs, Builtin::Clip, Builtin::IsMissing, Builtin::Coalesce,
                  Builtin::ToNumber})
    if (builtin_name(fn) == name) return fn;
  return std::nullopt;
}

constexpr std::size_t kMaxNesting = 200;

enum class Tok {
  End,
  Ident,
  QuotedIdent,
  Number,
  String,
  Capture,
  Punct,
};

struct Token {
  Tok type = Tok::End;
  std::string text;
  double number = 0.0;
  std::uint32_t column = 0;
};

// Lexer over a single source line. Regex literals are context dependent, so
// the parser asks for them explicitly with `regex_literal`.
class LineLexer {
 public:
  LineLexer(std::string_view line, std::uint32_t line_no) : s_(line), line_(line_no) {}

  const Token& peek() {
    if (!lookahead_) lookahead_ = lex();
    return *lookahead_;
  }
  Token next() {
    Token t = peek();
    lookahead_.reset();
    return t;
  }

  bool at_regex() {
    skip_space();
    return !lookahead_ && pos_ < s_.size() && s_[pos_] == '/';
  }

  // Reads /.../flags at the current position.
  std::pair<std::string, bool> regex_literal() {
    skip_space();
    const std::uint32_t col = static_cast<std::uint32_t>(pos_ + 1);
    if (pos_ >= s_.size() || s_[pos_] != '/') fail("expected a /regex/", col);
    ++pos_;
    std::string body;
    while (true) {
      if (pos_ >= s_.size()) fail("unterminated regex literal", col);
      const char c = s_[pos_++];
      if (c == '\\' && pos_ < s_.size() && s_[pos_] == '/') {
        body.push_back('/');
        ++pos_;
        continue;
      }
      if (c == '\\' && pos_ < s_.size()) {
        body.push_back(c);
        body.push_back(s_[pos_++]);
        continue;
      }
      if (c == '/') break;
      body.push_back(c);
    }
    bool icase = false;
    while (pos_ < s_.size() && std::isalpha(static_cast<unsigned char>(s_[pos_]))) {
      if (s_[pos_] != 'i') fail(std::string("unknown regex flag '") + s_[pos_] + "'", pos_ + 1);
      icase = true;
      ++pos_;
    }
    return {body, icase};
  }

  std::uint32_t line() const { return line_; }
  std::uint32_t column() {
    skip_space();
    return lookahead_ ? lookahead_->column : static_cast<std::uint32_t>(pos_ + 1);
  }

  [[noreturn]] void fail(const std::string& what, std::size_t column) const {
    throw ParseError("syntax error: " + what, line_, column);
  }

 private:
  void skip_space() {
    while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t' || s_[pos_] == '\r')) ++pos_;
    if (pos_ < s_.size() && s_[pos_] == '#') pos_ = s_.size();
  }

  Token lex() {
    skip_space();
    Token t;
    t.column = static_cast<std::uint32_t>(pos_ + 1);
    if (pos_ >= s_.size()) return t;
    const char c = s_[pos_];
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      const std::size_t b = pos_;
      while (pos_ < s_.size() &&
             (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_'))
        ++pos_;
      t.type = Tok::Ident;
      t.text = std::string(s_.substr(b, pos_ - b));
      return t;
    }
    if (c == '`') {
      const std::size_t e = s_.find('`', pos_ + 1);
      if (e == std::string_view::npos) fail("unterminated `name`", t.column);
      t.type = Tok::QuotedIdent;
      t.text = std::string(s_.substr(pos_ + 1, e - pos_ - 1));
      if (t.text.empty()) fail("empty `name`", t.column);
      pos_ = e + 1;
      return t;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) ||
        (c == '.' && pos_ + 1 < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_ + 1])))) {
      const std::size_t b = pos_;
      while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
      if (pos_ < s_.size() && s_[pos_] == '.') {
        ++pos_;
        while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
      }
      if (pos_ < s_.size() && (s_[pos_] == 'e' || s_[pos_] == 'E')) {
        std::size_t p = pos_ + 1;
        if (p < s_.size() && (s_[p] == '+' || s_[p] == '-')) ++p;
        if (p < s_.size() && std::isdigit(static_cast<unsigned char>(s_[p]))) {
          pos_ = p;
          while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
        }
      }
      t.type = Tok::Number;
      t.text = std::string(s_.substr(b, pos_ - b));
      auto [ptr, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), t.number);
      if (ec != std::errc() || ptr != t.text.data() + t.text.size())
        fail("bad number '" + t.text + "'", t.column);
      return t;
    }
    if (c == '"') {
      ++pos_;
      std::string out;
      while (true) {
        if (pos_ >= s_.size()) fail("unterminated string", t.column);
        const char d = s_[pos_++];
        if (d == '"') break;
        if (d == '\\') {
          if (pos_ >= s_.size()) fail("unterminated string", t.column);
          const char e = s_[pos_++];
          switch (e) {
            case 'n': out.push_back('\n'); break;
            case 't': out.push_back('\t'); break;
            case '\\': out.push_back('\\'); break;
            case '"': out.push_back('"'); break;
            default:
              out.push_back('\\');
              out.push_back(e);
          }
          continue;
        }
        out.push_back(d);
      }
      t.type = Tok::String;
      t.text = std::move(out);
      return t;
    }
    if (c == '$') {
      const std::size_t b = ++pos_;
      while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
      if (pos_ == b) fail("expected a group number after '$'", t.column);
      t.type = Tok::Capture;
      t.text = std::string(s_.substr(b, pos_ - b));
      t.number = std::stod(t.text);
      return t;
    }
    static constexpr std::string_view two[] = {"==", "!=", "<=", ">=", "->"};
    for (auto op : two) {
      if (s_.substr(pos_, 2) == op) {
        pos_ += 2;
        t.type = Tok::Punct;
        t.text = std::string(op);
        return t;
      }
    }
    if (std::string_view("=<>+-*/(),:[]").find(c) != std::string_view::npos) {
      ++pos_;
      t.type = Tok::Punct;
      t.text = std::string(1, c);
      return t;
    }
    fail(std::string("unexpected character '") + c + "'", t.column);
  }

  std::string_view s_;
  std::uint32_t line_;
  std::size_t pos_ = 0;
  std::optional<Token> lookahead_;
};

std::string describe(const Token& t) {
  switch (t.type) {
    case Tok::End: return "end of line";
    case Tok::String: return "'\"" + t.text + "\"'";
    case Tok::Capture: return "'$" + t.text + "'";
    case Tok::QuotedIdent: return "'`" + t.text + "`'";
    default: return "'" + t.text + "'";
  }
}

class Parser {
 public:
  Parser(Program& prog) : prog_(prog) {}

  void statement(LineLexer& lx) {
    const Token head = lx.next();
    if (head.type != Tok::Ident) error(lx, head, "expected a statement keyword");
    const std::string& kw = head.text;
    switch (prog_.kind) {
      case ProgramKind::FeatureMap:
        if (kw == "feature") return binding(lx);
        break;
      case ProgramKind::AggJoinPlan:
        if (kw == "feature") return binding(lx);
        if (kw == "agg") return agg(lx);
        if (kw == "join") return join(lx);
        break;
      case ProgramKind::ExtractRules:
        if (kw == "rule") return rule(lx);
        if (kw == "default") return default_emit(lx);
        break;
      case ProgramKind::AugmentPlan:
        if (kw == "augment") return augment(lx);
        if (kw == "jitter") return jitter(lx);
        if (kw == "seed") return seed(lx);
        break;
      case ProgramKind::ImputeRule:
        if (kw == "fill") return fill(lx);
        break;
      case ProgramKind::CleanRule:
        if (kw == "clean") return binding(lx);
        break;
      case ProgramKind::RefineRule:
        if (kw == "derive") return binding(lx);
        if (kw == "drop") return drop(lx);
        break;
      case ProgramKind::SelectList:
        if (kw == "select") return select(lx);
        break;
      case ProgramKind::ChoiceMap:
        if (kw == "choose") return choose(lx);
        break;
    }
    error(lx, head, "'" + kw + "' is not a statement of a " +
                        std::string(program_kind_name(prog_.kind)) + " program");
  }

  void finish(LineLexer& lx) {
    const Token t = lx.next();
    if (t.type != Tok::End) error(lx, t, "expected end of line");
  }

 private:
  [[noreturn]] void error(LineLexer& lx, const Token& at, const std::string& what) {
    throw ParseError("syntax error at token " + describe(at) + ": " + what, lx.line(),
                     at.column ? at.column : lx.column());
  }

  std::string name(LineLexer& lx, const char* what) {
    const Token t = lx.next();
    if (t.type != Tok::Ident && t.type != Tok::QuotedIdent)
      error(lx, t, std::string("expected ") + what);
    return t.text;
  }

  void expect(LineLexer& lx, std::string_view punct) {
    const Token t = lx.next();
    if (t.type != Tok::Punct || t.text != punct)
      error(lx, t, "expected '" + std::string(punct) + "'");
  }

  bool accept(LineLexer& lx, std::string_view punct) {
    const Token& t = lx.peek();
    if (t.type == Tok::Punct && t.text == punct) {
      lx.next();
      return true;
    }
    return false;
  }

  bool accept_keyword(LineLexer& lx, std::string_view kw) {
    const Token& t = lx.peek();
    if (t.type == Tok::Ident && t.text == kw) {
      lx.next();
      return true;
    }
    return false;
  }

  ExprId add_node(LineLexer& lx, ExprNode n, std::uint32_t column) {
    if (prog_.nodes.size() + 1 > kMaxAstNodes)
      throw SchemaError("program exceeds the AST size cap of " + std::to_string(kMaxAstNodes) +
                        " nodes (line " + std::to_string(lx.line()) + ")");
    n.line = lx.line();
    n.column = column;
    prog_.nodes.push_back(std::move(n));
    return static_cast<ExprId>(prog_.nodes.size() - 1);
  }

  std::uint32_t add_regex(LineLexer& lx, const std::string& pattern, bool icase,
                          std::uint32_t column) {
    try {
      prog_.regexes.push_back(Regex::compile(pattern, icase));
    } catch (const ParseError& e) {
      throw ParseError(std::string("syntax error in regex /") + pattern + "/: " + e.what(),
                       lx.line(), column);
    }
    return static_cast<std::uint32_t>(prog_.regexes.size() - 1);
  }

  Cell literal(LineLexer& lx) {
    bool negative = accept(lx, "-");
    const Token t = lx.next();
    if (t.type == Tok::Number) return negative ? -t.number : t.number;
    if (negative) error(lx, t, "expected a number");
    if (t.type == Tok::String) return t.text;
    if (t.type == Tok::Ident) {
      if (t.text == "true") return true;
      if (t.text == "false") return false;
      if (t.text == "null") return Cell{};
    }
    error(lx, t, "expected a literal");
  }

  double number(LineLexer& lx) {
    const bool negative = accept(lx, "-");
    const Token t = lx.next();
    if (t.type != Tok::Number) error(lx, t, "expected a number");
    return negative ? -t.number : t.number;
  }

  // ---- statements

  void binding(LineLexer& lx) {
    Binding b;
    b.name = name(lx, "a name");
    expect(lx, "=");
    b.expr = expr(lx, 0);
    prog_.bindings.push_back(std::move(b));
  }

  void agg(LineLexer& lx) {
    AggBinding a;
    a.name = name(lx, "an aggregate name");
    expect(lx, "=");
    const Token fn = lx.next();
    auto f = fn.type == Tok::Ident ? parse_agg_function(fn.text) : std::nullopt;
    if (!f) error(lx, fn, "expected an aggregate function (sum, mean, min, max, std, count, nunique, mode)");
    a.function = *f;
    expect(lx, "(");
    a.source = expr(lx, 0);
    expect(lx, ")");
    const Token by = lx.next();
    if (by.type != Tok::Ident || by.text != "by") error(lx, by, "expected 'by'");
    a.key = name(lx, "a group key");
    prog_.aggs.push_back(std::move(a));
  }

  void join(LineLexer& lx) {
    if (prog_.join) error(lx, lx.peek(), "duplicate join statement");
    JoinKeys k;
    k.left = name(lx, "the left join key");
    expect(lx, "=");
    k.right = name(lx, "the right join key");
    prog_.join = std::move(k);
  }

  void rule(LineLexer& lx) {
    ExtractRule r;
    r.output = name(lx, "an output column");
    expect(lx, ":");
    const std::uint32_t col = lx.column();
    if (lx.at_regex()) {
      auto [body, icase] = lx.regex_literal();
      r.regex = add_regex(lx, body, icase, col);
    } else if (accept(lx, "[")) {
      do {
        const Token t = lx.next();
        if (t.type != Tok::String) error(lx, t, "expected a keyword string");
        if (t.text.empty()) error(lx, t, "keywords must be nonempty");
        r.keywords.push_back(t.text);
      } while (accept(lx, ","));
      expect(lx, "]");
    } else {
      error(lx, lx.peek(), "expected a /regex/ or a [\"keyword\", ...] list");
    }
    if (accept_keyword(lx, "on")) r.source = name(lx, "a source column");
    expect(lx, "->");
    if (lx.peek().type == Tok::Capture) {
      r.emit_group = static_cast<std::uint32_t>(lx.next().number);
    } else {
      r.emit_literal = literal(lx);
    }
    prog_.rules.push_back(std::move(r));
  }

  void default_emit(LineLexer& lx) {
    std::string out = name(lx, "an output column");
    expect(lx, "=");
    Cell v = literal(lx);
    for (const auto& [n, _] : prog_.defaults)
      if (n == out) error(lx, lx.peek(), "duplicate default for '" + out + "'");
    prog_.defaults.emplace_back(std::move(out), std::move(v));
  }

  AugmentSpec& augment_spec() {
    if (!prog_.augment) prog_.augment = AugmentSpec{};
    return *prog_.augment;
  }

  void augment(LineLexer& lx) {
    const Token t = lx.next();
    if (t.type != Tok::Number || t.number < 0 || t.number != static_cast<double>(static_cast<std::size_t>(t.number)))
      error(lx, t, "expected a nonnegative row count");
    if (augment_done_) error(lx, t, "duplicate augment statement");
    augment_done_ = true;
    augment_spec().rows = static_cast<std::size_t>(t.number);
    if (accept_keyword(lx, "where")) augment_spec().where = expr(lx, 0);
  }

  void jitter(LineLexer& lx) {
    std::string col = name(lx, "a numeric column");
    expect(lx, "=");
    augment_spec().jitter.emplace_back(std::move(col), number(lx));
  }

  void seed(LineLexer& lx) {
    const Token t = lx.next();
    if (t.type != Tok::Number || t.number < 0) error(lx, t, "expected a seed");
    augment_spec().seed = static_cast<std::uint64_t>(t.number);
  }

  void fill(LineLexer& lx) {
    if (prog_.impute) error(lx, lx.peek(), "an ImputeRule has exactly one fill statement");
    ImputeSpec s;
    s.column = name(lx, "a column");
    expect(lx, "=");
    s.expr = expr(lx, 0);
    if (accept_keyword(lx, "else")) s.fallback = literal(lx);
    prog_.impute = std::move(s);
  }

  void drop(LineLexer& lx) {
    do prog_.drops.push_back(name(lx, "a column"));
    while (accept(lx, ","));
  }

  void select(LineLexer& lx) {
    do prog_.selected.push_back(name(lx, "a column"));
    while (accept(lx, ","));
  }

  void choose(LineLexer& lx) {
    std::string param = name(lx, "a parameter");
    expect(lx, "=");
    prog_.choices.emplace_back(std::move(param), number(lx));
  }

  // ---- expressions

  ExprId expr(LineLexer& lx, std::size_t depth) {
    if (depth > kMaxNesting) error(lx, lx.peek(), "expression nested too deeply");
    const Token& t = lx.peek();
    if (t.type == Tok::Ident && t.text == "if") {
      const std::uint32_t col = t.column;
      lx.next();
      ExprNode n;
      n.op = Op::If;
      n.args.push_back(expr(lx, depth + 1));
      const Token th = lx.next();
      if (th.type != Tok::Ident || th.text != "then") error(lx, th, "expected 'then'");
      n.args.push_back(expr(lx, depth + 1));
      const Token el = lx.next();
      if (el.type != Tok::Ident || el.text != "else") error(lx, el, "expected 'else'");
      n.args.push_back(expr(lx, depth + 1));
      return add_node(lx, std::move(n), col);
    }
    return or_expr(lx, depth);
  }

  ExprId binary(LineLexer& lx, Op op, ExprId l, ExprId r, std::uint32_t col) {
    ExprNode n;
    n.op = op;
    n.args = {l, r};
    return add_node(lx, std::move(n), col);
  }

  ExprId or_expr(LineLexer& lx, std::size_t depth) {
    ExprId l = and_expr(lx, depth);
    while (lx.peek().type == Tok::Ident && lx.peek().text == "or") {
      const std::uint32_t col = lx.next().column;
      l = binary(lx, Op::Or, l, and_expr(lx, depth), col);
    }
    return l;
  }

  ExprId and_expr(LineLexer& lx, std::size_t depth) {
    ExprId l = not_expr(lx, depth);
    while (lx.peek().type == Tok::Ident && lx.peek().text == "and") {
      const std::uint32_t col = lx.next().column;
      l = binary(lx, Op::And, l, not_expr(lx, depth), col);
    }
    return l;
  }

  ExprId not_expr(LineLexer& lx, std::size_t depth) {
    if (lx.peek().type == Tok::Ident && lx.peek().text == "not") {
      if (depth > kMaxNesting) error(lx, lx.peek(), "expression nested too deeply");
      const std::uint32_t col = lx.next().column;
      ExprNode n;
      n.op = Op::Not;
      n.args.push_back(not_expr(lx, depth + 1));
      return add_node(lx, std::move(n), col);
    }
    return comparison(lx, depth);
  }

  ExprId comparison(LineLexer& lx, std::size_t depth) {
    ExprId l = additive(lx, depth);
    const Token& t = lx.peek();
    if (t.type != Tok::Punct) return l;
    static const std::pair<std::string_view, Op> ops[] = {{"==", Op::Eq}, {"!=", Op::Ne},
                                                          {"<", Op::Lt},  {"<=", Op::Le},
                                                          {">", Op::Gt},  {">=", Op::Ge}};
    for (const auto& [text, op] : ops) {
      if (t.text == text) {
        const std::uint32_t col = lx.next().column;
        return binary(lx, op, l, additive(lx, depth), col);
      }
    }
    return l;
  }

  ExprId additive(LineLexer& lx, std::size_t depth) {
    ExprId l = multiplicative(lx, depth);
    while (lx.peek().type == Tok::Punct && (lx.peek().text == "+" || lx.peek().text == "-")) {
      const Token t = lx.next();
      l = binary(lx, t.text == "+" ? Op::Add : Op::Sub, l, multiplicative(lx, depth), t.column);
    }
    return l;
  }

  ExprId multiplicative(LineLexer& lx, std::size_t depth) {
    ExprId l = unary(lx, depth);
    while (lx.peek().type == Tok::Punct && (lx.peek().text == "*" || lx.peek().text == "/")) {
      const Token t = lx.next();
      l = binary(lx, t.text == "*" ? Op::Mul : Op::Div, l, unary(lx, depth), t.column);
    }
    return l;
  }

  ExprId unary(LineLexer& lx, std::size_t depth) {
    if (lx.peek().type == Tok::Punct && lx.peek().text == "-") {
      if (depth > kMaxNesting) error(lx, lx.peek(), "expression nested too deeply");
      const std::uint32_t col = lx.next().column;
      const ExprId operand = unary(lx, depth + 1);
      // Fold negative numeric literals so `-1.5` counts as a literal.
      ExprNode& inner = prog_.nodes[operand];
      if (inner.op == Op::Literal && std::holds_alternative<double>(inner.literal)) {
        inner.literal = -std::get<double>(inner.literal);
        inner.column = col;
        return operand;
      }
      ExprNode n;
      n.op = Op::Neg;
      n.args.push_back(operand);
      return add_node(lx, std::move(n), col);
    }
    return primary(lx, depth);
  }

  ExprId regex_arg(LineLexer& lx) {
    const std::uint32_t col = lx.column();
    ExprNode n;
    n.op = Op::Regex;
    if (lx.at_regex()) {
      auto [body, icase] = lx.regex_literal();
      n.regex = add_regex(lx, body, icase, col);
    } else {
      const Token t = lx.next();
      if (t.type != Tok::String) error(lx, t, "expected a /regex/ or string pattern");
      n.regex = add_regex(lx, t.text, false, col);
    }
    return add_node(lx, std::move(n), col);
  }

  ExprId primary(LineLexer& lx, std::size_t depth) {
    const Token t = lx.next();
    switch (t.type) {
      case Tok::Number: {
        ExprNode n;
        n.literal = t.number;
        return add_node(lx, std::move(n), t.column);
      }
      case Tok::String: {
        ExprNode n;
        n.literal = t.text;
        return add_node(lx, std::move(n), t.column);
      }
      case Tok::QuotedIdent: {
        ExprNode n;
        n.op = Op::Column;
        n.name = t.text;
        return add_node(lx, std::move(n), t.column);
      }
      case Tok::Ident: {
        if (t.text == "true" || t.text == "false" || t.text == "null") {
          ExprNode n;
          if (t.text != "null") n.literal = t.text == "true";
          return add_node(lx, std::move(n), t.column);
        }
        static const std::set<std::string_view> reserved = {"if", "then", "else", "and",
                                                            "or", "not", "by"};
        if (reserved.count(t.text)) error(lx, t, "unexpected keyword");
        if (lx.peek().type == Tok::Punct && lx.peek().text == "(") {
          auto fn = parse_builtin(t.text);
          if (!fn) error(lx, t, "unknown function '" + t.text + "'");
          lx.next();
          ExprNode n;
          n.op = Op::Call;
          n.fn = *fn;
          std::size_t index = 0;
          if (!(lx.peek().type == Tok::Punct && lx.peek().text == ")")) {
            do {
              const bool regex_slot =
                  index == 1 && (*fn == Builtin::RegexReplace || *fn == Builtin::RegexMatch);
              n.args.push_back(regex_slot ? regex_arg(lx) : expr(lx, depth + 1));
              ++index;
            } while (accept(lx, ","));
          }
          expect(lx, ")");
          return add_node(lx, std::move(n), t.column);
        }
        ExprNode n;
        n.op = Op::Column;
        n.name = t.text;
        return add_node(lx, std::move(n), t.column);
      }
      case Tok::Punct:
        if (t.text == "(") {
          if (depth > kMaxNesting) error(lx, t, "expression nested too deeply");
          const ExprId inner = expr(lx, depth + 1);
          expect(lx, ")");
          return inner;
        }
        break;
      default: break;
    }
    error(lx, t, "expected an expression");
  }

  Program& prog_;
  bool augment_done_ = false;
};

}  // namespace

Program parse(std::string_view source, ProgramKind expected_kind) {
  Program prog;
  prog.source_text = std::string(source);
  prog.kind = expected_kind;
  Parser parser(prog);

  bool header_seen = false;
  std::uint32_t line_no = 0;
  std::size_t pos = 0;
  std::size_t statements = 0;
  while (pos <= source.size()) {
    std::size_t eol = source.find('\n', pos);
    if (eol == std::string_view::npos) eol = source.size();
    const std::string_view line = source.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;

    LineLexer lx(line, line_no);
    if (lx.peek().type == Tok::End) {
      if (eol == source.size()) break;
      continue;
    }
    if (!header_seen) {
      const Token h = lx.next();
      if (h.type != Tok::Ident || h.text != kHeader)
        throw ParseError("syntax error at token " + describe(h) + ": expected header 'dslv1 <kind>'",
                         line_no, h.column);
      const Token k = lx.next();
      if (k.type != Tok::Ident)
        throw ParseError("syntax error at token " + describe(k) + ": expected a program kind",
                         line_no, k.column);
      auto kind = parse_program_kind(k.text);
      if (!kind)
        throw ParseError("syntax error at token " + describe(k) + ": unknown program kind",
                         line_no, k.column);
      if (*kind != expected_kind)
        throw TypeError("program kind mismatch: expected " +
                        std::string(program_kind_name(expected_kind)) + ", got " + k.text);
      parser.finish(lx);
      header_seen = true;
    } else {
      parser.statement(lx);
      parser.finish(lx);
      if (++statements + prog.nodes.size() > kMaxAstNodes)
        throw SchemaError("program exceeds the AST size cap of " + std::to_string(kMaxAstNodes) +
                          " nodes");
    }
    if (eol == source.size()) break;
  }
  if (!header_seen) throw ParseError("syntax error: empty program, expected header 'dslv1 <kind>'", 1, 1);
  return prog;
}

std::size_t Program::node_count() const {
  return nodes.size() + bindings.size() + aggs.size() + rules.size() + defaults.size() +
         drops.size() + selected.size() + choices.size() + (join ? 1 : 0) + (augment ? 1 : 0) +
         (impute ? 1 : 0);
}

std::vector<std::string> Program::output_names() const {
  std::vector<std::string> out;
  auto add = [&](const std::string& n) {
    if (std::find(out.begin(), out.end(), n) == out.end()) out.push_back(n);
  };
  switch (kind) {
    case ProgramKind::AggJoinPlan:
      for (const auto& a : aggs) add(a.name);
      for (const auto& b : bindings) add(b.name);
      break;
    case ProgramKind::FeatureMap:
    case ProgramKind::CleanRule:
    case ProgramKind::RefineRule:
      for (const auto& b : bindings) add(b.name);
      break;
    case ProgramKind::ExtractRules:
      for (const auto& r : rules) add(r.output);
      for (const auto& d : defaults) add(d.first);
      break;
    case ProgramKind::ImputeRule:
      if (impute) add(impute->column);
      break;
    case ProgramKind::SelectList:
      for (const auto& s : selected) add(s);
      break;
    case ProgramKind::ChoiceMap:
      for (const auto& c : choices) add(c.first);
      break;
    case ProgramKind::AugmentPlan: break;
  }
  return out;
}

std::string_view grammar_text() {
  return R"(DSL v1 grammar (one statement per line, '#' starts a comment)

program    := "dslv1" KIND NEWLINE statement*
KIND       := FeatureMap | AggJoinPlan | ExtractRules | AugmentPlan | ImputeRule
            | CleanRule | RefineRule | SelectList | ChoiceMap

FeatureMap    : feature NAME = EXPR            (adds column NAME; later lines may use it)
AggJoinPlan   : join LEFT_KEY = RIGHT_KEY      (exactly once)
                agg NAME = FN(EXPR) by RIGHT_KEY
                    FN in sum mean min max std count nunique mode; EXPR over the right table
                feature NAME = EXPR            (over the aggregated table: key + agg outputs)
                result = left table LEFT JOIN aggregates; unmatched rows get null
ExtractRules  : rule OUT: /REGEX/flags on SRC -> EMIT
                rule OUT: ["kw1", "kw2"] on SRC -> EMIT
                default OUT = LITERAL          (required for every OUT)
                EMIT is a LITERAL or $N (capture group N; $0 = whole match). First match wins.
AugmentPlan   : augment K [where EXPR]         (adds exactly K rows copied from matching rows)
                jitter COL = SCALE             (gaussian noise, SCALE x column std)
                seed N
ImputeRule    : fill COL = EXPR else LITERAL   (replaces missing cells of COL)
CleanRule     : clean COL = EXPR               (rewrites COL in place, same kind)
RefineRule    : derive NAME = EXPR             (new or replacement columns)
                drop COL, COL ...
SelectList    : select COL, COL ...
ChoiceMap     : choose PARAM = NUMBER

EXPR := if EXPR then EXPR else EXPR | EXPR or EXPR | EXPR and EXPR | not EXPR
      | EXPR (== != < <= > >=) EXPR | EXPR (+ - * /) EXPR | -EXPR | ( EXPR )
      | NUMBER | "string" | true | false | null | COLUMN | `column with spaces`
      | FUNCTION(ARGS)
FUNCTION := lowercase(s) trim(s) regex_replace(s, /re/, "rep $1") regex_match(s, /re/)
          contains(s, "sub") split_part(s, "sep", n) length(s) to_number(s)
          log1p(x) abs(x) clip(x, lo, hi) is_missing(v) coalesce(v, ...)
Kinds are numeric, string and boolean; every kind admits null (missing).
Arithmetic faults (division by zero, log1p of a negative) yield null.
)";
}

}  // namespace sempipes::dsl
