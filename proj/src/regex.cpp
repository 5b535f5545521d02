#include "sempipes/regex.hpp"

#include <cctype>
#include <memory>

#include "sempipes/errors.hpp"

namespace sempipes {

void RegexBudget::charge(std::uint64_t steps) {
  if (steps > remaining_) {
    remaining_ = 0;
    throw LimitExceeded("max_regex_steps");
  }
  remaining_ -= steps;
}

std::optional<std::string_view> RegexMatch::group(std::string_view text, std::size_t i) const {
  if (i >= groups.size() || !groups[i]) return std::nullopt;
  return text.substr(groups[i]->first, groups[i]->second - groups[i]->first);
}

namespace {

constexpr std::size_t kMaxProgram = 20000;
constexpr std::size_t kMaxDepth = 64;
constexpr int kMaxRepeat = 1000;

using ByteSet = std::bitset<256>;

struct Node {
  enum class Type { Empty, Bytes, Concat, Alt, Repeat, Group, Assert } type = Type::Empty;
  ByteSet bytes;
  std::vector<std::unique_ptr<Node>> children;
  int min = 0;
  int max = 0;  // -1 = unbounded
  bool greedy = true;
  int capture = -1;
  Regex::Anchor anchor = Regex::Anchor::LineStart;
};

bool is_word(unsigned char c) { return std::isalnum(c) || c == '_'; }

ByteSet class_digit() {
  ByteSet s;
  for (int c = '0'; c <= '9'; ++c) s.set(c);
  return s;
}
ByteSet class_word() {
  ByteSet s;
  for (int c = 0; c < 256; ++c)
    if (is_word(static_cast<unsigned char>(c))) s.set(c);
  return s;
}
ByteSet class_space() {
  ByteSet s;
  for (char c : std::string_view(" \t\n\r\f\v")) s.set(static_cast<unsigned char>(c));
  return s;
}

class Parser {
 public:
  Parser(std::string_view p, bool icase) : p_(p), icase_(icase) {}

  std::unique_ptr<Node> parse() {
    auto n = alternation(0);
    if (pos_ != p_.size()) fail("unmatched ')'");
    return n;
  }
  int groups() const { return groups_; }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError("regex: " + what, 1, pos_ + 1);
  }

  bool eof() const { return pos_ >= p_.size(); }
  char peek() const { return p_[pos_]; }

  ByteSet fold(ByteSet s) const {
    if (!icase_) return s;
    for (int c = 'a'; c <= 'z'; ++c) {
      const int u = c - 'a' + 'A';
      if (s.test(c) || s.test(u)) {
        s.set(c);
        s.set(u);
      }
    }
    return s;
  }

  std::unique_ptr<Node> bytes_node(ByteSet s) const {
    auto n = std::make_unique<Node>();
    n->type = Node::Type::Bytes;
    n->bytes = fold(s);
    return n;
  }

  std::unique_ptr<Node> alternation(std::size_t depth) {
    if (depth > kMaxDepth) fail("nesting too deep");
    std::vector<std::unique_ptr<Node>> alts;
    alts.push_back(concatenation(depth));
    while (!eof() && peek() == '|') {
      ++pos_;
      alts.push_back(concatenation(depth));
    }
    if (alts.size() == 1) return std::move(alts[0]);
    auto n = std::make_unique<Node>();
    n->type = Node::Type::Alt;
    n->children = std::move(alts);
    return n;
  }

  std::unique_ptr<Node> concatenation(std::size_t depth) {
    auto n = std::make_unique<Node>();
    n->type = Node::Type::Concat;
    while (!eof() && peek() != '|' && peek() != ')') n->children.push_back(repetition(depth));
    return n;
  }

  bool parse_int(int& out) {
    std::size_t start = pos_;
    long v = 0;
    while (!eof() && std::isdigit(static_cast<unsigned char>(peek()))) {
      v = v * 10 + (peek() - '0');
      if (v > kMaxRepeat) fail("repeat count exceeds " + std::to_string(kMaxRepeat));
      ++pos_;
    }
    out = static_cast<int>(v);
    return pos_ > start;
  }

  std::unique_ptr<Node> repetition(std::size_t depth) {
    auto atom_node = atom(depth);
    while (!eof()) {
      int min = 0, max = 0;
      const std::size_t save = pos_;
      const char c = peek();
      if (c == '*') {
        min = 0, max = -1, ++pos_;
      } else if (c == '+') {
        min = 1, max = -1, ++pos_;
      } else if (c == '?') {
        min = 0, max = 1, ++pos_;
      } else if (c == '{') {
        ++pos_;
        if (!parse_int(min)) {
          pos_ = save;
          break;
        }
        if (!eof() && peek() == ',') {
          ++pos_;
          if (!parse_int(max)) max = -1;
        } else {
          max = min;
        }
        if (eof() || peek() != '}') {
          pos_ = save;
          break;
        }
        ++pos_;
        if (max != -1 && max < min) fail("bad repeat range");
      } else {
        break;
      }
      if (atom_node->type == Node::Type::Assert) fail("quantifier after assertion");
      auto rep = std::make_unique<Node>();
      rep->type = Node::Type::Repeat;
      rep->min = min;
      rep->max = max;
      if (!eof() && peek() == '?') {
        rep->greedy = false;
        ++pos_;
      }
      rep->children.push_back(std::move(atom_node));
      atom_node = std::move(rep);
    }
    return atom_node;
  }

  ByteSet escape_class(char e, bool& is_class) const {
    is_class = true;
    switch (e) {
      case 'd': return class_digit();
      case 'D': return ~class_digit();
      case 'w': return class_word();
      case 'W': return ~class_word();
      case 's': return class_space();
      case 'S': return ~class_space();
      default: break;
    }
    is_class = false;
    ByteSet s;
    switch (e) {
      case 'n': s.set('\n'); break;
      case 't': s.set('\t'); break;
      case 'r': s.set('\r'); break;
      case 'f': s.set('\f'); break;
      case 'v': s.set('\v'); break;
      default:
        if (std::isalnum(static_cast<unsigned char>(e))) return ByteSet{};
        s.set(static_cast<unsigned char>(e));
    }
    return s;
  }

  unsigned char hex_escape() {
    if (pos_ + 2 > p_.size()) fail("truncated \\x escape");
    auto hv = [&](char c) -> int {
      if (std::isdigit(static_cast<unsigned char>(c))) return c - '0';
      c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      if (c >= 'a' && c <= 'f') return c - 'a' + 10;
      fail("bad \\x escape");
    };
    const int v = hv(p_[pos_]) * 16 + hv(p_[pos_ + 1]);
    pos_ += 2;
    return static_cast<unsigned char>(v);
  }

  std::unique_ptr<Node> atom(std::size_t depth) {
    const char c = peek();
    switch (c) {
      case '(': {
        ++pos_;
        int capture = -1;
        if (p_.substr(pos_, 2) == "?:") {
          pos_ += 2;
        } else if (!eof() && peek() == '?') {
          fail("unsupported group syntax");
        } else {
          capture = ++groups_;
        }
        auto inner = alternation(depth + 1);
        if (eof() || peek() != ')') fail("missing ')'");
        ++pos_;
        auto g = std::make_unique<Node>();
        g->type = Node::Type::Group;
        g->capture = capture;
        g->children.push_back(std::move(inner));
        return g;
      }
      case '.': {
        ++pos_;
        ByteSet s;
        s.set();
        s.reset('\n');
        return bytes_node(s);
      }
      case '^':
      case '$': {
        ++pos_;
        auto n = std::make_unique<Node>();
        n->type = Node::Type::Assert;
        n->anchor = c == '^' ? Regex::Anchor::LineStart : Regex::Anchor::LineEnd;
        return n;
      }
      case '[': return char_class();
      case '\\': {
        ++pos_;
        if (eof()) fail("trailing backslash");
        const char e = p_[pos_++];
        if (e == 'b' || e == 'B') {
          auto n = std::make_unique<Node>();
          n->type = Node::Type::Assert;
          n->anchor = e == 'b' ? Regex::Anchor::WordBoundary : Regex::Anchor::NotWordBoundary;
          return n;
        }
        if (e == 'x') {
          ByteSet s;
          s.set(hex_escape());
          return bytes_node(s);
        }
        bool is_class = false;
        ByteSet s = escape_class(e, is_class);
        if (s.none()) fail(std::string("unknown escape \\") + e);
        return bytes_node(s);
      }
      case '*':
      case '+':
      case '?': fail("nothing to repeat");
      case ')': fail("unmatched ')'");
      default: {
        ++pos_;
        ByteSet s;
        s.set(static_cast<unsigned char>(c));
        return bytes_node(s);
      }
    }
  }

  std::unique_ptr<Node> char_class() {
    ++pos_;  // '['
    bool negate = false;
    if (!eof() && peek() == '^') {
      negate = true;
      ++pos_;
    }
    ByteSet s;
    bool first = true;
    while (true) {
      if (eof()) fail("missing ']'");
      char c = peek();
      if (c == ']' && !first) {
        ++pos_;
        break;
      }
      first = false;
      int lo;
      ++pos_;
      if (c == '\\') {
        if (eof()) fail("trailing backslash");
        const char e = p_[pos_++];
        if (e == 'x') {
          lo = hex_escape();
        } else {
          bool is_class = false;
          ByteSet es = escape_class(e, is_class);
          if (es.none()) fail(std::string("unknown escape \\") + e);
          if (is_class) {
            s |= es;
            continue;
          }
          lo = static_cast<int>(es._Find_first());
        }
      } else {
        lo = static_cast<unsigned char>(c);
      }
      if (pos_ + 1 < p_.size() && peek() == '-' && p_[pos_ + 1] != ']') {
        ++pos_;
        int hi = static_cast<unsigned char>(p_[pos_++]);
        if (hi == '\\') {
          if (eof()) fail("trailing backslash");
          const char e = p_[pos_++];
          bool is_class = false;
          ByteSet es = e == 'x' ? ByteSet().set(hex_escape()) : escape_class(e, is_class);
          if (is_class || es.none()) fail("bad class range");
          hi = static_cast<int>(es._Find_first());
        }
        if (hi < lo) fail("bad class range");
        for (int b = lo; b <= hi; ++b) s.set(b);
      } else {
        s.set(lo);
      }
    }
    s = fold(s);
    if (negate) s = ~s;
    auto n = std::make_unique<Node>();
    n->type = Node::Type::Bytes;
    n->bytes = s;
    return n;
  }

  std::string_view p_;
  bool icase_;
  std::size_t pos_ = 0;
  int groups_ = 0;
};

class Compiler {
 public:
  explicit Compiler(std::vector<Regex::Instruction>& prog) : prog_(prog) {}

  void emit(const Node& n) {
    switch (n.type) {
      case Node::Type::Empty: break;
      case Node::Type::Bytes: push({Regex::OpCode::Bytes, 0, 0, {}, n.bytes}); break;
      case Node::Type::Assert: {
        Regex::Instruction in{Regex::OpCode::Assert};
        in.anchor = n.anchor;
        push(in);
        break;
      }
      case Node::Type::Concat:
        for (const auto& c : n.children) emit(*c);
        break;
      case Node::Type::Group:
        if (n.capture >= 0) push({Regex::OpCode::Save, static_cast<std::uint32_t>(2 * n.capture)});
        emit(*n.children[0]);
        if (n.capture >= 0)
          push({Regex::OpCode::Save, static_cast<std::uint32_t>(2 * n.capture + 1)});
        break;
      case Node::Type::Alt: {
        std::vector<std::size_t> jumps;
        for (std::size_t i = 0; i < n.children.size(); ++i) {
          if (i + 1 < n.children.size()) {
            const std::size_t split = push({Regex::OpCode::Split});
            prog_[split].x = here();
            emit(*n.children[i]);
            jumps.push_back(push({Regex::OpCode::Jump}));
            prog_[split].y = here();
          } else {
            emit(*n.children[i]);
          }
        }
        for (auto j : jumps) prog_[j].x = here();
        break;
      }
      case Node::Type::Repeat: {
        const Node& body = *n.children[0];
        for (int i = 0; i < n.min; ++i) emit(body);
        if (n.max == -1) {
          const std::size_t split = push({Regex::OpCode::Split});
          const std::uint32_t loop = static_cast<std::uint32_t>(split);
          const std::uint32_t body_start = here();
          emit(body);
          push({Regex::OpCode::Jump, loop});
          set_split(split, body_start, here(), n.greedy);
        } else {
          std::vector<std::size_t> splits;
          for (int i = n.min; i < n.max; ++i) {
            splits.push_back(push({Regex::OpCode::Split}));
            prog_[splits.back()].x = here();
            emit(body);
          }
          for (auto s : splits) set_split(s, prog_[s].x, here(), n.greedy);
        }
        break;
      }
    }
  }

  std::size_t push(Regex::Instruction in) {
    if (prog_.size() >= kMaxProgram) throw ParseError("regex: program too large", 1, 1);
    prog_.push_back(in);
    return prog_.size() - 1;
  }
  std::uint32_t here() const { return static_cast<std::uint32_t>(prog_.size()); }

 private:
  void set_split(std::size_t at, std::uint32_t body, std::uint32_t out, bool greedy) {
    prog_[at].x = greedy ? body : out;
    prog_[at].y = greedy ? out : body;
  }

  std::vector<Regex::Instruction>& prog_;
};

struct Thread {
  std::uint32_t pc;
  std::vector<std::size_t> caps;
};

constexpr std::size_t kUnset = static_cast<std::size_t>(-1);

class ThreadList {
 public:
  explicit ThreadList(std::size_t program_size) : mark_(program_size, 0) {}

  void clear() {
    threads_.clear();
    ++generation_;
  }
  bool visit(std::uint32_t pc) {
    if (mark_[pc] == generation_) return false;
    mark_[pc] = generation_;
    return true;
  }
  std::vector<Thread>& threads() { return threads_; }

 private:
  std::vector<std::uint64_t> mark_;
  std::uint64_t generation_ = 1;
  std::vector<Thread> threads_;
};

bool assert_holds(Regex::Anchor a, std::string_view text, std::size_t pos) {
  const bool before = pos > 0 && is_word(static_cast<unsigned char>(text[pos - 1]));
  const bool after = pos < text.size() && is_word(static_cast<unsigned char>(text[pos]));
  switch (a) {
    case Regex::Anchor::LineStart: return pos == 0;
    case Regex::Anchor::LineEnd: return pos == text.size();
    case Regex::Anchor::WordBoundary: return before != after;
    case Regex::Anchor::NotWordBoundary: return before == after;
  }
  return false;
}

// Follows epsilon transitions from `pc` with an explicit stack; threads land
// on `list` in priority order.
void add_thread(const std::vector<Regex::Instruction>& prog, ThreadList& list, std::uint32_t pc,
                std::vector<std::size_t> caps, std::string_view text, std::size_t pos,
                RegexBudget& budget) {
  struct Frame {
    std::uint32_t pc;
    std::vector<std::size_t> caps;
  };
  std::vector<Frame> stack;
  stack.push_back({pc, std::move(caps)});
  while (!stack.empty()) {
    Frame f = std::move(stack.back());
    stack.pop_back();
    if (!list.visit(f.pc)) continue;
    budget.charge(1);
    const auto& in = prog[f.pc];
    switch (in.op) {
      case Regex::OpCode::Jump: stack.push_back({in.x, std::move(f.caps)}); break;
      case Regex::OpCode::Split:
        // y is pushed first so x is explored first.
        stack.push_back({in.y, f.caps});
        stack.push_back({in.x, std::move(f.caps)});
        break;
      case Regex::OpCode::Save:
        f.caps[in.x] = pos;
        stack.push_back({f.pc + 1, std::move(f.caps)});
        break;
      case Regex::OpCode::Assert:
        if (assert_holds(in.anchor, text, pos)) stack.push_back({f.pc + 1, std::move(f.caps)});
        break;
      case Regex::OpCode::Bytes:
      case Regex::OpCode::Match: list.threads().push_back({f.pc, std::move(f.caps)}); break;
    }
  }
}

}  // namespace

Regex Regex::compile(std::string_view pattern, bool case_insensitive) {
  Regex re;
  if (pattern.substr(0, 4) == "(?i)") {
    case_insensitive = true;
    pattern.remove_prefix(4);
  }
  re.pattern_ = std::string(pattern);
  re.icase_ = case_insensitive;
  Parser parser(pattern, case_insensitive);
  auto ast = parser.parse();
  re.groups_ = static_cast<std::size_t>(parser.groups());
  Compiler compiler(re.program_);
  compiler.push({OpCode::Save, 0});
  compiler.emit(*ast);
  compiler.push({OpCode::Save, 1});
  compiler.push({OpCode::Match});
  return re;
}

std::optional<RegexMatch> Regex::search(std::string_view text, RegexBudget& budget,
                                        std::size_t from) const {
  const std::size_t ncap = 2 * (groups_ + 1);
  ThreadList current(program_.size());
  ThreadList next(program_.size());
  std::optional<std::vector<std::size_t>> matched;

  for (std::size_t pos = from;; ++pos) {
    if (!matched) add_thread(program_, current, 0, std::vector<std::size_t>(ncap, kUnset), text,
                             pos, budget);
    if (current.threads().empty() && matched) break;
    for (auto& t : current.threads()) {
      budget.charge(1);
      const auto& in = program_[t.pc];
      if (in.op == OpCode::Match) {
        matched = std::move(t.caps);
        break;  // lower-priority threads are cut off
      }
      if (pos < text.size() && in.bytes.test(static_cast<unsigned char>(text[pos])))
        add_thread(program_, next, t.pc + 1, std::move(t.caps), text, pos + 1, budget);
    }
    std::swap(current, next);
    next.clear();
    if (pos >= text.size()) break;
  }
  if (!matched) return std::nullopt;
  RegexMatch m;
  m.groups.resize(groups_ + 1);
  for (std::size_t g = 0; g <= groups_; ++g) {
    const std::size_t b = (*matched)[2 * g], e = (*matched)[2 * g + 1];
    if (b != kUnset && e != kUnset) m.groups[g] = std::make_pair(b, e);
  }
  return m;
}

std::string Regex::replace_all(std::string_view text, std::string_view replacement,
                               RegexBudget& budget) const {
  std::string out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto m = search(text, budget, pos);
    if (!m) break;
    const auto [b, e] = *m->groups[0];
    out.append(text.substr(pos, b - pos));
    for (std::size_t i = 0; i < replacement.size(); ++i) {
      const char c = replacement[i];
      if ((c == '$' || c == '\\') && i + 1 < replacement.size()) {
        const char d = replacement[i + 1];
        if (c == '$' && d == '$') {
          out.push_back('$');
          ++i;
          continue;
        }
        if (std::isdigit(static_cast<unsigned char>(d))) {
          if (auto g = m->group(text, static_cast<std::size_t>(d - '0'))) out.append(*g);
          ++i;
          continue;
        }
      }
      out.push_back(c);
    }
    if (e == b) {
      if (b < text.size()) out.push_back(text[b]);
      pos = b + 1;
    } else {
      pos = e;
    }
  }
  if (pos < text.size()) out.append(text.substr(pos));
  return out;
}

}  // namespace sempipes
