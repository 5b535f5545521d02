#include "sempipes/synth.hpp"

#include <algorithm>
#include <cmath>
#include <regex>
#include <set>
#include <sstream>

#include "sempipes/errors.hpp"
#include "sempipes/hashing.hpp"
#include "sempipes/random.hpp"

namespace sempipes {

namespace {

nlohmann::json profile_json(const NamedProfile& np) {
  nlohmann::json j;
  j["name"] = np.name;
  j["rows"] = np.profile.row_count;
  j["columns"] = nlohmann::json::array();
  for (const auto& c : np.profile.columns) {
    nlohmann::json col;
    col["name"] = c.name;
    col["kind"] = kind_name(c.kind);
    col["missing_fraction"] = c.missing_fraction;
    col["distinct"] = c.distinct_count;
    if (c.min) col["min"] = *c.min;
    if (c.max) col["max"] = *c.max;
    if (c.mean) col["mean"] = *c.mean;
    if (c.std) col["std"] = *c.std;
    col["samples"] = c.samples;
    j["columns"].push_back(std::move(col));
  }
  return j;
}

}  // namespace

nlohmann::json SynthesisRequest::to_json() const {
  nlohmann::json j;
  j["operator"] = spec.to_json();
  j["context"] = context.to_json();
  j["tables"] = nlohmann::json::array();
  for (const auto& p : profiles) j["tables"].push_back(profile_json(p));
  j["skeleton"] = skeleton;
  j["feedback"] = feedback;
  j["utility_history"] = utility_history;
  j["memories"] = nlohmann::json::array();
  for (const auto& m : memories) {
    nlohmann::json e{{"source", m.source}, {"commentary", m.commentary}, {"validation", m.validation}};
    e["utility"] = m.utility ? nlohmann::json(*m.utility) : nlohmann::json(nullptr);
    j["memories"].push_back(std::move(e));
  }
  j["inspirations"] = nlohmann::json::array();
  for (const auto& i : inspirations) j["inspirations"].push_back({{"source", i.source}, {"utility", i.utility}});
  j["temperature"] = temperature;
  j["seed"] = seed;
  j["attempt"] = attempt;
  return j;
}

std::string SynthesisRequest::prompt() const {
  std::ostringstream os;
  os << "Write the state of the semantic operator described below as a program in the dslv1 "
        "language (kind "
     << dsl::program_kind_name(program_kind_for(spec.kind)) << ").\n";
  if (!spec.instruction.empty()) os << "Instruction: " << spec.instruction << "\n";
  if (!feedback.empty())
    os << "Earlier attempts failed; fix the problems listed under \"feedback\".\n";
  if (!memories.empty() || !inspirations.empty())
    os << "Improve on the remembered attempts and inspirations; higher utility is better.\n";
  os << "Reply with exactly one fenced ```dslv1 block followed by a short rationale.\n\n";
  os << to_json().dump(2) << "\n";
  return os.str();
}

std::string SynthesisRequest::fingerprint() const { return sha256_hex(prompt()); }

std::string skeleton_for(OperatorKind kind) {
  switch (kind) {
    case OperatorKind::GenFeatures:
      return "dslv1 FeatureMap\nfeature NEW_NAME = EXPR   # up to k lines, names must be new\n";
    case OperatorKind::AggFeatures:
      return "dslv1 AggJoinPlan\njoin LEFT_KEY = RIGHT_KEY\nagg NAME = FN(EXPR) by RIGHT_KEY   # up to k "
             "lines\nfeature NAME = EXPR   # optional, over the aggregates\n";
    case OperatorKind::ExtractFeatures:
      return "dslv1 ExtractRules\nrule OUT: /REGEX/i on SOURCE -> $1\ndefault OUT = \"\"   # one per "
             "output column\n";
    case OperatorKind::Augment:
      return "dslv1 AugmentPlan\naugment K where EXPR\njitter NUMERIC_COLUMN = 0.05\nseed 1\n";
    case OperatorKind::FillNa: return "dslv1 ImputeRule\nfill COLUMN = EXPR else LITERAL\n";
    case OperatorKind::Clean: return "dslv1 CleanRule\nclean COLUMN = EXPR   # same kind as COLUMN\n";
    case OperatorKind::Refine:
      return "dslv1 RefineRule\nderive NAME = EXPR\ndrop COLUMN   # optional\n";
    case OperatorKind::Select: return "dslv1 SelectList\nselect COLUMN, COLUMN\n";
    case OperatorKind::Choose: return "dslv1 ChoiceMap\nchoose PARAM = NUMBER   # inside its range\n";
  }
  return "";
}

// ------------------------------------------------------------------ mock

namespace {

bool plain_identifier(const std::string& s) {
  static const std::set<std::string> reserved = {"if",   "then",  "else", "and", "or",
                                                 "not",  "true",  "false", "null", "by"};
  if (s.empty() || reserved.count(s)) return false;
  if (!(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
  return std::all_of(s.begin(), s.end(),
                     [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; });
}

std::string ident(const std::string& s) { return plain_identifier(s) ? s : "`" + s + "`"; }

std::string number_text(double v) { return format_cell(Cell{v}); }

std::string quoted(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    if (c == '\n') {
      out += "\\n";
      continue;
    }
    out.push_back(c);
  }
  return out + "\"";
}

std::string safe_name(std::string s) {
  for (char& c : s)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_')) c = '_';
  return s;
}

const TableProfile* find_profile(const SynthesisRequest& r, std::string_view name) {
  for (const auto& p : r.profiles)
    if (p.name == name) return &p.profile;
  return nullptr;
}

std::vector<const ColumnProfile*> columns_of(const TableProfile* p, Kind kind) {
  std::vector<const ColumnProfile*> out;
  if (!p) return out;
  for (const auto& c : p->columns)
    if (c.kind == kind) out.push_back(&c);
  return out;
}

bool has_column(const TableProfile* p, const std::string& name) {
  return p && std::any_of(p->columns.begin(), p->columns.end(), [&](const auto& c) { return c.name == name; });
}

std::string fresh_name(const TableProfile* p, std::set<std::string>& taken, std::string base) {
  std::string name = base;
  while (has_column(p, name) || taken.count(name)) name += "_";
  taken.insert(name);
  return name;
}

std::size_t take_count(const OperatorSpec& spec, std::size_t menu, std::size_t wanted) {
  std::size_t n = std::min(menu, wanted);
  if (spec.k) n = std::min(n, static_cast<std::size_t>(*spec.k));
  return n;
}

std::string mock_gen_features(const SynthesisRequest& r, int step) {
  const TableProfile* in = find_profile(r, "input");
  std::vector<std::string> menu;
  const auto nums = columns_of(in, Kind::Numeric);
  for (std::size_t i = 0; i < nums.size(); ++i) {
    const std::string a = ident(nums[i]->name);
    menu.push_back("log1p(" + a + ")");
    if (i + 1 < nums.size()) menu.push_back(a + " / " + ident(nums[i + 1]->name));
    if (nums[i]->missing_fraction > 0) menu.push_back("if is_missing(" + a + ") then 1 else 0");
  }
  for (const auto* s : columns_of(in, Kind::String)) menu.push_back("length(" + ident(s->name) + ")");
  if (menu.empty()) menu.push_back("1");
  const std::size_t n = std::max<std::size_t>(1, take_count(r.spec, menu.size(), 2 + step));
  std::string src = "dslv1 FeatureMap\n";
  std::set<std::string> taken;
  for (std::size_t i = 0; i < n; ++i)
    src += "feature " + ident(fresh_name(in, taken, "f" + std::to_string(i + 1))) + " = " + menu[i] + "\n";
  return src;
}

std::string mock_agg_features(const SynthesisRequest& r, int step) {
  const TableProfile* in = find_profile(r, "input");
  const TableProfile* aux = find_profile(r, "aux");
  const std::string left = r.spec.join ? r.spec.join->left : "";
  const std::string right = r.spec.join ? r.spec.join->right : "";
  std::vector<std::string> nums;
  for (const auto* c : columns_of(aux, Kind::Numeric))
    if (c->name != right) nums.push_back(c->name);
  std::vector<std::pair<std::string, std::string>> menu;  // (fn, column)
  if (nums.empty()) {
    menu.emplace_back("count", right);
  } else {
    menu.emplace_back("count", nums[0]);
    menu.emplace_back("sum", nums[0]);
    menu.emplace_back("mean", nums[0]);
    for (std::size_t j = 1; j < nums.size(); ++j) {
      menu.emplace_back("sum", nums[j]);
      menu.emplace_back("mean", nums[j]);
    }
    for (const auto& c : nums)
      for (const char* fn : {"min", "max", "std"}) menu.emplace_back(fn, c);
  }
  const std::size_t n = std::max<std::size_t>(1, take_count(r.spec, menu.size(), 3 + step));
  std::string src = "dslv1 AggJoinPlan\njoin " + ident(left) + " = " + ident(right) + "\n";
  std::set<std::string> taken;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& [fn, col] = menu[i];
    const std::string name = fresh_name(in, taken, safe_name(fn + "_" + col));
    src += "agg " + ident(name) + " = " + fn + "(" + ident(col) + ") by " + ident(right) + "\n";
  }
  return src;
}

std::string mock_extract(const SynthesisRequest& r, int step) {
  const auto strings = columns_of(find_profile(r, "input"), Kind::String);
  std::string src = "dslv1 ExtractRules\n";
  for (const auto& [out, desc] : r.spec.outputs) {
    if (strings.empty()) {
      src += "rule " + ident(out) + ": /x/ -> \"x\"\n";
    } else {
      const std::string on = " on " + ident(strings.front()->name);
      if (step % 2 == 0) src += "rule " + ident(out) + ": /(\\d+(?:\\.\\d+)?)/" + on + " -> $1\n";
      else src += "rule " + ident(out) + ": /(\\d+)\\s*[a-z]+/i" + on + " -> $1\n";
    }
    src += "default " + ident(out) + " = \"\"\n";
  }
  return src;
}

std::string mock_augment(const SynthesisRequest& r, int step) {
  const TableProfile* in = find_profile(r, "input");
  const std::size_t rows = in ? in->row_count : 0;
  const std::size_t k = r.spec.k ? static_cast<std::size_t>(*r.spec.k) : std::max<std::size_t>(1, rows / 10);
  std::string src = "dslv1 AugmentPlan\naugment " + std::to_string(k) + "\n";
  if (step > 0) {
    for (const auto* c : columns_of(in, Kind::Numeric)) {
      if (c->name == r.context.target_column) continue;
      src += "jitter " + ident(c->name) + " = " + number_text(0.05 * step) + "\n";
      break;
    }
  }
  src += "seed " + std::to_string(derive_seed(r.seed, seed_tag(r.spec.name)) % 1000000) + "\n";
  return src;
}

const ColumnProfile* target_profile(const SynthesisRequest& r) {
  const TableProfile* in = find_profile(r, "input");
  if (!in || !r.spec.column) return nullptr;
  for (const auto& c : in->columns)
    if (c.name == *r.spec.column) return &c;
  return nullptr;
}

std::string mock_fillna(const SynthesisRequest& r, int step) {
  const ColumnProfile* c = target_profile(r);
  const std::string col = ident(r.spec.column.value_or("missing_column"));
  std::string value = "0";
  if (c && c->kind == Kind::Numeric) {
    const std::optional<double> pick[] = {c->mean, c->min, c->max};
    value = number_text(pick[step % 3].value_or(0.0));
  } else if (c && c->kind == Kind::String) {
    value = quoted(step % 2 == 1 && !c->samples.empty() ? c->samples.front() : "missing");
  } else if (c && c->kind == Kind::Boolean) {
    value = step % 2 == 0 ? "false" : "true";
  }
  return "dslv1 ImputeRule\nfill " + col + " = " + value + "\n";
}

std::string mock_clean(const SynthesisRequest& r, int step) {
  const ColumnProfile* c = target_profile(r);
  const std::string col = ident(r.spec.column.value_or("missing_column"));
  std::string expr = col;
  if (c && c->kind == Kind::String) {
    expr = step % 2 == 0 ? "trim(lowercase(" + col + "))" : "trim(" + col + ")";
  } else if (c && c->kind == Kind::Numeric && c->min && c->max) {
    expr = step % 2 == 0 ? "clip(" + col + ", " + number_text(*c->min) + ", " + number_text(*c->max) + ")"
                         : "coalesce(" + col + ", " + number_text(c->mean.value_or(0.0)) + ")";
  }
  return "dslv1 CleanRule\nclean " + col + " = " + expr + "\n";
}

std::string mock_refine(const SynthesisRequest& r, int step) {
  const ColumnProfile* c = target_profile(r);
  const std::string name = r.spec.column.value_or("missing_column");
  const std::string col = ident(name);
  const Kind kind = c ? c->kind : Kind::Numeric;
  auto derived = [&](int variant) {
    if (kind == Kind::String) return variant == 0 ? "length(" + col + ")" : "trim(lowercase(" + col + "))";
    if (kind == Kind::Boolean) return "to_number(" + col + ")";
    return variant == 0 ? "log1p(abs(" + col + "))" : col + " * " + col;
  };
  std::string src = "dslv1 RefineRule\n";
  if (!r.spec.outputs.empty()) {
    int v = 0;
    for (const auto& [out, desc] : r.spec.outputs) src += "derive " + ident(out) + " = " + derived(v++ % 2) + "\n";
    return src;
  }
  src += "derive " + ident(safe_name(name) + "_r1") + " = " + derived(0) + "\n";
  if (step > 0) src += "derive " + ident(safe_name(name) + "_r2") + " = " + derived(1) + "\n";
  return src;
}

std::string mock_select(const SynthesisRequest& r, int step) {
  const TableProfile* in = find_profile(r, "input");
  std::vector<std::string> cols;
  if (in)
    for (const auto& c : in->columns) cols.push_back(c.name);
  if (cols.size() > 1 && step > 0) cols.erase(cols.begin() + static_cast<long>((step - 1) % cols.size()));
  std::string src = "dslv1 SelectList\nselect ";
  for (std::size_t i = 0; i < cols.size(); ++i) src += (i ? ", " : "") + ident(cols[i]);
  return src + "\n";
}

std::string mock_choose(const SynthesisRequest& r, int step) {
  static constexpr double fractions[] = {0.5, 0.25, 0.75, 0.125, 0.875};
  const double frac = fractions[step % 5];
  std::string src = "dslv1 ChoiceMap\n";
  for (const auto& [param, range] : r.spec.ranges) {
    double v = range.lo + frac * (range.hi - range.lo);
    if (param == "epochs") v = std::round(v);
    src += "choose " + ident(param) + " = " + number_text(v) + "\n";
  }
  return src;
}

}  // namespace

int MockSynthesizer::mutation_step(const SynthesisRequest& request) {
  int step = static_cast<int>(request.memories.size() + request.inspirations.size());
  if (request.temperature > 0.0) {
    Rng rng(derive_seed(request.seed, seed_tag(request.spec.name), static_cast<std::uint64_t>(request.attempt)));
    step += static_cast<int>(rng.below(3));
  }
  return step;
}

SynthesisResult MockSynthesizer::synthesize(const SynthesisRequest& request) {
  SynthesisResult out;
  if (request.attempt <= options_.fail_first) {
    out.source = "this reply is not a program";
    out.commentary = "injected fault";
    out.metadata = {{"mock_rule", "fault"}, {"attempt", request.attempt}};
    return out;
  }
  const int step = mutation_step(request);
  switch (request.spec.kind) {
    case OperatorKind::GenFeatures: out.source = mock_gen_features(request, step); break;
    case OperatorKind::AggFeatures: out.source = mock_agg_features(request, step); break;
    case OperatorKind::ExtractFeatures: out.source = mock_extract(request, step); break;
    case OperatorKind::Augment: out.source = mock_augment(request, step); break;
    case OperatorKind::FillNa: out.source = mock_fillna(request, step); break;
    case OperatorKind::Clean: out.source = mock_clean(request, step); break;
    case OperatorKind::Refine: out.source = mock_refine(request, step); break;
    case OperatorKind::Select: out.source = mock_select(request, step); break;
    case OperatorKind::Choose: out.source = mock_choose(request, step); break;
  }
  const std::string rule = std::string(operator_kind_name(request.spec.kind)) + "/step" + std::to_string(step);
  out.commentary = "template " + rule;
  out.metadata = {{"mock_rule", rule}, {"attempt", request.attempt}};
  return out;
}

SynthesisResult UnavailableSynthesizer::synthesize(const SynthesisRequest& request) {
  throw TransportError("no synthesizer is available (operator '" + request.spec.name + "')");
}

SynthesisResult extract_program(const std::string& reply) {
  std::size_t pos = 0;
  while (true) {
    const std::size_t open = reply.find("```", pos);
    if (open == std::string::npos) break;
    const std::size_t body_begin = reply.find('\n', open);
    if (body_begin == std::string::npos) break;
    std::size_t close = reply.find("\n```", body_begin);
    const std::size_t body_end = close == std::string::npos ? reply.size() : close + 1;
    std::string body = reply.substr(body_begin + 1, body_end - body_begin - 1);
    const std::size_t first = body.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && body.compare(first, dsl::kHeader.size(), dsl::kHeader) == 0) {
      SynthesisResult out;
      out.source = body.substr(first);
      std::size_t after = close == std::string::npos ? reply.size() : close + 4;
      after = std::min(reply.size(), after);
      std::string commentary = reply.substr(0, open) + reply.substr(after);
      const auto b = commentary.find_first_not_of(" \t\r\n");
      const auto e = commentary.find_last_not_of(" \t\r\n");
      out.commentary = b == std::string::npos ? "" : commentary.substr(b, e - b + 1);
      return out;
    }
    if (close == std::string::npos) break;
    pos = close + 4;
  }
  throw ExtractionError("reply contains no fenced dslv1 block");
}

}  // namespace sempipes
