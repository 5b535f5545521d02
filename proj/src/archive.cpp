#include "sempipes/archive.hpp"

#include <fstream>

#include "sempipes/errors.hpp"
#include "sempipes/hashing.hpp"

namespace sempipes {

namespace {

using nlohmann::json;

json schema_to_json(const dsl::Schema& s) {
  json out = json::object();
  for (const auto& [name, kind] : s) out[name] = kind_name(kind);
  return out;
}

Kind kind_from(const json& j) {
  const auto k = parse_kind(j.get<std::string>());
  if (!k) throw ConfigError("archive: unknown column kind " + j.dump());
  return *k;
}

dsl::Schema schema_from_json(const json& j) {
  dsl::Schema s;
  for (const auto& [name, kind] : j.items()) s[name] = kind_from(kind);
  return s;
}

}  // namespace

json cell_to_json(const Cell& c) {
  if (const auto* d = std::get_if<double>(&c)) return *d;
  if (const auto* b = std::get_if<bool>(&c)) return *b;
  if (const auto* s = std::get_if<std::string>(&c)) return *s;
  return nullptr;
}

Cell cell_from_json(const json& j) {
  if (j.is_null()) return std::monostate{};
  if (j.is_boolean()) return j.get<bool>();
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) return j.get<std::string>();
  throw ConfigError("archive: unsupported cell value " + j.dump());
}

json archive_to_json(const FittedPipeline& fp) {
  json j;
  j["format"] = "sempipes-archive";
  j["version"] = kArchiveVersion;
  j["spec"] = fp.graph.document();
  j["target"] = fp.target;

  j["states"] = json::object();
  for (const auto& [id, prog] : fp.states) j["states"][id] = {{"source", prog.source_text}, {"commentary", prog.commentary}};
  j["synthesis"] = json::object();
  for (const auto& [id, r] : fp.synthesis)
    j["synthesis"][id] = {{"attempts", r.attempts},
                          {"program_sha256", r.program_sha256},
                          {"commentary", r.commentary},
                          {"feedback", r.feedback}};

  if (fp.vectorizer) {
    j["vectorizer"] = json::array();
    for (const auto& c : fp.vectorizer->columns)
      j["vectorizer"].push_back({{"column", c.column},
                                 {"kind", kind_name(c.kind)},
                                 {"mean", c.mean},
                                 {"scale", c.scale},
                                 {"categories", c.categories}});
  }
  if (fp.labels) {
    json classes = json::array();
    for (const auto& c : fp.labels->classes) classes.push_back(cell_to_json(c));
    j["labels"] = {{"kind", kind_name(fp.labels->kind)}, {"classes", classes}};
  }
  if (fp.learner) {
    const auto& p = *fp.learner;
    j["learner"] = {{"kind", learner_kind_name(p.kind)},
                    {"weights", std::vector<double>(p.weights.data(), p.weights.data() + p.weights.size())},
                    {"bias", p.bias},
                    {"l2", p.hyper.l2},
                    {"learning_rate", p.hyper.learning_rate},
                    {"epochs", p.hyper.epochs}};
  }
  j["input_schemas"] = json::object();
  for (const auto& [name, s] : fp.input_schemas) j["input_schemas"][name] = schema_to_json(s);
  j["x_schema"] = schema_to_json(fp.x_schema);
  return j;
}

FittedPipeline archive_from_json(const json& j) {
  try {
    if (j.value("format", "") != "sempipes-archive") throw ConfigError("not a pipeline archive");
    if (j.at("version").get<int>() != kArchiveVersion)
      throw ConfigError("unsupported archive version " + j.at("version").dump());
    FittedPipeline fp;
    fp.graph = PipelineGraph::build(j.at("spec"));
    fp.target = j.at("target").get<std::string>();

    if (j.contains("synthesis"))
      for (const auto& [id, r] : j["synthesis"].items())
        fp.synthesis[id] = SynthesisRecord{r.at("attempts").get<int>(), r.at("program_sha256").get<std::string>(),
                                           r.value("commentary", ""),
                                           r.value("feedback", std::vector<std::string>{})};

    for (const auto& [id, s] : j.at("states").items()) {
      const Node& node = fp.graph.node(fp.graph.index_of(id));
      if (node.op != NodeOp::SemOp) throw ConfigError("archive: state for non-operator node '" + id + "'");
      const std::string source = s.at("source").get<std::string>();
      auto rec = fp.synthesis.find(id);
      if (rec != fp.synthesis.end() && !rec->second.program_sha256.empty() &&
          rec->second.program_sha256 != sha256_hex(source))
        throw ConfigError("archive: state of '" + id + "' does not match its recorded hash");
      dsl::Program prog = dsl::parse(source, program_kind_for(node.semop.kind));
      prog.commentary = s.value("commentary", "");
      fp.states.emplace(id, std::move(prog));
    }

    if (j.contains("vectorizer")) {
      VectorizerState v;
      for (const auto& c : j["vectorizer"])
        v.columns.push_back(ColumnEncoding{c.at("column").get<std::string>(), kind_from(c.at("kind")),
                                           c.at("mean").get<double>(), c.at("scale").get<double>(),
                                           c.at("categories").get<std::vector<std::string>>()});
      fp.vectorizer = std::move(v);
    }
    if (j.contains("labels")) {
      LabelEncoding enc;
      enc.kind = kind_from(j["labels"].at("kind"));
      for (const auto& c : j["labels"].at("classes")) enc.classes.push_back(cell_from_json(c));
      fp.labels = std::move(enc);
    }
    if (j.contains("learner")) {
      const auto& l = j["learner"];
      LearnerParams p;
      const auto kind = parse_learner_kind(l.at("kind").get<std::string>());
      if (!kind) throw ConfigError("archive: unknown learner " + l.at("kind").dump());
      p.kind = *kind;
      const auto w = l.at("weights").get<std::vector<double>>();
      p.weights = Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
      p.bias = l.at("bias").get<double>();
      p.hyper = {l.at("l2").get<double>(), l.at("learning_rate").get<double>(), l.at("epochs").get<int>()};
      if (fp.vectorizer && static_cast<std::size_t>(p.weights.size()) != fp.vectorizer->dimension())
        throw ConfigError("archive: learner weights do not match the vectorizer width");
      fp.learner = std::move(p);
    }
    for (const auto& [name, s] : j.at("input_schemas").items()) fp.input_schemas[name] = schema_from_json(s);
    fp.x_schema = schema_from_json(j.at("x_schema"));
    return fp;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("archive: ") + e.what());
  } catch (const ParseError& e) {
    throw ConfigError(std::string("archive: stored state does not parse: ") + e.what());
  }
}

void save_archive(const FittedPipeline& fp, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << archive_to_json(fp).dump(2) << "\n";
}

FittedPipeline load_archive(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("archive " + path.string() + " is not JSON: " + std::string(e.what()));
  }
  return archive_from_json(j);
}

}  // namespace sempipes
