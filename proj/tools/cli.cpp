#include "cli.hpp"

#include <CLI11.hpp>
#include <Eigen/Core>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include "sempipes/archive.hpp"
#include "sempipes/csv.hpp"
#include "sempipes/errors.hpp"
#include "sempipes/hashing.hpp"
#include "sempipes/llm_client.hpp"
#include "sempipes/optimizer.hpp"

namespace sempipes::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Options {
  std::string command;
  std::string spec;
  std::vector<std::string> data;
  std::string archive;
  std::string out = "sempipes_out";
  std::uint64_t seed = 0;
  std::string policy = "mcts";
  int budget = 24;
  int folds = 5;
  std::string metric;
  std::string synth = "mock";
  std::string endpoint;
  std::string model;
  std::optional<double> temperature;
  std::optional<double> holdout;
  int max_retries = kDefaultMaxRetries;
  std::string clock = "wall";
  bool verbose = false;

  json to_json() const {
    json j = {{"command", command}, {"spec", spec},     {"data", data},       {"seed", seed},
              {"synth", synth},     {"endpoint", endpoint}, {"model", model}, {"max_retries", max_retries}};
    if (!archive.empty()) j["archive"] = archive;
    if (command == "optimize") {
      j["policy"] = policy;
      j["budget"] = budget;
      j["folds"] = folds;
      j["clock"] = clock;
    }
    j["metric"] = metric.empty() ? json(nullptr) : json(metric);
    j["temperature"] = temperature ? json(*temperature) : json(nullptr);
    j["holdout"] = holdout ? json(*holdout) : json(nullptr);
    return j;
  }
};

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + p.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + p.string());
  out << text;
}

std::map<std::string, std::string> data_paths(const std::vector<std::string>& bindings) {
  std::map<std::string, std::string> out;
  for (const auto& b : bindings) {
    const auto eq = b.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == b.size())
      throw ConfigError("--data expects NAME=PATH, got '" + b + "'");
    const std::string name = b.substr(0, eq);
    if (!out.emplace(name, b.substr(eq + 1)).second) throw ConfigError("input '" + name + "' bound twice");
  }
  return out;
}

DataMap load_data(const PipelineGraph& g, const std::map<std::string, std::string>& paths) {
  std::vector<std::string> unbound;
  for (const auto& name : g.input_names())
    if (!paths.count(name)) unbound.push_back(name);
  if (!unbound.empty()) {
    std::string msg = "unbound inputs:";
    for (const auto& n : unbound) msg += " '" + n + "'";
    throw ConfigError(msg);
  }
  DataMap data;
  for (const auto& [name, path] : paths) data.emplace(name, read_csv(path));
  return data;
}

json manifest(const Options& o, const std::map<std::string, std::string>& paths, const DataMap& data) {
  json m;
  m["tool"] = "sempipes";
  m["version"] = SEMPIPES_VERSION;
  m["config"] = o.to_json();
  m["config_sha256"] = sha256_hex(m["config"].dump());
  m["seed"] = o.seed;
  if (!o.spec.empty()) m["spec_sha256"] = sha256_hex(read_file(o.spec));
  if (!o.archive.empty()) m["archive_sha256"] = sha256_hex(read_file(o.archive));
  m["data"] = json::object();
  for (const auto& [name, path] : paths)
    m["data"][name] = {{"path", path}, {"sha256", sha256_hex(read_file(path))}, {"rows", data.at(name).row_count()}};
  m["build"] = {{"compiler", __VERSION__},
                {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                              std::to_string(EIGEN_MINOR_VERSION)},
                {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                      std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                      std::to_string(NLOHMANN_JSON_VERSION_PATCH)}};
  return m;
}

std::unique_ptr<Synthesizer> make_synth(const Options& o) {
  if (o.synth == "mock") return std::make_unique<MockSynthesizer>();
  if (o.synth == "llm") return std::make_unique<LlmSynthesizer>(LlmConfig::from_env(o.endpoint, o.model));
  throw ConfigError("--synth must be mock or llm");
}

// The single input both markers read from; holdout rows are split there.
std::string primary_input(const PipelineGraph& g) {
  std::vector<std::string> found;
  for (std::size_t i = 0; i < g.nodes().size(); ++i)
    if (g.node(i).op == NodeOp::Input && g.is_ancestor(i, g.mark_x()) && g.is_ancestor(i, g.mark_y()))
      found.push_back(g.node(i).input_name);
  if (found.size() != 1) throw ConfigError("--holdout needs exactly one input feeding both the X and y markers");
  return found.front();
}

struct Split {
  DataMap train;
  std::optional<DataMap> holdout;
};

Split split_holdout(const PipelineGraph& g, const DataMap& data, std::optional<double> fraction, std::uint64_t seed) {
  if (!fraction) return {data, std::nullopt};
  if (!(*fraction > 0.0 && *fraction < 1.0)) throw ConfigError("--holdout must be in (0, 1)");
  const std::string name = primary_input(g);
  const Table& t = data.at(name);
  const std::size_t n = t.row_count();
  const auto n_hold = static_cast<std::size_t>(std::llround(*fraction * static_cast<double>(n)));
  if (n_hold == 0 || n_hold >= n) throw ConfigError("--holdout leaves an empty split");
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  Rng rng(derive_seed(seed, seed_tag("holdout")));
  rng.shuffle(rows);
  std::vector<std::size_t> hold(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(n_hold));
  std::vector<std::size_t> train(rows.begin() + static_cast<std::ptrdiff_t>(n_hold), rows.end());
  std::sort(hold.begin(), hold.end());
  std::sort(train.begin(), train.end());
  Split s{data, data};
  s.train.insert_or_assign(name, t.take(train));
  s.holdout->insert_or_assign(name, t.take(hold));
  return s;
}

Metric chosen_metric(const Options& o, const PipelineGraph& g) {
  if (o.metric.empty()) return g.effective_metric();
  const auto m = parse_metric(o.metric);
  if (!m) throw ConfigError("unknown metric '" + o.metric + "'");
  return *m;
}

json holdout_report(const FittedPipeline& fp, const DataMap& holdout, Metric metric) {
  ExecOptions eo;
  Executor ex(fp.graph, holdout, fp.states, eo);
  const Column y = ex.output(fp.graph.mark_y()).column(fp.target);
  const Eigen::VectorXd truth = fp.labels ? encode_labels(*fp.labels, y) : numeric_targets(y);
  const Eigen::VectorXd scores = predict_scores(fp, holdout);
  return {{"rows", y.size()}, {"metric", metric_name(metric)}, {"value", score(metric, truth, scores)}};
}

json synthesis_json(const std::map<std::string, SynthesisRecord>& records) {
  json out = json::object();
  for (const auto& [id, r] : records)
    out[id] = {{"attempts", r.attempts},
               {"program_sha256", r.program_sha256},
               {"commentary", r.commentary},
               {"feedback", r.feedback}};
  return out;
}

void write_outputs(const fs::path& dir, const FittedPipeline& fp, const json& manifest_json) {
  save_archive(fp, dir / "archive.json");
  write_text(dir / "manifest.json", manifest_json.dump(2) + "\n");
}

int cmd_validate(const Options& o, std::ostream& out) {
  const PipelineGraph g = PipelineGraph::from_file(o.spec);
  json j;
  j["valid"] = true;
  j["inputs"] = g.input_names();
  j["nodes"] = json::array();
  for (std::size_t i : g.topo_order()) {
    const Node& n = g.node(i);
    json node = {{"id", n.id}, {"op", node_op_name(n.op)}};
    if (n.op == NodeOp::SemOp) node["kind"] = operator_kind_name(n.semop.kind);
    j["nodes"].push_back(std::move(node));
  }
  j["semantic_operators"] = g.semop_order().size();
  j["learner"] = learner_kind_name(g.learner_kind());
  j["metric"] = metric_name(g.effective_metric());
  out << j.dump(2) << "\n";
  return kOk;
}

int cmd_fit(const Options& o, std::ostream& out) {
  const PipelineGraph g = PipelineGraph::from_file(o.spec);
  const auto paths = data_paths(o.data);
  const DataMap data = load_data(g, paths);
  const Metric metric = chosen_metric(o, g);
  auto backend = make_synth(o);
  CountingSynthesizer synth(*backend);
  const Split split = split_holdout(g, data, o.holdout, o.seed);

  FitConfig cfg;
  cfg.seed = o.seed;
  cfg.max_retries = o.max_retries;
  cfg.temperature = o.temperature.value_or(0.0);
  const FittedPipeline fp = fit(g, split.train, synth, cfg);

  fs::create_directories(o.out);
  write_outputs(o.out, fp, manifest(o, paths, data));
  json report;
  report["command"] = "fit";
  report["target"] = fp.target;
  report["synthesis_calls"] = synth.calls();
  report["operators"] = synthesis_json(fp.synthesis);
  report["holdout"] = split.holdout ? holdout_report(fp, *split.holdout, metric) : json(nullptr);
  write_text(fs::path(o.out) / "fit_report.json", report.dump(2) + "\n");
  out << json{{"archive", (fs::path(o.out) / "archive.json").string()}, {"synthesis_calls", synth.calls()}}.dump()
      << "\n";
  return kOk;
}

int cmd_predict(const Options& o, std::ostream& out) {
  if (o.archive.empty()) throw ConfigError("predict needs --archive");
  const FittedPipeline fp = load_archive(o.archive);
  const auto paths = data_paths(o.data);
  DataMap data;
  for (const auto& [name, path] : paths) data.emplace(name, read_csv(path));
  const Eigen::VectorXd scores = predict_scores(fp, data);
  std::vector<Cell> decoded;
  for (Eigen::Index i = 0; i < scores.size(); ++i)
    decoded.push_back(fp.labels ? decode_label(*fp.labels, scores[i]) : Cell{scores[i]});
  std::vector<std::optional<double>> raw(scores.data(), scores.data() + scores.size());
  const Table preds({Column("prediction", fp.labels ? fp.labels->kind : Kind::Numeric, std::move(decoded)),
                     Column::numeric("score", raw)});
  fs::create_directories(o.out);
  write_csv(fs::path(o.out) / "predictions.csv", preds);
  write_text(fs::path(o.out) / "manifest.json", manifest(o, paths, data).dump(2) + "\n");
  out << json{{"predictions", (fs::path(o.out) / "predictions.csv").string()}, {"rows", preds.row_count()}}.dump()
      << "\n";
  return kOk;
}

int cmd_optimize(const Options& o, std::ostream& out, std::ostream& err) {
  const PipelineGraph g = PipelineGraph::from_file(o.spec);
  const auto paths = data_paths(o.data);
  const DataMap data = load_data(g, paths);
  const auto policy = parse_policy(o.policy);
  if (!policy) throw ConfigError("unknown policy '" + o.policy + "'");
  if (o.clock != "wall" && o.clock != "logical") throw ConfigError("--clock must be wall or logical");
  auto backend = make_synth(o);
  CountingSynthesizer synth(*backend);
  const Split split = split_holdout(g, data, o.holdout, o.seed);

  PolicyConfig cfg;
  cfg.policy = *policy;
  cfg.budget = o.budget;
  cfg.folds = o.folds;
  cfg.seed = o.seed;
  cfg.max_retries = o.max_retries;
  cfg.temperature = o.temperature.value_or(2.0);
  cfg.metric = chosen_metric(o, g);

  fs::create_directories(o.out);
  std::ofstream log(fs::path(o.out) / "search_log.jsonl", std::ios::binary);
  if (!log) throw ConfigError("cannot write the search log in " + o.out);

  Optimizer opt(g, split.train, synth, cfg);
  if (o.clock == "logical") opt.set_clock([n = 0.0]() mutable { return n++; });
  opt.on_step([&](const json& rec) {
    log << rec.dump() << "\n";
    log.flush();
    if (o.verbose)
      err << "step " << rec["step"] << "/" << o.budget << " utility=" << rec["utility"].dump()
          << " best=" << rec["best_so_far"] << "\n";
  });
  const OptimizationResult r = opt.run();

  FitConfig fc;
  fc.seed = o.seed;
  FittedPipeline best = fit_with_states(g, split.train, r.best_states, fc);
  best.synthesis = r.tree.node(r.best_id).records;
  write_outputs(o.out, best, manifest(o, paths, data));
  write_text(fs::path(o.out) / "tree.json", r.tree.to_json().dump(2) + "\n");

  json summary;
  summary["policy"] = policy_name(*policy);
  summary["budget"] = o.budget;
  summary["seed"] = o.seed;
  summary["metric"] = metric_name(*cfg.metric);
  summary["root_utility"] = *r.tree.node(0).utility;
  summary["best_node"] = r.best_id;
  summary["best_step"] = r.tree.node(r.best_id).step;
  summary["best_utility"] = r.best_utility;
  summary["curve"] = json::array();
  for (const auto& rec : r.log) summary["curve"].push_back(rec["best_so_far"]);
  summary["failed_steps"] = std::count_if(r.log.begin(), r.log.end(), [](const json& rec) { return rec["failed"].get<bool>(); });
  summary["synthesis_calls"] = synth.calls();
  summary["holdout"] = split.holdout ? holdout_report(best, *split.holdout, *cfg.metric) : json(nullptr);
  write_text(fs::path(o.out) / "summary.json", summary.dump(2) + "\n");
  out << json{{"best_utility", r.best_utility}, {"best_node", r.best_id}, {"steps", r.log.size()}}.dump() << "\n";
  return kOk;
}

int report(std::ostream& err, int code, const std::string& type, const std::string& message,
           json extra = json::object()) {
  json j = {{"error", {{"type", type}, {"message", message}, {"exit_code", code}}}};
  for (auto& [k, v] : extra.items()) j["error"][k] = v;
  err << j.dump() << "\n";
  return code;
}

}  // namespace

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, out, err);
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Tabular ML pipelines with synthesized data operators", "sempipes"};
  app.require_subcommand(1);

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--out", o.out, "Output directory")->capture_default_str();
    sub->add_option("--data", o.data, "Input binding NAME=PATH (repeatable)");
  };
  auto add_synth = [&](CLI::App* sub) {
    sub->add_option("--spec", o.spec, "Pipeline spec (TOML)")->required();
    sub->add_option("--seed", o.seed, "Random seed")->capture_default_str();
    sub->add_option("--metric", o.metric, "accuracy, auroc or rmse");
    sub->add_option("--synth", o.synth, "Synthesizer backend")->check(CLI::IsMember({"mock", "llm"}))->capture_default_str();
    sub->add_option("--endpoint", o.endpoint, "Chat-completions endpoint URL");
    sub->add_option("--model", o.model, "Model name for the endpoint");
    sub->add_option("--temperature", o.temperature, "Sampling temperature");
    sub->add_option("--holdout", o.holdout, "Fraction of rows held out for a final report");
    sub->add_option("--max-retries", o.max_retries, "Validation retries per operator")->capture_default_str();
  };

  auto* fit_cmd = app.add_subcommand("fit", "Synthesize operator states and train the pipeline");
  add_common(fit_cmd);
  add_synth(fit_cmd);

  auto* opt_cmd = app.add_subcommand("optimize", "Search over operator states");
  add_common(opt_cmd);
  add_synth(opt_cmd);
  opt_cmd->add_option("--policy", o.policy, "mcts, truncation, greedy or random")->capture_default_str();
  opt_cmd->add_option("--budget", o.budget, "Search steps including the initial pipeline")->capture_default_str();
  opt_cmd->add_option("--folds", o.folds, "Cross-validation folds")->capture_default_str();
  opt_cmd->add_option("--clock", o.clock, "wall or logical (step counter) timing in the log")->capture_default_str();
  opt_cmd->add_flag("--verbose", o.verbose, "Print progress to stderr");

  auto* pred_cmd = app.add_subcommand("predict", "Apply a fitted archive to new data");
  add_common(pred_cmd);
  pred_cmd->add_option("--archive", o.archive, "Fitted archive (archive.json)")->required();

  auto* val_cmd = app.add_subcommand("validate-spec", "Check a pipeline spec");
  val_cmd->add_option("--spec", o.spec, "Pipeline spec (TOML)")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    return report(err, kConfig, "UsageError", e.what());
  }

  if (*fit_cmd) o.command = "fit";
  if (*opt_cmd) o.command = "optimize";
  if (*pred_cmd) o.command = "predict";
  if (*val_cmd) o.command = "validate-spec";

  try {
    if (o.command == "validate-spec") return cmd_validate(o, out);
    if (o.command == "fit") return cmd_fit(o, out);
    if (o.command == "predict") return cmd_predict(o, out);
    return cmd_optimize(o, out, err);
  } catch (const AuthError& e) {
    return report(err, kAuth, "AuthError", e.what());
  } catch (const SchemaDriftError& e) {
    return report(err, kDrift, "SchemaDriftError", e.what(), {{"missing_columns", e.missing_columns()}});
  } catch (const ConfigError& e) {
    return report(err, kConfig, "ConfigError", e.what());
  } catch (const GraphError& e) {
    return report(err, kConfig, "GraphError", e.what());
  } catch (const SynthesisError& e) {
    return report(err, kInternal, "SynthesisError", e.what(), {{"node", e.node()}, {"validation", e.report().to_json()}});
  } catch (const Error& e) {
    return report(err, kInternal, "Error", e.what());
  } catch (const std::exception& e) {
    return report(err, kInternal, "InternalError", e.what());
  }
}

}  // namespace sempipes::cli
