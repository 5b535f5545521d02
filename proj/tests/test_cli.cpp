#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "sempipes/csv.hpp"
#include "sempipes/optimizer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kData = SEMPIPES_DATA_DIR;

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = sempipes::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("sempipes_cli_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::vector<json> read_log(const fs::path& p) {
  std::vector<json> out;
  std::ifstream in(p);
  for (std::string line; std::getline(in, line);) out.push_back(json::parse(line));
  return out;
}

std::vector<std::string> fraud_args(const std::string& cmd, const fs::path& out) {
  return {cmd,
          "--spec",
          (kData / "spec.toml").string(),
          "--data",
          "baskets=" + (kData / "baskets.csv").string(),
          "--data",
          "products=" + (kData / "products.csv").string(),
          "--out",
          out.string(),
          "--seed",
          "7"};
}

}  // namespace

TEST_CASE("validate-spec") {
  auto r = run({"validate-spec", "--spec", (kData / "spec.toml").string()});
  CHECK(r.code == 0);
  CHECK(json::parse(r.out)["semantic_operators"] == 1);

  const fs::path bad = scratch("bad.toml");
  std::ofstream(bad) << "version = 2\n";
  r = run({"validate-spec", "--spec", bad.string()});
  CHECK(r.code == 2);
  CHECK(json::parse(r.err)["error"]["type"] == "ConfigError");
}

TEST_CASE("usage errors exit with 2") {
  CHECK(run({}).code == 2);
  CHECK(run({"fit"}).code == 2);
  CHECK(run({"optimize", "--spec", "x", "--budget", "many"}).code == 2);
  CHECK(run({"--help"}).code == 0);
}

TEST_CASE("fit is reproducible and writes its report") {
  const fs::path a = scratch("fit_a"), b = scratch("fit_b");
  auto r = run(fraud_args("fit", a));
  REQUIRE(r.code == 0);
  REQUIRE(run(fraud_args("fit", b)).code == 0);
  CHECK(slurp(a / "archive.json") == slurp(b / "archive.json"));
  CHECK(slurp(a / "manifest.json") != "");
  const json report = json::parse(slurp(a / "fit_report.json"));
  CHECK(report["synthesis_calls"] == 1);
  CHECK(report["operators"]["basket_features"]["attempts"] == 1);
  const json manifest = json::parse(slurp(a / "manifest.json"));
  CHECK(manifest["seed"] == 7);
  CHECK(manifest["data"]["baskets"]["rows"] == 500);
}

TEST_CASE("fit with a holdout split reports the held-out score") {
  const fs::path a = scratch("fit_holdout");
  auto args = fraud_args("fit", a);
  args.insert(args.end(), {"--holdout", "0.25"});
  REQUIRE(run(args).code == 0);
  const json report = json::parse(slurp(a / "fit_report.json"));
  CHECK(report["holdout"]["rows"] == 125);
  CHECK(report["holdout"]["metric"] == "auroc");
  args.back() = "1.5";
  CHECK(run(args).code == 2);
}

TEST_CASE("unbound input names the input") {
  const auto r = run({"fit", "--spec", (kData / "spec.toml").string(), "--data",
                      "baskets=" + (kData / "baskets.csv").string(), "--out", scratch("unbound").string()});
  CHECK(r.code == 2);
  CHECK(json::parse(r.err)["error"]["message"].get<std::string>().find("'products'") != std::string::npos);
}

TEST_CASE("llm backend without an API key is an auth failure") {
  ::unsetenv("SEMPIPES_API_KEY");
  auto args = fraud_args("fit", scratch("llm"));
  args.insert(args.end(), {"--synth", "llm", "--endpoint", "http://127.0.0.1:1/v1"});
  const auto r = run(args);
  CHECK(r.code == 3);
  CHECK(json::parse(r.err)["error"]["type"] == "AuthError");
}

TEST_CASE("predict writes one row per basket, needs no backend, and reports drift") {
  const fs::path a = scratch("pred_fit");
  REQUIRE(run(fraud_args("fit", a)).code == 0);
  ::unsetenv("SEMPIPES_API_KEY");
  const fs::path p = scratch("pred_out");
  auto r = run({"predict", "--archive", (a / "archive.json").string(), "--data",
                "baskets=" + (kData / "new_baskets.csv").string(), "--data",
                "products=" + (kData / "products.csv").string(), "--out", p.string()});
  REQUIRE(r.code == 0);
  const auto preds = sempipes::read_csv(p / "predictions.csv");
  CHECK(preds.row_count() == 40);
  CHECK(preds.has("prediction"));

  // Drop a column the model was fitted with.
  const auto baskets = sempipes::read_csv(kData / "new_baskets.csv");
  const fs::path drifted = scratch("drifted.csv");
  sempipes::write_csv(drifted, baskets.without(std::vector<std::string>{"channel"}));
  r = run({"predict", "--archive", (a / "archive.json").string(), "--data", "baskets=" + drifted.string(), "--data",
           "products=" + (kData / "products.csv").string(), "--out", p.string()});
  CHECK(r.code == 4);
  CHECK(json::parse(r.err)["error"]["missing_columns"] == json::array({"baskets.channel"}));
}

TEST_CASE("optimize: log shape, monotone best, random parents") {
  const fs::path a = scratch("opt_mcts");
  auto args = fraud_args("optimize", a);
  args.insert(args.end(), {"--policy", "mcts", "--budget", "24"});
  REQUIRE(run(args).code == 0);
  const auto log = read_log(a / "search_log.jsonl");
  REQUIRE(log.size() == 24);
  for (std::size_t i = 1; i < log.size(); ++i)
    CHECK(log[i]["best_so_far"].get<double>() >= log[i - 1]["best_so_far"].get<double>());
  for (const auto& rec : log)
    for (const char* key : {"step", "node_id", "parent_id", "policy", "utility", "failed", "operators", "wall_time_ms"})
      CHECK(rec.contains(key));
  CHECK(fs::exists(a / "tree.json"));
  CHECK(fs::exists(a / "archive.json"));
  const json summary = json::parse(slurp(a / "summary.json"));
  CHECK(summary["curve"].size() == 24);
  CHECK(summary["best_utility"] == log.back()["best_so_far"]);

  const fs::path b = scratch("opt_random");
  args = fraud_args("optimize", b);
  args.insert(args.end(), {"--policy", "random", "--budget", "6"});
  REQUIRE(run(args).code == 0);
  for (const auto& rec : read_log(b / "search_log.jsonl"))
    if (rec["step"] != 0) CHECK(rec["parent_id"] == 0);
}

TEST_CASE("optimize with budget 1 reports the unsearched pipeline's utility") {
  const fs::path a = scratch("opt_b1");
  auto args = fraud_args("optimize", a);
  args.insert(args.end(), {"--budget", "1"});
  REQUIRE(run(args).code == 0);
  const json summary = json::parse(slurp(a / "summary.json"));
  const auto g = sempipes::PipelineGraph::from_file(kData / "spec.toml");
  const sempipes::DataMap data = {{"baskets", sempipes::read_csv(kData / "baskets.csv")},
                                  {"products", sempipes::read_csv(kData / "products.csv")}};
  const auto cv = sempipes::cv_utility(g, data, {}, sempipes::Metric::Auroc, 5, 7);
  CHECK(summary["best_utility"].get<double>() == cv.utility.value());
  CHECK(summary["synthesis_calls"] == 0);
}

TEST_CASE("optimize runs are byte-identical under the logical clock") {
  const fs::path a = scratch("det_a"), b = scratch("det_b");
  for (const auto& dir : {a, b}) {
    auto args = fraud_args("optimize", dir);
    args.insert(args.end(), {"--policy", "truncation", "--budget", "10", "--clock", "logical"});
    REQUIRE(run(args).code == 0);
  }
  CHECK(slurp(a / "search_log.jsonl") == slurp(b / "search_log.jsonl"));
  CHECK(slurp(a / "archive.json") == slurp(b / "archive.json"));
  CHECK(slurp(a / "tree.json") == slurp(b / "tree.json"));
}
