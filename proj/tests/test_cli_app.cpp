#include <doctest.h>

#include <cmath>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "pcfmem/cli.hpp"
#include "pcfmem/errors.hpp"
#include "pcfmem/run_config.hpp"

using namespace pcfmem;
namespace fs = std::filesystem;

namespace {

const fs::path kWork = fs::temp_directory_path() / "pcfmem_test_cli";

int run(const std::string& args) {
  const std::string cmd = std::string(PCFMEM_CLI_PATH) + " " + args + " > " +
                          (kWork / "last.log").string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// results.json records its own output directory; compare everything else.
nlohmann::json without_dir(const fs::path& p) {
  auto j = nlohmann::json::parse(slurp(p));
  j["config"].erase("out_dir");
  return j;
}

fs::path write(const std::string& name, const std::string& text) {
  fs::create_directories(kWork);
  const fs::path p = kWork / name;
  std::ofstream(p) << text;
  return p;
}

// Small enough for a few seconds per stage.
const char* kTinyConfig = R"({
  "seed": 7, "n_traces": 80, "val_traces": 4,
  "ppo": {"inner_epochs": 2, "outer_epochs": 1, "batch": 4, "epochs_per_update": 1},
  "surrogate": {"train_samples": 64, "epochs": 2, "batch": 16}
})";

}  // namespace

TEST_CASE("config parsing") {
  const RunConfig c = config_from_json(nlohmann::json::parse(kTinyConfig));
  CHECK(c.seed == 7);
  CHECK(c.ppo.inner_epochs == 2);
  CHECK(c.ppo.gamma_d == 0.99);
  CHECK(config_from_json(to_json(c)).seed == 7);
  CHECK(to_json(config_from_json(to_json(c))) == to_json(c));
  CHECK_THROWS_AS(config_from_json(nlohmann::json::parse(R"({"sed": 1})")), ConfigError);
  CHECK_THROWS_AS(config_from_json(nlohmann::json::parse(R"({"ppo": {"lr": 1}})")), ConfigError);
  CHECK_THROWS_AS(config_from_json(nlohmann::json::parse(R"({"top_k": 9})")), ConfigError);
  CHECK_THROWS_AS(config_from_json(nlohmann::json::parse(R"({"ablation": "no-idea"})")), ConfigError);
  CHECK_THROWS_AS(config_from_json(nlohmann::json::parse(R"({"seed": "one"})")), ConfigError);
}

TEST_CASE("ablations map to trainer switches") {
  RunConfig c;
  c.ablation = Ablation::kNoRedistribution;
  CHECK(c.trainer().ppo.beta == 1.0);
  c.ablation = Ablation::kNoBias;
  CHECK(c.trainer().bias_b0 == 0.0);
  c.ablation = Ablation::kNoController;
  CHECK_FALSE(c.trainer().use_controller);
  c.ablation = Ablation::kNoDesigner;
  CHECK_FALSE(c.trainer().use_designer);
  CHECK(ablation_label(Ablation::kNoController) == "w/o Adaptive Skill Controller");
  CHECK(ablation_from_string("no-bias") == Ablation::kNoBias);
}

TEST_CASE("exit codes") {
  fs::remove_all(kWork);
  fs::create_directories(kWork);
  CHECK(run("") == kExitUsage);
  CHECK(run("gen-data --bogus") == kExitUsage);
  CHECK(run("frobnicate") == kExitUsage);
  CHECK(run("--config " + write("unknown.json", R"({"colour": 1})").string() + " gen-data") == kExitUsage);
  CHECK(run("--config " + write("broken.json", "{\"seed\": ").string() + " gen-data") == kExitData);

  const fs::path data = kWork / "corrupt";
  fs::create_directories(data);
  write("corrupt/traces.jsonl", "{\"format\":\"pcfmem-traces\",\"version\":9,\"count\":0}\n");
  write("corrupt/queries.jsonl", "");
  write("corrupt/splits.json", "{}");
  const fs::path cfg = write("corrupt.json", R"({"n_traces": 80, "data_dir": ")" + data.string() + "\"}");
  CHECK(run("--config " + cfg.string() + " --out " + (kWork / "o").string() + " train") == kExitData);

  const fs::path blowup = write("blowup.json", R"({
    "n_traces": 80, "val_traces": 4,
    "ppo": {"inner_epochs": 3, "outer_epochs": 0, "batch": 4, "learning_rate": 1e300, "grad_clip": 1e300}
  })");
  CHECK(run("--config " + blowup.string() + " --out " + (kWork / "b").string() + " train") == kExitNumeric);
}

TEST_CASE("gen-data is reproducible") {
  const fs::path a = kWork / "gen_a", b = kWork / "gen_b";
  REQUIRE(run("--seed 7 --out " + a.string() + " gen-data") == kExitOk);
  REQUIRE(run("--seed 7 --out " + b.string() + " gen-data") == kExitOk);
  for (const char* f : {"traces.jsonl", "queries.jsonl", "splits.json"}) CHECK(slurp(a / f) == slurp(b / f));
  CHECK(without_dir(a / "results.json") == without_dir(b / "results.json"));
  const auto summary = nlohmann::json::parse(slurp(a / "results.json"));
  CHECK(summary["traces"] == 500);
  // Stratified per family, so the shares round per family.
  const int train = summary["splits"]["train"], val = summary["splits"]["val"], test = summary["splits"]["test"];
  CHECK(train + val + test == 500);
  CHECK(std::abs(train - 350) <= 5);
}

TEST_CASE("stages on a tiny configuration") {
  const fs::path cfg = write("tiny.json", kTinyConfig);
  const std::string base = "--config " + cfg.string() + " --out ";

  REQUIRE(run(base + (kWork / "train").string() + " train") == kExitOk);
  REQUIRE(run(base + (kWork / "evolve0").string() + " --outer 0 evolve") == kExitOk);
  const auto train = nlohmann::json::parse(slurp(kWork / "train" / "results.json"));
  const auto evolve0 = nlohmann::json::parse(slurp(kWork / "evolve0" / "results.json"));
  CHECK(train["rows"] == evolve0["rows"]);
  CHECK(slurp(kWork / "train" / "policy.json") == slurp(kWork / "evolve0" / "policy.json"));

  REQUIRE(run(base + (kWork / "eval").string() + " eval --ablate no-controller") == kExitOk);
  const auto eval = nlohmann::json::parse(slurp(kWork / "eval" / "results.json"));
  CHECK(eval["rows"][0]["method"] == "w/o Adaptive Skill Controller");
  CHECK(eval["missing_metrics"] == nlohmann::json({"Judge", "Human"}));
  REQUIRE(run(base + (kWork / "eval2").string() + " eval --ablate no-controller") == kExitOk);
  CHECK(without_dir(kWork / "eval" / "results.json") == without_dir(kWork / "eval2" / "results.json"));
  CHECK(slurp(kWork / "eval" / "results.csv").rfind("method,F1,", 0) == 0);

  REQUIRE(run(base + (kWork / "rs").string() + " baseline --kind random_search") == kExitOk);
  const auto rs = nlohmann::json::parse(slurp(kWork / "rs" / "results.json"));
  CHECK(rs["rows"][0]["Calls/q"] == 100.0);
  CHECK(rs["rows"][0]["Trend"].is_null());

  REQUIRE(run("--out " + (kWork / "merged").string() + " report " + (kWork / "eval" / "results.json").string() +
              " " + (kWork / "rs" / "results.json").string()) == kExitOk);
  const auto merged = nlohmann::json::parse(slurp(kWork / "merged" / "results.json"));
  CHECK(merged["rows"].size() == 2);
  CHECK(run("--out " + (kWork / "merged").string() + " report " + (kWork / "nope.json").string()) == kExitData);

  CHECK(run(base + (kWork / "sweep").string() + " sweep --axis warp_factor") == kExitUsage);
  fs::remove_all(kWork);
}
