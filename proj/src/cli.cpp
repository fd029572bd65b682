#include "pcfmem/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pcfmem/errors.hpp"
#include "pcfmem/pipeline.hpp"

namespace pcfmem {

namespace {

namespace fs = std::filesystem;

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> workers;
  std::optional<std::string> ablate;
  std::string kind = "all";
  std::optional<int> outer, inner;
  std::vector<std::string> axes;
  std::vector<std::string> inputs;
};

RunConfig resolve(const Flags& f) {
  RunConfig cfg = f.config.empty() ? RunConfig{} : load_config(f.config);
  if (f.seed) cfg.seed = *f.seed;
  if (f.out) cfg.out_dir = *f.out;
  if (f.workers) cfg.workers = *f.workers;
  if (f.ablate && *f.ablate != "all") cfg.ablation = ablation_from_string(*f.ablate);
  if (f.outer) cfg.ppo.outer_epochs = *f.outer;
  if (f.inner) cfg.ppo.inner_epochs = *f.inner;
  cfg.validate();
  return cfg;
}

void print_rows(const nlohmann::json& doc) {
  std::cout << csv_header() << "\n";
  for (const auto& r : doc["rows"]) {
    std::cout << r["method"].get<std::string>();
    for (const char* k : {"F1", "Design", "Param", "Trend", "Succ.", "Qual.", "Phys.", "Calls/q"}) {
      std::cout << ",";
      if (!r[k].is_null()) std::cout << r[k].get<double>();
    }
    std::cout << "\n";
  }
}

std::vector<fs::path> discover_results(const fs::path& dir) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_directory() && fs::exists(e.path() / "results.json")) out.push_back(e.path() / "results.json");
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"pcfmem: skill-bank memory controller for fiber inverse design"};
  app.require_subcommand(1);
  app.fallthrough();
  Flags f;
  app.add_option("--config", f.config, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--seed", f.seed, "master seed");
  app.add_option("--out", f.out, "output directory");
  app.add_option("--workers", f.workers, "rollout worker threads");
  app.add_option("--outer", f.outer, "outer evolution epochs");
  app.add_option("--inner", f.inner, "inner training epochs per outer epoch");

  auto* gen = app.add_subcommand("gen-data", "generate traces, queries and splits");
  auto* train = app.add_subcommand("train", "inner loop on the initial skill bank");
  auto* evolve = app.add_subcommand("evolve", "full closed loop");
  auto* eval = app.add_subcommand("eval", "train and score on the test split");
  eval->add_option("--ablate", f.ablate,
                   "none | no-designer | no-redistribution | no-bias | no-controller | all");
  auto* baseline = app.add_subcommand("baseline", "classical optimizers on the test split");
  baseline->add_option("--kind", f.kind, "random_search | nelder_mead | surrogate | all");
  auto* report = app.add_subcommand("report", "merge results.json files");
  report->add_option("inputs", f.inputs, "results.json files (default: <out>/*/results.json)");
  auto* sweep = app.add_subcommand("sweep", "one-axis hyperparameter grids");
  sweep->add_option("--axis", f.axes, "axis name, repeatable (default: all)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    const RunConfig cfg = resolve(f);
    nlohmann::json doc;
    if (gen->parsed()) {
      doc = stage_gen_data(cfg);
      std::cout << "traces " << doc["traces"] << ", mean spans " << doc["mean_spans"]
                << ", success rate " << doc["success_rate"] << "\n";
    } else if (train->parsed()) {
      doc = stage_train(cfg);
    } else if (evolve->parsed()) {
      doc = stage_evolve(cfg);
    } else if (eval->parsed()) {
      std::vector<Ablation> which;
      if (f.ablate && *f.ablate == "all")
        which.assign(std::begin(kAllAblations), std::end(kAllAblations));
      else
        which.push_back(cfg.ablation);
      doc = stage_eval(cfg, which);
    } else if (baseline->parsed()) {
      std::vector<BaselineKind> kinds;
      if (f.kind == "all")
        kinds = {BaselineKind::kRandomSearch, BaselineKind::kNelderMead, BaselineKind::kSurrogate};
      else
        kinds.push_back(baseline_from_string(f.kind));
      doc = stage_baseline(cfg, kinds);
    } else if (report->parsed()) {
      std::vector<fs::path> inputs(f.inputs.begin(), f.inputs.end());
      if (inputs.empty()) inputs = discover_results(cfg.out_dir);
      if (inputs.empty()) throw ValidationError("report: no results.json inputs found");
      doc = stage_report(inputs);
    } else if (sweep->parsed()) {
      doc = stage_sweep(cfg, f.axes.empty() ? kSweepAxes : f.axes);
    }
    write_results(doc, cfg.out_dir);
    if (!doc["rows"].empty()) print_rows(doc);
    std::cout << "wrote " << (fs::path(cfg.out_dir) / "results.json").string() << "\n";
    return kExitOk;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n" << app.help();
    return kExitUsage;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const ParseError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const ValidationError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const DomainError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  }
}

}  // namespace pcfmem
