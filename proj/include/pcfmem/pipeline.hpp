#ifndef PCFMEM_PIPELINE_HPP_
#define PCFMEM_PIPELINE_HPP_

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "pcfmem/baselines.hpp"
#include "pcfmem/data_synth.hpp"
#include "pcfmem/rl_trainer.hpp"
#include "pcfmem/run_config.hpp"

namespace pcfmem {

struct Dataset {
  Corpus corpus;
  Splits splits;
  std::vector<Trace> train, val, test;
  QueryIndex queries;
};

// Loads traces/queries/splits from cfg.data_dir when set, otherwise
// generates them from cfg.seed.
Dataset prepare_data(const RunConfig& cfg);
Dataset generate_data(const RunConfig& cfg);
void write_data(const Dataset& data, const std::filesystem::path& dir);

// Each stage returns the results document; write_results() persists it as
// results.json plus results.csv (one line per "rows" entry).
nlohmann::json stage_gen_data(const RunConfig& cfg);
nlohmann::json stage_train(const RunConfig& cfg);
nlohmann::json stage_evolve(const RunConfig& cfg);
nlohmann::json stage_eval(const RunConfig& cfg, const std::vector<Ablation>& ablations);
nlohmann::json stage_baseline(const RunConfig& cfg, const std::vector<BaselineKind>& kinds);
nlohmann::json stage_report(const std::vector<std::filesystem::path>& inputs);

inline const std::vector<std::string> kSweepAxes = {"retrieval_k",    "learning_rate",
                                                    "entropy_coef",   "designer_every",
                                                    "max_bank_size",  "top_k"};
nlohmann::json stage_sweep(const RunConfig& cfg, const std::vector<std::string>& axes);

// Test-split metric row for an already-trained system.
MetricReport evaluate_agent(const std::string& label, const PolicyParams& params,
                            const SkillBank& bank, const Dataset& data, const TrainerConfig& tcfg,
                            std::uint64_t seed);

// Per-query baseline rows on the test split's parameter_adjustment queries.
std::vector<QueryOutcome> run_baseline(BaselineKind kind, const Dataset& data,
                                       const RunConfig& cfg);

void write_results(const nlohmann::json& doc, const std::filesystem::path& dir);

}  // namespace pcfmem

#endif  // PCFMEM_PIPELINE_HPP_
