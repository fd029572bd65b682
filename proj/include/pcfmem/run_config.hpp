#ifndef PCFMEM_RUN_CONFIG_HPP_
#define PCFMEM_RUN_CONFIG_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "pcfmem/rl_trainer.hpp"

namespace pcfmem {

enum class Ablation { kNone, kNoDesigner, kNoRedistribution, kNoBias, kNoController };
inline constexpr Ablation kAllAblations[] = {Ablation::kNone, Ablation::kNoDesigner,
                                             Ablation::kNoRedistribution, Ablation::kNoBias,
                                             Ablation::kNoController};
std::string_view to_string(Ablation a);
Ablation ablation_from_string(std::string_view s);
// Report row label ("full", "w/o Designer Evolution", ...).
std::string ablation_label(Ablation a);

struct SurrogateConfig {
  std::size_t train_samples = 2000;
  int epochs = 40;
  std::size_t batch = 64;
  double learning_rate = 1e-3;
};

struct RunConfig {
  std::uint64_t seed = 1;
  std::size_t n_traces = 500;
  // Empty: corpora are regenerated from the seed.
  std::string data_dir;
  std::string out_dir = "runs/default";
  int workers = 1;
  std::size_t top_k = 2;
  std::size_t retrieval_k = 5;
  double bias_b0 = 1.0;
  std::size_t val_traces = 32;
  PPOConfig ppo;
  Ablation ablation = Ablation::kNone;
  SurrogateConfig surrogate;

  // Throws ConfigError on out-of-range values.
  void validate() const;
  TrainerConfig trainer() const;
};

// Unknown keys anywhere in the document are rejected with ConfigError.
RunConfig config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& c);
RunConfig load_config(const std::filesystem::path& path);

}  // namespace pcfmem

#endif  // PCFMEM_RUN_CONFIG_HPP_
