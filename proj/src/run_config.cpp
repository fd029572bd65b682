#include "pcfmem/run_config.hpp"

#include <fstream>
#include <initializer_list>
#include <sstream>

#include "pcfmem/errors.hpp"

namespace pcfmem {

namespace {

using nlohmann::json;

void reject_unknown(const json& j, std::string_view where, std::initializer_list<std::string_view> keys) {
  if (!j.is_object()) throw ConfigError(std::string(where) + " must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    bool known = false;
    for (auto allowed : keys) known = known || k == allowed;
    if (!known) throw ConfigError("unknown config key '" + std::string(where) + k + "'");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out, std::string_view where) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + std::string(where) + key + "' has the wrong type");
  }
}

}  // namespace

std::string_view to_string(Ablation a) {
  switch (a) {
    case Ablation::kNone: return "none";
    case Ablation::kNoDesigner: return "no-designer";
    case Ablation::kNoRedistribution: return "no-redistribution";
    case Ablation::kNoBias: return "no-bias";
    case Ablation::kNoController: return "no-controller";
  }
  return "?";
}

Ablation ablation_from_string(std::string_view s) {
  for (Ablation a : kAllAblations)
    if (to_string(a) == s) return a;
  throw ConfigError("unknown ablation '" + std::string(s) + "'");
}

std::string ablation_label(Ablation a) {
  switch (a) {
    case Ablation::kNone: return "full";
    case Ablation::kNoDesigner: return "w/o Designer Evolution";
    case Ablation::kNoRedistribution: return "w/o Reward Redistribution";
    case Ablation::kNoBias: return "w/o New-Action Bias";
    case Ablation::kNoController: return "w/o Adaptive Skill Controller";
  }
  return "?";
}

void RunConfig::validate() const {
  ppo.validate();
  if (n_traces < 80) throw ConfigError("n_traces must be >= 80 (10 per family)");
  if (workers < 1) throw ConfigError("workers must be >= 1");
  if (top_k < 1 || top_k > 4) throw ConfigError("top_k must lie in [1, 4]");
  if (retrieval_k < 1) throw ConfigError("retrieval_k must be >= 1");
  if (!(bias_b0 >= 0.0)) throw ConfigError("bias_b0 must be >= 0");
  if (val_traces < 1) throw ConfigError("val_traces must be >= 1");
  if (surrogate.train_samples < 2 || surrogate.batch < 2 || surrogate.epochs < 1 ||
      !(surrogate.learning_rate > 0.0))
    throw ConfigError("surrogate settings out of range");
}

TrainerConfig RunConfig::trainer() const {
  TrainerConfig t;
  t.ppo = ppo;
  t.top_k = top_k;
  t.retrieval_k = retrieval_k;
  t.bias_b0 = bias_b0;
  t.val_traces = val_traces;
  t.workers = workers;
  switch (ablation) {
    case Ablation::kNone: break;
    case Ablation::kNoDesigner: t.use_designer = false; break;
    case Ablation::kNoRedistribution: t.ppo.beta = 1.0; break;
    case Ablation::kNoBias: t.bias_b0 = 0.0; break;
    case Ablation::kNoController: t.use_controller = false; break;
  }
  return t;
}

RunConfig config_from_json(const json& j) {
  reject_unknown(j, "", {"seed", "n_traces", "data_dir", "out_dir", "workers", "top_k",
                         "retrieval_k", "bias_b0", "val_traces", "ppo", "ablation", "surrogate"});
  RunConfig c;
  read(j, "seed", c.seed, "");
  read(j, "n_traces", c.n_traces, "");
  read(j, "data_dir", c.data_dir, "");
  read(j, "out_dir", c.out_dir, "");
  read(j, "workers", c.workers, "");
  read(j, "top_k", c.top_k, "");
  read(j, "retrieval_k", c.retrieval_k, "");
  read(j, "bias_b0", c.bias_b0, "");
  read(j, "val_traces", c.val_traces, "");
  if (j.contains("ablation")) {
    std::string a;
    read(j, "ablation", a, "");
    c.ablation = ablation_from_string(a);
  }
  if (j.contains("ppo")) {
    const json& p = j.at("ppo");
    reject_unknown(p, "ppo.",
                   {"gamma_d", "gae_lambda", "clip", "entropy_coef", "epochs_per_update",
                    "minibatch", "grad_clip", "learning_rate", "weight_decay", "value_coef",
                    "gamma_r", "beta", "inner_epochs", "outer_epochs", "batch"});
    PPOConfig& o = c.ppo;
    read(p, "gamma_d", o.gamma_d, "ppo.");
    read(p, "gae_lambda", o.gae_lambda, "ppo.");
    read(p, "clip", o.clip, "ppo.");
    read(p, "entropy_coef", o.entropy_coef, "ppo.");
    read(p, "epochs_per_update", o.epochs_per_update, "ppo.");
    read(p, "minibatch", o.minibatch, "ppo.");
    read(p, "grad_clip", o.grad_clip, "ppo.");
    read(p, "learning_rate", o.learning_rate, "ppo.");
    read(p, "weight_decay", o.weight_decay, "ppo.");
    read(p, "value_coef", o.value_coef, "ppo.");
    read(p, "gamma_r", o.gamma_r, "ppo.");
    read(p, "beta", o.beta, "ppo.");
    read(p, "inner_epochs", o.inner_epochs, "ppo.");
    read(p, "outer_epochs", o.outer_epochs, "ppo.");
    read(p, "batch", o.batch, "ppo.");
  }
  if (j.contains("surrogate")) {
    const json& s = j.at("surrogate");
    reject_unknown(s, "surrogate.", {"train_samples", "epochs", "batch", "learning_rate"});
    read(s, "train_samples", c.surrogate.train_samples, "surrogate.");
    read(s, "epochs", c.surrogate.epochs, "surrogate.");
    read(s, "batch", c.surrogate.batch, "surrogate.");
    read(s, "learning_rate", c.surrogate.learning_rate, "surrogate.");
  }
  c.validate();
  return c;
}

nlohmann::json to_json(const RunConfig& c) {
  const PPOConfig& o = c.ppo;
  return json{{"seed", c.seed},
              {"n_traces", c.n_traces},
              {"data_dir", c.data_dir},
              {"out_dir", c.out_dir},
              {"workers", c.workers},
              {"top_k", c.top_k},
              {"retrieval_k", c.retrieval_k},
              {"bias_b0", c.bias_b0},
              {"val_traces", c.val_traces},
              {"ablation", std::string(to_string(c.ablation))},
              {"ppo",
               {{"gamma_d", o.gamma_d},
                {"gae_lambda", o.gae_lambda},
                {"clip", o.clip},
                {"entropy_coef", o.entropy_coef},
                {"epochs_per_update", o.epochs_per_update},
                {"minibatch", o.minibatch},
                {"grad_clip", o.grad_clip},
                {"learning_rate", o.learning_rate},
                {"weight_decay", o.weight_decay},
                {"value_coef", o.value_coef},
                {"gamma_r", o.gamma_r},
                {"beta", o.beta},
                {"inner_epochs", o.inner_epochs},
                {"outer_epochs", o.outer_epochs},
                {"batch", o.batch}}},
              {"surrogate",
               {{"train_samples", c.surrogate.train_samples},
                {"epochs", c.surrogate.epochs},
                {"batch", c.surrogate.batch},
                {"learning_rate", c.surrogate.learning_rate}}}};
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  json j;
  try {
    j = json::parse(ss.str());
  } catch (const json::parse_error& e) {
    throw ParseError("config " + path.string() + ": " + e.what(), e.byte);
  }
  return config_from_json(j);
}

}  // namespace pcfmem
