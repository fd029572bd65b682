#ifndef PCFMEM_RL_TRAINER_HPP_
#define PCFMEM_RL_TRAINER_HPP_

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "pcfmem/controller_policy.hpp"
#include "pcfmem/eval_suite.hpp"
#include "pcfmem/skill_bank.hpp"
#include "pcfmem/skill_designer.hpp"
#include "pcfmem/trace_types.hpp"

namespace pcfmem {

struct PPOConfig {
  double gamma_d = 0.99;
  double gae_lambda = 0.95;
  double clip = 0.2;
  double entropy_coef = 0.01;
  int epochs_per_update = 4;
  std::size_t minibatch = 32;
  double grad_clip = 0.5;
  double learning_rate = 1e-4;
  double weight_decay = 0.01;
  double value_coef = 0.5;
  double gamma_r = 0.9;
  double beta = 0.5;
  int inner_epochs = 50;
  int outer_epochs = 10;
  std::size_t batch = 32;

  void validate() const;
};

// How skills are chosen during a rollout.
enum class SelectionMode { kSample, kGreedy, kUniform };

struct TrainerConfig {
  PPOConfig ppo;
  std::size_t top_k = 2;
  std::size_t retrieval_k = kRetrievalDepth;
  double bias_b0 = 1.0;
  std::size_t val_traces = 32;
  int workers = 1;
  // Ablation switches.
  bool use_designer = true;
  bool use_controller = true;  // false: uniform-random selection, no updates
  // Designer runs after every `designer_every`-th inner loop.
  int designer_every = 1;
  // Proposals growing the bank past this size are dropped; 0 = no cap.
  std::size_t max_bank_size = 0;
};

// R_final spread over T steps; sums to R_final.
std::vector<double> redistribute(double r_final, std::size_t T, double gamma_r, double beta);
std::vector<double> compose_step_rewards(const std::vector<double>& r_proc,
                                         const std::vector<double>& r_tilde);

struct GaeResult {
  std::vector<double> advantages, returns;
};
// Raw (unnormalized) advantages; the terminal value is 0.
GaeResult compute_gae(const std::vector<double>& rewards, const std::vector<double>& values,
                      double gamma_d, double lambda);
// Zero mean / unit variance in place; a single element is only centered.
void normalize_advantages(std::vector<double>& adv);

struct Transition {
  std::vector<double> x;  // 520-dim context input
  std::vector<int> actions;
  double logp_old = 0.0;
  double value_old = 0.0;
  double reward = 0.0;
  bool done = false;
  std::vector<double> bias;
  // Filled in before the update.
  double advantage = 0.0;
  double ret = 0.0;
};

// Decoupled weight decay Adam.
class AdamW {
 public:
  AdamW() = default;
  AdamW(std::size_t n, double lr, double weight_decay, double beta1 = 0.9, double beta2 = 0.999,
        double eps = 1e-8);
  void step(std::vector<double>& w, const std::vector<double>& grad);
  long steps() const { return t_; }

 private:
  double lr_ = 1e-4, wd_ = 0.0, b1_ = 0.9, b2_ = 0.999, eps_ = 1e-8;
  long t_ = 0;
  std::vector<double> m_, v_;
};

// Mean clipped-surrogate loss over `batch` plus value and entropy terms.
// Accumulates the gradient into *grad when given.
struct LossParts {
  double total = 0.0, policy = 0.0, value = 0.0, entropy = 0.0;
  double mean_ratio = 0.0, clip_fraction = 0.0, approx_kl = 0.0;
};
LossParts ppo_loss(const PolicyParams& params, std::span<const Transition* const> batch,
                   const std::vector<Embedding>& skills, const PPOConfig& cfg,
                   std::vector<double>* grad);

struct PPOStats {
  double mean_ratio = 1.0, clip_fraction = 0.0, approx_kl = 0.0, loss = 0.0;
  int minibatches = 0;
};
PPOStats ppo_update(PolicyParams& params, AdamW& opt, const std::vector<Transition>& batch,
                    const std::vector<Embedding>& skills, const PPOConfig& cfg, Rng& rng);

// Queries grouped by the trace they belong to.
using QueryIndex = std::map<std::string, std::vector<Query>>;
QueryIndex index_queries(const std::vector<Query>& queries);

struct EpisodeResult {
  std::string trace_id;
  std::vector<Transition> transitions;
  std::vector<double> process_rewards;
  double r_final = 0.0;
  double episode_return = 0.0;
  std::vector<Answer> answers;
  MemoryBank memory;
};

// One trace processed span by span, then its queries answered against the
// built memory. `counter` receives the evaluation-phase verification calls.
EpisodeResult run_episode(const PolicyParams& params, const SkillBank& bank,
                          const std::vector<Embedding>& skill_emb, std::span<const double> bias,
                          const Trace& trace, const std::vector<Query>& queries, SelectionMode mode,
                          const TrainerConfig& cfg, Rng& rng, CallCounter& counter);

// Failed parameter_adjustment answers of an episode, as designer input.
std::vector<FailureCase> collect_failures(const EpisodeResult& ep, const Trace& trace,
                                          const std::vector<Query>& queries);

struct EpochLog {
  int outer = 0;
  int inner = 0;
  double mean_return = 0.0;
  double success = 0.0;  // verified / parameter_adjustment queries
  double calls_per_query = 0.0;
  PPOStats ppo;
};

struct InnerLoopResult {
  std::vector<EpochLog> log;
  FailureBuffer failures;
};

InnerLoopResult run_inner_loop(PolicyParams& params, AdamW& opt, const SkillBank& bank,
                               const std::vector<Trace>& train, const QueryIndex& queries,
                               const TrainerConfig& cfg, std::uint64_t seed, int outer_epoch);

// Mean R_final over `traces` with greedy selection and no bias.
double validation_score(const PolicyParams& params, const SkillBank& bank,
                        const std::vector<Trace>& traces, const QueryIndex& queries,
                        const TrainerConfig& cfg);

// Rows for a held-out split: greedy for a trained controller, seeded
// uniform selection when the controller is disabled.
std::vector<QueryOutcome> evaluate_split(const PolicyParams& params, const SkillBank& bank,
                                         const std::vector<Trace>& traces,
                                         const QueryIndex& queries, const TrainerConfig& cfg,
                                         std::uint64_t seed);

using Designer = std::function<Proposal(const SkillBank&, const std::vector<FailureCluster>&, int)>;

struct CycleRecord {
  int outer = 0;
  std::size_t failures = 0;
  std::vector<std::string> clusters;
  std::vector<std::string> changes;
  bool identity = true;
  double j_current = 0.0, j_candidate = 0.0;
  bool accepted = false;
  int bank_version = 0;
  std::size_t bank_size = 0;
};

struct ClosedLoopResult {
  PolicyParams params;
  SkillBank bank;
  std::vector<EpochLog> log;
  std::vector<CycleRecord> cycles;
};

// Alternates inner-loop training with designer proposals accepted on
// validation (delta >= 0) or rolled back. `designer` defaults to propose().
ClosedLoopResult run_closed_loop(const TrainerConfig& cfg, const std::vector<Trace>& train,
                                 const std::vector<Trace>& val, const QueryIndex& queries,
                                 std::uint64_t seed, SkillBank initial = initial_bank(),
                                 Designer designer = {});

// The first `n` traces in id order (fixed validation subset).
std::vector<Trace> validation_subset(const std::vector<Trace>& val, std::size_t n);

nlohmann::json to_json(const EpochLog& e);
nlohmann::json to_json(const CycleRecord& c);

}  // namespace pcfmem

#endif  // PCFMEM_RL_TRAINER_HPP_
