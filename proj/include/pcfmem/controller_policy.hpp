#ifndef PCFMEM_CONTROLLER_POLICY_HPP_
#define PCFMEM_CONTROLLER_POLICY_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "pcfmem/memory_bank.hpp"
#include "pcfmem/rng.hpp"
#include "pcfmem/text_embed.hpp"
#include "pcfmem/trace_types.hpp"

namespace pcfmem {

inline constexpr std::size_t kContextDim = kTextDim + kNumericDim + kTextDim;  // 520
inline constexpr std::size_t kHiddenDim = 256;
inline constexpr std::size_t kMatchDim = kTextDim;
inline constexpr double kMatchTemperature = 0.1;

// Controller trunk: 520 -> 256 tanh -> 256 tanh, then a linear match head
// (256 -> 256, L2-normalized) and a scalar value head off the last hidden
// layer. All weights live in one flat vector so optimizers and gradient
// checks can treat them uniformly.
class PolicyParams {
 public:
  PolicyParams() = default;
  explicit PolicyParams(std::uint64_t seed);

  struct Forward {
    std::vector<double> a1, a2, m, h;
    double m_norm = 0.0;
    double value = 0.0;
  };

  Forward forward(std::span<const double> x) const;
  // Accumulates d(loss)/d(weights) into grad given upstream gradients of the
  // normalized match vector and the value.
  void backward(const Forward& f, std::span<const double> x, std::span<const double> d_h,
                double d_value, std::span<double> grad) const;

  std::vector<double>& weights() { return w_; }
  const std::vector<double>& weights() const { return w_; }
  std::size_t size() const { return w_.size(); }
  std::uint64_t seed() const { return seed_; }

  nlohmann::json to_json() const;
  static PolicyParams from_json(const nlohmann::json& j);

  bool operator==(const PolicyParams&) const = default;

  static constexpr std::size_t kW1 = 0;
  static constexpr std::size_t kB1 = kW1 + kHiddenDim * kContextDim;
  static constexpr std::size_t kW2 = kB1 + kHiddenDim;
  static constexpr std::size_t kB2 = kW2 + kHiddenDim * kHiddenDim;
  static constexpr std::size_t kW3 = kB2 + kHiddenDim;
  static constexpr std::size_t kB3 = kW3 + kMatchDim * kHiddenDim;
  static constexpr std::size_t kWv = kB3 + kMatchDim;
  static constexpr std::size_t kBv = kWv + kHiddenDim;
  static constexpr std::size_t kTotal = kBv + 1;

 private:
  std::vector<double> w_;
  std::uint64_t seed_ = 0;
};

// Similarity-weighted softmax pooling of retrieved statement embeddings
// (temperature 1); zero vector for an empty retrieval.
std::vector<double> pool_memory(const Embedding& span_embedding,
                                const std::vector<MemoryEntry>& retrieved);

// span text (256) ++ numeric state after the edit (8) ++ pooled memory (256).
std::vector<double> context_input(const Span& span, const std::vector<MemoryEntry>& retrieved);

struct ContextEncoding {
  std::vector<double> input;
  std::vector<double> h;
  double value = 0.0;
};
ContextEncoding encode_context(const PolicyParams& params, const Span& span,
                               const std::vector<MemoryEntry>& retrieved);

// z_i = (h . u_i) / tau + bias_i. `bias` may be empty (no bias).
std::vector<double> skill_logits(std::span<const double> h, const std::vector<Embedding>& skills,
                                 std::span<const double> bias);

std::vector<double> softmax(std::span<const double> z);

// Gumbel-Top-K: indices of the K largest z_i + g_i in descending order.
std::vector<int> sample_topk(std::span<const double> z, std::size_t k, Rng& rng);
// Deterministic Top-K by logit (ties to the lower index).
std::vector<int> greedy_topk(std::span<const double> z, std::size_t k);

// Plackett-Luce log-probability of the ordered tuple.
double action_logprob(std::span<const double> z, std::span<const int> actions);
// d(action_logprob)/dz.
std::vector<double> action_logprob_grad(std::span<const double> z, std::span<const int> actions);

// Entropy of the first-pick categorical softmax(z) and its gradient.
double first_pick_entropy(std::span<const double> z);
std::vector<double> first_pick_entropy_grad(std::span<const double> z);

struct ActionSelection {
  std::vector<int> actions;
  std::vector<double> logits;
  double logprob = 0.0;
  double value = 0.0;
};

}  // namespace pcfmem

#endif  // PCFMEM_CONTROLLER_POLICY_HPP_
