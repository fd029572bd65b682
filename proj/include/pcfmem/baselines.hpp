#ifndef PCFMEM_BASELINES_HPP_
#define PCFMEM_BASELINES_HPP_

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "pcfmem/eval_suite.hpp"
#include "pcfmem/physics_env.hpp"
#include "pcfmem/rng.hpp"

namespace pcfmem {

enum class BaselineKind { kRandomSearch, kNelderMead, kSurrogate };
std::string_view to_string(BaselineKind k);
BaselineKind baseline_from_string(std::string_view s);

inline constexpr int kRandomSearchBudget = 100;
inline constexpr int kNelderMeadBudget = 135;
inline constexpr int kSurrogateCandidates = 100;
inline constexpr int kSurrogateTrainSamples = 2000;

struct BaselineResult {
  Geometry geometry;
  SimResult result;
  std::int64_t calls = 0;
  bool budget_exhausted = false;
  std::string text;  // templated answer
};

BaselineResult random_search(const TargetSpec& spec, CallCounter& counter, Rng& rng,
                             int budget = kRandomSearchBudget);

BaselineResult nelder_mead(const TargetSpec& spec, CallCounter& counter,
                           int budget = kNelderMeadBudget);

// 4 -> 64 -> 64 -> 64 -> 3 perceptron with batch normalization and ReLU on
// the hidden layers. Inputs (pitch, d/pitch, rings, wavelength); outputs
// (n_eff, log10 loss, dispersion), both standardized internally.
class SurrogateModel {
 public:
  static constexpr std::size_t kIn = 4, kHidden = 64, kOut = 3, kLayers = 4;

  explicit SurrogateModel(std::uint64_t seed = 0);

  struct Sample {
    std::array<double, kIn> x;
    std::array<double, kOut> y;
  };
  // Draws `n` training geometries and labels them with `counter` (a
  // training-phase counter, separate from evaluation accounting).
  static std::vector<Sample> make_dataset(std::size_t n, Rng& rng, CallCounter& counter);

  // Mini-batch Adam on mean squared error of standardized outputs.
  // Returns the final epoch's mean loss.
  double train(const std::vector<Sample>& data, int epochs, std::size_t batch, double lr, Rng& rng);

  // Inference-mode prediction (running batch-norm statistics).
  std::array<double, kOut> predict(const Geometry& g, double lambda_um) const;

  // Training-mode loss and gradient for a batch; exposed for gradient checks.
  double batch_loss(const std::vector<Sample>& batch, std::vector<double>* grad);
  std::vector<double>& weights() { return w_; }

 private:
  std::array<double, kIn> features(const Geometry& g, double lambda_um) const;

  std::vector<double> w_;
  // Per hidden layer: running mean / variance.
  std::vector<std::vector<double>> run_mean_, run_var_;
  std::array<double, kIn> x_mean_{}, x_std_{};
  std::array<double, kOut> y_mean_{}, y_std_{};
};

BaselineResult surrogate_search(const SurrogateModel& model, const TargetSpec& spec,
                                CallCounter& counter, Rng& rng,
                                int candidates = kSurrogateCandidates);

std::string templated_answer(const Geometry& g, const SimResult& r);

}  // namespace pcfmem

#endif  // PCFMEM_BASELINES_HPP_
