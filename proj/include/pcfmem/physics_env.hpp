#ifndef PCFMEM_PHYSICS_ENV_HPP_
#define PCFMEM_PHYSICS_ENV_HPP_

#include <atomic>
#include <cstdint>
#include <string>
#include <string_view>

#include <json.hpp>

namespace pcfmem {

// Analytic solid-core PCF surrogate. All constants are fixed so every
// downstream consumer is deterministic.
namespace surrogate {
inline constexpr double kSellmeierB[3] = {0.6961663, 0.4079426, 0.8974794};
inline constexpr double kSellmeierC[3] = {0.0684043 * 0.0684043,
                                          0.1162414 * 0.1162414,
                                          9.896161 * 9.896161};
inline constexpr double kIndexScale = 0.08;     // A
inline constexpr double kFillExponent = 1.5;    // p
inline constexpr double kLambdaExponent = 2.0;  // q
inline constexpr double kLossMax = 1.0e3;       // dB/km
inline constexpr double kLossDecay = 3.0;       // kappa
inline constexpr double kLossExponent = 4.0;    // s
// D[ps/(nm km)] = -kDispersionUnit * lambda[um] * n''[um^-2]
inline constexpr double kDispersionUnit = 1.0e4 / 2.99792458;
inline constexpr double kDispersionStep = 1.0e-3;  // um

inline constexpr double kLambdaMin = 1.2;
inline constexpr double kLambdaMax = 1.7;
inline constexpr double kPitchMin = 1.0;
inline constexpr double kPitchMax = 4.0;
inline constexpr double kFillMax = 0.9;
inline constexpr int kRingsMin = 3;
inline constexpr int kRingsMax = 10;
}  // namespace surrogate

struct Geometry {
  double pitch_um = 2.0;
  double hole_d_um = 1.0;
  int n_rings = 6;

  double fill() const { return hole_d_um / pitch_um; }
  bool operator==(const Geometry&) const = default;
};

struct SimResult {
  double lambda_um = 1.55;
  double n_eff = 0.0;
  double loss_db_km = 0.0;
  double dispersion_ps_nm_km = 0.0;
  bool operator==(const SimResult&) const = default;
};

struct TargetSpec {
  double lambda_um = 1.55;
  double d_target = 0.0;
  double alpha_target = 0.0;
  double tol_d = 5.0;
  double tol_alpha = 1.0e-3;
  bool operator==(const TargetSpec&) const = default;
};

// Counts full solver evaluations. Increments are atomic so one counter may
// be shared by parallel workers; per_query is reset by begin_query().
class CallCounter {
 public:
  CallCounter() = default;
  CallCounter(const CallCounter& other)
      : total_(other.total_calls()), per_query_(other.per_query_calls()) {}
  CallCounter& operator=(const CallCounter& other) {
    total_ = other.total_calls();
    per_query_ = other.per_query_calls();
    return *this;
  }

  void charge() {
    total_.fetch_add(1, std::memory_order_relaxed);
    per_query_.fetch_add(1, std::memory_order_relaxed);
  }
  void begin_query() { per_query_.store(0, std::memory_order_relaxed); }
  std::int64_t total_calls() const { return total_.load(std::memory_order_relaxed); }
  std::int64_t per_query_calls() const { return per_query_.load(std::memory_order_relaxed); }

 private:
  std::atomic<std::int64_t> total_{0};
  std::atomic<std::int64_t> per_query_{0};
};

enum class Param { kPitch, kHoleD, kRings };
enum class Metric { kDispersion, kLoss, kNeff };

inline constexpr Param kAllParams[] = {Param::kPitch, Param::kHoleD, Param::kRings};
inline constexpr Metric kAllMetrics[] = {Metric::kDispersion, Metric::kLoss, Metric::kNeff};

std::string_view to_string(Param p);
std::string_view to_string(Metric m);
Param param_from_string(std::string_view s);
Metric metric_from_string(std::string_view s);

double param_value(const Geometry& g, Param p);
Geometry with_param(Geometry g, Param p, double value);
double metric_value(const SimResult& r, Metric m);

// Throws ValidationError naming every violated bound.
void validate(const Geometry& g);
bool is_valid(const Geometry& g);
// Nearest valid geometry (fill clamped to [0.02, 0.9], rings rounded).
Geometry clamp_to_bounds(Geometry g);

double sellmeier_index(double lambda_um);
double effective_index(const Geometry& g, double lambda_um);
double dispersion(const Geometry& g, double lambda_um,
                  double step_um = surrogate::kDispersionStep);
double confinement_loss(const Geometry& g, double lambda_um);

// Evaluates all three properties and charges exactly one call. Rejected
// inputs throw before the counter is touched.
SimResult simulate(const Geometry& g, double lambda_um, CallCounter& counter);

// Strict-inequality tolerance check. Throws ValidationError if the result
// and the target refer to different wavelengths.
bool verify(const SimResult& res, const TargetSpec& spec);

// Sign (-1, 0, +1) of d(metric)/d(param) at g by central differences of the
// analytic surrogate. Oracle use only: no call is charged and bounds are
// not enforced on the probe points.
int trend_sign(const Geometry& g, double lambda_um, Param p, Metric m);

// Five-point central second derivative.
template <typename F>
double second_derivative_5pt(F&& f, double x, double h) {
  return (-f(x + 2 * h) + 16 * f(x + h) - 30 * f(x) + 16 * f(x - h) - f(x - 2 * h)) /
         (12 * h * h);
}

void to_json(nlohmann::json& j, const Geometry& g);
void from_json(const nlohmann::json& j, Geometry& g);
void to_json(nlohmann::json& j, const SimResult& r);
void from_json(const nlohmann::json& j, SimResult& r);
void to_json(nlohmann::json& j, const TargetSpec& t);
void from_json(const nlohmann::json& j, TargetSpec& t);

}  // namespace pcfmem

#endif  // PCFMEM_PHYSICS_ENV_HPP_
