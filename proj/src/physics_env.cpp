#include "pcfmem/physics_env.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include "pcfmem/errors.hpp"

namespace pcfmem {

namespace {

using namespace surrogate;

double raw_sellmeier(double lambda) {
  const double l2 = lambda * lambda;
  double s = 1.0;
  for (int j = 0; j < 3; ++j) s += kSellmeierB[j] * l2 / (l2 - kSellmeierC[j]);
  return std::sqrt(s);
}

double raw_neff(double pitch, double hole_d, double lambda) {
  const double r = hole_d / pitch;
  return raw_sellmeier(lambda) -
         kIndexScale * std::pow(r, kFillExponent) * std::pow(lambda / pitch, kLambdaExponent);
}

double raw_dispersion(double pitch, double hole_d, double lambda, double h) {
  double curvature = second_derivative_5pt(
      [&](double x) { return raw_neff(pitch, hole_d, x); }, lambda, h);
  return -kDispersionUnit * lambda * curvature;
}

double raw_loss(double pitch, double hole_d, double rings, double lambda) {
  return kLossMax * std::exp(-kLossDecay * rings * (hole_d / pitch)) *
         std::pow(lambda / pitch, kLossExponent);
}

void check_band(double lambda_um) {
  if (!(lambda_um >= kLambdaMin && lambda_um <= kLambdaMax)) {
    std::ostringstream os;
    os << "wavelength " << lambda_um << " um outside [" << kLambdaMin << ", " << kLambdaMax
       << "]";
    throw DomainError(os.str());
  }
}

double raw_metric(double pitch, double hole_d, double rings, double lambda, Metric m) {
  switch (m) {
    case Metric::kDispersion:
      return raw_dispersion(pitch, hole_d, lambda, kDispersionStep);
    case Metric::kLoss:
      return raw_loss(pitch, hole_d, rings, lambda);
    case Metric::kNeff:
      return raw_neff(pitch, hole_d, lambda);
  }
  return 0.0;
}

}  // namespace

std::string_view to_string(Param p) {
  switch (p) {
    case Param::kPitch: return "pitch";
    case Param::kHoleD: return "hole_d";
    case Param::kRings: return "n_rings";
  }
  return "?";
}

std::string_view to_string(Metric m) {
  switch (m) {
    case Metric::kDispersion: return "dispersion";
    case Metric::kLoss: return "loss";
    case Metric::kNeff: return "n_eff";
  }
  return "?";
}

Param param_from_string(std::string_view s) {
  for (Param p : kAllParams)
    if (to_string(p) == s) return p;
  throw ValidationError("unknown param '" + std::string(s) + "'");
}

Metric metric_from_string(std::string_view s) {
  for (Metric m : kAllMetrics)
    if (to_string(m) == s) return m;
  throw ValidationError("unknown metric '" + std::string(s) + "'");
}

double param_value(const Geometry& g, Param p) {
  switch (p) {
    case Param::kPitch: return g.pitch_um;
    case Param::kHoleD: return g.hole_d_um;
    case Param::kRings: return g.n_rings;
  }
  return 0.0;
}

Geometry with_param(Geometry g, Param p, double value) {
  switch (p) {
    case Param::kPitch: g.pitch_um = value; break;
    case Param::kHoleD: g.hole_d_um = value; break;
    case Param::kRings: g.n_rings = static_cast<int>(std::lround(value)); break;
  }
  return g;
}

double metric_value(const SimResult& r, Metric m) {
  switch (m) {
    case Metric::kDispersion: return r.dispersion_ps_nm_km;
    case Metric::kLoss: return r.loss_db_km;
    case Metric::kNeff: return r.n_eff;
  }
  return 0.0;
}

void validate(const Geometry& g) {
  std::vector<std::string> violated;
  if (!(g.pitch_um >= kPitchMin && g.pitch_um <= kPitchMax))
    violated.push_back("1.0 <= pitch_um <= 4.0 (got " + std::to_string(g.pitch_um) + ")");
  if (!(g.hole_d_um > 0.0))
    violated.push_back("hole_d_um > 0 (got " + std::to_string(g.hole_d_um) + ")");
  else if (g.pitch_um > 0.0 && !(g.fill() <= kFillMax))
    violated.push_back("hole_d_um/pitch_um <= 0.9 (got " + std::to_string(g.fill()) + ")");
  if (g.n_rings < kRingsMin || g.n_rings > kRingsMax)
    violated.push_back("3 <= n_rings <= 10 (got " + std::to_string(g.n_rings) + ")");
  if (violated.empty()) return;
  std::string msg = "invalid geometry:";
  for (const auto& v : violated) msg += " [" + v + "]";
  throw ValidationError(msg);
}

bool is_valid(const Geometry& g) {
  return g.pitch_um >= kPitchMin && g.pitch_um <= kPitchMax && g.hole_d_um > 0.0 &&
         g.fill() <= kFillMax && g.n_rings >= kRingsMin && g.n_rings <= kRingsMax;
}

Geometry clamp_to_bounds(Geometry g) {
  g.pitch_um = std::clamp(g.pitch_um, kPitchMin, kPitchMax);
  g.hole_d_um = std::clamp(g.hole_d_um, 0.02 * g.pitch_um, kFillMax * g.pitch_um);
  g.n_rings = std::clamp(g.n_rings, kRingsMin, kRingsMax);
  // d = 0.9 * pitch can round to a ratio a few ulps above 0.9.
  while (g.fill() > kFillMax) g.hole_d_um = std::nextafter(g.hole_d_um, 0.0);
  return g;
}

double sellmeier_index(double lambda_um) {
  check_band(lambda_um);
  return raw_sellmeier(lambda_um);
}

double effective_index(const Geometry& g, double lambda_um) {
  validate(g);
  check_band(lambda_um);
  return raw_neff(g.pitch_um, g.hole_d_um, lambda_um);
}

double dispersion(const Geometry& g, double lambda_um, double step_um) {
  validate(g);
  if (!(step_um > 0.0)) throw DomainError("dispersion step must be positive");
  if (lambda_um - 2 * step_um < kLambdaMin || lambda_um + 2 * step_um > kLambdaMax) {
    std::ostringstream os;
    os << "dispersion stencil [" << lambda_um - 2 * step_um << ", " << lambda_um + 2 * step_um
       << "] leaves the band";
    throw DomainError(os.str());
  }
  return raw_dispersion(g.pitch_um, g.hole_d_um, lambda_um, step_um);
}

double confinement_loss(const Geometry& g, double lambda_um) {
  validate(g);
  check_band(lambda_um);
  return raw_loss(g.pitch_um, g.hole_d_um, g.n_rings, lambda_um);
}

SimResult simulate(const Geometry& g, double lambda_um, CallCounter& counter) {
  SimResult r;
  r.lambda_um = lambda_um;
  r.n_eff = effective_index(g, lambda_um);
  r.loss_db_km = confinement_loss(g, lambda_um);
  r.dispersion_ps_nm_km = dispersion(g, lambda_um);
  counter.charge();
  return r;
}

bool verify(const SimResult& res, const TargetSpec& spec) {
  if (std::abs(res.lambda_um - spec.lambda_um) > 1e-12)
    throw ValidationError("verify: result wavelength " + std::to_string(res.lambda_um) +
                          " differs from target wavelength " + std::to_string(spec.lambda_um));
  if (!(spec.tol_d > 0.0) || !(spec.tol_alpha > 0.0))
    throw ValidationError("verify: tolerances must be strictly positive");
  return std::abs(res.dispersion_ps_nm_km - spec.d_target) < spec.tol_d &&
         std::abs(res.loss_db_km - spec.alpha_target) < spec.tol_alpha;
}

int trend_sign(const Geometry& g, double lambda_um, Param p, Metric m) {
  double lo = 0.0, hi = 0.0;
  if (p == Param::kRings) {
    double n = g.n_rings;
    lo = raw_metric(g.pitch_um, g.hole_d_um, n - 1, lambda_um, m);
    hi = raw_metric(g.pitch_um, g.hole_d_um, n + 1, lambda_um, m);
  } else {
    const double h = 1e-4;
    Geometry a = g, b = g;
    if (p == Param::kPitch) {
      a.pitch_um -= h;
      b.pitch_um += h;
    } else {
      a.hole_d_um -= h;
      b.hole_d_um += h;
    }
    lo = raw_metric(a.pitch_um, a.hole_d_um, a.n_rings, lambda_um, m);
    hi = raw_metric(b.pitch_um, b.hole_d_um, b.n_rings, lambda_um, m);
  }
  const double diff = hi - lo;
  const double scale = std::max({std::abs(hi), std::abs(lo), 1e-300});
  if (std::abs(diff) <= 1e-12 * scale) return 0;
  return diff > 0 ? 1 : -1;
}

void to_json(nlohmann::json& j, const Geometry& g) {
  j = nlohmann::json{{"pitch_um", g.pitch_um}, {"hole_d_um", g.hole_d_um}, {"n_rings", g.n_rings}};
}
void from_json(const nlohmann::json& j, Geometry& g) {
  j.at("pitch_um").get_to(g.pitch_um);
  j.at("hole_d_um").get_to(g.hole_d_um);
  j.at("n_rings").get_to(g.n_rings);
}
void to_json(nlohmann::json& j, const SimResult& r) {
  j = nlohmann::json{{"lambda_um", r.lambda_um},
                     {"n_eff", r.n_eff},
                     {"loss_db_km", r.loss_db_km},
                     {"dispersion_ps_nm_km", r.dispersion_ps_nm_km}};
}
void from_json(const nlohmann::json& j, SimResult& r) {
  j.at("lambda_um").get_to(r.lambda_um);
  j.at("n_eff").get_to(r.n_eff);
  j.at("loss_db_km").get_to(r.loss_db_km);
  j.at("dispersion_ps_nm_km").get_to(r.dispersion_ps_nm_km);
}
void to_json(nlohmann::json& j, const TargetSpec& t) {
  j = nlohmann::json{{"lambda_um", t.lambda_um}, {"d_target", t.d_target},
                     {"alpha_target", t.alpha_target}, {"tol_d", t.tol_d},
                     {"tol_alpha", t.tol_alpha}};
}
void from_json(const nlohmann::json& j, TargetSpec& t) {
  j.at("lambda_um").get_to(t.lambda_um);
  j.at("d_target").get_to(t.d_target);
  j.at("alpha_target").get_to(t.alpha_target);
  j.at("tol_d").get_to(t.tol_d);
  j.at("tol_alpha").get_to(t.tol_alpha);
}

}  // namespace pcfmem
