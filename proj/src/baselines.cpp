#include "pcfmem/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "pcfmem/errors.hpp"

namespace pcfmem {

namespace {

constexpr double kFillLo = 0.05;
constexpr double kBnEps = 1e-5;
constexpr double kBnMomentum = 0.1;

Geometry random_geometry(Rng& rng) {
  Geometry g;
  g.pitch_um = rng.uniform(surrogate::kPitchMin, surrogate::kPitchMax);
  g.hole_d_um = rng.uniform(kFillLo, surrogate::kFillMax) * g.pitch_um;
  g.n_rings = rng.uniform_int(surrogate::kRingsMin, surrogate::kRingsMax);
  return clamp_to_bounds(g);
}

// Nelder-Mead works on (pitch, d/pitch, relaxed rings).
using Point = std::array<double, 3>;

Geometry decode(const Point& x) {
  Geometry g;
  g.pitch_um = std::clamp(x[0], surrogate::kPitchMin, surrogate::kPitchMax);
  g.hole_d_um = std::clamp(x[1], 0.02, surrogate::kFillMax) * g.pitch_um;
  g.n_rings = static_cast<int>(std::lround(std::clamp(x[2], double(surrogate::kRingsMin),
                                                      double(surrogate::kRingsMax))));
  return clamp_to_bounds(g);
}

Point lerp(const Point& a, const Point& b, double t) {
  Point out;
  for (int i = 0; i < 3; ++i) out[i] = a[i] + t * (b[i] - a[i]);
  return out;
}

}  // namespace

std::string_view to_string(BaselineKind k) {
  switch (k) {
    case BaselineKind::kRandomSearch: return "random_search";
    case BaselineKind::kNelderMead: return "nelder_mead";
    case BaselineKind::kSurrogate: return "surrogate";
  }
  return "?";
}

BaselineKind baseline_from_string(std::string_view s) {
  for (auto k : {BaselineKind::kRandomSearch, BaselineKind::kNelderMead, BaselineKind::kSurrogate})
    if (to_string(k) == s) return k;
  throw ConfigError("unknown baseline kind '" + std::string(s) + "'");
}

std::string templated_answer(const Geometry& g, const SimResult& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "parameters pitch %.3f hole_d %.3f rings %d yield dispersion %.2f loss %.3g at "
                "wavelength %.3f um",
                g.pitch_um, g.hole_d_um, g.n_rings, r.dispersion_ps_nm_km, r.loss_db_km, r.lambda_um);
  return buf;
}

BaselineResult random_search(const TargetSpec& spec, CallCounter& counter, Rng& rng, int budget) {
  BaselineResult best;
  double best_miss = std::numeric_limits<double>::infinity();
  for (int i = 0; i < budget; ++i) {
    const Geometry g = random_geometry(rng);
    const SimResult r = simulate(g, spec.lambda_um, counter);
    ++best.calls;
    const double miss = unclamped_miss(r, spec);
    if (miss < best_miss) {
      best_miss = miss;
      best.geometry = g;
      best.result = r;
    }
  }
  best.budget_exhausted = !verify(best.result, spec);
  best.text = templated_answer(best.geometry, best.result);
  return best;
}

BaselineResult nelder_mead(const TargetSpec& spec, CallCounter& counter, int budget) {
  constexpr double kReflect = 1.0, kExpand = 2.0, kContract = 0.5, kShrink = 0.5;
  constexpr double kMinDiameter = 1e-4;
  BaselineResult best;
  double best_f = std::numeric_limits<double>::infinity();
  bool out_of_budget = false;

  auto f = [&](const Point& x) {
    if (best.calls >= budget) {
      out_of_budget = true;
      return std::numeric_limits<double>::infinity();
    }
    const Geometry g = decode(x);
    const SimResult r = simulate(g, spec.lambda_um, counter);
    ++best.calls;
    const double v = unclamped_miss(r, spec);
    if (v < best_f) {
      best_f = v;
      best.geometry = g;
      best.result = r;
    }
    return v;
  };

  std::array<Point, 4> simplex = {Point{2.5, 0.5, 6.5}, Point{3.0, 0.5, 6.5},
                                  Point{2.5, 0.65, 6.5}, Point{2.5, 0.5, 8.5}};
  std::array<double, 4> fv;
  for (int i = 0; i < 4; ++i) fv[i] = f(simplex[i]);

  while (!out_of_budget) {
    std::array<int, 4> order = {0, 1, 2, 3};
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return fv[a] < fv[b]; });
    std::array<Point, 4> s;
    std::array<double, 4> v;
    for (int i = 0; i < 4; ++i) {
      s[i] = simplex[order[i]];
      v[i] = fv[order[i]];
    }
    simplex = s;
    fv = v;

    double diameter = 0.0;
    for (int i = 0; i < 4; ++i)
      for (int j = i + 1; j < 4; ++j) {
        double d2 = 0.0;
        for (int k = 0; k < 3; ++k) d2 += (simplex[i][k] - simplex[j][k]) * (simplex[i][k] - simplex[j][k]);
        diameter = std::max(diameter, std::sqrt(d2));
      }
    if (diameter < kMinDiameter) break;

    Point c{0, 0, 0};
    for (int i = 0; i < 3; ++i)
      for (int k = 0; k < 3; ++k) c[k] += simplex[i][k] / 3.0;

    const Point xr = lerp(c, simplex[3], -kReflect);
    const double fr = f(xr);
    if (out_of_budget) break;
    if (fr < fv[0]) {
      const Point xe = lerp(c, xr, kExpand);
      const double fe = f(xe);
      if (fe < fr) {
        simplex[3] = xe;
        fv[3] = fe;
      } else {
        simplex[3] = xr;
        fv[3] = fr;
      }
      continue;
    }
    if (fr < fv[2]) {
      simplex[3] = xr;
      fv[3] = fr;
      continue;
    }
    const bool outside = fr < fv[3];
    const Point xc = outside ? lerp(c, xr, kContract) : lerp(c, simplex[3], kContract);
    const double fc = f(xc);
    if (out_of_budget) break;
    if (fc < std::min(fr, fv[3])) {
      simplex[3] = xc;
      fv[3] = fc;
      continue;
    }
    for (int i = 1; i < 4 && !out_of_budget; ++i) {
      simplex[i] = lerp(simplex[0], simplex[i], kShrink);
      fv[i] = f(simplex[i]);
    }
  }
  best.budget_exhausted = out_of_budget;
  best.text = templated_answer(best.geometry, best.result);
  return best;
}

// ---------------------------------------------------------------------------
// Surrogate perceptron. Flat weight layout per layer l:
//   W (out x in), b (out), and for hidden layers gamma (out), beta (out).

namespace {

struct LayerShape {
  std::size_t in, out;
  bool bn;
};

constexpr LayerShape kShapes[SurrogateModel::kLayers] = {
    {SurrogateModel::kIn, SurrogateModel::kHidden, true},
    {SurrogateModel::kHidden, SurrogateModel::kHidden, true},
    {SurrogateModel::kHidden, SurrogateModel::kHidden, true},
    {SurrogateModel::kHidden, SurrogateModel::kOut, false},
};

struct Offsets {
  std::size_t w, b, gamma, beta;
};

std::array<Offsets, SurrogateModel::kLayers> offsets(std::size_t* total) {
  std::array<Offsets, SurrogateModel::kLayers> o{};
  std::size_t at = 0;
  for (std::size_t l = 0; l < SurrogateModel::kLayers; ++l) {
    o[l].w = at;
    at += kShapes[l].in * kShapes[l].out;
    o[l].b = at;
    at += kShapes[l].out;
    if (kShapes[l].bn) {
      o[l].gamma = at;
      at += kShapes[l].out;
      o[l].beta = at;
      at += kShapes[l].out;
    }
  }
  if (total) *total = at;
  return o;
}

using Matrix = std::vector<std::vector<double>>;  // [batch][feature]

}  // namespace

SurrogateModel::SurrogateModel(std::uint64_t seed) {
  std::size_t total = 0;
  const auto off = offsets(&total);
  w_.assign(total, 0.0);
  Rng rng(seed);
  for (std::size_t l = 0; l < kLayers; ++l) {
    const double bound = std::sqrt(6.0 / static_cast<double>(kShapes[l].in));
    for (std::size_t i = 0; i < kShapes[l].in * kShapes[l].out; ++i)
      w_[off[l].w + i] = rng.uniform(-bound, bound) * (kShapes[l].bn ? 1.0 : 0.5);
    if (kShapes[l].bn)
      for (std::size_t j = 0; j < kShapes[l].out; ++j) w_[off[l].gamma + j] = 1.0;
  }
  for (std::size_t l = 0; l + 1 < kLayers; ++l) {
    run_mean_.push_back(std::vector<double>(kShapes[l].out, 0.0));
    run_var_.push_back(std::vector<double>(kShapes[l].out, 1.0));
  }
  x_std_.fill(1.0);
  y_std_.fill(1.0);
}

std::array<double, SurrogateModel::kIn> SurrogateModel::features(const Geometry& g,
                                                                 double lambda_um) const {
  return {g.pitch_um, g.fill(), static_cast<double>(g.n_rings), lambda_um};
}

std::vector<SurrogateModel::Sample> SurrogateModel::make_dataset(std::size_t n, Rng& rng,
                                                                  CallCounter& counter) {
  std::vector<Sample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Geometry g = random_geometry(rng);
    // keep the dispersion stencil inside the band
    const double margin = 2 * surrogate::kDispersionStep;
    const double lambda = rng.uniform(surrogate::kLambdaMin + margin, surrogate::kLambdaMax - margin);
    const SimResult r = simulate(g, lambda, counter);
    out.push_back({{g.pitch_um, g.fill(), static_cast<double>(g.n_rings), lambda},
                   {r.n_eff, std::log10(r.loss_db_km), r.dispersion_ps_nm_km}});
  }
  return out;
}

double SurrogateModel::batch_loss(const std::vector<Sample>& batch, std::vector<double>* grad) {
  const auto off = offsets(nullptr);
  const std::size_t B = batch.size();
  if (B < 2) throw ValidationError("surrogate: batch normalization needs at least 2 samples");

  // Forward, caching per layer: input activations, normalized values, std.
  std::vector<Matrix> inputs(kLayers), zhat(kLayers), pre_relu(kLayers);
  std::vector<std::vector<double>> inv_std(kLayers), means(kLayers), vars(kLayers);
  Matrix a(B, std::vector<double>(kIn));
  for (std::size_t n = 0; n < B; ++n)
    for (std::size_t i = 0; i < kIn; ++i) a[n][i] = (batch[n].x[i] - x_mean_[i]) / x_std_[i];

  for (std::size_t l = 0; l < kLayers; ++l) {
    const auto [in, out, bn] = kShapes[l];
    inputs[l] = a;
    Matrix z(B, std::vector<double>(out));
    for (std::size_t n = 0; n < B; ++n)
      for (std::size_t j = 0; j < out; ++j) {
        double s = w_[off[l].b + j];
        const double* row = &w_[off[l].w + j * in];
        for (std::size_t i = 0; i < in; ++i) s += row[i] * a[n][i];
        z[n][j] = s;
      }
    if (!bn) {
      a = std::move(z);
      break;
    }
    means[l].assign(out, 0.0);
    vars[l].assign(out, 0.0);
    inv_std[l].assign(out, 0.0);
    for (std::size_t j = 0; j < out; ++j) {
      for (std::size_t n = 0; n < B; ++n) means[l][j] += z[n][j];
      means[l][j] /= B;
      for (std::size_t n = 0; n < B; ++n) vars[l][j] += (z[n][j] - means[l][j]) * (z[n][j] - means[l][j]);
      vars[l][j] /= B;
      inv_std[l][j] = 1.0 / std::sqrt(vars[l][j] + kBnEps);
    }
    zhat[l] = z;
    pre_relu[l] = z;
    for (std::size_t n = 0; n < B; ++n)
      for (std::size_t j = 0; j < out; ++j) {
        zhat[l][n][j] = (z[n][j] - means[l][j]) * inv_std[l][j];
        pre_relu[l][n][j] = w_[off[l].gamma + j] * zhat[l][n][j] + w_[off[l].beta + j];
        z[n][j] = std::max(0.0, pre_relu[l][n][j]);
      }
    a = std::move(z);
  }

  double loss = 0.0;
  Matrix d(B, std::vector<double>(kOut));
  const double scale = 1.0 / static_cast<double>(B * kOut);
  for (std::size_t n = 0; n < B; ++n)
    for (std::size_t k = 0; k < kOut; ++k) {
      const double e = a[n][k] - (batch[n].y[k] - y_mean_[k]) / y_std_[k];
      loss += e * e * scale;
      d[n][k] = 2.0 * e * scale;
    }

  // Remember batch statistics for the running averages.
  for (std::size_t l = 0; l + 1 < kLayers; ++l)
    for (std::size_t j = 0; j < kShapes[l].out; ++j) {
      run_mean_[l][j] = (1 - kBnMomentum) * run_mean_[l][j] + kBnMomentum * means[l][j];
      run_var_[l][j] = (1 - kBnMomentum) * run_var_[l][j] +
                       kBnMomentum * vars[l][j] * B / static_cast<double>(B - 1);
    }
  if (!grad) return loss;

  std::vector<double>& g = *grad;
  g.assign(w_.size(), 0.0);
  for (std::size_t l = kLayers; l-- > 0;) {
    const auto [in, out, bn] = kShapes[l];
    if (bn) {
      // d is d(loss)/d(relu output); go back through ReLU and batch norm.
      for (std::size_t j = 0; j < out; ++j) {
        double sum_dz = 0.0, sum_dz_zhat = 0.0;
        for (std::size_t n = 0; n < B; ++n) {
          const double dy = pre_relu[l][n][j] > 0.0 ? d[n][j] : 0.0;
          g[off[l].gamma + j] += dy * zhat[l][n][j];
          g[off[l].beta + j] += dy;
          const double dzhat = dy * w_[off[l].gamma + j];
          d[n][j] = dzhat;
          sum_dz += dzhat;
          sum_dz_zhat += dzhat * zhat[l][n][j];
        }
        for (std::size_t n = 0; n < B; ++n)
          d[n][j] = inv_std[l][j] / B * (B * d[n][j] - sum_dz - zhat[l][n][j] * sum_dz_zhat);
      }
    }
    Matrix dprev(B, std::vector<double>(in, 0.0));
    for (std::size_t n = 0; n < B; ++n)
      for (std::size_t j = 0; j < out; ++j) {
        const double dz = d[n][j];
        g[off[l].b + j] += dz;
        const double* row = &w_[off[l].w + j * in];
        double* grow = &g[off[l].w + j * in];
        for (std::size_t i = 0; i < in; ++i) {
          grow[i] += dz * inputs[l][n][i];
          dprev[n][i] += dz * row[i];
        }
      }
    d = std::move(dprev);
  }
  return loss;
}

double SurrogateModel::train(const std::vector<Sample>& data, int epochs, std::size_t batch,
                             double lr, Rng& rng) {
  if (data.size() < 2) throw ValidationError("surrogate: need at least 2 samples");
  for (std::size_t i = 0; i < kIn; ++i) {
    double m = 0, v = 0;
    for (const auto& s : data) m += s.x[i];
    m /= data.size();
    for (const auto& s : data) v += (s.x[i] - m) * (s.x[i] - m);
    x_mean_[i] = m;
    x_std_[i] = std::max(std::sqrt(v / data.size()), 1e-12);
  }
  for (std::size_t k = 0; k < kOut; ++k) {
    double m = 0, v = 0;
    for (const auto& s : data) m += s.y[k];
    m /= data.size();
    for (const auto& s : data) v += (s.y[k] - m) * (s.y[k] - m);
    y_mean_[k] = m;
    y_std_[k] = std::max(std::sqrt(v / data.size()), 1e-12);
  }

  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  std::vector<double> m(w_.size(), 0.0), v(w_.size(), 0.0), grad;
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), 0);
  long step = 0;
  double epoch_loss = 0.0;
  for (int e = 0; e < epochs; ++e) {
    rng.shuffle(idx.begin(), idx.end());
    epoch_loss = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start + 1 < idx.size(); start += batch) {
      std::vector<Sample> mb;
      for (std::size_t k = start; k < std::min(idx.size(), start + batch); ++k) mb.push_back(data[idx[k]]);
      if (mb.size() < 2) break;
      epoch_loss += batch_loss(mb, &grad);
      ++batches;
      ++step;
      const double c1 = 1.0 - std::pow(kBeta1, step), c2 = 1.0 - std::pow(kBeta2, step);
      for (std::size_t i = 0; i < w_.size(); ++i) {
        m[i] = kBeta1 * m[i] + (1 - kBeta1) * grad[i];
        v[i] = kBeta2 * v[i] + (1 - kBeta2) * grad[i] * grad[i];
        w_[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + kEps);
      }
    }
    epoch_loss /= std::max(1, batches);
    if (!std::isfinite(epoch_loss)) throw NumericError("surrogate training diverged");
  }
  return epoch_loss;
}

std::array<double, SurrogateModel::kOut> SurrogateModel::predict(const Geometry& g,
                                                                 double lambda_um) const {
  const auto off = offsets(nullptr);
  const auto f = features(g, lambda_um);
  std::vector<double> a(kIn);
  for (std::size_t i = 0; i < kIn; ++i) a[i] = (f[i] - x_mean_[i]) / x_std_[i];
  for (std::size_t l = 0; l < kLayers; ++l) {
    const auto [in, out, bn] = kShapes[l];
    std::vector<double> z(out);
    for (std::size_t j = 0; j < out; ++j) {
      double s = w_[off[l].b + j];
      for (std::size_t i = 0; i < in; ++i) s += w_[off[l].w + j * in + i] * a[i];
      if (bn) {
        s = (s - run_mean_[l][j]) / std::sqrt(run_var_[l][j] + kBnEps);
        s = std::max(0.0, w_[off[l].gamma + j] * s + w_[off[l].beta + j]);
      }
      z[j] = s;
    }
    a = std::move(z);
  }
  std::array<double, kOut> y;
  for (std::size_t k = 0; k < kOut; ++k) y[k] = a[k] * y_std_[k] + y_mean_[k];
  return y;
}

BaselineResult surrogate_search(const SurrogateModel& model, const TargetSpec& spec,
                                CallCounter& counter, Rng& rng, int candidates) {
  Geometry best_g;
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < candidates; ++i) {
    const Geometry g = random_geometry(rng);
    const auto y = model.predict(g, spec.lambda_um);
    SimResult predicted{spec.lambda_um, y[0], std::pow(10.0, y[1]), y[2]};
    const double miss = unclamped_miss(predicted, spec);
    if (miss < best) {
      best = miss;
      best_g = g;
    }
  }
  BaselineResult out;
  out.geometry = best_g;
  out.result = simulate(best_g, spec.lambda_um, counter);
  out.calls = 1;
  out.text = templated_answer(out.geometry, out.result);
  return out;
}

}  // namespace pcfmem
