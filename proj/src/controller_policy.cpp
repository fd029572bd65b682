#include "pcfmem/controller_policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "pcfmem/errors.hpp"

namespace pcfmem {

namespace {

constexpr int kCheckpointVersion = 1;

double logsumexp(std::span<const double> z, const std::vector<char>* excluded = nullptr) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < z.size(); ++i)
    if (!excluded || !(*excluded)[i]) mx = std::max(mx, z[i]);
  double s = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i)
    if (!excluded || !(*excluded)[i]) s += std::exp(z[i] - mx);
  return mx + std::log(s);
}

void check_actions(std::span<const double> z, std::span<const int> actions) {
  std::vector<char> seen(z.size(), 0);
  for (int a : actions) {
    if (a < 0 || static_cast<std::size_t>(a) >= z.size())
      throw ValidationError("action index out of range");
    if (seen[a]) throw ValidationError("actions must be distinct");
    seen[a] = 1;
  }
}

}  // namespace

PolicyParams::PolicyParams(std::uint64_t seed) : w_(kTotal, 0.0), seed_(seed) {
  Rng rng(seed);
  auto init = [&](std::size_t offset, std::size_t rows, std::size_t cols, double gain) {
    const double bound = gain * std::sqrt(6.0 / static_cast<double>(rows + cols));
    for (std::size_t i = 0; i < rows * cols; ++i) w_[offset + i] = rng.uniform(-bound, bound);
  };
  init(kW1, kHiddenDim, kContextDim, 1.0);
  init(kW2, kHiddenDim, kHiddenDim, 1.0);
  init(kW3, kMatchDim, kHiddenDim, 1.0);
  init(kWv, 1, kHiddenDim, 0.1);
}

PolicyParams::Forward PolicyParams::forward(std::span<const double> x) const {
  if (x.size() != kContextDim) throw ValidationError("policy input must have 520 features");
  Forward f;
  f.a1.assign(kHiddenDim, 0.0);
  f.a2.assign(kHiddenDim, 0.0);
  f.m.assign(kMatchDim, 0.0);
  const double* w = w_.data();
  for (std::size_t r = 0; r < kHiddenDim; ++r) {
    const double* row = w + kW1 + r * kContextDim;
    double s = w[kB1 + r];
    for (std::size_t c = 0; c < kContextDim; ++c) s += row[c] * x[c];
    f.a1[r] = std::tanh(s);
  }
  for (std::size_t r = 0; r < kHiddenDim; ++r) {
    const double* row = w + kW2 + r * kHiddenDim;
    double s = w[kB2 + r];
    for (std::size_t c = 0; c < kHiddenDim; ++c) s += row[c] * f.a1[c];
    f.a2[r] = std::tanh(s);
  }
  double sq = 0.0;
  for (std::size_t r = 0; r < kMatchDim; ++r) {
    const double* row = w + kW3 + r * kHiddenDim;
    double s = w[kB3 + r];
    for (std::size_t c = 0; c < kHiddenDim; ++c) s += row[c] * f.a2[c];
    f.m[r] = s;
    sq += s * s;
  }
  f.m_norm = std::sqrt(sq);
  f.h = f.m;
  if (f.m_norm > 0.0)
    for (double& v : f.h) v /= f.m_norm;
  double v = w[kBv];
  for (std::size_t c = 0; c < kHiddenDim; ++c) v += w[kWv + c] * f.a2[c];
  f.value = v;
  return f;
}

void PolicyParams::backward(const Forward& f, std::span<const double> x,
                            std::span<const double> d_h, double d_value,
                            std::span<double> grad) const {
  const double* w = w_.data();
  double* g = grad.data();
  // Through the normalization: dm = (I - h h^T) dh / |m|.
  std::vector<double> dm(kMatchDim, 0.0);
  if (f.m_norm > 0.0) {
    double hd = 0.0;
    for (std::size_t i = 0; i < kMatchDim; ++i) hd += f.h[i] * d_h[i];
    for (std::size_t i = 0; i < kMatchDim; ++i) dm[i] = (d_h[i] - f.h[i] * hd) / f.m_norm;
  }
  std::vector<double> da2(kHiddenDim, 0.0);
  for (std::size_t r = 0; r < kMatchDim; ++r) {
    if (dm[r] == 0.0) continue;
    const double* row = w + kW3 + r * kHiddenDim;
    double* grow = g + kW3 + r * kHiddenDim;
    for (std::size_t c = 0; c < kHiddenDim; ++c) {
      grow[c] += dm[r] * f.a2[c];
      da2[c] += row[c] * dm[r];
    }
    g[kB3 + r] += dm[r];
  }
  for (std::size_t c = 0; c < kHiddenDim; ++c) {
    g[kWv + c] += d_value * f.a2[c];
    da2[c] += d_value * w[kWv + c];
  }
  g[kBv] += d_value;

  std::vector<double> da1(kHiddenDim, 0.0);
  for (std::size_t r = 0; r < kHiddenDim; ++r) {
    const double dpre = da2[r] * (1.0 - f.a2[r] * f.a2[r]);
    if (dpre == 0.0) continue;
    const double* row = w + kW2 + r * kHiddenDim;
    double* grow = g + kW2 + r * kHiddenDim;
    for (std::size_t c = 0; c < kHiddenDim; ++c) {
      grow[c] += dpre * f.a1[c];
      da1[c] += row[c] * dpre;
    }
    g[kB2 + r] += dpre;
  }
  for (std::size_t r = 0; r < kHiddenDim; ++r) {
    const double dpre = da1[r] * (1.0 - f.a1[r] * f.a1[r]);
    if (dpre == 0.0) continue;
    double* grow = g + kW1 + r * kContextDim;
    for (std::size_t c = 0; c < kContextDim; ++c) grow[c] += dpre * x[c];
    g[kB1 + r] += dpre;
  }
}

nlohmann::json PolicyParams::to_json() const {
  return nlohmann::json{{"format", "pcfmem-policy"},
                        {"version", kCheckpointVersion},
                        {"seed", seed_},
                        {"input_dim", kContextDim},
                        {"hidden_dim", kHiddenDim},
                        {"weights", w_}};
}

PolicyParams PolicyParams::from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "pcfmem-policy" || j.value("version", 0) != kCheckpointVersion)
    throw ParseError("policy checkpoint: unsupported format or version", 0);
  PolicyParams p;
  j.at("seed").get_to(p.seed_);
  j.at("weights").get_to(p.w_);
  if (p.w_.size() != kTotal) throw ParseError("policy checkpoint: wrong weight count", 0);
  return p;
}

std::vector<double> pool_memory(const Embedding& span_embedding,
                                const std::vector<MemoryEntry>& retrieved) {
  std::vector<double> pooled(kTextDim, 0.0);
  if (retrieved.empty()) return pooled;
  std::vector<double> sims;
  for (const auto& e : retrieved) sims.push_back(cosine(span_embedding, e.embedding));
  const auto weights = softmax(sims);
  for (std::size_t i = 0; i < retrieved.size(); ++i)
    for (std::size_t d = 0; d < kTextDim; ++d)
      pooled[d] += weights[i] * retrieved[i].embedding.values[d];
  return pooled;
}

std::vector<double> context_input(const Span& span, const std::vector<MemoryEntry>& retrieved) {
  const Embedding text = embed_text(span.text);
  const Embedding numeric = embed_numeric(span.geometry_after(), span.sim_after);
  const auto memory = pool_memory(text, retrieved);
  std::vector<double> x;
  x.reserve(kContextDim);
  x.insert(x.end(), text.values.begin(), text.values.end());
  x.insert(x.end(), numeric.values.begin(), numeric.values.end());
  x.insert(x.end(), memory.begin(), memory.end());
  return x;
}

ContextEncoding encode_context(const PolicyParams& params, const Span& span,
                               const std::vector<MemoryEntry>& retrieved) {
  ContextEncoding enc;
  enc.input = context_input(span, retrieved);
  auto f = params.forward(enc.input);
  enc.h = std::move(f.h);
  enc.value = f.value;
  return enc;
}

std::vector<double> skill_logits(std::span<const double> h, const std::vector<Embedding>& skills,
                                 std::span<const double> bias) {
  if (skills.empty()) throw ValidationError("skill_logits: empty skill bank");
  if (!bias.empty() && bias.size() != skills.size())
    throw ValidationError("skill_logits: bias length differs from bank size");
  std::vector<double> z(skills.size());
  for (std::size_t i = 0; i < skills.size(); ++i) {
    double dot = 0.0;
    for (std::size_t d = 0; d < h.size(); ++d) dot += h[d] * skills[i].values[d];
    z[i] = dot / kMatchTemperature + (bias.empty() ? 0.0 : bias[i]);
  }
  return z;
}

std::vector<double> softmax(std::span<const double> z) {
  const double lse = logsumexp(z);
  std::vector<double> p(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) p[i] = std::exp(z[i] - lse);
  return p;
}

std::vector<int> sample_topk(std::span<const double> z, std::size_t k, Rng& rng) {
  if (k > z.size()) throw ValidationError("sample_topk: K exceeds the number of skills");
  std::vector<double> perturbed(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) perturbed[i] = z[i] + rng.gumbel();
  return greedy_topk(perturbed, k);
}

std::vector<int> greedy_topk(std::span<const double> z, std::size_t k) {
  if (k > z.size()) throw ValidationError("greedy_topk: K exceeds the number of skills");
  std::vector<int> idx(z.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return z[a] > z[b]; });
  idx.resize(k);
  return idx;
}

double action_logprob(std::span<const double> z, std::span<const int> actions) {
  check_actions(z, actions);
  std::vector<char> used(z.size(), 0);
  double lp = 0.0;
  for (int a : actions) {
    lp += z[a] - logsumexp(z, &used);
    used[a] = 1;
  }
  return lp;
}

std::vector<double> action_logprob_grad(std::span<const double> z, std::span<const int> actions) {
  check_actions(z, actions);
  std::vector<char> used(z.size(), 0);
  std::vector<double> g(z.size(), 0.0);
  for (int a : actions) {
    const double lse = logsumexp(z, &used);
    for (std::size_t i = 0; i < z.size(); ++i)
      if (!used[i]) g[i] -= std::exp(z[i] - lse);
    g[a] += 1.0;
    used[a] = 1;
  }
  return g;
}

double first_pick_entropy(std::span<const double> z) {
  const double lse = logsumexp(z);
  double h = 0.0;
  for (double v : z) {
    const double lp = v - lse;
    h -= std::exp(lp) * lp;
  }
  return h;
}

std::vector<double> first_pick_entropy_grad(std::span<const double> z) {
  const double lse = logsumexp(z);
  const double h = first_pick_entropy(z);
  std::vector<double> g(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double lp = z[i] - lse;
    g[i] = -std::exp(lp) * (lp + h);
  }
  return g;
}

}  // namespace pcfmem
