#include "pcfmem/text_embed.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "pcfmem/errors.hpp"

namespace pcfmem {

double Embedding::norm() const {
  double s = 0.0;
  for (double v : values) s += v * v;
  return std::sqrt(s);
}

bool Embedding::is_zero() const {
  return std::all_of(values.begin(), values.end(), [](double v) { return v == 0.0; });
}

std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

TokenSlot token_slot(std::string_view token) {
  const std::uint64_t h = fnv1a64(token);
  return {static_cast<std::size_t>(h % kTextDim), ((h >> 63) & 1U) ? -1 : 1};
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

Embedding embed_text(std::string_view text) {
  Embedding e{std::vector<double>(kTextDim, 0.0)};
  const auto tokens = tokenize(text);
  auto add = [&](std::string_view tok) {
    TokenSlot slot = token_slot(tok);
    e.values[slot.index] += slot.sign;
  };
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    add(tokens[i]);
    if (i + 1 < tokens.size()) add(tokens[i] + " " + tokens[i + 1]);
  }
  const double n = e.norm();
  if (n > 0.0)
    for (double& v : e.values) v /= n;
  return e;
}

Embedding embed_numeric(const Geometry& g, const SimResult& res) {
  auto clamp01 = [](double v) { return std::clamp(v, 0.0, 1.0); };
  const double log_loss = std::log10(std::max(res.loss_db_km, 1e-300));
  Embedding e;
  e.values = {
      clamp01(g.pitch_um / 4.0),
      clamp01(g.fill()),
      clamp01((g.n_rings - 3) / 7.0),
      clamp01((res.lambda_um - 1.2) / 0.5),
      clamp01((res.n_eff - 1.40) / 0.06),
      clamp01((log_loss + 12.0) / 16.0),
      clamp01(res.dispersion_ps_nm_km / 200.0 + 0.5),
      0.0,
  };
  return e;
}

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw ValidationError("cosine: dimension mismatch " + std::to_string(a.size()) + " vs " +
                          std::to_string(b.size()));
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

double cosine(const Embedding& a, const Embedding& b) { return cosine(a.values, b.values); }

}  // namespace pcfmem
