#ifndef PCFMEM_TEXT_EMBED_HPP_
#define PCFMEM_TEXT_EMBED_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pcfmem/physics_env.hpp"

namespace pcfmem {

inline constexpr std::size_t kTextDim = 256;
inline constexpr std::size_t kNumericDim = 8;

// Dense feature vector. Text embeddings are L2-normalized (or all zero);
// numeric embeddings carry raw scaled features in [0, 1].
struct Embedding {
  std::vector<double> values;

  std::size_t dim() const { return values.size(); }
  double norm() const;
  bool is_zero() const;
  bool operator==(const Embedding&) const = default;
};

std::uint64_t fnv1a64(std::string_view s);

struct TokenSlot {
  std::size_t index;
  int sign;
};
// Position and sign a token (or "a b" bigram) hashes to.
TokenSlot token_slot(std::string_view token);

// Lowercase maximal [a-z0-9] runs.
std::vector<std::string> tokenize(std::string_view text);

// Hashed bag of unigrams and bigrams, L2-normalized; "" maps to zero.
Embedding embed_text(std::string_view text);

Embedding embed_numeric(const Geometry& g, const SimResult& res);

// Throws ValidationError on dimension mismatch. Zero vectors score 0.
double cosine(const Embedding& a, const Embedding& b);
double cosine(std::span<const double> a, std::span<const double> b);

}  // namespace pcfmem

#endif  // PCFMEM_TEXT_EMBED_HPP_
