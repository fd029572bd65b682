#ifndef PCFMEM_RNG_HPP_
#define PCFMEM_RNG_HPP_

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <random>

namespace pcfmem {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Derives an independent stream seed from a master seed and a path of
// integer tags (epoch, episode index, ...). Streams depend only on the
// tags, never on scheduling, so parallel rollouts stay reproducible.
inline std::uint64_t derive_seed(std::uint64_t master,
                                 std::initializer_list<std::uint64_t> tags) {
  std::uint64_t s = splitmix64(master);
  for (std::uint64_t t : tags) s = splitmix64(s ^ splitmix64(t + 0x51ed27ULL));
  return s;
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  // Uniform in the open interval (0, 1).
  double uniform() {
    for (;;) {
      double u = std::generate_canonical<double, 53>(engine_);
      if (u > 0.0 && u < 1.0) return u;
    }
  }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [lo, hi].
  int uniform_int(int lo, int hi) {
    return lo + static_cast<int>(engine_() % static_cast<std::uint64_t>(hi - lo + 1));
  }
  bool bernoulli(double p) { return uniform() < p; }
  double normal() {
    // Box-Muller keeps the stream independent of libstdc++ internals.
    double u1 = uniform(), u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }
  double gumbel() { return -std::log(-std::log(uniform())); }
  std::uint64_t next() { return engine_(); }

  template <typename It>
  void shuffle(It first, It last) {
    auto n = last - first;
    for (auto i = n - 1; i > 0; --i) {
      auto j = static_cast<decltype(i)>(engine_() % static_cast<std::uint64_t>(i + 1));
      std::swap(first[i], first[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace pcfmem

#endif  // PCFMEM_RNG_HPP_
