#pragma once

#include <cstdint>

#include "gpssm/types.hpp"

namespace gpssm {

inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Counter-keyed splitmix64 generator. Substreams are derived from the
// construction key rather than the evolving state, so draws keyed by
// (iteration, time step, particle) do not depend on scheduling order.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed) : key_(seed), state_(mix64(seed)) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~0ull; }

  result_type operator()() {
    state_ += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // [0, 1)
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  double uniform_pos() {
    double u;
    do {
      u = uniform();
    } while (u <= 0.0);
    return u;
  }

  double normal() {
    const double u1 = uniform_pos();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
  }

  Vec normal_vec(Index n) {
    Vec v(n);
    for (Index i = 0; i < n; ++i) v[i] = normal();
    return v;
  }

  // Draw an index from normalized weights.
  Index categorical(const Eigen::Ref<const Vec>& w) {
    const double u = uniform();
    double acc = 0.0;
    for (Index i = 0; i < w.size(); ++i) {
      acc += w[i];
      if (u < acc) return i;
    }
    return w.size() - 1;
  }

  Rng substream(std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) const {
    std::uint64_t k = key_;
    k = mix64(k ^ mix64(a ^ 0x9ae16a3b2f90404full));
    k = mix64(k ^ mix64(b ^ 0xc3a5c85c97cb3127ull));
    k = mix64(k ^ mix64(c ^ 0xb492b66fbe98f273ull));
    return Rng(k);
  }

 private:
  std::uint64_t key_;
  std::uint64_t state_;
};

}  // namespace gpssm
