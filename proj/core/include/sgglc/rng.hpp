#pragma once

#include <cmath>
#include <cstdint>

#include "sgglc/tensor.hpp"

namespace sgglc {

// splitmix64-based generator. Bit-stable across platforms and standard
// library implementations, which keeps seeded runs reproducible everywhere.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  i64 below(i64 n) { return n > 0 ? static_cast<i64>(next_u64() % static_cast<std::uint64_t>(n)) : 0; }

  // Box-Muller; one value per call keeps the stream simple to reason about.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  std::uint64_t fork(std::uint64_t stream) {
    Rng mix(state_ ^ (0xa0761d6478bd642fULL * (stream + 1)));
    return mix.next_u64();
  }

 private:
  std::uint64_t state_;
};

// Kaiming-uniform fan-in initialization (ReLU gain): U(-b, b), b = sqrt(6/fan_in).
template <typename T>
void kaiming_uniform(Tensor<T>& t, i64 fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in > 0 ? fan_in : 1));
  for (i64 i = 0; i < t.count(); ++i) t[i] = static_cast<T>(rng.uniform(-bound, bound));
}

template <typename T>
void fill_uniform(Tensor<T>& t, double lo, double hi, Rng& rng) {
  for (i64 i = 0; i < t.count(); ++i) t[i] = static_cast<T>(rng.uniform(lo, hi));
}

template <typename T>
void fill_normal(Tensor<T>& t, double mean, double stddev, Rng& rng) {
  for (i64 i = 0; i < t.count(); ++i) t[i] = static_cast<T>(mean + stddev * rng.normal());
}

}  // namespace sgglc
