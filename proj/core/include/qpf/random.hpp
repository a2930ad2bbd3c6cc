#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

#include "qpf/quaternion.hpp"

namespace qpf {

using Rng = std::mt19937_64;

// Independent stream for (seed, stream index) pairs, e.g. one stream for
// truth generation and one for the filter of every Monte Carlo run.
inline Rng MakeRng(std::uint64_t seed, std::uint64_t stream = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream),
                    static_cast<std::uint32_t>(stream >> 32)};
  return Rng(seq);
}

inline double StandardNormal(Rng& rng) {
  return std::normal_distribution<double>(0.0, 1.0)(rng);
}

inline Vec3 StandardNormal3(Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  double const x = n(rng);
  double const y = n(rng);
  double const z = n(rng);
  return {x, y, z};
}

inline Vec6 StandardNormal6(Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vec6 v;
  for (int i = 0; i < 6; ++i) {
    v[i] = n(rng);
  }
  return v;
}

}  // namespace qpf
