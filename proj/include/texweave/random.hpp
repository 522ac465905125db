#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace texweave {

using Rng = std::mt19937_64;

// Deterministic generator seeded from a base seed and any number of
// stream identifiers (e.g. seed, row, col).
inline Rng derive_rng(std::uint64_t seed, std::initializer_list<std::int64_t> stream = {}) {
  std::vector<std::uint32_t> words = {static_cast<std::uint32_t>(seed),
                                      static_cast<std::uint32_t>(seed >> 32)};
  for (std::int64_t s : stream) {
    auto u = static_cast<std::uint64_t>(s);
    words.push_back(static_cast<std::uint32_t>(u));
    words.push_back(static_cast<std::uint32_t>(u >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

inline std::vector<double> standard_normals(Rng& rng, std::size_t n) {
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> out(n);
  for (auto& v : out) v = dist(rng);
  return out;
}

}  // namespace texweave
