#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string_view>

#include "dic/tensor.hpp"

namespace dic {

// Deterministic sample stream.
//
// Integers come from std::mt19937_64, whose output sequence is fixed by the
// C++ standard. Uniforms take the top 53 bits: u = (x >> 11) * 2^-53 in [0,1).
// Normals use Box-Muller on consecutive uniform pairs (u1, u2):
//   r = sqrt(-2 ln(1 - u1)),  n0 = r cos(2 pi u2),  n1 = r sin(2 pi u2)
// emitted n0 first, then n1.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  double uniform();
  double normal();

 private:
  std::mt19937_64 engine_;
  std::optional<double> spare_;
};

Tensor normal(SeededRng& rng, const Shape& shape);

// FNV-1a over the bytes of text, folded with seed through a splitmix64 finalizer.
std::uint64_t hash_string(std::string_view text, std::uint64_t seed);
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace dic
