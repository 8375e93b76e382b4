#pragma once

#include <cstdint>
#include <random>

#include "amoe/types.hpp"

namespace amoe {

// Draws are produced in fixed-size blocks, each from its own substream, so
// results do not depend on how blocks are distributed over threads.
inline constexpr Index kDrawBlock = 256;

class Rng {
 public:
  explicit Rng(std::uint64_t seed);
  Rng(std::uint64_t seed, std::uint64_t stream);

  double uniform();  // in [0, 1)
  double normal();
  double gamma(double shape, double rate);
  Vector normal_vector(Index n);
  std::uint64_t next_u64() { return engine_(); }

  // Fresh generator seeded from this one; advances this generator.
  Rng split();

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_;
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

// Family of independent substreams derived from a single base seed.
class StreamFamily {
 public:
  explicit StreamFamily(std::uint64_t base) : base_(base) {}
  explicit StreamFamily(Rng& parent) : base_(parent.next_u64()) {}

  [[nodiscard]] Rng stream(std::uint64_t index) const { return Rng(base_, index); }

 private:
  std::uint64_t base_;
};

}  // namespace amoe
