#include "amoe/random.hpp"

namespace amoe {
namespace {

std::mt19937_64 seeded(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32U),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32U),
                    0x9e3779b9U};
  return std::mt19937_64(seq);
}

}  // namespace

Rng::Rng(std::uint64_t seed) : engine_(seeded(seed, 0xffffffffffffffffULL)) {}

Rng::Rng(std::uint64_t seed, std::uint64_t stream) : engine_(seeded(seed, stream)) {}

double Rng::uniform() { return uniform_(engine_); }

double Rng::normal() { return normal_(engine_); }

double Rng::gamma(double shape, double rate) {
  std::gamma_distribution<double> dist(shape, 1.0 / rate);
  return dist(engine_);
}

Vector Rng::normal_vector(Index n) {
  Vector out(n);
  for (Index i = 0; i < n; ++i) {
    out(i) = normal_(engine_);
  }
  return out;
}

Rng Rng::split() { return Rng(engine_(), engine_()); }

}  // namespace amoe
