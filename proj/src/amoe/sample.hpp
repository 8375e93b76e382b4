#pragma once

#include <optional>
#include <vector>

#include "amoe/types.hpp"

namespace amoe {

// Weighted particle population. Particles are stored column-wise.
struct WeightedSample {
  Matrix particles;             // dim x N
  std::vector<double> weights;  // N, nonnegative
  std::optional<std::vector<Index>> ancestors;

  [[nodiscard]] Index size() const { return particles.cols(); }
  [[nodiscard]] Index dim() const { return particles.rows(); }
  [[nodiscard]] Vector particle(Index i) const { return particles.col(i); }
};

// Checks equal lengths, finite nonnegative weights and at least one positive
// weight; throws Error(kInvalidArgument) otherwise.
void validate(const WeightedSample& sample);

WeightedSample uniform_sample(Matrix particles);

}  // namespace amoe
