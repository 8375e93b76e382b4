#include "amoe/sample.hpp"

#include <cmath>

#include "amoe/errors.hpp"

namespace amoe {

void validate(const WeightedSample& sample) {
  require(static_cast<Index>(sample.weights.size()) == sample.size(),
          "weights and particles must have equal lengths");
  require(sample.size() >= 1, "sample must contain at least one particle");
  if (sample.ancestors) {
    require(static_cast<Index>(sample.ancestors->size()) == sample.size(),
            "ancestor indices must match the number of particles");
  }
  bool positive = false;
  for (double w : sample.weights) {
    require(std::isfinite(w) && w >= 0.0, "weights must be finite and nonnegative");
    positive = positive || w > 0.0;
  }
  require(positive, "sample needs at least one positive weight");
  require(sample.particles.allFinite(), "particles must be finite");
}

WeightedSample uniform_sample(Matrix particles) {
  WeightedSample out;
  out.weights.assign(static_cast<std::size_t>(particles.cols()), 1.0);
  out.particles = std::move(particles);
  return out;
}

}  // namespace amoe
