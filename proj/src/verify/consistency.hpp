#pragma once

#include <cstdint>

#include "envs/mdp.hpp"
#include "gradients/estimators.hpp"

namespace ocpg {

/// Draws (s,o) from the normalised occupancy of non-terminal augmented
/// states, then a, s' and the termination / reselection step at s'.
TransitionRecord sample_occupancy_record(const OptionArchitecture& arch, const TabularMDP& mdp,
                                         std::span<const double> normalised_mu, Rng& rng);

struct ConsistencyResult {
  GradientVector estimate;   // sample mean scaled by the occupancy mass
  GradientVector exact;
  GradientVector std_error;  // of the scaled mean
  std::size_t samples = 0;
  double worst_z = 0.0;      // max |estimate − exact| / std_error over coordinates
  std::size_t worst_index = 0;
  bool pass = false;         // every coordinate within 3 standard errors
};

/// Monte-Carlo mean of the step estimator with exact-critic targets against
/// the exact gradient of the same theorem.
ConsistencyResult estimator_consistency(const OptionArchitecture& arch, const TabularMDP& mdp, Estimator estimator,
                                        std::size_t samples, std::uint64_t seed);

}  // namespace ocpg
