#pragma once

#include "advex/examiner.hpp"

#include <cstdint>

namespace advex {

struct GridOptimum {
  Scenario scenario;
  double loss = 0.0;
  std::int64_t evaluated = 0;
};

/// Exhaustive search over the endpoint-inclusive grid with `per_dim` nodes
/// per factor. Ties go to the lexicographically smallest index vector
/// (first factor most significant). Throws InvalidConfig above 1e7 nodes.
GridOptimum grid_oracle(const TargetQuery& target, const ScenarioSpace& space, int per_dim,
                        Direction direction = Direction::Weakness);

inline GridOptimum grid_oracle(const TargetQuery& target, int per_dim,
                               Direction direction = Direction::Weakness) {
  return grid_oracle(target, target.space(), per_dim, direction);
}

}  // namespace advex
