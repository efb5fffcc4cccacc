#include "advex/grid_oracle.hpp"

#include <cmath>
#include <vector>

namespace advex {

GridOptimum grid_oracle(const TargetQuery& target, const ScenarioSpace& space, int per_dim,
                        Direction direction) {
  if (per_dim < 2) throw InvalidConfig("grid oracle needs per_dim >= 2");
  const Eigen::Index d = space.size();
  const double nodes = std::pow(static_cast<double>(per_dim), static_cast<double>(d));
  if (nodes > 1e7) {
    throw InvalidConfig("grid oracle budget exceeded: " + std::to_string(per_dim) + "^" +
                        std::to_string(d) + " > 1e7 nodes");
  }

  std::vector<Factor> axes = space.factors();
  for (Factor& f : axes) f.bins = per_dim;
  std::vector<std::vector<double>> values(static_cast<size_t>(d));
  for (Eigen::Index i = 0; i < d; ++i) {
    for (int k = 0; k < per_dim; ++k) values[static_cast<size_t>(i)].push_back(bin_to_value(axes[static_cast<size_t>(i)], k));
  }

  std::vector<int> index(static_cast<size_t>(d), 0);
  Scenario s(d);
  GridOptimum best;
  bool first = true;
  while (true) {
    for (Eigen::Index i = 0; i < d; ++i) s[i] = values[static_cast<size_t>(i)][static_cast<size_t>(index[static_cast<size_t>(i)])];
    const double loss = target.evaluate(s);
    ++best.evaluated;
    const bool improves = direction == Direction::Weakness ? loss > best.loss : loss < best.loss;
    if (first || improves) {
      best.loss = loss;
      best.scenario = s;
      first = false;
    }
    // Odometer increment, last factor fastest, so visiting order is lexicographic.
    Eigen::Index pos = d - 1;
    while (pos >= 0 && ++index[static_cast<size_t>(pos)] == per_dim) {
      index[static_cast<size_t>(pos)] = 0;
      --pos;
    }
    if (pos < 0) break;
  }
  return best;
}

}  // namespace advex
