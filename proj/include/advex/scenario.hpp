#pragma once

#include "advex/numerics.hpp"
#include "advex/rng.hpp"

#include <json.hpp>

#include <stdexcept>
#include <string>
#include <vector>

namespace advex {

/// Bad user-facing configuration (maps to CLI exit code 2).
class InvalidConfig : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A component broke its side of an interface contract.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Examiner generate/update calls out of sequence.
class ProtocolError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct Factor {
  std::string name;
  double lower = 0.0;
  double upper = 1.0;
  int bins = 100;

  double span() const { return upper - lower; }
  void validate() const;
};

/// One point of the factor space, values in canonical factor order.
using Scenario = Eigen::VectorXd;

/// Bounded Cartesian product of factors. Factor order is significant: it is
/// the default sampling order of the sequential policy.
class ScenarioSpace {
 public:
  ScenarioSpace() = default;
  explicit ScenarioSpace(std::vector<Factor> factors);

  Eigen::Index size() const { return static_cast<Eigen::Index>(factors_.size()); }
  const std::vector<Factor>& factors() const { return factors_; }
  const Factor& factor(Eigen::Index i) const { return factors_.at(static_cast<size_t>(i)); }
  /// Index of the named factor; throws InvalidConfig when absent.
  Eigen::Index index_of(const std::string& name) const;

  bool contains(const Scenario& s) const;
  /// Throws ContractViolation naming the offending factor.
  void require_contains(const Scenario& s) const;

  Scenario sample_uniform(Rng& rng) const;
  Vector lower() const;
  Vector upper() const;
  Vector normalize(const Scenario& s) const;
  Scenario denormalize(const Vector& unit) const;

  bool operator==(const ScenarioSpace& other) const;

  friend void to_json(nlohmann::json& j, const ScenarioSpace& space);
  friend void from_json(const nlohmann::json& j, ScenarioSpace& space);

 private:
  std::vector<Factor> factors_;
};

void to_json(nlohmann::json& j, const Factor& f);
void from_json(const nlohmann::json& j, Factor& f);

ScenarioSpace load_space(const std::string& path);

/// Endpoint-inclusive even discretization: lower + index * span / (bins - 1).
double bin_to_value(const Factor& factor, int index);

}  // namespace advex
