#pragma once

#include "advex/examiner.hpp"

#include <string>
#include <vector>

namespace advex {

enum class LandscapeKind { SingleBump, ThreeBump, Ridge };

/// Anisotropic Gaussian bump on unit-cube coordinates. With a direction set,
/// `width` applies across the axis and `length` along it (a ridge).
struct Bump {
  Scenario center;      // scenario-space units
  double height = 1.0;  // in (0, 1]
  double width = 0.1;   // unit-cube units
  Vector direction;     // empty for isotropic bumps
  double length = 0.0;
};

/// Max-combination of bumps: loss(s) = max_k height_k * profile_k(s). The
/// global maximum is the tallest bump's height at its center, exactly.
class AnalyticLandscape final : public TargetQuery {
 public:
  AnalyticLandscape(std::string name, LandscapeKind kind, ScenarioSpace space,
                    std::vector<Bump> bumps);

  const ScenarioSpace& space() const override { return space_; }
  double evaluate(const Scenario& s) const override;

  const std::string& name() const { return name_; }
  LandscapeKind kind() const { return kind_; }
  const std::vector<Bump>& bumps() const { return bumps_; }
  /// Declared optimum: tallest bump center and its height.
  const Bump& peak() const;

  nlohmann::json to_json() const;
  static AnalyticLandscape from_json(const nlohmann::json& j);

 private:
  std::string name_;
  LandscapeKind kind_;
  ScenarioSpace space_;
  std::vector<Bump> bumps_;
  std::vector<Vector> axes_;  // unit-norm ridge directions, empty for isotropic bumps
};

/// Three-factor space with mixed units shared by the reference landscapes.
ScenarioSpace landscape_space();

/// The reference suite: single-bump, three-bump mixture, ridge.
std::vector<AnalyticLandscape> landscape_suite();

AnalyticLandscape landscape_by_name(const std::string& name);

}  // namespace advex
