#include "advex/scenario.hpp"

#include <cmath>
#include <fstream>
#include <set>

namespace advex {

void Factor::validate() const {
  if (name.empty()) throw InvalidConfig("factor name must be non-empty");
  if (!std::isfinite(lower) || !std::isfinite(upper) || !(lower < upper)) {
    throw InvalidConfig("factor '" + name + "': lower must be strictly below upper");
  }
  if (bins < 2) throw InvalidConfig("factor '" + name + "': bins must be >= 2");
}

ScenarioSpace::ScenarioSpace(std::vector<Factor> factors) : factors_(std::move(factors)) {
  if (factors_.empty()) throw InvalidConfig("scenario space needs at least one factor");
  std::set<std::string> names;
  for (const auto& f : factors_) {
    f.validate();
    if (!names.insert(f.name).second) {
      throw InvalidConfig("duplicate factor name '" + f.name + "'");
    }
  }
}

Eigen::Index ScenarioSpace::index_of(const std::string& name) const {
  for (size_t i = 0; i < factors_.size(); ++i) {
    if (factors_[i].name == name) return static_cast<Eigen::Index>(i);
  }
  throw InvalidConfig("unknown factor '" + name + "'");
}

bool ScenarioSpace::contains(const Scenario& s) const {
  if (s.size() != size()) return false;
  for (Eigen::Index i = 0; i < size(); ++i) {
    const Factor& f = factor(i);
    if (!(s[i] >= f.lower && s[i] <= f.upper)) return false;
  }
  return true;
}

void ScenarioSpace::require_contains(const Scenario& s) const {
  if (s.size() != size()) {
    throw ContractViolation("scenario has " + std::to_string(s.size()) + " values, space has " +
                            std::to_string(size()) + " factors");
  }
  for (Eigen::Index i = 0; i < size(); ++i) {
    const Factor& f = factor(i);
    if (!(s[i] >= f.lower && s[i] <= f.upper)) {
      throw ContractViolation("scenario value " + std::to_string(s[i]) + " for factor '" +
                              f.name + "' is outside [" + std::to_string(f.lower) + ", " +
                              std::to_string(f.upper) + "]");
    }
  }
}

Scenario ScenarioSpace::sample_uniform(Rng& rng) const {
  Scenario s(size());
  for (Eigen::Index i = 0; i < size(); ++i) s[i] = rng.uniform(factor(i).lower, factor(i).upper);
  return s;
}

Vector ScenarioSpace::lower() const {
  Vector v(size());
  for (Eigen::Index i = 0; i < size(); ++i) v[i] = factor(i).lower;
  return v;
}

Vector ScenarioSpace::upper() const {
  Vector v(size());
  for (Eigen::Index i = 0; i < size(); ++i) v[i] = factor(i).upper;
  return v;
}

Vector ScenarioSpace::normalize(const Scenario& s) const {
  return ((s - lower()).array() / (upper() - lower()).array()).matrix();
}

Scenario ScenarioSpace::denormalize(const Vector& unit) const {
  const Vector lo = lower();
  const Vector hi = upper();
  Scenario s = lo + (unit.array() * (hi - lo).array()).matrix();
  // Keep exact endpoints despite rounding in the affine map.
  return s.cwiseMax(lo).cwiseMin(hi);
}

bool ScenarioSpace::operator==(const ScenarioSpace& other) const {
  if (factors_.size() != other.factors_.size()) return false;
  for (size_t i = 0; i < factors_.size(); ++i) {
    const Factor& a = factors_[i];
    const Factor& b = other.factors_[i];
    if (a.name != b.name || a.lower != b.lower || a.upper != b.upper || a.bins != b.bins) {
      return false;
    }
  }
  return true;
}

void to_json(nlohmann::json& j, const Factor& f) {
  j = {{"name", f.name}, {"lower", f.lower}, {"upper", f.upper}, {"bins", f.bins}};
}

void from_json(const nlohmann::json& j, Factor& f) {
  try {
    f.name = j.at("name").get<std::string>();
    f.lower = j.at("lower").get<double>();
    f.upper = j.at("upper").get<double>();
    f.bins = j.value("bins", 100);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidConfig(std::string("factor: ") + e.what());
  }
  f.validate();
}

void to_json(nlohmann::json& j, const ScenarioSpace& space) { j = space.factors_; }

void from_json(const nlohmann::json& j, ScenarioSpace& space) {
  const nlohmann::json& list = j.is_object() && j.contains("factors") ? j.at("factors") : j;
  if (!list.is_array()) throw InvalidConfig("scenario space must be a JSON array of factors");
  space = ScenarioSpace(list.get<std::vector<Factor>>());
}

ScenarioSpace load_space(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidConfig("cannot read scenario space file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidConfig("'" + path + "': " + e.what());
  }
  return j.get<ScenarioSpace>();
}

double bin_to_value(const Factor& factor, int index) {
  if (index < 0 || index >= factor.bins) {
    throw std::out_of_range("bin index " + std::to_string(index) + " outside [0, " +
                            std::to_string(factor.bins) + ") for factor '" + factor.name + "'");
  }
  if (index == factor.bins - 1) return factor.upper;
  return factor.lower + index * (factor.span() / (factor.bins - 1));
}

}  // namespace advex
