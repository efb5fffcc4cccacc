#include "advex/landscape.hpp"

#include <algorithm>
#include <cmath>

namespace advex {

namespace {

std::string kind_name(LandscapeKind kind) {
  switch (kind) {
    case LandscapeKind::SingleBump: return "single-bump";
    case LandscapeKind::ThreeBump: return "three-bump";
    case LandscapeKind::Ridge: return "ridge";
  }
  return "?";
}

LandscapeKind parse_kind(const std::string& text) {
  if (text == "single-bump") return LandscapeKind::SingleBump;
  if (text == "three-bump") return LandscapeKind::ThreeBump;
  if (text == "ridge") return LandscapeKind::Ridge;
  throw InvalidConfig("landscape kind must be single-bump, three-bump or ridge; got '" + text + "'");
}

Vector to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

AnalyticLandscape::AnalyticLandscape(std::string name, LandscapeKind kind, ScenarioSpace space,
                                     std::vector<Bump> bumps)
    : name_(std::move(name)), kind_(kind), space_(std::move(space)), bumps_(std::move(bumps)) {
  if (bumps_.empty()) throw InvalidConfig("landscape '" + name_ + "' needs at least one bump");
  for (const Bump& b : bumps_) {
    if (!space_.contains(b.center)) throw InvalidConfig("landscape '" + name_ + "': bump center outside space");
    if (!(b.height > 0.0 && b.height <= 1.0)) throw InvalidConfig("landscape '" + name_ + "': height must be in (0, 1]");
    if (!(b.width > 0.0)) throw InvalidConfig("landscape '" + name_ + "': width must be positive");
    if (b.direction.size() > 0) {
      if (b.direction.size() != space_.size() || !(b.length > 0.0) || b.direction.norm() == 0.0) {
        throw InvalidConfig("landscape '" + name_ + "': bad ridge direction/length");
      }
    }
    axes_.push_back(b.direction.size() > 0 ? Vector(b.direction.normalized()) : Vector());
  }
}

double AnalyticLandscape::evaluate(const Scenario& s) const {
  const Vector u = space_.normalize(s);
  double best = 0.0;
  for (size_t k = 0; k < bumps_.size(); ++k) {
    const Bump& b = bumps_[k];
    const Vector du = u - space_.normalize(b.center);
    double q;
    if (b.direction.size() == 0) {
      q = du.squaredNorm() / (b.width * b.width);
    } else {
      const double along = du.dot(axes_[k]);
      const double across2 = std::max(0.0, du.squaredNorm() - along * along);
      q = across2 / (b.width * b.width) + along * along / (b.length * b.length);
    }
    best = std::max(best, b.height * std::exp(-0.5 * q));
  }
  return best;
}

const Bump& AnalyticLandscape::peak() const {
  return *std::max_element(bumps_.begin(), bumps_.end(),
                           [](const Bump& a, const Bump& b) { return a.height < b.height; });
}

nlohmann::json AnalyticLandscape::to_json() const {
  nlohmann::json bumps = nlohmann::json::array();
  for (const Bump& b : bumps_) {
    nlohmann::json jb = {{"center", std::vector<double>(b.center.begin(), b.center.end())},
                         {"height", b.height},
                         {"width", b.width}};
    if (b.direction.size() > 0) {
      jb["direction"] = std::vector<double>(b.direction.begin(), b.direction.end());
      jb["length"] = b.length;
    }
    bumps.push_back(jb);
  }
  return {{"name", name_}, {"kind", kind_name(kind_)}, {"space", space_}, {"bumps", bumps}};
}

AnalyticLandscape AnalyticLandscape::from_json(const nlohmann::json& j) {
  try {
    std::vector<Bump> bumps;
    for (const auto& jb : j.at("bumps")) {
      Bump b;
      b.center = to_vector(jb.at("center").get<std::vector<double>>());
      b.height = jb.at("height").get<double>();
      b.width = jb.at("width").get<double>();
      if (jb.contains("direction")) {
        b.direction = to_vector(jb.at("direction").get<std::vector<double>>());
        b.length = jb.at("length").get<double>();
      }
      bumps.push_back(std::move(b));
    }
    ScenarioSpace space = j.contains("space") ? j.at("space").get<ScenarioSpace>() : landscape_space();
    return AnalyticLandscape(j.value("name", std::string("landscape")),
                             parse_kind(j.at("kind").get<std::string>()), std::move(space),
                             std::move(bumps));
  } catch (const nlohmann::json::exception& e) {
    throw InvalidConfig(std::string("landscape: ") + e.what());
  }
}

ScenarioSpace landscape_space() {
  return ScenarioSpace({{"x", 0.0, 1.0, 100}, {"y", -1.0, 1.0, 100}, {"z", 0.0, 10.0, 100}});
}

std::vector<AnalyticLandscape> landscape_suite() {
  const ScenarioSpace space = landscape_space();
  // Centers sit on multiples of 0.05 in unit coordinates, so they are nodes
  // of every endpoint-inclusive grid with per_dim - 1 divisible by 20.
  auto at = [&space](double ux, double uy, double uz) {
    Vector u(3);
    u << ux, uy, uz;
    return space.denormalize(u);
  };
  std::vector<AnalyticLandscape> suite;
  suite.emplace_back("single-bump", LandscapeKind::SingleBump, space,
                     std::vector<Bump>{{at(0.30, 0.65, 0.55), 0.9, 0.2, {}, 0.0}});
  suite.emplace_back("three-bump", LandscapeKind::ThreeBump, space,
                     std::vector<Bump>{{at(0.20, 0.25, 0.80), 0.6, 0.15, {}, 0.0},
                                       {at(0.75, 0.30, 0.35), 0.95, 0.15, {}, 0.0},
                                       {at(0.45, 0.80, 0.50), 0.75, 0.2, {}, 0.0}});
  Vector axis(3);
  axis << 1.0, 1.0, 0.0;
  suite.emplace_back("ridge", LandscapeKind::Ridge, space,
                     std::vector<Bump>{{at(0.60, 0.40, 0.30), 1.0, 0.1, axis, 0.5}});
  return suite;
}

AnalyticLandscape landscape_by_name(const std::string& name) {
  for (AnalyticLandscape& l : landscape_suite()) {
    if (l.name() == name) return l;
  }
  throw InvalidConfig("unknown landscape '" + name + "'");
}

}  // namespace advex
