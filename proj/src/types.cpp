#include "curiolab/types.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace curiolab {

const std::array<Scenario, 8>& all_scenarios() {
  static const std::array<Scenario, 8> kAll = {
      Scenario::Collide, Scenario::Contain, Scenario::Dominoes,
      Scenario::Drape,   Scenario::Drop,    Scenario::Link,
      Scenario::Roll,    Scenario::Support};
  return kAll;
}

std::string to_string(Scenario s) {
  switch (s) {
    case Scenario::Collide: return "collide";
    case Scenario::Contain: return "contain";
    case Scenario::Dominoes: return "dominoes";
    case Scenario::Drape: return "drape";
    case Scenario::Drop: return "drop";
    case Scenario::Link: return "link";
    case Scenario::Roll: return "roll";
    case Scenario::Support: return "support";
  }
  throw std::invalid_argument("unknown scenario enum value");
}

Scenario scenario_from_string(const std::string& name) {
  for (Scenario s : all_scenarios())
    if (to_string(s) == name) return s;
  throw std::invalid_argument("unknown scenario: " + name);
}

std::string to_string(Category c) {
  switch (c) {
    case Category::Sphere: return "sphere";
    case Category::Box: return "box";
    case Category::Ramp: return "ramp";
    case Category::ClothProxy: return "cloth-proxy";
    case Category::Plank: return "plank";
  }
  throw std::invalid_argument("unknown category enum value");
}

Category category_from_string(const std::string& name) {
  for (Category c : {Category::Sphere, Category::Box, Category::Ramp,
                     Category::ClothProxy, Category::Plank})
    if (to_string(c) == name) return c;
  throw std::invalid_argument("unknown category: " + name);
}

bool SceneState::finite() const {
  if (positions.size() != velocities.size() ||
      positions.size() != object_index.size())
    return false;
  for (const auto& p : positions)
    if (!p.allFinite()) return false;
  for (const auto& v : velocities)
    if (!v.allFinite()) return false;
  return true;
}

std::string Trajectory::id() const {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%016llx", to_string(scenario).c_str(),
                static_cast<unsigned long long>(seed));
  return buf;
}

}  // namespace curiolab
