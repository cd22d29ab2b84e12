#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace curiolab {

using Vec3 = Eigen::Vector3d;

// Sentinel object id for the ground plane in collision events.
constexpr int kGroundId = -1;

enum class Category { Sphere, Box, Ramp, ClothProxy, Plank };
enum class Scenario { Collide, Contain, Dominoes, Drape, Drop, Link, Roll, Support };

const std::array<Scenario, 8>& all_scenarios();
std::string to_string(Scenario s);
Scenario scenario_from_string(const std::string& name);
std::string to_string(Category c);
Category category_from_string(const std::string& name);

struct ObjectSpec {
  int object_id = 0;
  Category category = Category::Sphere;
  bool is_distractor = false;
  // Immobile but collidable (ramps, container walls). Distractors are
  // immobile and non-interacting.
  bool is_static = false;
  int particle_count = 1;
  double mass_per_particle = 1.0;   // kg
  double restitution = 0.5;         // [0, 1]
  double friction = 0.3;            // [0, 1]
  double particle_radius = 0.1;     // m

  bool movable() const { return !is_distractor && !is_static; }
};

struct SceneState {
  int time_index = 0;
  std::vector<Vec3> positions;   // meters
  std::vector<Vec3> velocities;  // m/s
  std::vector<int> object_index; // object_id per particle

  int particle_count() const { return static_cast<int>(positions.size()); }
  bool finite() const;
};

// Distance constraint between two particles (cloth grids, linked objects).
struct Spring {
  int a = 0;
  int b = 0;
  double rest_length = 0.0;
  double stiffness = 0.0;
  double damping = 0.0;
};

struct CollisionEvent {
  int time_index = 0;
  int object_a = 0;
  int object_b = 0;  // kGroundId for ground contacts
};

struct Scene {
  Scenario scenario = Scenario::Drop;
  std::uint64_t seed = 0;
  SceneState state;
  std::vector<ObjectSpec> objects;
  std::vector<Spring> springs;
};

struct Trajectory {
  Scenario scenario = Scenario::Drop;
  std::uint64_t seed = 0;
  double dt = 0.01;
  std::vector<SceneState> states;
  std::vector<CollisionEvent> collisions;
  std::vector<ObjectSpec> objects;
  std::vector<Spring> springs;

  int length() const { return static_cast<int>(states.size()); }
  // Stable identifier, e.g. "drop_0000000000000007".
  std::string id() const;
};

}  // namespace curiolab
