#pragma once

#include "curiolab/types.hpp"

namespace curiolab {

struct SimConfig {
  double dt = 0.01;       // s
  int steps = 150;        // frames per trajectory (T)
  double gravity = 9.81;  // m/s^2, downward along -y
  double ground_height = 0.0;
  double contact_threshold = 0.005;  // m
  double particle_radius = 0.1;      // m, default for lattice objects
  double lattice_spacing = 0.2;      // m, inter-particle spacing in lattices
  double cloth_stiffness = 40.0;
  double cloth_damping = 1.5;
  double link_stiffness = 60.0;
  double link_damping = 1.0;
  int min_extra_distractors = 0;
  int max_extra_distractors = 2;

  void validate() const;  // throws std::invalid_argument on bad ranges
};

// Builds the initial scene for one of the eight archetypes. Deterministic in
// (kind, seed, config).
Scene generate_scenario(Scenario kind, std::uint64_t seed,
                        const SimConfig& cfg = {});

// One semi-implicit Euler step with impulse collision resolution. Distractor
// particles are untouched; static objects are collidable but immobile.
SceneState step(const SceneState& state, const std::vector<ObjectSpec>& objects,
                const std::vector<Spring>& springs, double dt,
                const SimConfig& cfg = {});

// Applies step T-1 times, recording collision events at every frame
// (including frame 0).
Trajectory simulate(const Scene& scene, int T, double dt,
                    const SimConfig& cfg = {});

// One event per unordered object pair with any particle pair closer than
// the sum of radii plus threshold; ground events for movable objects.
// Distractors never appear in events.
std::vector<CollisionEvent> detect_collisions(
    const SceneState& state, const std::vector<ObjectSpec>& objects,
    double threshold);

// Kinetic + gravitational + elastic energy of all movable particles.
double mechanical_energy(const SceneState& state,
                         const std::vector<ObjectSpec>& objects,
                         const std::vector<Spring>& springs,
                         double gravity = 9.81, double ground_height = 0.0);

// Structural predicate for the scenario archetype the scene claims to be.
bool matches_archetype(const Scene& scene);

// Centroid position/velocity of one object.
Vec3 object_centroid(const SceneState& state, int object_id);
Vec3 object_mean_velocity(const SceneState& state, int object_id);

}  // namespace curiolab
