#include "curiolab/sim.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>

#include "curiolab/rng.hpp"

namespace curiolab {
namespace {

// A dynamics body is either a whole rigid object (all particles share one
// velocity) or a single cloth particle.
struct Body {
  double inv_mass = 0.0;  // 0 for static objects and distractors
  double restitution = 0.0;
  double friction = 0.0;
  Vec3 vel = Vec3::Zero();
  std::vector<int> particles;  // indices into the state arrays
  bool movable = false;
};

struct World {
  std::vector<Body> bodies;
  std::vector<int> body_of;          // particle -> body index
  std::vector<const ObjectSpec*> spec_of;  // particle -> object spec
};

const ObjectSpec& spec_for(const std::vector<ObjectSpec>& objects, int id) {
  for (const auto& o : objects)
    if (o.object_id == id) return o;
  throw std::invalid_argument("state references unknown object_id " +
                              std::to_string(id));
}

World build_world(const SceneState& state,
                  const std::vector<ObjectSpec>& objects) {
  World w;
  const int P = state.particle_count();
  w.body_of.assign(P, -1);
  w.spec_of.assign(P, nullptr);
  std::map<int, int> rigid_body_of_object;
  for (int i = 0; i < P; ++i) {
    const ObjectSpec& spec = spec_for(objects, state.object_index[i]);
    w.spec_of[i] = &spec;
    const bool per_particle = spec.category == Category::ClothProxy;
    int b;
    if (per_particle) {
      b = static_cast<int>(w.bodies.size());
      w.bodies.push_back({});
    } else {
      auto it = rigid_body_of_object.find(spec.object_id);
      if (it == rigid_body_of_object.end()) {
        b = static_cast<int>(w.bodies.size());
        rigid_body_of_object[spec.object_id] = b;
        w.bodies.push_back({});
      } else {
        b = it->second;
      }
    }
    Body& body = w.bodies[b];
    body.particles.push_back(i);
    body.restitution = spec.restitution;
    body.friction = spec.friction;
    body.movable = spec.movable();
    w.body_of[i] = b;
  }
  for (auto& body : w.bodies) {
    const ObjectSpec& spec = *w.spec_of[body.particles.front()];
    const bool per_particle = spec.category == Category::ClothProxy;
    const double mass = per_particle
                            ? spec.mass_per_particle
                            : spec.mass_per_particle * spec.particle_count;
    body.inv_mass = body.movable ? 1.0 / mass : 0.0;
    body.vel = state.velocities[body.particles.front()];
  }
  return w;
}

// Lifts a penetrating body fully out of the ground, reflecting the normal
// velocity with restitution and paying the potential-energy gain of the lift
// out of the normal kinetic energy. Net mechanical energy never increases.
void resolve_ground(Body& body, SceneState& s, const World& w, double gravity,
                    double ground) {
  if (!body.movable) return;
  double dep = 0.0;
  for (int i : body.particles) {
    const double r = w.spec_of[i]->particle_radius;
    dep = std::max(dep, ground + r - s.positions[i].y());
  }
  if (dep <= 0.0) return;
  Vec3& v = body.vel;
  if (v.y() < 0.0) {
    const double jn = (1.0 + body.restitution) * (-v.y());
    Vec3 vt(v.x(), 0.0, v.z());
    const double vt_mag = vt.norm();
    if (vt_mag > 1e-12) {
      const double jt = std::min(body.friction * jn, vt_mag);
      v -= (jt / vt_mag) * vt;
    }
    v.y() = -body.restitution * v.y();
  }
  for (int i : body.particles) s.positions[i].y() += dep;
  const double vy2 = v.y() * v.y() - 2.0 * gravity * dep;
  v.y() = vy2 > 0.0 ? std::sqrt(vy2) : 0.0;
}

struct Contact {
  int pi, pj;
  double overlap;
};

std::vector<Contact> find_contacts(const SceneState& s, const World& w,
                                   double slack) {
  std::vector<Contact> out;
  const int P = s.particle_count();
  for (int i = 0; i < P; ++i) {
    const ObjectSpec& si = *w.spec_of[i];
    if (si.is_distractor) continue;
    for (int j = i + 1; j < P; ++j) {
      const ObjectSpec& sj = *w.spec_of[j];
      if (sj.is_distractor) continue;
      if (w.body_of[i] == w.body_of[j]) continue;
      if (si.object_id == sj.object_id) continue;  // cloth self-contact off
      if (si.is_static && sj.is_static) continue;
      const double reach = si.particle_radius + sj.particle_radius + slack;
      const Vec3 d = s.positions[j] - s.positions[i];
      if (d.squaredNorm() < reach * reach)
        out.push_back({i, j, si.particle_radius + sj.particle_radius - d.norm()});
    }
  }
  return out;
}

}  // namespace

void SimConfig::validate() const {
  if (dt <= 0.0) throw std::invalid_argument("sim config: dt must be > 0");
  if (steps < 2) throw std::invalid_argument("sim config: steps must be >= 2");
  if (gravity <= 0.0) throw std::invalid_argument("sim config: gravity must be > 0");
  if (particle_radius <= 0.0 || lattice_spacing <= 0.0)
    throw std::invalid_argument("sim config: radius/spacing must be > 0");
  if (contact_threshold < 0.0)
    throw std::invalid_argument("sim config: contact threshold must be >= 0");
  if (min_extra_distractors > max_extra_distractors ||
      min_extra_distractors < 0)
    throw std::invalid_argument("sim config: distractor range empty or inverted");
}

Vec3 object_centroid(const SceneState& state, int object_id) {
  Vec3 c = Vec3::Zero();
  int n = 0;
  for (int i = 0; i < state.particle_count(); ++i)
    if (state.object_index[i] == object_id) {
      c += state.positions[i];
      ++n;
    }
  if (n == 0) throw std::invalid_argument("object_id not present in state");
  return c / n;
}

Vec3 object_mean_velocity(const SceneState& state, int object_id) {
  Vec3 c = Vec3::Zero();
  int n = 0;
  for (int i = 0; i < state.particle_count(); ++i)
    if (state.object_index[i] == object_id) {
      c += state.velocities[i];
      ++n;
    }
  if (n == 0) throw std::invalid_argument("object_id not present in state");
  return c / n;
}

SceneState step(const SceneState& state, const std::vector<ObjectSpec>& objects,
                const std::vector<Spring>& springs, double dt,
                const SimConfig& cfg) {
  if (dt <= 0.0) throw std::invalid_argument("step: dt must be > 0");
  if (!state.finite())
    throw std::invalid_argument("step: non-finite or inconsistent input state");

  World w = build_world(state, objects);
  SceneState out = state;
  out.time_index = state.time_index + 1;

  // Spring forces on current positions/velocities.
  std::vector<Vec3> force(state.particle_count(), Vec3::Zero());
  for (const Spring& sp : springs) {
    const Vec3 d = state.positions[sp.b] - state.positions[sp.a];
    const double len = d.norm();
    if (len < 1e-12) continue;
    const Vec3 dir = d / len;
    const Vec3 vrel = state.velocities[sp.b] - state.velocities[sp.a];
    const double f = sp.stiffness * (len - sp.rest_length) +
                     sp.damping * vrel.dot(dir);
    force[sp.a] += f * dir;
    force[sp.b] -= f * dir;
  }

  // Velocity update (gravity + forces), aggregated per body.
  const Vec3 g(0.0, -cfg.gravity, 0.0);
  for (Body& body : w.bodies) {
    if (!body.movable) continue;
    Vec3 f = Vec3::Zero();
    for (int i : body.particles) f += force[i];
    body.vel += (f * body.inv_mass + g) * dt;
  }

  // Impulse resolution for approaching contacts, sequential in index order.
  for (const Contact& c :
       find_contacts(state, w, cfg.contact_threshold)) {
    Body& a = w.bodies[w.body_of[c.pi]];
    Body& b = w.bodies[w.body_of[c.pj]];
    const double inv_sum = a.inv_mass + b.inv_mass;
    if (inv_sum <= 0.0) continue;
    Vec3 n = state.positions[c.pj] - state.positions[c.pi];
    const double dn = n.norm();
    n = dn > 1e-12 ? Vec3(n / dn) : Vec3(0.0, 1.0, 0.0);
    const Vec3 vrel = b.vel - a.vel;
    const double vn = vrel.dot(n);
    if (vn >= 0.0) continue;
    const double e = std::sqrt(a.restitution * b.restitution);
    const double jn = -(1.0 + e) * vn / inv_sum;
    a.vel -= jn * a.inv_mass * n;
    b.vel += jn * b.inv_mass * n;
    // Coulomb-style tangential damping.
    const Vec3 vt = vrel - vn * n;
    const double vt_mag = vt.norm();
    if (vt_mag > 1e-12) {
      const double mu = std::sqrt(a.friction * b.friction);
      const double jt = std::min(mu * jn, vt_mag / inv_sum);
      const Vec3 t = vt / vt_mag;
      a.vel += jt * a.inv_mass * t;
      b.vel -= jt * b.inv_mass * t;
    }
  }

  // Position update.
  for (Body& body : w.bodies) {
    if (!body.movable) continue;
    for (int i : body.particles) out.positions[i] += body.vel * dt;
  }

  // Penetration projection between bodies. Upward displacement is limited by
  // the body's kinetic energy so projection never creates mechanical energy.
  for (const Contact& c : find_contacts(out, w, 0.0)) {
    if (c.overlap <= 0.0) continue;
    Body& a = w.bodies[w.body_of[c.pi]];
    Body& b = w.bodies[w.body_of[c.pj]];
    const double inv_sum = a.inv_mass + b.inv_mass;
    if (inv_sum <= 0.0) continue;
    Vec3 n = out.positions[c.pj] - out.positions[c.pi];
    const double dn = n.norm();
    n = dn > 1e-12 ? Vec3(n / dn) : Vec3(0.0, 1.0, 0.0);
    auto apply = [&](Body& body, const Vec3& disp) {
      if (!body.movable) return;
      Vec3 d = disp;
      if (d.y() > 0.0) {
        const double speed2 = body.vel.squaredNorm();
        const double need = 2.0 * cfg.gravity * d.y();
        const double alpha = need > 0.0 ? std::min(1.0, speed2 / need) : 1.0;
        d *= alpha;
        if (speed2 > 0.0) {
          const double scale2 = 1.0 - 2.0 * cfg.gravity * d.y() / speed2;
          body.vel *= scale2 > 0.0 ? std::sqrt(scale2) : 0.0;
        }
      }
      for (int i : body.particles) out.positions[i] += d;
    };
    apply(a, -(c.overlap * a.inv_mass / inv_sum) * n);
    apply(b, (c.overlap * b.inv_mass / inv_sum) * n);
  }

  // Ground plane last, so the floor constraint holds on exit.
  for (Body& body : w.bodies)
    resolve_ground(body, out, w, cfg.gravity, cfg.ground_height);

  // Write body velocities back to particles.
  for (const Body& body : w.bodies) {
    if (!body.movable) continue;
    for (int i : body.particles) out.velocities[i] = body.vel;
  }
  return out;
}

std::vector<CollisionEvent> detect_collisions(
    const SceneState& state, const std::vector<ObjectSpec>& objects,
    double threshold) {
  if (threshold < 0.0)
    throw std::invalid_argument("detect_collisions: threshold must be >= 0");
  std::set<std::pair<int, int>> pairs;
  const int P = state.particle_count();
  for (int i = 0; i < P; ++i) {
    const ObjectSpec& si = spec_for(objects, state.object_index[i]);
    if (si.is_distractor) continue;
    for (int j = i + 1; j < P; ++j) {
      const ObjectSpec& sj = spec_for(objects, state.object_index[j]);
      if (sj.is_distractor || si.object_id == sj.object_id) continue;
      const double reach = si.particle_radius + sj.particle_radius + threshold;
      if ((state.positions[j] - state.positions[i]).squaredNorm() <
          reach * reach)
        pairs.insert({std::min(si.object_id, sj.object_id),
                      std::max(si.object_id, sj.object_id)});
    }
    if (si.movable() && state.positions[i].y() - si.particle_radius < threshold)
      pairs.insert({kGroundId, si.object_id});
  }
  std::vector<CollisionEvent> events;
  events.reserve(pairs.size());
  for (const auto& [a, b] : pairs) {
    if (a == kGroundId)
      events.push_back({state.time_index, b, kGroundId});
    else
      events.push_back({state.time_index, a, b});
  }
  return events;
}

Trajectory simulate(const Scene& scene, int T, double dt,
                    const SimConfig& cfg) {
  if (T < 2) throw std::invalid_argument("simulate: T must be >= 2");
  Trajectory traj;
  traj.scenario = scene.scenario;
  traj.seed = scene.seed;
  traj.dt = dt;
  traj.objects = scene.objects;
  traj.springs = scene.springs;
  traj.states.reserve(T);
  traj.states.push_back(scene.state);
  traj.states.front().time_index = 0;
  for (int t = 1; t < T; ++t)
    traj.states.push_back(step(traj.states.back(), scene.objects,
                               scene.springs, dt, cfg));
  for (const SceneState& s : traj.states) {
    auto events = detect_collisions(s, scene.objects, cfg.contact_threshold);
    traj.collisions.insert(traj.collisions.end(), events.begin(), events.end());
  }
  return traj;
}

double mechanical_energy(const SceneState& state,
                         const std::vector<ObjectSpec>& objects,
                         const std::vector<Spring>& springs, double gravity,
                         double ground_height) {
  double e = 0.0;
  for (int i = 0; i < state.particle_count(); ++i) {
    const ObjectSpec& spec = spec_for(objects, state.object_index[i]);
    if (!spec.movable()) continue;
    const double m = spec.mass_per_particle;
    e += 0.5 * m * state.velocities[i].squaredNorm();
    e += m * gravity * (state.positions[i].y() - ground_height);
  }
  for (const Spring& sp : springs) {
    const double len =
        (state.positions[sp.b] - state.positions[sp.a]).norm();
    const double x = len - sp.rest_length;
    e += 0.5 * sp.stiffness * x * x;
  }
  return e;
}

// ---------------------------------------------------------------------------
// Scenario generation
// ---------------------------------------------------------------------------

namespace {

class SceneBuilder {
 public:
  SceneBuilder(Scenario kind, std::uint64_t seed, const SimConfig& cfg)
      : cfg_(cfg) {
    scene_.scenario = kind;
    scene_.seed = seed;
  }

  int add_particles(ObjectSpec spec, const std::vector<Vec3>& offsets,
                    const Vec3& center, const Vec3& vel) {
    spec.object_id = next_id_++;
    spec.particle_count = static_cast<int>(offsets.size());
    scene_.objects.push_back(spec);
    for (const Vec3& off : offsets) {
      scene_.state.positions.push_back(center + off);
      scene_.state.velocities.push_back(spec.movable() ? vel : Vec3::Zero());
      scene_.state.object_index.push_back(spec.object_id);
    }
    return spec.object_id;
  }

  int add_sphere(const Vec3& center, const Vec3& vel, double radius,
                 double mass, double restitution, double friction,
                 bool is_static = false, bool is_distractor = false) {
    ObjectSpec spec;
    spec.category = Category::Sphere;
    spec.is_static = is_static;
    spec.is_distractor = is_distractor;
    spec.mass_per_particle = mass;
    spec.restitution = restitution;
    spec.friction = friction;
    spec.particle_radius = radius;
    return add_particles(spec, {Vec3::Zero()}, center, vel);
  }

  // Axis-aligned particle lattice; rigid unless the category is cloth.
  int add_lattice(Category cat, const Vec3& center, int nx, int ny, int nz,
                  const Vec3& vel, double mass_per_particle,
                  double restitution, double friction,
                  bool is_static = false) {
    const double s = cfg_.lattice_spacing;
    std::vector<Vec3> offsets;
    for (int ix = 0; ix < nx; ++ix)
      for (int iy = 0; iy < ny; ++iy)
        for (int iz = 0; iz < nz; ++iz)
          offsets.emplace_back((ix - (nx - 1) * 0.5) * s,
                               (iy - (ny - 1) * 0.5) * s,
                               (iz - (nz - 1) * 0.5) * s);
    ObjectSpec spec;
    spec.category = cat;
    spec.is_static = is_static;
    spec.mass_per_particle = mass_per_particle;
    spec.restitution = restitution;
    spec.friction = friction;
    spec.particle_radius = cfg_.particle_radius;
    return add_particles(spec, offsets, center, vel);
  }

  // 4x4 particle grid in the xz plane with structural and shear springs.
  int add_cloth(const Vec3& center, double spacing, double mass_per_particle) {
    const int n = 4;
    std::vector<Vec3> offsets;
    for (int ix = 0; ix < n; ++ix)
      for (int iz = 0; iz < n; ++iz)
        offsets.emplace_back((ix - (n - 1) * 0.5) * spacing, 0.0,
                             (iz - (n - 1) * 0.5) * spacing);
    ObjectSpec spec;
    spec.category = Category::ClothProxy;
    spec.mass_per_particle = mass_per_particle;
    spec.restitution = 0.05;
    spec.friction = 0.6;
    spec.particle_radius = spacing * 0.35;
    const int base = scene_.state.particle_count();
    const int id = add_particles(spec, offsets, center, Vec3::Zero());
    auto at = [&](int ix, int iz) { return base + ix * n + iz; };
    auto link = [&](int a, int b) {
      const double rest =
          (scene_.state.positions[b] - scene_.state.positions[a]).norm();
      scene_.springs.push_back(
          {a, b, rest, cfg_.cloth_stiffness, cfg_.cloth_damping});
    };
    for (int ix = 0; ix < n; ++ix)
      for (int iz = 0; iz < n; ++iz) {
        if (ix + 1 < n) link(at(ix, iz), at(ix + 1, iz));
        if (iz + 1 < n) link(at(ix, iz), at(ix, iz + 1));
        if (ix + 1 < n && iz + 1 < n) {
          link(at(ix, iz), at(ix + 1, iz + 1));
          link(at(ix + 1, iz), at(ix, iz + 1));
        }
      }
    return id;
  }

  int particle_count() const { return scene_.state.particle_count(); }

  void link_objects(int pa, int pb, double rest) {
    scene_.springs.push_back(
        {pa, pb, rest, cfg_.link_stiffness, cfg_.link_damping});
  }

  // Fixed floating spheres away from the action.
  void add_distractors(Rng& rng) {
    const int n = rng.uniform_int(cfg_.min_extra_distractors,
                                  cfg_.max_extra_distractors);
    for (int i = 0; i < n; ++i) {
      const double angle = rng.uniform(0.0, 2.0 * M_PI);
      const double dist = rng.uniform(1.9, 2.6);
      add_sphere(Vec3(dist * std::cos(angle), rng.uniform(0.2, 1.4),
                      dist * std::sin(angle)),
                 Vec3::Zero(), 0.08, 1.0, 0.5, 0.3, false, true);
    }
  }

  Scene take() { return std::move(scene_); }

 private:
  Scene scene_;
  SimConfig cfg_;
  int next_id_ = 0;
};

void build_collide(SceneBuilder& b, Rng& rng) {
  const double ra = rng.uniform(0.09, 0.14);
  const double rb = rng.uniform(0.09, 0.14);
  const double e = rng.uniform(0.4, 0.9);
  const double z = rng.uniform(-0.04, 0.04);
  b.add_sphere(Vec3(-1.0 - rng.uniform(0.0, 0.4), ra, 0.0),
               Vec3(rng.uniform(1.5, 3.0), 0.0, 0.0), ra,
               rng.uniform(0.5, 1.5), e, rng.uniform(0.1, 0.4));
  b.add_sphere(Vec3(1.0 + rng.uniform(0.0, 0.4), rb, z),
               Vec3(-rng.uniform(1.5, 3.0), 0.0, 0.0), rb,
               rng.uniform(0.5, 1.5), e, rng.uniform(0.1, 0.4));
}

void build_contain(SceneBuilder& b, Rng& rng) {
  // Four static walls around the origin.
  const double h = 0.3;
  b.add_lattice(Category::Plank, Vec3(0.5, h, 0.0), 1, 3, 5, Vec3::Zero(),
                1.0, 0.4, 0.5, true);
  b.add_lattice(Category::Plank, Vec3(-0.5, h, 0.0), 1, 3, 5, Vec3::Zero(),
                1.0, 0.4, 0.5, true);
  b.add_lattice(Category::Plank, Vec3(0.0, h, 0.5), 5, 3, 1, Vec3::Zero(),
                1.0, 0.4, 0.5, true);
  b.add_lattice(Category::Plank, Vec3(0.0, h, -0.5), 5, 3, 1, Vec3::Zero(),
                1.0, 0.4, 0.5, true);
  b.add_sphere(Vec3(rng.uniform(-0.15, 0.15), 1.2 + rng.uniform(0.0, 0.6),
                    rng.uniform(-0.15, 0.15)),
               Vec3::Zero(), rng.uniform(0.09, 0.13), rng.uniform(0.5, 1.2),
               rng.uniform(0.2, 0.7), rng.uniform(0.2, 0.5));
}

void build_dominoes(SceneBuilder& b, Rng& rng) {
  const int n = rng.uniform_int(3, 5);
  const double gap = rng.uniform(0.34, 0.42);
  for (int i = 0; i < n; ++i)
    b.add_lattice(Category::Plank, Vec3(i * gap, 0.3, 0.0), 1, 3, 1,
                  Vec3::Zero(), rng.uniform(0.2, 0.4), 0.2,
                  rng.uniform(0.2, 0.5));
  const double r = rng.uniform(0.1, 0.14);
  b.add_sphere(Vec3(-0.5 - rng.uniform(0.0, 0.3), r, 0.0),
               Vec3(rng.uniform(2.0, 3.2), 0.0, 0.0), r,
               rng.uniform(0.8, 1.5), 0.3, rng.uniform(0.1, 0.3));
}

void build_drape(SceneBuilder& b, Rng& rng) {
  b.add_lattice(Category::Box, Vec3(0.0, 0.2, 0.0), 2, 2, 2, Vec3::Zero(),
                rng.uniform(0.8, 1.5), 0.2, 0.6);
  b.add_cloth(Vec3(rng.uniform(-0.1, 0.1), 0.9 + rng.uniform(0.0, 0.4),
                   rng.uniform(-0.1, 0.1)),
              0.22, 0.05);
}

void build_drop(SceneBuilder& b, Rng& rng) {
  if (rng.uniform() < 0.5)
    b.add_lattice(Category::Box, Vec3(0.0, 0.2, 0.0), 2, 2, 2, Vec3::Zero(),
                  rng.uniform(0.5, 1.2), rng.uniform(0.1, 0.5),
                  rng.uniform(0.3, 0.6));
  else
    b.add_lattice(Category::Plank, Vec3(0.0, 0.1, 0.0), 3, 1, 3, Vec3::Zero(),
                  rng.uniform(0.5, 1.2), rng.uniform(0.1, 0.5),
                  rng.uniform(0.3, 0.6));
  const double r = rng.uniform(0.09, 0.14);
  b.add_sphere(Vec3(rng.uniform(-0.2, 0.2), 1.0 + rng.uniform(0.0, 0.8),
                    rng.uniform(-0.2, 0.2)),
               Vec3::Zero(), r, rng.uniform(0.5, 1.5), rng.uniform(0.2, 0.8),
               rng.uniform(0.1, 0.4));
}

void build_link(SceneBuilder& b, Rng& rng) {
  const double rest = 0.3;
  const double y = 1.2 + rng.uniform(0.0, 0.4);
  const double v0 = rng.uniform(0.5, 1.5);
  int prev_particle = -1;
  for (int i = 0; i < 3; ++i) {
    const int particle = b.particle_count();
    b.add_sphere(Vec3(-rest + i * rest + rng.uniform(-0.02, 0.02), y, 0.0),
                 Vec3(i == 0 ? v0 : 0.0, 0.0, 0.0), 0.1, 0.3, 0.3, 0.3);
    if (prev_particle >= 0) b.link_objects(prev_particle, particle, rest);
    prev_particle = particle;
  }
}

void build_roll(SceneBuilder& b, Rng& rng) {
  // Static stepped ramp the ball runs up.
  const double s = 0.18;
  for (int i = 0; i < 5; ++i)
    b.add_lattice(Category::Ramp, Vec3(0.3 + i * s, 0.1 + i * 0.1, 0.0), 1, 1,
                  3, Vec3::Zero(), 1.0, 0.3, 0.4, true);
  const double r = rng.uniform(0.1, 0.14);
  b.add_sphere(Vec3(-1.5 + rng.uniform(-0.2, 0.2), r, 0.0),
               Vec3(rng.uniform(2.0, 3.0), 0.0, 0.0), r,
               rng.uniform(0.6, 1.4), rng.uniform(0.3, 0.7),
               rng.uniform(0.2, 0.6));
}

void build_support(SceneBuilder& b, Rng& rng) {
  const int levels = rng.uniform_int(2, 4);
  double y = 0.2;
  double x = 0.0;
  for (int i = 0; i < levels; ++i) {
    b.add_lattice(Category::Box, Vec3(x, y, 0.0), 2, 2, 2, Vec3::Zero(),
                  rng.uniform(0.4, 1.0), 0.2, rng.uniform(0.3, 0.6));
    y += 0.41;
    x += rng.uniform(-0.09, 0.09);
  }
}

}  // namespace

Scene generate_scenario(Scenario kind, std::uint64_t seed,
                        const SimConfig& cfg) {
  cfg.validate();
  // Mix scenario kind into the stream so each (kind, seed) is independent.
  std::uint64_t mix = fnv1a(&seed, sizeof(seed));
  const int kind_tag = static_cast<int>(kind);
  mix = fnv1a(&kind_tag, sizeof(kind_tag), mix);
  Rng rng(mix);
  SceneBuilder b(kind, seed, cfg);
  switch (kind) {
    case Scenario::Collide: build_collide(b, rng); break;
    case Scenario::Contain: build_contain(b, rng); break;
    case Scenario::Dominoes: build_dominoes(b, rng); break;
    case Scenario::Drape: build_drape(b, rng); break;
    case Scenario::Drop: build_drop(b, rng); break;
    case Scenario::Link: build_link(b, rng); break;
    case Scenario::Roll: build_roll(b, rng); break;
    case Scenario::Support: build_support(b, rng); break;
  }
  b.add_distractors(rng);
  return b.take();
}

namespace {

bool airborne(const Scene& sc, const ObjectSpec& o) {
  double min_clearance = 1e30;
  for (int i = 0; i < sc.state.particle_count(); ++i)
    if (sc.state.object_index[i] == o.object_id)
      min_clearance = std::min(
          min_clearance, sc.state.positions[i].y() - o.particle_radius);
  return min_clearance > 0.05;
}

}  // namespace

bool matches_archetype(const Scene& sc) {
  const auto& objs = sc.objects;
  auto movable = [&](const ObjectSpec& o) { return o.movable(); };
  switch (sc.scenario) {
    case Scenario::Collide: {
      for (const auto& a : objs)
        for (const auto& b : objs) {
          if (!movable(a) || !movable(b) || a.object_id == b.object_id)
            continue;
          const Vec3 va = object_mean_velocity(sc.state, a.object_id);
          const Vec3 vb = object_mean_velocity(sc.state, b.object_id);
          const Vec3 xa = object_centroid(sc.state, a.object_id);
          const Vec3 xb = object_centroid(sc.state, b.object_id);
          if (va.x() > 0.1 && vb.x() < -0.1 && xa.x() < xb.x()) return true;
        }
      return false;
    }
    case Scenario::Contain: {
      bool has_static = false;
      int airborne_count = 0;
      for (const auto& o : objs) {
        if (o.is_static) has_static = true;
        if (movable(o) && airborne(sc, o) &&
            object_mean_velocity(sc.state, o.object_id).norm() < 1e-9)
          ++airborne_count;
      }
      return has_static && airborne_count == 1;
    }
    case Scenario::Dominoes: {
      int planks = 0;
      bool striker = false;
      for (const auto& o : objs) {
        if (movable(o) && o.category == Category::Plank) ++planks;
        if (movable(o) && o.category == Category::Sphere &&
            object_mean_velocity(sc.state, o.object_id).norm() > 0.1)
          striker = true;
      }
      return planks >= 3 && striker;
    }
    case Scenario::Drape: {
      int cloths = 0;
      for (const auto& o : objs)
        if (o.category == Category::ClothProxy) {
          ++cloths;
          if (!airborne(sc, o) ||
              object_mean_velocity(sc.state, o.object_id).norm() > 1e-9)
            return false;
        }
      return cloths == 1;
    }
    case Scenario::Drop: {
      int airborne_count = 0;
      for (const auto& o : objs)
        if (movable(o) && airborne(sc, o)) {
          if (object_mean_velocity(sc.state, o.object_id).norm() > 1e-9)
            return false;
          ++airborne_count;
        }
      return airborne_count == 1;
    }
    case Scenario::Link: {
      for (const Spring& sp : sc.springs) {
        const int a = sc.state.object_index[sp.a];
        const int b = sc.state.object_index[sp.b];
        if (a == b) continue;
        const auto cat = [&](int id) {
          for (const auto& o : objs)
            if (o.object_id == id) return o.category;
          return Category::Sphere;
        };
        if (cat(a) != Category::ClothProxy && cat(b) != Category::ClothProxy)
          return true;
      }
      return false;
    }
    case Scenario::Roll: {
      bool has_ramp = false;
      bool roller = false;
      for (const auto& o : objs) {
        if (o.is_static && o.category == Category::Ramp) has_ramp = true;
        if (movable(o) && o.category == Category::Sphere) {
          const Vec3 v = object_mean_velocity(sc.state, o.object_id);
          const Vec3 x = object_centroid(sc.state, o.object_id);
          if (std::hypot(v.x(), v.z()) > 0.5 &&
              x.y() < 2.0 * o.particle_radius + 0.05)
            roller = true;
        }
      }
      return has_ramp && roller;
    }
    case Scenario::Support: {
      for (const auto& a : objs)
        for (const auto& b : objs) {
          if (!movable(a) || !movable(b) || a.object_id == b.object_id)
            continue;
          const Vec3 xa = object_centroid(sc.state, a.object_id);
          const Vec3 xb = object_centroid(sc.state, b.object_id);
          if (xa.y() - xb.y() > 0.2 &&
              std::hypot(xa.x() - xb.x(), xa.z() - xb.z()) < 0.3)
            return true;
        }
      return false;
    }
  }
  return false;
}

}  // namespace curiolab
