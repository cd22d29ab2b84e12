#include "curiolab/traj_io.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace curiolab {
namespace {

constexpr char kMagic[5] = {'C', 'L', 'A', 'B', '1'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

template <class T>
T get(std::istream& is) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!is) throw std::runtime_error("trajectory file truncated");
  return v;
}

}  // namespace

std::string sidecar_path(const std::string& path) {
  const auto dot = path.rfind('.');
  const std::string stem =
      dot == std::string::npos ? path : path.substr(0, dot);
  return stem + ".json";
}

void save_trajectory(const Trajectory& traj, const std::string& path,
                     const std::string& config_hash) {
  if (traj.states.empty())
    throw std::invalid_argument("save_trajectory: empty trajectory");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for write");
  os.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(os, kVersion);
  put<std::uint8_t>(os, static_cast<std::uint8_t>(traj.scenario));
  put<std::uint64_t>(os, traj.seed);
  put<double>(os, traj.dt);
  const int T = traj.length();
  const int P = traj.states.front().particle_count();
  put<std::uint32_t>(os, static_cast<std::uint32_t>(T));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(P));
  for (int i = 0; i < P; ++i)
    put<std::int32_t>(os, traj.states.front().object_index[i]);
  for (const SceneState& s : traj.states) {
    if (s.particle_count() != P)
      throw std::invalid_argument("save_trajectory: particle count varies");
    for (int i = 0; i < P; ++i)
      for (int c = 0; c < 3; ++c)
        put<float>(os, static_cast<float>(s.positions[i][c]));
    for (int i = 0; i < P; ++i)
      for (int c = 0; c < 3; ++c)
        put<float>(os, static_cast<float>(s.velocities[i][c]));
  }
  put<std::uint32_t>(os, static_cast<std::uint32_t>(traj.collisions.size()));
  for (const CollisionEvent& ev : traj.collisions) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(ev.time_index));
    put<std::int32_t>(os, ev.object_a);
    put<std::int32_t>(os, ev.object_b);
  }
  if (!os) throw std::runtime_error("write failed for " + path);

  nlohmann::ordered_json side;
  side["id"] = traj.id();
  side["scenario"] = to_string(traj.scenario);
  side["config_hash"] = config_hash;
  side["objects"] = nlohmann::json::array();
  for (const ObjectSpec& o : traj.objects) {
    nlohmann::ordered_json jo;
    jo["object_id"] = o.object_id;
    jo["category"] = to_string(o.category);
    jo["is_distractor"] = o.is_distractor;
    jo["is_static"] = o.is_static;
    jo["particle_count"] = o.particle_count;
    jo["mass_per_particle"] = o.mass_per_particle;
    jo["restitution"] = o.restitution;
    jo["friction"] = o.friction;
    jo["particle_radius"] = o.particle_radius;
    side["objects"].push_back(jo);
  }
  side["springs"] = nlohmann::json::array();
  for (const Spring& sp : traj.springs) {
    nlohmann::ordered_json js;
    js["a"] = sp.a;
    js["b"] = sp.b;
    js["rest_length"] = sp.rest_length;
    js["stiffness"] = sp.stiffness;
    js["damping"] = sp.damping;
    side["springs"].push_back(js);
  }
  std::ofstream js(sidecar_path(path), std::ios::binary);
  if (!js) throw std::runtime_error("cannot open sidecar for " + path);
  js << side.dump(2) << "\n";
}

Trajectory load_trajectory(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  char magic[5];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("bad magic in " + path);
  const auto version = get<std::uint32_t>(is);
  if (version != kVersion)
    throw std::runtime_error("unsupported trajectory version " +
                             std::to_string(version) + " in " + path);
  Trajectory traj;
  traj.scenario = static_cast<Scenario>(get<std::uint8_t>(is));
  traj.seed = get<std::uint64_t>(is);
  traj.dt = get<double>(is);
  const auto T = get<std::uint32_t>(is);
  const auto P = get<std::uint32_t>(is);
  std::vector<int> object_index(P);
  for (auto& oi : object_index) oi = get<std::int32_t>(is);
  traj.states.resize(T);
  for (std::uint32_t t = 0; t < T; ++t) {
    SceneState& s = traj.states[t];
    s.time_index = static_cast<int>(t);
    s.object_index = object_index;
    s.positions.resize(P);
    s.velocities.resize(P);
    for (std::uint32_t i = 0; i < P; ++i)
      for (int c = 0; c < 3; ++c) s.positions[i][c] = get<float>(is);
    for (std::uint32_t i = 0; i < P; ++i)
      for (int c = 0; c < 3; ++c) s.velocities[i][c] = get<float>(is);
  }
  const auto n_events = get<std::uint32_t>(is);
  traj.collisions.resize(n_events);
  for (auto& ev : traj.collisions) {
    ev.time_index = static_cast<int>(get<std::uint32_t>(is));
    ev.object_a = get<std::int32_t>(is);
    ev.object_b = get<std::int32_t>(is);
  }

  std::ifstream js(sidecar_path(path));
  if (!js) throw std::runtime_error("missing sidecar for " + path);
  nlohmann::json side = nlohmann::json::parse(js);
  for (const auto& jo : side.at("objects")) {
    ObjectSpec o;
    o.object_id = jo.at("object_id").get<int>();
    o.category = category_from_string(jo.at("category").get<std::string>());
    o.is_distractor = jo.at("is_distractor").get<bool>();
    o.is_static = jo.at("is_static").get<bool>();
    o.particle_count = jo.at("particle_count").get<int>();
    o.mass_per_particle = jo.at("mass_per_particle").get<double>();
    o.restitution = jo.at("restitution").get<double>();
    o.friction = jo.at("friction").get<double>();
    o.particle_radius = jo.at("particle_radius").get<double>();
    traj.objects.push_back(o);
  }
  for (const auto& jsraw : side.at("springs")) {
    Spring sp;
    sp.a = jsraw.at("a").get<int>();
    sp.b = jsraw.at("b").get<int>();
    sp.rest_length = jsraw.at("rest_length").get<double>();
    sp.stiffness = jsraw.at("stiffness").get<double>();
    sp.damping = jsraw.at("damping").get<double>();
    traj.springs.push_back(sp);
  }
  return traj;
}

std::string trajectory_config_hash(const std::string& path) {
  std::ifstream js(sidecar_path(path));
  if (!js) return "";
  nlohmann::json side = nlohmann::json::parse(js, nullptr, false);
  if (side.is_discarded() || !side.contains("config_hash")) return "";
  return side["config_hash"].get<std::string>();
}

}  // namespace curiolab
