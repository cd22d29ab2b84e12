#pragma once

#include <string>

#include "curiolab/types.hpp"

namespace curiolab {

// Binary trajectory store. `path` names the binary file ("<stem>.clab");
// object specs and springs go to a JSON sidecar at "<stem>.json".
// Frames are little-endian float32 position/velocity triples per particle.
void save_trajectory(const Trajectory& traj, const std::string& path,
                     const std::string& config_hash = "");
Trajectory load_trajectory(const std::string& path);

// Config hash recorded in the sidecar, empty if absent.
std::string trajectory_config_hash(const std::string& path);

std::string sidecar_path(const std::string& path);

}  // namespace curiolab
