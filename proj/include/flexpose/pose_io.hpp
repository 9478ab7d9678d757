#pragma once

#include <string>

#include "flexpose/pose.hpp"

namespace flexpose {

// Pose file format: UTF-8 JSON lines. Line 1 holds the topology
//   {"m":int,"joints":[...],"bones":[[p,c],...],"root":int,"colors":[[r,g,b],...]}
// and every following line one pose
//   {"coords":[[x,y],...],"label":string?}.
// Coordinates round-trip bit-exactly through save/load.
PoseSet load_poses(const std::string& path);
void save_poses(const PoseSet& set, const std::string& path);

}  // namespace flexpose
