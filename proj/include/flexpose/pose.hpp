#pragma once

#include <array>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "flexpose/rng.hpp"

namespace flexpose {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }

using Rgb = std::array<uint8_t, 3>;

// Articulated tree shared by every pose in a set. Bones are (parent, child)
// joint index pairs and must form a spanning tree rooted at root_index.
// Each bone carries a unique color used by the rasterizer.
struct SkeletonTopology {
  int joint_count = 0;
  std::vector<std::string> joints;
  std::vector<std::pair<int, int>> bones;
  int root_index = 0;
  std::vector<Rgb> bone_colors;

  // Throws std::invalid_argument when any topology invariant is violated.
  void validate() const;

  // Child joint indices per joint, in bone order.
  std::vector<std::vector<int>> children() const;

  // All joints strictly below `joint` in the tree.
  std::vector<int> descendants(int joint) const;
};

// One 2D pose: joint coordinates in normalized canvas units.
struct Pose {
  std::vector<Vec2> coords;
};

struct PoseSet {
  SkeletonTopology topology;
  std::vector<Pose> poses;
  // Optional per-pose tags; either empty or aligned with `poses`.
  std::vector<std::string> labels;

  size_t size() const { return poses.size(); }
};

// Violation-report form of pose validation: empty optional means ok,
// otherwise the first violated invariant is named. Violations are data,
// not faults, so nothing throws here.
std::optional<std::string> validate_pose(const Pose& pose,
                                         const SkeletonTopology& topo);

// Convex combination of two poses, joint by joint (ratio lambda on `a`).
Pose mix_poses(const Pose& a, const Pose& b, double lambda);

// Builds the interpolated guidance set: `count` poses, each a convex mix of
// a uniformly drawn ordered pair (i != j) with lambda ~ Uniform[0,1].
PoseSet pose_mixup(const PoseSet& t, int count, uint64_t rng_seed);
PoseSet pose_mixup(const PoseSet& t, int count, Rng& rng);

// Uniform scale + translation so the pose bounding box fits
// [margin, 1-margin]^2, aspect ratio preserved, box centered. With
// force=false a pose already inside the target box is returned unchanged.
// A degenerate pose (all joints coincident) is moved to the canvas center.
Pose fit_to_canvas(const Pose& pose, double margin = 0.1, bool force = true);

// The 13-joint minimal human topology used by the procedural distributions.
SkeletonTopology default_human_topology();

}  // namespace flexpose
