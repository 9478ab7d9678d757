#pragma once

#include <memory>
#include <vector>

#include "flexpose/pose.hpp"

namespace flexpose::synth {

// Articulated tree with bone lengths and per-bone rest directions
// (direction of the bone when its joint angle is zero). Indexed in
// topology bone order.
struct KinematicTree {
  SkeletonTopology topology;
  std::vector<double> bone_lengths;
  std::vector<Vec2> rest_directions;

  void validate() const;
};

// Procedural pose distribution: forward kinematics with per-bone angle
// noise, a root orientation range, root position jitter and multiplicative
// log-normal bone length jitter.
struct PoseDistributionSpec {
  KinematicTree tree;
  std::vector<double> joint_angle_mean;  // radians, per bone
  std::vector<double> joint_angle_std;   // radians, per bone
  double root_orientation_lo = 0.0;
  double root_orientation_hi = 0.0;
  Vec2 root_position{0.5, 0.5};
  double root_position_jitter = 0.0;
  double bone_length_ratio_jitter = 0.0;  // std of log-normal factor

  void validate() const;
};

enum class ShiftKind { global_rotation, local_rotation, scale, compose };

// A domain shift applied on top of a source distribution. Ranges are
// sampled per pose in make_shifted_dataset.
struct ShiftSpec {
  ShiftKind kind = ShiftKind::global_rotation;
  // global_rotation
  double theta_lo = 0.0, theta_hi = 0.0;
  // local_rotation
  double gamma_lo = 0.0, gamma_hi = 0.0;
  int subtree_root_joint = -1;
  // scale: union of intervals, sampled proportionally to their length
  std::vector<std::pair<double, double>> eta_ranges;
  // compose: children applied in order
  std::vector<ShiftSpec> children;

  void validate(const SkeletonTopology& topo) const;
};

// One forward-kinematics sample, canvas-fitted with margin 0.1.
Pose sample_pose(const PoseDistributionSpec& spec, uint64_t rng_seed);
Pose sample_pose(const PoseDistributionSpec& spec, Rng& rng);

// Aug_G: rotate all joints by theta about the pose centroid, then refit.
Pose apply_global_rotation(const Pose& pose, double theta);

// Aug_L: rotate every joint strictly below subtree_root_joint by gamma
// about that joint's position; everything else is untouched.
Pose apply_local_rotation(const Pose& pose, const SkeletonTopology& topo,
                          int subtree_root_joint, double gamma);

// Scale about the centroid; no refit, coordinates clipped to [0,1].
Pose apply_scale(const Pose& pose, double eta);

// Applies one freshly sampled shift instance to a pose.
Pose apply_shift(const Pose& pose, const SkeletonTopology& topo,
                 const ShiftSpec& shift, Rng& rng);

// n source samples, each pushed through a freshly sampled shift instance.
// Per-sample seeds are derived from (rng_seed, index), so the output is
// order-independent and batches can be generated in parallel.
PoseSet make_shifted_dataset(const PoseDistributionSpec& source,
                             const ShiftSpec& shift, int n, uint64_t rng_seed);

// Plain sampling without any shift.
PoseSet make_dataset(const PoseDistributionSpec& source, int n,
                     uint64_t rng_seed);

// The default desk-scale human distribution over default_human_topology().
PoseDistributionSpec default_human_spec();

}  // namespace flexpose::synth
