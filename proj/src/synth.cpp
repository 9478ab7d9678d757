#include "flexpose/synth.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace flexpose::synth {

namespace {

Vec2 rotate(Vec2 v, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  return {c * v.x - s * v.y, s * v.x + c * v.y};
}

Vec2 centroid(const Pose& pose) {
  Vec2 sum{0.0, 0.0};
  for (const auto& p : pose.coords) sum = sum + p;
  const double inv = 1.0 / static_cast<double>(pose.coords.size());
  return {sum.x * inv, sum.y * inv};
}

}  // namespace

void KinematicTree::validate() const {
  topology.validate();
  const size_t nb = topology.bones.size();
  if (bone_lengths.size() != nb || rest_directions.size() != nb)
    throw std::invalid_argument("tree needs one length/direction per bone");
  for (double len : bone_lengths)
    if (!(len > 0.0)) throw std::invalid_argument("bone lengths must be > 0");
  for (const auto& d : rest_directions) {
    const double norm = std::hypot(d.x, d.y);
    if (std::abs(norm - 1.0) > 1e-9)
      throw std::invalid_argument("rest directions must be unit vectors");
  }
}

void PoseDistributionSpec::validate() const {
  tree.validate();
  const size_t nb = tree.topology.bones.size();
  if (joint_angle_mean.size() != nb || joint_angle_std.size() != nb)
    throw std::invalid_argument("need one angle mean/std per bone");
  for (double s : joint_angle_std)
    if (s < 0.0) throw std::invalid_argument("angle std must be >= 0");
  if (root_orientation_hi < root_orientation_lo)
    throw std::invalid_argument("root orientation range is not ordered");
  if (root_position_jitter < 0.0 || bone_length_ratio_jitter < 0.0)
    throw std::invalid_argument("jitter stds must be >= 0");
}

void ShiftSpec::validate(const SkeletonTopology& topo) const {
  switch (kind) {
    case ShiftKind::global_rotation:
      if (theta_hi < theta_lo)
        throw std::invalid_argument("theta range is not ordered");
      break;
    case ShiftKind::local_rotation:
      if (gamma_hi < gamma_lo)
        throw std::invalid_argument("gamma range is not ordered");
      if (subtree_root_joint < 0 || subtree_root_joint >= topo.joint_count)
        throw std::invalid_argument("subtree_root_joint out of range");
      break;
    case ShiftKind::scale:
      if (eta_ranges.empty())
        throw std::invalid_argument("scale shift needs at least one range");
      for (const auto& [lo, hi] : eta_ranges) {
        if (hi < lo) throw std::invalid_argument("eta range is not ordered");
        if (!(lo > 0.0)) throw std::invalid_argument("eta must be > 0");
      }
      break;
    case ShiftKind::compose:
      if (children.empty())
        throw std::invalid_argument("compose shift needs children");
      for (const auto& c : children) c.validate(topo);
      break;
  }
}

Pose sample_pose(const PoseDistributionSpec& spec, Rng& rng) {
  const auto& topo = spec.tree.topology;
  const int m = topo.joint_count;

  Pose pose;
  pose.coords.assign(m, Vec2{0.0, 0.0});
  std::vector<double> accum(m, 0.0);  // accumulated rotation per joint

  // Draw order is pinned: root position, root orientation, then per bone
  // (in topology order) angle and length jitter.
  Vec2 root = spec.root_position;
  root.x += rng.normal(0.0, spec.root_position_jitter);
  root.y += rng.normal(0.0, spec.root_position_jitter);
  const double root_rot =
      rng.uniform(spec.root_orientation_lo, spec.root_orientation_hi);

  pose.coords[topo.root_index] = root;
  accum[topo.root_index] = root_rot;

  // Topology order is parent-before-child for trees emitted by this module;
  // walk bones until all are placed to stay correct for any valid order.
  std::vector<double> angles(topo.bones.size());
  std::vector<double> lengths(topo.bones.size());
  for (size_t b = 0; b < topo.bones.size(); ++b) {
    angles[b] = rng.normal(spec.joint_angle_mean[b], spec.joint_angle_std[b]);
    // std 0 gives exactly exp(0)=1; the draw always happens so the stream
    // layout does not depend on parameter values.
    lengths[b] = spec.tree.bone_lengths[b] *
                 std::exp(rng.normal(0.0, spec.bone_length_ratio_jitter));
  }

  std::vector<bool> placed(m, false);
  placed[topo.root_index] = true;
  bool progress = true;
  size_t remaining = topo.bones.size();
  while (remaining > 0 && progress) {
    progress = false;
    for (size_t b = 0; b < topo.bones.size(); ++b) {
      const auto [p, c] = topo.bones[b];
      if (placed[c] || !placed[p]) continue;
      const double rot = accum[p] + angles[b];
      const Vec2 dir = rotate(spec.tree.rest_directions[b], rot);
      pose.coords[c] = pose.coords[p] + lengths[b] * dir;
      accum[c] = rot;
      placed[c] = true;
      --remaining;
      progress = true;
    }
  }
  if (remaining > 0)
    throw std::logic_error("kinematic tree walk failed to place all joints");

  return fit_to_canvas(pose, 0.1);
}

Pose sample_pose(const PoseDistributionSpec& spec, uint64_t rng_seed) {
  Rng rng(rng_seed);
  return sample_pose(spec, rng);
}

Pose apply_global_rotation(const Pose& pose, double theta) {
  if (!std::isfinite(theta))
    throw std::invalid_argument("rotation angle must be finite");
  const Vec2 c = centroid(pose);
  Pose out;
  out.coords.resize(pose.coords.size());
  for (size_t j = 0; j < pose.coords.size(); ++j)
    out.coords[j] = c + rotate(pose.coords[j] - c, theta);
  return fit_to_canvas(out, 0.1);
}

Pose apply_local_rotation(const Pose& pose, const SkeletonTopology& topo,
                          int subtree_root_joint, double gamma) {
  if (subtree_root_joint < 0 || subtree_root_joint >= topo.joint_count)
    throw std::invalid_argument("subtree_root_joint out of range");
  if (subtree_root_joint == topo.root_index)
    throw std::invalid_argument("local rotation requires a proper subtree");
  const auto below = topo.descendants(subtree_root_joint);
  if (below.empty())
    throw std::invalid_argument("subtree root has no descendants");

  const Vec2 pivot = pose.coords[subtree_root_joint];
  Pose out = pose;
  for (int j : below) out.coords[j] = pivot + rotate(pose.coords[j] - pivot, gamma);
  return out;
}

Pose apply_scale(const Pose& pose, double eta) {
  if (!(eta > 0.0)) throw std::invalid_argument("eta must be > 0");
  const Vec2 c = centroid(pose);
  Pose out;
  out.coords.resize(pose.coords.size());
  for (size_t j = 0; j < pose.coords.size(); ++j) {
    Vec2 p = c + eta * (pose.coords[j] - c);
    out.coords[j] = {std::clamp(p.x, 0.0, 1.0), std::clamp(p.y, 0.0, 1.0)};
  }
  return out;
}

namespace {

double sample_eta(const ShiftSpec& shift, Rng& rng) {
  // Uniform over the union of ranges, weighted by interval length.
  double total = 0.0;
  for (const auto& [lo, hi] : shift.eta_ranges) total += hi - lo;
  if (total == 0.0) return shift.eta_ranges.front().first;
  double u = rng.uniform() * total;
  for (size_t r = 0; r < shift.eta_ranges.size(); ++r) {
    const auto [lo, hi] = shift.eta_ranges[r];
    const double len = hi - lo;
    if (u <= len || r + 1 == shift.eta_ranges.size())
      return lo + std::min(u, len);
    u -= len;
  }
  return shift.eta_ranges.back().second;
}

}  // namespace

Pose apply_shift(const Pose& pose, const SkeletonTopology& topo,
                 const ShiftSpec& shift, Rng& rng) {
  switch (shift.kind) {
    case ShiftKind::global_rotation:
      return apply_global_rotation(pose,
                                   rng.uniform(shift.theta_lo, shift.theta_hi));
    case ShiftKind::local_rotation:
      return apply_local_rotation(pose, topo, shift.subtree_root_joint,
                                  rng.uniform(shift.gamma_lo, shift.gamma_hi));
    case ShiftKind::scale:
      return apply_scale(pose, sample_eta(shift, rng));
    case ShiftKind::compose: {
      Pose out = pose;
      for (const auto& c : shift.children) out = apply_shift(out, topo, c, rng);
      return out;
    }
  }
  throw std::logic_error("unreachable shift kind");
}

PoseSet make_dataset(const PoseDistributionSpec& source, int n,
                     uint64_t rng_seed) {
  if (n < 1) throw std::invalid_argument("n must be >= 1");
  source.validate();
  PoseSet out;
  out.topology = source.tree.topology;
  out.poses.resize(n);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    Rng rng(derive_seed(rng_seed, static_cast<uint64_t>(i)));
    out.poses[i] = sample_pose(source, rng);
  }
  return out;
}

PoseSet make_shifted_dataset(const PoseDistributionSpec& source,
                             const ShiftSpec& shift, int n,
                             uint64_t rng_seed) {
  if (n < 1) throw std::invalid_argument("n must be >= 1");
  source.validate();
  shift.validate(source.tree.topology);
  PoseSet out;
  out.topology = source.tree.topology;
  out.poses.resize(n);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    Rng rng(derive_seed(rng_seed, static_cast<uint64_t>(i)));
    Pose p = sample_pose(source, rng);
    out.poses[i] = apply_shift(p, source.tree.topology, shift, rng);
  }
  return out;
}

PoseDistributionSpec default_human_spec() {
  PoseDistributionSpec spec;
  spec.tree.topology = default_human_topology();

  auto unit = [](double x, double y) {
    const double n = std::hypot(x, y);
    return Vec2{x / n, y / n};
  };
  // Bone order: spine, head, l_clav, l_arm, r_clav, r_arm,
  //             l_hipb, l_thigh, l_shin, r_hipb, r_thigh, r_shin.
  // Canvas y grows downward, so "up" is (0,-1).
  spec.tree.rest_directions = {
      unit(0.0, -1.0),  unit(0.0, -1.0),  unit(-1.0, 0.15), unit(-0.25, 1.0),
      unit(1.0, 0.15),  unit(0.25, 1.0),  unit(-1.0, 0.4),  unit(-0.08, 1.0),
      unit(0.0, 1.0),   unit(1.0, 0.4),   unit(0.08, 1.0),  unit(0.0, 1.0)};
  spec.tree.bone_lengths = {0.22, 0.11, 0.12, 0.17, 0.12, 0.17,
                            0.09, 0.20, 0.19, 0.09, 0.20, 0.19};

  spec.joint_angle_mean.assign(12, 0.0);
  spec.joint_angle_std = {0.10, 0.15, 0.06, 0.45, 0.06, 0.45,
                          0.05, 0.30, 0.25, 0.05, 0.30, 0.25};
  spec.root_orientation_lo = -0.25;
  spec.root_orientation_hi = 0.25;
  spec.root_position = {0.5, 0.55};
  spec.root_position_jitter = 0.02;
  spec.bone_length_ratio_jitter = 0.05;
  spec.validate();
  return spec;
}

}  // namespace flexpose::synth
