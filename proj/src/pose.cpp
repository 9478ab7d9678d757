#include "flexpose/pose.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

namespace flexpose {

namespace {

// Union-find over joint indices; used to check the bone list is a tree.
struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(n) {
    std::iota(parent.begin(), parent.end(), 0);
  }
  int find(int a) {
    while (parent[a] != a) {
      parent[a] = parent[parent[a]];
      a = parent[a];
    }
    return a;
  }
  bool unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    parent[a] = b;
    return true;
  }
};

}  // namespace

void SkeletonTopology::validate() const {
  const int m = joint_count;
  if (m < 2) throw std::invalid_argument("topology needs at least 2 joints");
  if (static_cast<int>(joints.size()) != m)
    throw std::invalid_argument("joint name count does not match joint_count");
  if (static_cast<int>(bones.size()) != m - 1)
    throw std::invalid_argument("a tree over M joints needs exactly M-1 bones");
  if (root_index < 0 || root_index >= m)
    throw std::invalid_argument("root_index out of range");
  if (bone_colors.size() != bones.size())
    throw std::invalid_argument("need one color per bone");

  UnionFind uf(m);
  for (const auto& [p, c] : bones) {
    if (p < 0 || p >= m || c < 0 || c >= m)
      throw std::invalid_argument("bone index out of range");
    if (!uf.unite(p, c))
      throw std::invalid_argument("bones contain a cycle; not a tree");
  }
  // M-1 acyclic edges over M joints => connected spanning tree.

  std::set<Rgb> distinct(bone_colors.begin(), bone_colors.end());
  if (distinct.size() != bone_colors.size())
    throw std::invalid_argument("bone colors must be pairwise distinct");
}

std::vector<std::vector<int>> SkeletonTopology::children() const {
  std::vector<std::vector<int>> out(joint_count);
  for (const auto& [p, c] : bones) out[p].push_back(c);
  return out;
}

std::vector<int> SkeletonTopology::descendants(int joint) const {
  const auto kids = children();
  std::vector<int> out;
  std::vector<int> stack = kids[joint];
  while (!stack.empty()) {
    int j = stack.back();
    stack.pop_back();
    out.push_back(j);
    for (int k : kids[j]) stack.push_back(k);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::optional<std::string> validate_pose(const Pose& pose,
                                         const SkeletonTopology& topo) {
  if (static_cast<int>(pose.coords.size()) != topo.joint_count)
    return "length mismatch";
  for (const auto& c : pose.coords) {
    if (!std::isfinite(c.x) || !std::isfinite(c.y))
      return "non-finite coordinate";
  }
  return std::nullopt;
}

Pose mix_poses(const Pose& a, const Pose& b, double lambda) {
  if (a.coords.size() != b.coords.size())
    throw std::invalid_argument("mix_poses: joint count mismatch");
  Pose out;
  out.coords.resize(a.coords.size());
  for (size_t j = 0; j < a.coords.size(); ++j) {
    out.coords[j].x = lambda * a.coords[j].x + (1.0 - lambda) * b.coords[j].x;
    out.coords[j].y = lambda * a.coords[j].y + (1.0 - lambda) * b.coords[j].y;
  }
  return out;
}

PoseSet pose_mixup(const PoseSet& t, int count, Rng& rng) {
  const size_t n = t.poses.size();
  if (n < 2)
    throw std::invalid_argument("mixup needs at least two guidance poses");
  if (count < 1) throw std::invalid_argument("mixup count must be >= 1");

  PoseSet out;
  out.topology = t.topology;
  out.poses.reserve(count);
  for (int k = 0; k < count; ++k) {
    const size_t i = rng.uniform_index(n);
    size_t j = rng.uniform_index(n - 1);
    if (j >= i) ++j;  // ordered pair with i != j
    const double lambda = rng.uniform();
    out.poses.push_back(mix_poses(t.poses[i], t.poses[j], lambda));
  }
  return out;
}

PoseSet pose_mixup(const PoseSet& t, int count, uint64_t rng_seed) {
  Rng rng(rng_seed);
  return pose_mixup(t, count, rng);
}

Pose fit_to_canvas(const Pose& pose, double margin, bool force) {
  if (margin < 0.0 || margin >= 0.5)
    throw std::invalid_argument("fit_to_canvas: margin must be in [0, 0.5)");
  if (pose.coords.empty()) return pose;

  double xmin = pose.coords[0].x, xmax = xmin;
  double ymin = pose.coords[0].y, ymax = ymin;
  for (const auto& c : pose.coords) {
    xmin = std::min(xmin, c.x);
    xmax = std::max(xmax, c.x);
    ymin = std::min(ymin, c.y);
    ymax = std::max(ymax, c.y);
  }

  const double lo = margin, hi = 1.0 - margin;
  if (!force && xmin >= lo && xmax <= hi && ymin >= lo && ymax <= hi)
    return pose;

  const double span = std::max(xmax - xmin, ymax - ymin);
  const Vec2 center{(xmin + xmax) / 2.0, (ymin + ymax) / 2.0};
  Pose out;
  out.coords.resize(pose.coords.size());
  if (span == 0.0) {
    // Degenerate: keep the shape (a point), move it to the canvas center.
    for (auto& c : out.coords) c = {0.5, 0.5};
    return out;
  }
  const double scale = (1.0 - 2.0 * margin) / span;
  for (size_t j = 0; j < pose.coords.size(); ++j) {
    out.coords[j].x = (pose.coords[j].x - center.x) * scale + 0.5;
    out.coords[j].y = (pose.coords[j].y - center.y) * scale + 0.5;
  }
  return out;
}

SkeletonTopology default_human_topology() {
  SkeletonTopology t;
  t.joint_count = 13;
  t.joints = {"pelvis",  "neck",   "head",   "l_shoulder", "l_elbow",
              "r_shoulder", "r_elbow", "l_hip", "l_knee",  "l_ankle",
              "r_hip",   "r_knee", "r_ankle"};
  t.root_index = 0;
  t.bones = {{0, 1}, {1, 2}, {1, 3}, {3, 4},  {1, 5},   {5, 6},
             {0, 7}, {7, 8}, {8, 9}, {0, 10}, {10, 11}, {11, 12}};
  t.bone_colors = {
      {230, 25, 75},  {60, 180, 75},  {255, 225, 25}, {0, 130, 200},
      {245, 130, 48}, {145, 30, 180}, {70, 240, 240}, {240, 50, 230},
      {210, 245, 60}, {250, 190, 212}, {0, 128, 128}, {220, 190, 255}};
  t.validate();
  return t;
}

}  // namespace flexpose
