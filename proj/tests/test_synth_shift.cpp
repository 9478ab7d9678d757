#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "flexpose/synth.hpp"
#include "testutil.hpp"

using namespace flexpose;
using namespace flexpose::synth;

namespace {

// Independent 2D rotation oracle.
Vec2 rot_oracle(Vec2 v, double angle) {
  return {std::cos(angle) * v.x - std::sin(angle) * v.y,
          std::sin(angle) * v.x + std::cos(angle) * v.y};
}

Vec2 centroid_of(const Pose& p) {
  Vec2 s{0, 0};
  for (auto& c : p.coords) s = s + c;
  return {s.x / p.coords.size(), s.y / p.coords.size()};
}

PoseDistributionSpec two_joint_spec(Vec2 rest, double len) {
  PoseDistributionSpec spec;
  SkeletonTopology topo;
  topo.joint_count = 2;
  topo.joints = {"root", "tip"};
  topo.root_index = 0;
  topo.bones = {{0, 1}};
  topo.bone_colors = {{255, 0, 0}};
  spec.tree.topology = topo;
  spec.tree.bone_lengths = {len};
  spec.tree.rest_directions = {rest};
  spec.joint_angle_mean = {0.0};
  spec.joint_angle_std = {0.0};
  return spec;
}

}  // namespace

TEST_CASE("zero-noise forward kinematics is deterministic and directional") {
  PoseDistributionSpec spec = two_joint_spec({0.0, 1.0}, 0.3);
  Pose p = sample_pose(spec, 7);
  Pose q = sample_pose(spec, 7);
  CHECK(std::memcmp(p.coords.data(), q.coords.data(), sizeof(Vec2) * 2) == 0);

  // Child sits straight below the root; after the margin-0.1 canvas fit the
  // 0.3 bone spans 0.8.
  const Vec2 d = p.coords[1] - p.coords[0];
  CHECK(d.x == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(d.y == doctest::Approx(0.8).epsilon(1e-12));

  Pose r = sample_pose(spec, 8);  // different seed, same zero-noise spec
  CHECK(r.coords[1].y - r.coords[0].y == doctest::Approx(0.8).epsilon(1e-12));
}

TEST_CASE("joint angle rotates the rest direction") {
  PoseDistributionSpec spec = two_joint_spec({1.0, 0.0}, 1.0);
  spec.joint_angle_mean = {M_PI / 2.0};
  Pose p = sample_pose(spec, 3);
  // rest (1,0) rotated +90 deg -> (0,1): child straight below (canvas y).
  const Vec2 d = p.coords[1] - p.coords[0];
  const Vec2 want = rot_oracle({1.0, 0.0}, M_PI / 2.0);
  const double len = std::hypot(d.x, d.y);
  CHECK(len == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(d.x / len == doctest::Approx(want.x).epsilon(1e-12));
  CHECK(d.y / len == doctest::Approx(want.y).epsilon(1e-12));
}

TEST_CASE("default human spec samples valid poses") {
  const auto spec = default_human_spec();
  PoseSet set = make_dataset(spec, 500, 99);
  REQUIRE(set.poses.size() == 500);
  for (const auto& p : set.poses) {
    CHECK(!validate_pose(p, spec.tree.topology));
    for (const auto& c : p.coords) {
      CHECK(c.x >= 0.0);
      CHECK(c.x <= 1.0);
      CHECK(c.y >= 0.0);
      CHECK(c.y <= 1.0);
    }
  }
  // Determinism across calls.
  PoseSet again = make_dataset(spec, 500, 99);
  for (size_t i = 0; i < set.poses.size(); ++i)
    CHECK(std::memcmp(set.poses[i].coords.data(),
                      again.poses[i].coords.data(),
                      sizeof(Vec2) * spec.tree.topology.joint_count) == 0);
}

TEST_CASE("global rotation") {
  Rng rng(21);
  const auto topo = default_human_topology();
  Pose pose = testutil::random_pose(rng, topo.joint_count);

  SUBCASE("theta=0 equals the plain canvas fit") {
    Pose a = apply_global_rotation(pose, 0.0);
    Pose b = fit_to_canvas(pose, 0.1);
    for (int j = 0; j < topo.joint_count; ++j) {
      CHECK(a.coords[j].x == doctest::Approx(b.coords[j].x).epsilon(1e-12));
      CHECK(a.coords[j].y == doctest::Approx(b.coords[j].y).epsilon(1e-12));
    }
  }

  SUBCASE("90 degrees matches the rotation-matrix oracle") {
    Pose p2;
    p2.coords = {{0.5, 0.5}, {0.5, 0.7}};
    const Vec2 c = centroid_of(p2);
    Pose rotated = apply_global_rotation(p2, M_PI / 2.0);
    // Build the oracle: rotate about the centroid, then fit like the op.
    Pose oracle;
    oracle.coords.resize(2);
    for (int j = 0; j < 2; ++j)
      oracle.coords[j] = c + rot_oracle(p2.coords[j] - c, M_PI / 2.0);
    oracle = fit_to_canvas(oracle, 0.1);
    for (int j = 0; j < 2; ++j) {
      CHECK(rotated.coords[j].x ==
            doctest::Approx(oracle.coords[j].x).epsilon(1e-12));
      CHECK(rotated.coords[j].y ==
            doctest::Approx(oracle.coords[j].y).epsilon(1e-12));
    }
  }

  SUBCASE("distances are preserved up to one uniform scale") {
    Pose rotated = apply_global_rotation(pose, M_PI / 4.0);
    double ratio = 0.0;
    bool first = true;
    for (int a = 0; a < topo.joint_count; ++a)
      for (int b = a + 1; b < topo.joint_count; ++b) {
        const Vec2 d0 = pose.coords[a] - pose.coords[b];
        const Vec2 d1 = rotated.coords[a] - rotated.coords[b];
        const double l0 = std::hypot(d0.x, d0.y);
        const double l1 = std::hypot(d1.x, d1.y);
        if (l0 < 1e-9) continue;
        if (first) {
          ratio = l1 / l0;
          first = false;
        } else {
          CHECK(l1 / l0 == doctest::Approx(ratio).epsilon(1e-12));
        }
      }
  }
}

TEST_CASE("local rotation") {
  const auto topo = default_human_topology();
  Rng rng(4);
  Pose pose = testutil::random_pose(rng, topo.joint_count);
  const int l_hip = 7;  // subtree: l_knee(8), l_ankle(9)

  SUBCASE("gamma=0 is the identity") {
    Pose out = apply_local_rotation(pose, topo, l_hip, 0.0);
    for (int j = 0; j < topo.joint_count; ++j) {
      CHECK(out.coords[j].x == doctest::Approx(pose.coords[j].x).epsilon(1e-15));
      CHECK(out.coords[j].y == doctest::Approx(pose.coords[j].y).epsilon(1e-15));
    }
  }

  SUBCASE("complement of the subtree is bit-identical") {
    Pose out = apply_local_rotation(pose, topo, l_hip, 2.5);
    for (int j = 0; j < topo.joint_count; ++j) {
      if (j == 8 || j == 9) continue;
      CHECK(out.coords[j].x == pose.coords[j].x);
      CHECK(out.coords[j].y == pose.coords[j].y);
    }
    // And the moved joints moved.
    CHECK((std::abs(out.coords[8].x - pose.coords[8].x) +
           std::abs(out.coords[8].y - pose.coords[8].y)) > 1e-6);
  }

  SUBCASE("180 degrees reflects a terminal bone through its pivot") {
    const int l_knee = 8;  // subtree: l_ankle(9) only
    Pose out = apply_local_rotation(pose, topo, l_knee, M_PI);
    const Vec2 before = pose.coords[9] - pose.coords[l_knee];
    const Vec2 after = out.coords[9] - out.coords[l_knee];
    CHECK(after.x == doctest::Approx(-before.x).epsilon(1e-12));
    CHECK(after.y == doctest::Approx(-before.y).epsilon(1e-12));
    const Vec2 disp = out.coords[9] - pose.coords[9];
    const double d = std::hypot(before.x, before.y);
    CHECK(std::hypot(disp.x, disp.y) == doctest::Approx(2.0 * d).epsilon(1e-12));
  }

  SUBCASE("the tree root is rejected") {
    CHECK_THROWS_WITH_AS(
        apply_local_rotation(pose, topo, topo.root_index, 1.0),
        "local rotation requires a proper subtree", std::invalid_argument);
  }

  SUBCASE("a leaf joint is rejected") {
    CHECK_THROWS(apply_local_rotation(pose, topo, 9, 1.0));
  }
}

TEST_CASE("scale") {
  Rng rng(17);
  const auto topo = default_human_topology();

  SUBCASE("eta=1 is the identity") {
    Pose pose = testutil::random_pose(rng, topo.joint_count);
    Pose out = apply_scale(pose, 1.0);
    for (int j = 0; j < topo.joint_count; ++j) {
      CHECK(out.coords[j].x == doctest::Approx(pose.coords[j].x).epsilon(1e-15));
      CHECK(out.coords[j].y == doctest::Approx(pose.coords[j].y).epsilon(1e-15));
    }
  }

  SUBCASE("halving moves a point halfway to the centroid") {
    Pose pose;
    pose.coords = {{0.5, 0.5}, {0.7, 0.5}, {0.3, 0.5}};  // centroid (0.5,0.5)
    Pose out = apply_scale(pose, 0.5);
    CHECK(out.coords[1].x == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(out.coords[1].y == doctest::Approx(0.5).epsilon(1e-12));
  }

  SUBCASE("composition multiplies factors when nothing clips") {
    Pose pose = testutil::random_pose(rng, topo.joint_count, 0.4, 0.6);
    Pose ab = apply_scale(apply_scale(pose, 0.9), 0.8);
    Pose once = apply_scale(pose, 0.9 * 0.8);
    for (int j = 0; j < topo.joint_count; ++j) {
      CHECK(ab.coords[j].x == doctest::Approx(once.coords[j].x).epsilon(1e-12));
      CHECK(ab.coords[j].y == doctest::Approx(once.coords[j].y).epsilon(1e-12));
    }
  }

  SUBCASE("eta must be positive") {
    Pose pose = testutil::random_pose(rng, topo.joint_count);
    CHECK_THROWS(apply_scale(pose, 0.0));
    CHECK_THROWS(apply_scale(pose, -1.0));
  }

  SUBCASE("union-range sampling avoids the excluded middle") {
    ShiftSpec shift;
    shift.kind = ShiftKind::scale;
    shift.eta_ranges = {{0.7, 0.9}, {1.1, 1.2}};
    const auto spec = default_human_spec();
    shift.validate(spec.tree.topology);
    Rng srng(6);
    Pose base = testutil::random_pose(srng, spec.tree.topology.joint_count);
    // Recover eta from the applied shift via the centroid-distance ratio.
    for (int trial = 0; trial < 300; ++trial) {
      Pose out = apply_shift(base, spec.tree.topology, shift, srng);
      const Vec2 c = centroid_of(base);
      const Vec2 d0 = base.coords[0] - c;
      const Vec2 d1 = out.coords[0] - centroid_of(out);
      const double eta = std::hypot(d1.x, d1.y) / std::hypot(d0.x, d0.y);
      const bool in_ranges = (eta >= 0.7 - 1e-9 && eta <= 0.9 + 1e-9) ||
                             (eta >= 1.1 - 1e-9 && eta <= 1.2 + 1e-9);
      CHECK(in_ranges);
    }
  }
}

TEST_CASE("make_shifted_dataset") {
  const auto spec = default_human_spec();

  SUBCASE("zero-width rotation range equals plain sampling") {
    ShiftSpec shift;
    shift.kind = ShiftKind::global_rotation;
    shift.theta_lo = shift.theta_hi = 0.0;
    PoseSet plain = make_dataset(spec, 50, 5);
    PoseSet shifted = make_shifted_dataset(spec, shift, 50, 5);
    for (size_t i = 0; i < plain.poses.size(); ++i)
      for (int j = 0; j < spec.tree.topology.joint_count; ++j) {
        CHECK(shifted.poses[i].coords[j].x ==
              doctest::Approx(plain.poses[i].coords[j].x).epsilon(1e-12));
        CHECK(shifted.poses[i].coords[j].y ==
              doctest::Approx(plain.poses[i].coords[j].y).epsilon(1e-12));
      }
  }

  SUBCASE("cardinality and validity") {
    ShiftSpec shift;
    shift.kind = ShiftKind::global_rotation;
    shift.theta_lo = -0.8;
    shift.theta_hi = 0.8;
    PoseSet out = make_shifted_dataset(spec, shift, 1000, 12);
    REQUIRE(out.poses.size() == 1000);
    for (const auto& p : out.poses)
      CHECK(!validate_pose(p, spec.tree.topology));
    CHECK_THROWS_WITH_AS(make_shifted_dataset(spec, shift, 0, 1),
                         "n must be >= 1", std::invalid_argument);
  }

  SUBCASE("fixed compose matches the closed-form map order") {
    ShiftSpec rot;
    rot.kind = ShiftKind::global_rotation;
    rot.theta_lo = rot.theta_hi = M_PI / 6.0;
    ShiftSpec sc;
    sc.kind = ShiftKind::scale;
    sc.eta_ranges = {{0.8, 0.8}};
    ShiftSpec comp;
    comp.kind = ShiftKind::compose;
    comp.children = {rot, sc};

    PoseSet shifted = make_shifted_dataset(spec, comp, 5, 77);
    // Oracle: resample with the same per-sample streams and apply the two
    // closed-form maps in order.
    for (int i = 0; i < 5; ++i) {
      Rng rng(derive_seed(77, i));
      Pose p = sample_pose(spec, rng);
      // Both shift parameters are pinned, so the oracle is just the two
      // closed-form maps applied in order.
      Pose expect = apply_scale(apply_global_rotation(p, M_PI / 6.0), 0.8);
      for (int j = 0; j < spec.tree.topology.joint_count; ++j) {
        CHECK(shifted.poses[i].coords[j].x ==
              doctest::Approx(expect.coords[j].x).epsilon(1e-12));
        CHECK(shifted.poses[i].coords[j].y ==
              doctest::Approx(expect.coords[j].y).epsilon(1e-12));
      }
    }
  }
}
