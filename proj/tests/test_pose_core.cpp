#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "flexpose/pose.hpp"
#include "flexpose/pose_io.hpp"
#include "testutil.hpp"

using namespace flexpose;

TEST_CASE("validate_pose names the first violated invariant") {
  const auto topo = testutil::chain3();
  Pose ok;
  ok.coords = {{0.1, 0.1}, {0.5, 0.5}, {0.9, 0.9}};
  CHECK(!validate_pose(ok, topo));

  Pose nan = ok;
  nan.coords[1].y = std::numeric_limits<double>::quiet_NaN();
  auto report = validate_pose(nan, topo);
  REQUIRE(report);
  CHECK(*report == "non-finite coordinate");

  Pose wrong;
  wrong.coords = {{0, 0}, {0, 0}, {0, 0}, {0, 0}};
  report = validate_pose(wrong, topo);
  REQUIRE(report);
  CHECK(*report == "length mismatch");
}

TEST_CASE("topology invariants") {
  auto topo = testutil::chain3();
  CHECK_NOTHROW(topo.validate());

  auto cyclic = topo;
  cyclic.bones = {{0, 1}, {1, 0}};
  CHECK_THROWS(cyclic.validate());

  auto dup = topo;
  dup.bone_colors = {{255, 0, 0}, {255, 0, 0}};
  CHECK_THROWS(dup.validate());

  auto disconnected = topo;
  disconnected.joint_count = 4;
  disconnected.joints = {"a", "b", "c", "d"};
  disconnected.bones = {{0, 1}, {0, 1}, {2, 3}};
  disconnected.bone_colors = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  CHECK_THROWS(disconnected.validate());
}

TEST_CASE("mix_poses endpoints and midpoint") {
  Pose a, b;
  a.coords = {{0.0, 0.0}, {0.0, 0.0}, {0.0, 0.0}};
  b.coords = {{0.8, 0.8}, {0.8, 0.8}, {0.8, 0.8}};

  // lambda = 1 reproduces the first parent bit for bit
  Pose m1 = mix_poses(a, b, 1.0);
  for (size_t j = 0; j < a.coords.size(); ++j) {
    CHECK(m1.coords[j].x == a.coords[j].x);
    CHECK(m1.coords[j].y == a.coords[j].y);
  }

  Pose mid = mix_poses(a, b, 0.5);
  for (const auto& c : mid.coords) {
    CHECK(c.x == doctest::Approx(0.4).epsilon(1e-15));
    CHECK(c.y == doctest::Approx(0.4).epsilon(1e-15));
  }
}

TEST_CASE("pose_mixup cardinality, validity, determinism, convexity") {
  const auto topo = default_human_topology();
  Rng rng(11);
  PoseSet t;
  t.topology = topo;
  for (int i = 0; i < 30; ++i)
    t.poses.push_back(testutil::random_pose(rng, topo.joint_count));

  PoseSet star = pose_mixup(t, 1000, 42);
  REQUIRE(star.poses.size() == 1000);
  for (const auto& p : star.poses) CHECK(!validate_pose(p, topo));

  PoseSet star2 = pose_mixup(t, 1000, 42);
  for (size_t i = 0; i < star.poses.size(); ++i)
    for (int j = 0; j < topo.joint_count; ++j) {
      CHECK(star.poses[i].coords[j].x == star2.poses[i].coords[j].x);
      CHECK(star.poses[i].coords[j].y == star2.poses[i].coords[j].y);
    }

  // Convexity against the global per-joint envelope of T.
  for (int j = 0; j < topo.joint_count; ++j) {
    double xlo = 1e9, xhi = -1e9, ylo = 1e9, yhi = -1e9;
    for (const auto& p : t.poses) {
      xlo = std::min(xlo, p.coords[j].x);
      xhi = std::max(xhi, p.coords[j].x);
      ylo = std::min(ylo, p.coords[j].y);
      yhi = std::max(yhi, p.coords[j].y);
    }
    for (const auto& p : star.poses) {
      CHECK(p.coords[j].x >= xlo - 1e-12);
      CHECK(p.coords[j].x <= xhi + 1e-12);
      CHECK(p.coords[j].y >= ylo - 1e-12);
      CHECK(p.coords[j].y <= yhi + 1e-12);
    }
  }

  // Pairwise convexity where the parents are known.
  Rng lam_rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const Pose& a = t.poses[lam_rng.uniform_index(t.poses.size())];
    const Pose& b = t.poses[lam_rng.uniform_index(t.poses.size())];
    const double lambda = lam_rng.uniform();
    Pose m = mix_poses(a, b, lambda);
    for (int j = 0; j < topo.joint_count; ++j) {
      CHECK(m.coords[j].x >=
            std::min(a.coords[j].x, b.coords[j].x) - 1e-12);
      CHECK(m.coords[j].x <=
            std::max(a.coords[j].x, b.coords[j].x) + 1e-12);
    }
  }

  PoseSet tiny;
  tiny.topology = topo;
  tiny.poses.push_back(t.poses[0]);
  CHECK_THROWS_WITH_AS(pose_mixup(tiny, 10, 1),
                       "mixup needs at least two guidance poses",
                       std::invalid_argument);
}

TEST_CASE("fit_to_canvas") {
  SUBCASE("degenerate pose moves to canvas center") {
    Pose p;
    p.coords = {{0.2, 0.7}, {0.2, 0.7}, {0.2, 0.7}};
    Pose f = fit_to_canvas(p, 0.1);
    for (const auto& c : f.coords) {
      CHECK(c.x == 0.5);
      CHECK(c.y == 0.5);
    }
  }

  SUBCASE("out-of-range box lands on the margin box") {
    Pose p;
    p.coords = {{0.0, 0.0}, {2.0, 0.0}, {2.0, 2.0}, {0.0, 2.0}};
    Pose f = fit_to_canvas(p, 0.1);
    double xlo = 1e9, xhi = -1e9, ylo = 1e9, yhi = -1e9;
    for (const auto& c : f.coords) {
      xlo = std::min(xlo, c.x);
      xhi = std::max(xhi, c.x);
      ylo = std::min(ylo, c.y);
      yhi = std::max(yhi, c.y);
    }
    CHECK(xlo == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(xhi == doctest::Approx(0.9).epsilon(1e-12));
    CHECK(ylo == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(yhi == doctest::Approx(0.9).epsilon(1e-12));
  }

  SUBCASE("a box already spanning the target is a fixed point") {
    Pose p;
    p.coords = {{0.1, 0.1}, {0.9, 0.1}, {0.9, 0.9}, {0.1, 0.9}};
    Pose f = fit_to_canvas(p, 0.1);
    for (size_t j = 0; j < p.coords.size(); ++j) {
      CHECK(f.coords[j].x == doctest::Approx(p.coords[j].x).epsilon(1e-12));
      CHECK(f.coords[j].y == doctest::Approx(p.coords[j].y).epsilon(1e-12));
    }
  }

  SUBCASE("force=false keeps an inside pose bit-identical") {
    Pose p;
    p.coords = {{0.3, 0.4}, {0.6, 0.5}, {0.42, 0.7}};
    Pose f = fit_to_canvas(p, 0.1, false);
    CHECK(std::memcmp(f.coords.data(), p.coords.data(),
                      p.coords.size() * sizeof(Vec2)) == 0);
  }

  SUBCASE("bad margin") {
    Pose p;
    p.coords = {{0.3, 0.4}};
    CHECK_THROWS(fit_to_canvas(p, 0.5));
  }
}

TEST_CASE("pose file round-trip is bit-exact") {
  const auto dir = testutil::tmp_dir("pose_io");
  const auto topo = default_human_topology();
  Rng rng(3);

  PoseSet set;
  set.topology = topo;
  for (int i = 0; i < 17; ++i)
    set.poses.push_back(testutil::random_pose(rng, topo.joint_count));
  // Awkward values must survive the decimal round trip too.
  set.poses[0].coords[0] = {1.0 / 3.0, 1e-17};
  set.poses[0].coords[1] = {0.1 + 0.2, 1.0 - 1e-16};
  set.labels.assign(set.poses.size(), "");
  set.labels[2] = "walk";
  set.labels[5] = "run \"fast\"";

  const std::string path = dir + "/set.jsonl";
  save_poses(set, path);
  PoseSet loaded = load_poses(path);

  REQUIRE(loaded.poses.size() == set.poses.size());
  CHECK(loaded.topology.joints == set.topology.joints);
  CHECK(loaded.topology.bones == set.topology.bones);
  CHECK(loaded.topology.bone_colors == set.topology.bone_colors);
  for (size_t i = 0; i < set.poses.size(); ++i)
    CHECK(std::memcmp(loaded.poses[i].coords.data(),
                      set.poses[i].coords.data(),
                      sizeof(Vec2) * topo.joint_count) == 0);
  REQUIRE(loaded.labels.size() == set.labels.size());
  CHECK(loaded.labels[2] == "walk");
  CHECK(loaded.labels[5] == "run \"fast\"");

  // Save-load-save produces identical bytes.
  const std::string path2 = dir + "/set2.jsonl";
  save_poses(loaded, path2);
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  std::string s1((std::istreambuf_iterator<char>(f1)), {});
  std::string s2((std::istreambuf_iterator<char>(f2)), {});
  CHECK(s1 == s2);
}

TEST_CASE("pose file error paths") {
  const auto dir = testutil::tmp_dir("pose_io_err");

  SUBCASE("empty pose list round-trips") {
    PoseSet empty;
    empty.topology = testutil::chain3();
    save_poses(empty, dir + "/empty.jsonl");
    PoseSet loaded = load_poses(dir + "/empty.jsonl");
    CHECK(loaded.poses.empty());
    CHECK(loaded.topology.joint_count == 3);
  }

  SUBCASE("record/header joint mismatch reports the line") {
    std::ofstream out(dir + "/bad.jsonl");
    out << R"({"m":3,"joints":["a","b","c"],"bones":[[0,1],[1,2]],"root":0,)"
        << R"("colors":[[255,0,0],[0,255,0]]})" << "\n";
    out << R"({"coords":[[0.1,0.1],[0.2,0.2],[0.3,0.3]]})" << "\n";
    out << R"({"coords":[[0.1,0.1],[0.2,0.2]]})" << "\n";
    out.close();
    try {
      load_poses(dir + "/bad.jsonl");
      FAIL("expected an error");
    } catch (const std::runtime_error& e) {
      const std::string msg = e.what();
      CHECK(msg.find(":3:") != std::string::npos);  // line number
      CHECK(msg.find("header says 3") != std::string::npos);
    }
  }

  SUBCASE("malformed line reports the line") {
    std::ofstream out(dir + "/garbled.jsonl");
    out << R"({"m":3,"joints":["a","b","c"],"bones":[[0,1],[1,2]],"root":0,)"
        << R"("colors":[[255,0,0],[0,255,0]]})" << "\n";
    out << "{not json\n";
    out.close();
    try {
      load_poses(dir + "/garbled.jsonl");
      FAIL("expected an error");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()).find(":2:") != std::string::npos);
    }
  }

  SUBCASE("missing file") {
    CHECK_THROWS(load_poses(dir + "/nope.jsonl"));
  }
}
