#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

#include "flexpose/render.hpp"
#include "flexpose/synth.hpp"
#include "testutil.hpp"

using namespace flexpose;
using namespace flexpose::render;

namespace {

// Independent Bresenham enumeration for the line oracle.
std::set<std::pair<int, int>> bresenham_oracle(int x0, int y0, int x1, int y1) {
  std::set<std::pair<int, int>> pts;
  int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
  int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  while (true) {
    pts.insert({x0, y0});
    if (x0 == x1 && y0 == y1) break;
    int e2 = 2 * err;
    if (e2 >= dy) { err += dy; x0 += sx; }
    if (e2 <= dx) { err += dx; y0 += sy; }
  }
  return pts;
}

}  // namespace

TEST_CASE("rasterize: horizontal bone pixels match the Bresenham oracle") {
  SkeletonTopology topo;
  topo.joint_count = 2;
  topo.joints = {"a", "b"};
  topo.root_index = 0;
  topo.bones = {{0, 1}};
  topo.bone_colors = {{10, 200, 30}};

  Pose pose;
  pose.coords = {{0.25, 0.5}, {0.75, 0.5}};
  RasterImage img = rasterize(pose, topo, 64, 64);

  const int x0 = static_cast<int>(std::lround(0.25 * 63));  // 16
  const int x1 = static_cast<int>(std::lround(0.75 * 63));  // 47
  const int y = static_cast<int>(std::lround(0.5 * 63));    // 32
  const auto line = bresenham_oracle(x0, y, x1, y);

  // Joint marks are white 2x2 squares drawn after the bones.
  std::set<std::pair<int, int>> marks;
  for (const auto& c : pose.coords) {
    const int px = static_cast<int>(std::lround(c.x * 63));
    const int py = static_cast<int>(std::lround(c.y * 63));
    for (int dy = 0; dy < 2; ++dy)
      for (int dx = 0; dx < 2; ++dx) marks.insert({px + dx, py + dy});
  }

  for (int yy = 0; yy < 64; ++yy)
    for (int xx = 0; xx < 64; ++xx) {
      const uint8_t* p = img.px(xx, yy);
      if (marks.count({xx, yy})) {
        CHECK(p[0] == 255);
        CHECK(p[1] == 255);
        CHECK(p[2] == 255);
      } else if (line.count({xx, yy})) {
        CHECK(p[0] == 10);
        CHECK(p[1] == 200);
        CHECK(p[2] == 30);
      } else {
        CHECK(p[0] == 0);
        CHECK(p[1] == 0);
        CHECK(p[2] == 0);
      }
    }
}

TEST_CASE("rasterize: determinism, degenerate bones, color coverage") {
  const auto topo = default_human_topology();
  Rng rng(3);
  Pose pose = testutil::random_pose(rng, topo.joint_count);

  RasterImage a = rasterize(pose, topo, 48, 48);
  RasterImage b = rasterize(pose, topo, 48, 48);
  CHECK(a.rgb == b.rgb);

  // Every bone color appears for a non-degenerate pose.
  Pose spread = synth::sample_pose(synth::default_human_spec(), 5);
  RasterImage img = rasterize(spread, topo, 96, 96);
  for (const auto& color : topo.bone_colors) {
    bool found = false;
    for (size_t p = 0; p < img.rgb.size(); p += 3)
      if (img.rgb[p] == color[0] && img.rgb[p + 1] == color[1] &&
          img.rgb[p + 2] == color[2])
        found = true;
    CHECK(found);
  }

  // All joints coincident: a small cluster, no crash.
  Pose point;
  point.coords.assign(topo.joint_count, {0.5, 0.5});
  RasterImage tiny = rasterize(point, topo, 32, 32);
  int nonblack = 0;
  for (size_t p = 0; p < tiny.rgb.size(); p += 3)
    if (tiny.rgb[p] || tiny.rgb[p + 1] || tiny.rgb[p + 2]) ++nonblack;
  CHECK(nonblack > 0);
  CHECK(nonblack <= 16);

  CHECK_THROWS(rasterize(pose, topo, 4, 64));
}

TEST_CASE("render_heatmaps normalization and symmetry") {
  const auto topo = default_human_topology();
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    Pose pose = testutil::random_pose(rng, topo.joint_count);
    HeatmapStack st = render_heatmaps(pose, 32, 1.5);
    for (int j = 0; j < st.joints; ++j) {
      double total = 0.0;
      for (int p = 0; p < 32 * 32; ++p) total += st.map(j)[p];
      CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
    }
  }

  // Joint at the canvas center: map symmetric under 90-degree rotation.
  Pose center;
  center.coords = {{0.5, 0.5}};
  HeatmapStack st = render_heatmaps(center, 33, 2.0);  // odd res centers it
  const int r = 33;
  for (int yy = 0; yy < r; ++yy)
    for (int xx = 0; xx < r; ++xx)
      CHECK(st.map(0)[yy * r + xx] ==
            doctest::Approx(st.map(0)[xx * r + (r - 1 - yy)]).epsilon(1e-12));

  // Tiny sigma: argmax at the joint pixel.
  Pose p2;
  p2.coords = {{10.0 / 31.0, 20.0 / 31.0}};
  HeatmapStack sharp = render_heatmaps(p2, 32, 0.3);
  int arg = 0;
  for (int i = 1; i < 32 * 32; ++i)
    if (sharp.map(0)[i] > sharp.map(0)[arg]) arg = i;
  CHECK(arg % 32 == 10);
  CHECK(arg / 32 == 20);
}

TEST_CASE("decode_softargmax") {
  SUBCASE("one-hot map decodes to the pixel position") {
    HeatmapStack st;
    st.joints = 1;
    st.res = 16;
    st.data.assign(256, 0.0);
    st.data[5 * 16 + 9] = 1.0;  // row 5, col 9
    Pose p = decode_softargmax(st);
    CHECK(p.coords[0].x == doctest::Approx(9.0 / 15.0).epsilon(1e-12));
    CHECK(p.coords[0].y == doctest::Approx(5.0 / 15.0).epsilon(1e-12));
  }

  SUBCASE("uniform map decodes to the canvas center") {
    HeatmapStack st;
    st.joints = 1;
    st.res = 32;
    st.data.assign(1024, 1.0 / 1024.0);
    Pose p = decode_softargmax(st);
    CHECK(p.coords[0].x == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(p.coords[0].y == doctest::Approx(0.5).epsilon(1e-12));
  }

  SUBCASE("two-pixel expectation") {
    HeatmapStack st;
    st.joints = 1;
    st.res = 8;
    st.data.assign(64, 0.0);
    st.data[0 * 8 + 2] = 0.75;  // x = 2/7
    st.data[0 * 8 + 6] = 0.25;  // x = 6/7
    Pose p = decode_softargmax(st);
    CHECK(p.coords[0].x ==
          doctest::Approx(0.75 * 2.0 / 7.0 + 0.25 * 6.0 / 7.0).epsilon(1e-12));
    CHECK(p.coords[0].y == doctest::Approx(0.0).epsilon(1e-12));
  }

  SUBCASE("all-zero map is degenerate") {
    HeatmapStack st;
    st.joints = 1;
    st.res = 8;
    st.data.assign(64, 0.0);
    CHECK_THROWS_WITH_AS(decode_softargmax(st), "degenerate heatmap",
                         std::runtime_error);
  }

  SUBCASE("decode is linear in normalized mixtures") {
    Rng rng(7);
    Pose a = testutil::random_pose(rng, 1);
    HeatmapStack ha = render_heatmaps(a, 24, 1.5);
    HeatmapStack hu;
    hu.joints = 1;
    hu.res = 24;
    hu.data.assign(24 * 24, 1.0 / (24.0 * 24.0));
    HeatmapStack mix = ha;
    for (size_t i = 0; i < mix.data.size(); ++i)
      mix.data[i] = 0.9 * ha.data[i] + 0.1 * hu.data[i];
    Pose pa = decode_softargmax(ha);
    Pose pu = decode_softargmax(hu);
    Pose pm = decode_softargmax(mix);
    CHECK(pm.coords[0].x ==
          doctest::Approx(0.9 * pa.coords[0].x + 0.1 * pu.coords[0].x)
              .epsilon(1e-12));
    CHECK(pm.coords[0].y ==
          doctest::Approx(0.9 * pa.coords[0].y + 0.1 * pu.coords[0].y)
              .epsilon(1e-12));
  }
}

TEST_CASE("analytic round trip: decode(render(y)) within 0.5/R") {
  const auto topo = default_human_topology();
  Rng rng(9);
  const int res = 32;
  const double sigma = 1.5;
  const double tol = 0.5 / res;
  const double border = 2.0 * sigma / (res - 1);
  int checked = 0;
  for (int trial = 0; trial < 100; ++trial) {
    Pose pose = testutil::random_pose(rng, topo.joint_count);
    HeatmapStack st = render_heatmaps(pose, res, sigma);
    Pose back = decode_softargmax(st);
    for (int j = 0; j < topo.joint_count; ++j) {
      const auto& c = pose.coords[j];
      if (c.x < border || c.x > 1 - border || c.y < border || c.y > 1 - border)
        continue;  // boundary truncation bias is expected
      CHECK(std::abs(back.coords[j].x - c.x) <= tol);
      CHECK(std::abs(back.coords[j].y - c.y) <= tol);
      ++checked;
    }
  }
  CHECK(checked > 500);

  // Round-trip filtering is idempotent at the same tolerance.
  Pose pose = testutil::random_pose(rng, topo.joint_count, 0.25, 0.75);
  auto [once, img] = roundtrip_filter(render_heatmaps(pose, res, sigma), topo,
                                      64, 64);
  auto [twice, img2] = roundtrip_filter(render_heatmaps(once, res, sigma),
                                        topo, 64, 64);
  for (int j = 0; j < topo.joint_count; ++j) {
    CHECK(std::abs(twice.coords[j].x - once.coords[j].x) <= tol);
    CHECK(std::abs(twice.coords[j].y - once.coords[j].y) <= tol);
  }
  (void)img;
  (void)img2;
}

TEST_CASE("png and svg exports") {
  const auto dir = testutil::tmp_dir("render_io");
  const auto topo = default_human_topology();
  Pose pose = synth::sample_pose(synth::default_human_spec(), 11);

  RasterImage img = rasterize(pose, topo, 64, 64);
  write_png(img, dir + "/pose.png");
  std::ifstream in(dir + "/pose.png", std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), {});
  REQUIRE(bytes.size() > 100);
  const uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  CHECK(std::memcmp(bytes.data(), sig, 8) == 0);
  CHECK(bytes.find("IHDR") != std::string::npos);
  CHECK(bytes.find("IEND") != std::string::npos);

  write_pose_svg(pose, topo, 64, 64, dir + "/pose.svg");
  std::ifstream svg(dir + "/pose.svg");
  std::string text((std::istreambuf_iterator<char>(svg)), {});
  CHECK(text.find("<svg") != std::string::npos);
  size_t lines = 0;
  for (size_t at = text.find("<line"); at != std::string::npos;
       at = text.find("<line", at + 1))
    ++lines;
  CHECK(lines == topo.bones.size());
}

TEST_CASE("trained beta: determinism and loss decrease") {
  const auto spec = synth::default_human_spec();
  PoseSet poses = synth::make_dataset(spec, 150, 55);

  BetaTrainConfig cfg;
  cfg.hidden = 24;
  cfg.heatmap_res = 12;
  cfg.batch = 32;
  cfg.iterations = 60;
  cfg.lr = 2e-3;

  std::vector<double> trace1, trace2;
  BetaRegressor b1 = train_beta(poses, 24, 24, cfg, 7, &trace1);
  BetaRegressor b2 = train_beta(poses, 24, 24, cfg, 7, &trace2);
  REQUIRE(!trace1.empty());
  CHECK(trace1 == trace2);
  CHECK(trace1.back() < trace1.front());

  auto p1 = b1.params(), p2 = b2.params();
  for (size_t i = 0; i < p1.size(); ++i)
    CHECK(std::memcmp(p1[i]->data.data(), p2[i]->data.data(),
                      p1[i]->numel() * 8) == 0);

  // Prediction is a valid pose improved by the training.
  RasterImage img = rasterize(poses.poses[0], poses.topology, 24, 24);
  Pose pred = b1.predict(img);
  CHECK(!validate_pose(pred, poses.topology));

  PoseSet small;
  small.topology = poses.topology;
  small.poses = {poses.poses[0]};
  CHECK_THROWS(train_beta(small, 24, 24, cfg, 1));
}
