#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>

#include "flexpose/metrics.hpp"
#include "flexpose/reference.hpp"
#include "flexpose/rng.hpp"
#include "testutil.hpp"

using namespace flexpose;
using metrics::SampleMatrix;

namespace {

SampleMatrix randn_matrix(Rng& rng, int n, int d, double shift = 0.0) {
  SampleMatrix m(n, d);
  for (auto& v : m.data) v = rng.normal() + shift;
  return m;
}

SampleMatrix from_rows(const std::vector<std::vector<double>>& rows) {
  SampleMatrix m(static_cast<int>(rows.size()),
                 static_cast<int>(rows[0].size()));
  for (size_t i = 0; i < rows.size(); ++i)
    std::copy(rows[i].begin(), rows[i].end(), m.row(static_cast<int>(i)));
  return m;
}

}  // namespace

TEST_CASE("mmd2 hand cases") {
  // Identical duplicated sets: 1 + 1 - 2 = 0 exactly.
  SampleMatrix x = from_rows({{0.3}, {0.3}});
  CHECK(metrics::mmd2(x, x, 1.0) == 0.0);

  // X={0,0}, Y={1,1}, sigma=1: 2 - 2 exp(-1/2).
  SampleMatrix zeros = from_rows({{0.0}, {0.0}});
  SampleMatrix ones = from_rows({{1.0}, {1.0}});
  const double want = 2.0 - 2.0 * std::exp(-0.5);
  CHECK(std::abs(metrics::mmd2(zeros, ones, 1.0) - want) < 1e-12);
}

TEST_CASE("mmd2 equals the naive double-loop oracle") {
  Rng rng(31);
  for (int trial = 0; trial < 5; ++trial) {
    SampleMatrix x = randn_matrix(rng, 100, 26);
    SampleMatrix y = randn_matrix(rng, 90, 26, 0.3);
    const double sigma = 0.5 + rng.uniform();
    const double fast = metrics::mmd2(x, y, sigma);
    const double naive = reference::mmd2_naive(x, y, sigma);
    CHECK(std::abs(fast - naive) < 1e-12);
  }
}

TEST_CASE("mmd2 symmetry is exact and shifts cancel to 1e-12") {
  Rng rng(32);
  SampleMatrix x = randn_matrix(rng, 60, 8);
  SampleMatrix y = randn_matrix(rng, 60, 8, 0.5);
  CHECK(metrics::mmd2(x, y, 1.1) == metrics::mmd2(y, x, 1.1));

  SampleMatrix x2 = randn_matrix(rng, 40, 8);
  SampleMatrix y2 = randn_matrix(rng, 70, 8, 0.2);
  CHECK(metrics::mmd2(x2, y2, 0.9) == metrics::mmd2(y2, x2, 0.9));

  SampleMatrix xs = x, ys = y;
  for (auto& v : xs.data) v += 5.0;
  for (auto& v : ys.data) v += 5.0;
  CHECK(std::abs(metrics::mmd2(xs, ys, 1.1) - metrics::mmd2(x, y, 1.1)) <
        1e-12);
}

TEST_CASE("mmd2 input validation") {
  Rng rng(33);
  SampleMatrix one = randn_matrix(rng, 1, 4);
  SampleMatrix ok = randn_matrix(rng, 5, 4);
  CHECK_THROWS_WITH_AS(metrics::mmd2(one, ok, 1.0),
                       "unbiased MMD needs >= 2 samples",
                       std::invalid_argument);
  CHECK_THROWS(metrics::mmd2(ok, ok, 0.0));
}

TEST_CASE("median bandwidth") {
  // Two points at distance d -> d/sqrt(2).
  SampleMatrix a = from_rows({{0.0, 0.0}});
  SampleMatrix b = from_rows({{3.0, 4.0}});
  CHECK(metrics::median_bandwidth(a, b) ==
        doctest::Approx(5.0 / std::sqrt(2.0)).epsilon(1e-12));

  // {0,1,2} in 1D: distances {1,1,2}, median 1.
  SampleMatrix p = from_rows({{0.0}, {1.0}});
  SampleMatrix q = from_rows({{2.0}});
  CHECK(metrics::median_bandwidth(p, q) ==
        doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));

  // Permutation invariance in exact mode.
  Rng rng(34);
  SampleMatrix x = randn_matrix(rng, 41, 5);
  SampleMatrix y = randn_matrix(rng, 13, 5);
  SampleMatrix xp = x;
  for (int i = 0; i < x.n / 2; ++i)
    for (int j = 0; j < x.d; ++j)
      std::swap(xp.row(i)[j], xp.row(x.n - 1 - i)[j]);
  CHECK(metrics::median_bandwidth(x, y) == metrics::median_bandwidth(xp, y));

  SampleMatrix same = from_rows({{1.0}, {1.0}, {1.0}});
  CHECK_THROWS(metrics::median_bandwidth(same, same));
}

TEST_CASE("frechet distance basics") {
  Rng rng(35);
  SampleMatrix x = randn_matrix(rng, 300, 4);
  CHECK(std::abs(metrics::frechet_distance(x, x)) <= 1e-8);

  SampleMatrix y = randn_matrix(rng, 280, 4, 0.4);
  const double ab = metrics::frechet_distance(x, y);
  const double ba = metrics::frechet_distance(y, x);
  CHECK(std::abs(ab - ba) <= 1e-8);

  // Translation of both sides cancels.
  SampleMatrix xs = x, ys = y;
  for (auto& v : xs.data) v += 2.5;
  for (auto& v : ys.data) v += 2.5;
  CHECK(metrics::frechet_distance(xs, ys) ==
        doctest::Approx(ab).epsilon(1e-9));
}

TEST_CASE("frechet diagonal closed form from exact covariances") {
  // FD = sum (mu diff)^2 + (sqrt(v) - sqrt(w))^2 per coordinate.
  const int d = 3;
  std::vector<double> mu_x = {0.0, 1.0, -2.0};
  std::vector<double> mu_y = {0.5, 1.0, 0.0};
  std::vector<double> vx = {1.0, 2.0, 0.5};
  std::vector<double> vy = {1.5, 2.0, 4.0};
  std::vector<double> cov_x(9, 0.0), cov_y(9, 0.0);
  for (int i = 0; i < d; ++i) {
    cov_x[i * d + i] = vx[i];
    cov_y[i * d + i] = vy[i];
  }
  double want = 0.0;
  for (int i = 0; i < d; ++i) {
    want += (mu_x[i] - mu_y[i]) * (mu_x[i] - mu_y[i]);
    want += (std::sqrt(vx[i]) - std::sqrt(vy[i])) *
            (std::sqrt(vx[i]) - std::sqrt(vy[i]));
  }
  CHECK(std::abs(metrics::frechet_gaussian(mu_x, cov_x, mu_y, cov_y, d) -
                 want) < 1e-6);
}

TEST_CASE("frechet on fitted 1D Gaussians approaches the closed form") {
  Rng rng(36);
  SampleMatrix x(4000, 1), y(4000, 1);
  for (auto& v : x.data) v = rng.normal();
  for (auto& v : y.data) v = rng.normal() + 3.0;
  // Population values mu=(0,3), var=(1,1): FD = 9.
  CHECK(metrics::frechet_distance(x, y) == doctest::Approx(9.0).epsilon(0.08));
}

TEST_CASE("pck") {
  const auto topo = testutil::chain3();
  PoseSet gt;
  gt.topology = topo;
  Pose g0;
  g0.coords = {{0.5, 0.5}, {0.3, 0.3}, {0.7, 0.7}};
  gt.poses = {g0};

  PoseSet pred = gt;
  CHECK(metrics::pck(pred, gt, 0.1) == 1.0);

  pred.poses[0].coords[0].x += 0.05;
  pred.poses[0].coords[1].x += 0.20;
  pred.poses[0].coords[2].x += 0.10;
  CHECK(metrics::pck(pred, gt, 0.1) == doctest::Approx(2.0 / 3.0));

  // Far-away predictions score zero.
  PoseSet far = gt;
  for (auto& c : far.poses[0].coords) c = {c.x + 2.0, c.y + 2.0};
  CHECK(metrics::pck(far, gt, 0.1) == 0.0);

  // Monotone in rho.
  double prev = 0.0;
  for (double rho : {0.01, 0.05, 0.11, 0.2, 0.5}) {
    const double v = metrics::pck(pred, gt, rho);
    CHECK(v >= prev);
    prev = v;
  }

  PoseSet wrong = gt;
  wrong.poses.push_back(g0);
  CHECK_THROWS(metrics::pck(wrong, gt, 0.1));
}

TEST_CASE("mse in pixel units") {
  const auto topo = testutil::chain3();
  PoseSet gt;
  gt.topology = topo;
  Pose g0;
  g0.coords = {{0.5, 0.5}, {0.3, 0.3}, {0.7, 0.7}};
  gt.poses = {g0, g0};

  PoseSet pred = gt;
  CHECK(metrics::mse(pred, gt, 64.0) == 0.0);

  // One joint off by (3,4) pixels on a 64px canvas: squared distance 25,
  // averaged over 6 (sample, joint) pairs.
  pred.poses[0].coords[0].x += 3.0 / 63.0;
  pred.poses[0].coords[0].y += 4.0 / 63.0;
  CHECK(metrics::mse(pred, gt, 64.0) ==
        doctest::Approx(25.0 / 6.0).epsilon(1e-9));
}

TEST_CASE("pca embedding") {
  Rng rng(37);

  SUBCASE("full-rank 2D data is embedded isometrically") {
    SampleMatrix x(200, 2);
    for (int i = 0; i < x.n; ++i) {
      x.row(i)[0] = 3.0 * rng.normal();
      x.row(i)[1] = 0.5 * rng.normal();
    }
    auto e = metrics::pca_embed({x}, {"data"});
    REQUIRE(e.points.size() == 200);
    for (int trial = 0; trial < 50; ++trial) {
      const int i = static_cast<int>(rng.uniform_index(200));
      const int j = static_cast<int>(rng.uniform_index(200));
      const double din = std::hypot(x.row(i)[0] - x.row(j)[0],
                                    x.row(i)[1] - x.row(j)[1]);
      const double dout = std::hypot(e.points[i][0] - e.points[j][0],
                                     e.points[i][1] - e.points[j][1]);
      CHECK(dout == doctest::Approx(din).epsilon(1e-9));
    }
  }

  SUBCASE("1D data embedded in 5D has a flat second component") {
    SampleMatrix x(100, 5);
    for (int i = 0; i < x.n; ++i) {
      const double t = rng.normal();
      for (int j = 0; j < 5; ++j) x.row(i)[j] = t * (j + 1);
    }
    auto e = metrics::pca_embed({x}, {"line"});
    double var2 = 0.0;
    for (const auto& p : e.points) var2 += p[1] * p[1];
    CHECK(var2 / e.points.size() < 1e-12);
  }

  SUBCASE("sign rule: negating the input negates the embedding") {
    SampleMatrix x = randn_matrix(rng, 50, 4);
    SampleMatrix nx = x;
    for (auto& v : nx.data) v = -v;
    auto e = metrics::pca_embed({x}, {"a"});
    auto en = metrics::pca_embed({nx}, {"a"});
    for (size_t i = 0; i < e.points.size(); ++i) {
      CHECK(en.points[i][0] == doctest::Approx(-e.points[i][0]).epsilon(1e-9));
      CHECK(en.points[i][1] == doctest::Approx(-e.points[i][1]).epsilon(1e-9));
    }
  }

  SUBCASE("rank-0 data is rejected") {
    SampleMatrix flat(5, 3);
    CHECK_THROWS(metrics::pca_embed({flat}, {"flat"}));
  }
}

TEST_CASE("report and embedding exports") {
  const auto dir = testutil::tmp_dir("metrics_io");
  std::vector<metrics::MetricReport> reports(1);
  reports[0].metric = "mmd2";
  reports[0].value = 0.125;
  reports[0].params["sigma"] = 1.5;
  reports[0].n_a = 10;
  reports[0].n_b = 12;
  metrics::write_reports_csv(reports, dir + "/r.csv");
  metrics::write_reports_json(reports, dir + "/r.json");

  std::ifstream csv(dir + "/r.csv");
  std::string header, row;
  std::getline(csv, header);
  std::getline(csv, row);
  CHECK(header == "metric,value,n_a,n_b,seed,params");
  CHECK(row.find("mmd2,0.125,10,12,0,sigma=1.5") != std::string::npos);

  Rng rng(38);
  SampleMatrix x = randn_matrix(rng, 20, 4);
  SampleMatrix y = randn_matrix(rng, 30, 4, 1.0);
  auto e = metrics::pca_embed({x, y}, {"x", "y"});
  metrics::write_embed_csv(e, dir + "/e.csv");
  metrics::write_embed_svg(e, dir + "/e.svg");
  std::ifstream svg(dir + "/e.svg");
  std::string all((std::istreambuf_iterator<char>(svg)), {});
  CHECK(all.find("<svg") != std::string::npos);
  CHECK(all.find("circle") != std::string::npos);
}
