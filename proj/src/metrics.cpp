#include "flexpose/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <Eigen/Dense>
#include <json.hpp>

#include "flexpose/mmd.hpp"

namespace flexpose::metrics {

SampleMatrix flatten_poses(const PoseSet& set) {
  const int m = set.topology.joint_count;
  SampleMatrix out(static_cast<int>(set.poses.size()), 2 * m);
  for (size_t i = 0; i < set.poses.size(); ++i) {
    double* r = out.row(static_cast<int>(i));
    for (int j = 0; j < m; ++j) {
      r[2 * j] = set.poses[i].coords[j].x;
      r[2 * j + 1] = set.poses[i].coords[j].y;
    }
  }
  return out;
}

double mmd2(const SampleMatrix& x, const SampleMatrix& y, double sigma) {
  if (x.d != y.d) throw std::invalid_argument("mmd2: dimension mismatch");
  return mmdcore::mmd2_unbiased(x.data.data(), x.n, y.data.data(), y.n, x.d,
                                sigma);
}

double median_bandwidth(const SampleMatrix& x, const SampleMatrix& y) {
  if (x.d != y.d)
    throw std::invalid_argument("median_bandwidth: dimension mismatch");
  return mmdcore::median_bandwidth(x.data.data(), x.n, y.data.data(), y.n,
                                   x.d);
}

namespace {

void fit_gaussian(const SampleMatrix& x, std::vector<double>& mu,
                  std::vector<double>& cov) {
  const int n = x.n, d = x.d;
  if (n < 2) throw std::invalid_argument("need >= 2 samples to fit a Gaussian");
  mu.assign(d, 0.0);
  for (int i = 0; i < n; ++i) {
    const double* r = x.row(i);
    for (int j = 0; j < d; ++j) mu[j] += r[j];
  }
  for (int j = 0; j < d; ++j) mu[j] /= n;

  cov.assign(static_cast<size_t>(d) * d, 0.0);
  for (int i = 0; i < n; ++i) {
    const double* r = x.row(i);
    for (int a = 0; a < d; ++a) {
      const double da = r[a] - mu[a];
      for (int b = a; b < d; ++b)
        cov[static_cast<size_t>(a) * d + b] += da * (r[b] - mu[b]);
    }
  }
  const double inv = 1.0 / (n - 1);  // unbiased
  for (int a = 0; a < d; ++a)
    for (int b = a; b < d; ++b) {
      cov[static_cast<size_t>(a) * d + b] *= inv;
      cov[static_cast<size_t>(b) * d + a] = cov[static_cast<size_t>(a) * d + b];
    }
}

}  // namespace

double frechet_gaussian(const std::vector<double>& mu_x,
                        const std::vector<double>& cov_x,
                        const std::vector<double>& mu_y,
                        const std::vector<double>& cov_y, int d) {
  using Mat = Eigen::MatrixXd;
  Mat sx = Eigen::Map<const Mat>(cov_x.data(), d, d);
  Mat sy = Eigen::Map<const Mat>(cov_y.data(), d, d);
  // Covariances are symmetric, so row/column major does not matter here.
  sx.diagonal().array() += 1e-9;
  sy.diagonal().array() += 1e-9;

  double mean_term = 0.0;
  for (int j = 0; j < d; ++j) {
    const double diff = mu_x[j] - mu_y[j];
    mean_term += diff * diff;
  }

  Eigen::SelfAdjointEigenSolver<Mat> esx(sx);
  if (esx.info() != Eigen::Success)
    throw std::runtime_error("covariance eigendecomposition failed");
  Eigen::VectorXd ex = esx.eigenvalues();
  for (int j = 0; j < d; ++j) {
    if (ex[j] < -1e-10)
      throw std::runtime_error("covariance square root failed: negative eigenvalue");
    ex[j] = std::sqrt(std::max(0.0, ex[j]));
  }
  const Mat sqrt_sx =
      esx.eigenvectors() * ex.asDiagonal() * esx.eigenvectors().transpose();

  const Mat mid = sqrt_sx * sy * sqrt_sx;
  // mid is symmetric PSD up to rounding; symmetrize before the solver.
  Eigen::SelfAdjointEigenSolver<Mat> esm(0.5 * (mid + mid.transpose()));
  if (esm.info() != Eigen::Success)
    throw std::runtime_error("covariance square root failed");
  double tr_sqrt = 0.0;
  for (int j = 0; j < d; ++j) {
    const double ev = esm.eigenvalues()[j];
    if (ev < -1e-10)
      throw std::runtime_error("covariance square root failed: negative eigenvalue");
    tr_sqrt += std::sqrt(std::max(0.0, ev));
  }

  return mean_term + sx.trace() + sy.trace() - 2.0 * tr_sqrt;
}

double frechet_distance(const SampleMatrix& x, const SampleMatrix& y) {
  if (x.d != y.d)
    throw std::invalid_argument("frechet_distance: dimension mismatch");
  std::vector<double> mu_x, cov_x, mu_y, cov_y;
  fit_gaussian(x, mu_x, cov_x);
  fit_gaussian(y, mu_y, cov_y);
  return frechet_gaussian(mu_x, cov_x, mu_y, cov_y, x.d);
}

double pck(const PoseSet& pred, const PoseSet& gt, double rho) {
  if (pred.poses.size() != gt.poses.size())
    throw std::invalid_argument("pck: set length mismatch");
  if (pred.topology.joint_count != gt.topology.joint_count)
    throw std::invalid_argument("pck: topology mismatch");
  if (!(rho > 0.0)) throw std::invalid_argument("pck: rho must be > 0");
  if (pred.poses.empty()) throw std::invalid_argument("pck: empty sets");
  const int m = gt.topology.joint_count;
  int64_t hit = 0, total = 0;
  for (size_t i = 0; i < pred.poses.size(); ++i) {
    for (int j = 0; j < m; ++j) {
      const Vec2 dv = pred.poses[i].coords[j] - gt.poses[i].coords[j];
      if (std::hypot(dv.x, dv.y) <= rho) ++hit;
      ++total;
    }
  }
  return static_cast<double>(hit) / static_cast<double>(total);
}

double mse(const PoseSet& pred, const PoseSet& gt, double canvas_px) {
  if (pred.poses.size() != gt.poses.size())
    throw std::invalid_argument("mse: set length mismatch");
  if (pred.topology.joint_count != gt.topology.joint_count)
    throw std::invalid_argument("mse: topology mismatch");
  if (!(canvas_px > 0.0)) throw std::invalid_argument("mse: canvas_px must be > 0");
  if (pred.poses.empty()) throw std::invalid_argument("mse: empty sets");
  const int m = gt.topology.joint_count;
  const double scale = canvas_px - 1.0;
  double total = 0.0;
  for (size_t i = 0; i < pred.poses.size(); ++i) {
    for (int j = 0; j < m; ++j) {
      const Vec2 dv = pred.poses[i].coords[j] - gt.poses[i].coords[j];
      const double dx = dv.x * scale, dy = dv.y * scale;
      total += dx * dx + dy * dy;
    }
  }
  return total / (static_cast<double>(pred.poses.size()) * m);
}

namespace {

// Leading eigenvector of a symmetric matrix by power iteration, optionally
// constrained orthogonal to a previous component (plain deflation leaves a
// rank-one residual whose top direction mixes back in; re-projection every
// step does not). Convergence is judged on the vector, not the eigenvalue,
// which converges much earlier.
std::vector<double> power_iteration(const std::vector<double>& mat, int d,
                                    const std::vector<double>* ortho) {
  auto project_out = [&](std::vector<double>& u) {
    if (!ortho) return;
    double dot = 0.0;
    for (int a = 0; a < d; ++a) dot += u[a] * (*ortho)[a];
    for (int a = 0; a < d; ++a) u[a] -= dot * (*ortho)[a];
  };

  std::vector<double> v(d, 0.0), next(d);
  int basis = 0;
  v[0] = 1.0;
  project_out(v);
  for (int iter = 0; iter < 10000; ++iter) {
    for (int a = 0; a < d; ++a) {
      double s = 0.0;
      for (int b = 0; b < d; ++b) s += mat[static_cast<size_t>(a) * d + b] * v[b];
      next[a] = s;
    }
    project_out(next);
    double norm = 0.0;
    for (double x : next) norm += x * x;
    norm = std::sqrt(norm);
    if (norm < 1e-300) {
      // v is (numerically) in the null space: restart elsewhere. If the
      // whole constrained space is null, any orthogonal direction is a
      // valid flat component.
      basis = (basis + 1) % d;
      std::fill(v.begin(), v.end(), 0.0);
      v[basis] = 1.0;
      project_out(v);
      double vn = 0.0;
      for (double x : v) vn += x * x;
      if (vn > 0) {
        vn = std::sqrt(vn);
        for (auto& x : v) x /= vn;
      }
      continue;
    }
    for (auto& x : next) x /= norm;
    double diff_minus = 0.0, diff_plus = 0.0;
    for (int a = 0; a < d; ++a) {
      diff_minus += (next[a] - v[a]) * (next[a] - v[a]);
      diff_plus += (next[a] + v[a]) * (next[a] + v[a]);
    }
    v = next;
    if (std::min(diff_minus, diff_plus) <= 1e-20) break;  // |dv| <= 1e-10
  }
  // Deterministic sign: largest-magnitude loading is positive.
  int arg = 0;
  for (int a = 1; a < d; ++a)
    if (std::abs(v[a]) > std::abs(v[arg])) arg = a;
  if (v[arg] < 0.0)
    for (auto& x : v) x = -x;
  return v;
}

}  // namespace

Embedded pca_embed(const std::vector<SampleMatrix>& sets,
                   const std::vector<std::string>& labels) {
  if (sets.empty() || sets.size() != labels.size())
    throw std::invalid_argument("pca_embed: need one label per set");
  const int d = sets[0].d;
  int total = 0;
  for (const auto& s : sets) {
    if (s.d != d) throw std::invalid_argument("pca_embed: dimension mismatch");
    total += s.n;
  }
  if (total < 3) throw std::invalid_argument("pca_embed: pooled n must be >= 3");

  std::vector<double> mu(d, 0.0);
  for (const auto& s : sets)
    for (int i = 0; i < s.n; ++i) {
      const double* r = s.row(i);
      for (int j = 0; j < d; ++j) mu[j] += r[j];
    }
  for (int j = 0; j < d; ++j) mu[j] /= total;

  std::vector<double> cov(static_cast<size_t>(d) * d, 0.0);
  for (const auto& s : sets)
    for (int i = 0; i < s.n; ++i) {
      const double* r = s.row(i);
      for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b)
          cov[static_cast<size_t>(a) * d + b] += (r[a] - mu[a]) * (r[b] - mu[b]);
    }
  double frob = 0.0;
  for (double c : cov) frob += c * c;
  if (frob == 0.0) throw std::invalid_argument("pca_embed: rank-0 data");

  const std::vector<double> p1 = power_iteration(cov, d, nullptr);
  const std::vector<double> p2 = power_iteration(cov, d, &p1);

  Embedded out;
  out.labels = labels;
  for (size_t si = 0; si < sets.size(); ++si) {
    const auto& s = sets[si];
    for (int i = 0; i < s.n; ++i) {
      const double* r = s.row(i);
      double u = 0.0, w = 0.0;
      for (int j = 0; j < d; ++j) {
        u += (r[j] - mu[j]) * p1[j];
        w += (r[j] - mu[j]) * p2[j];
      }
      out.points.push_back({u, w});
      out.set_index.push_back(static_cast<int>(si));
    }
  }
  return out;
}

void write_embed_csv(const Embedded& e, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "set,label,pc1,pc2\n";
  char buf[80];
  for (size_t i = 0; i < e.points.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%d,%s,%.17g,%.17g\n", e.set_index[i],
                  e.labels[e.set_index[i]].c_str(), e.points[i][0],
                  e.points[i][1]);
    out << buf;
  }
}

void write_embed_svg(const Embedded& e, const std::string& path) {
  static const char* kColors[] = {"#e6194b", "#3cb44b", "#4363d8",
                                  "#f58231", "#911eb4", "#000000"};
  double lo = 0.0, hi = 1.0;
  if (!e.points.empty()) {
    lo = hi = e.points[0][0];
    for (const auto& p : e.points) {
      lo = std::min({lo, p[0], p[1]});
      hi = std::max({hi, p[0], p[1]});
    }
    if (hi == lo) hi = lo + 1.0;
  }
  const double size = 640.0, pad = 40.0;
  auto map = [&](double v) {
    return pad + (v - lo) / (hi - lo) * (size - 2.0 * pad);
  };
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size
      << "\" height=\"" << size << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (size_t i = 0; i < e.points.size(); ++i)
    out << "<circle cx=\"" << map(e.points[i][0]) << "\" cy=\""
        << map(e.points[i][1]) << "\" r=\"2\" fill=\""
        << kColors[e.set_index[i] % 6] << "\" fill-opacity=\"0.6\"/>\n";
  for (size_t s = 0; s < e.labels.size(); ++s)
    out << "<text x=\"" << pad << "\" y=\"" << (pad / 2.0 + 14.0 * s)
        << "\" fill=\"" << kColors[s % 6] << "\" font-size=\"12\">"
        << e.labels[s] << "</text>\n";
  out << "</svg>\n";
}

void write_reports_csv(const std::vector<MetricReport>& reports,
                       const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "metric,value,n_a,n_b,seed,params\n";
  for (const auto& r : reports) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", r.value);
    out << r.metric << "," << buf << "," << r.n_a << "," << r.n_b << ","
        << r.seed << ",";
    bool first = true;
    for (const auto& [k, v] : r.params) {
      std::snprintf(buf, sizeof(buf), "%.17g", v);
      out << (first ? "" : ";") << k << "=" << buf;
      first = false;
    }
    out << "\n";
  }
}

void write_reports_json(const std::vector<MetricReport>& reports,
                        const std::string& path) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : reports) {
    nlohmann::json j;
    j["metric"] = r.metric;
    j["value"] = r.value;
    j["n_a"] = r.n_a;
    j["n_b"] = r.n_b;
    j["seed"] = r.seed;
    j["params"] = r.params;
    arr.push_back(std::move(j));
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << arr.dump(2) << "\n";
}

}  // namespace flexpose::metrics
