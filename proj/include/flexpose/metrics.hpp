#pragma once

#include <map>
#include <string>
#include <vector>

#include "flexpose/pose.hpp"

namespace flexpose::metrics {

// n samples x d features, row-major. Flattened pose coordinates (d = 2M)
// or extractor features.
struct SampleMatrix {
  int n = 0;
  int d = 0;
  std::vector<double> data;

  SampleMatrix() = default;
  SampleMatrix(int n_, int d_) : n(n_), d(d_), data(static_cast<size_t>(n_) * d_, 0.0) {}

  double* row(int i) { return data.data() + static_cast<size_t>(i) * d; }
  const double* row(int i) const {
    return data.data() + static_cast<size_t>(i) * d;
  }
};

// Every reported value carries its parameters; no bare numbers.
struct MetricReport {
  std::string metric;
  double value = 0.0;
  std::map<std::string, double> params;
  int n_a = 0;
  int n_b = 0;
  uint64_t seed = 0;
};

SampleMatrix flatten_poses(const PoseSet& set);

// Unbiased MMD^2 estimator with RBF kernel; may be slightly negative.
double mmd2(const SampleMatrix& x, const SampleMatrix& y, double sigma);

// Median pairwise distance over the pooled set, divided by sqrt(2).
double median_bandwidth(const SampleMatrix& x, const SampleMatrix& y);

// Gaussian-fit Wasserstein-2: |mu_x-mu_y|^2 + Tr(Sx + Sy - 2(Sx Sy)^{1/2}).
// Unbiased covariances, regularized with 1e-9 I before the square root.
double frechet_distance(const SampleMatrix& x, const SampleMatrix& y);

// Same formula evaluated from explicit Gaussian parameters (covariances
// given exactly); used directly and by the diagonal closed-form tests.
double frechet_gaussian(const std::vector<double>& mu_x,
                        const std::vector<double>& cov_x,
                        const std::vector<double>& mu_y,
                        const std::vector<double>& cov_y, int d);

// Fraction of (sample, joint) pairs within rho (fraction of canvas width),
// ties inclusive.
double pck(const PoseSet& pred, const PoseSet& gt, double rho);

// Mean squared Euclidean distance in pixel units (coordinates scaled by
// canvas_px - 1).
double mse(const PoseSet& pred, const PoseSet& gt, double canvas_px);

struct Embedded {
  std::vector<std::array<double, 2>> points;  // pooled, in input order
  std::vector<int> set_index;                 // which input set each row is from
  std::vector<std::string> labels;            // one per input set
};

// Deterministic 2-component PCA of the pooled rows: power iteration on the
// covariance (tol 1e-10), sign fixed so the largest-magnitude loading is
// positive.
Embedded pca_embed(const std::vector<SampleMatrix>& sets,
                   const std::vector<std::string>& labels);

void write_embed_csv(const Embedded& e, const std::string& path);
void write_embed_svg(const Embedded& e, const std::string& path);

void write_reports_csv(const std::vector<MetricReport>& reports,
                       const std::string& path);
void write_reports_json(const std::vector<MetricReport>& reports,
                        const std::string& path);

}  // namespace flexpose::metrics
