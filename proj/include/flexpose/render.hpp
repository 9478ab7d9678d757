#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "flexpose/pose.hpp"
#include "flexpose/tensor.hpp"

namespace flexpose::render {

// Row-major RGB8 raster, black background.
struct RasterImage {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> rgb;  // width*height*3

  uint8_t* px(int x, int y) {
    return rgb.data() + (static_cast<size_t>(y) * width + x) * 3;
  }
  const uint8_t* px(int x, int y) const {
    return rgb.data() + (static_cast<size_t>(y) * width + x) * 3;
  }
};

// M probability maps of res x res, each summing to 1.
struct HeatmapStack {
  int joints = 0;
  int res = 0;
  std::vector<double> data;  // [joints][res][res]

  double* map(int j) { return data.data() + static_cast<size_t>(j) * res * res; }
  const double* map(int j) const {
    return data.data() + static_cast<size_t>(j) * res * res;
  }
};

// alpha: Bresenham stick figure, one unique color per bone, thickness 1,
// joints marked with white 2x2 squares. Pixel mapping x_px = round(x*(W-1)),
// coordinates clipped to [0,1] first.
RasterImage rasterize(const Pose& pose, const SkeletonTopology& topo, int w,
                      int h, bool grayscale = false);

// Per-joint isotropic Gaussian bumps (sigma in pixels), normalized to sum 1.
HeatmapStack render_heatmaps(const Pose& pose, int res, double sigma_px = 1.5);

// Analytic beta: per joint the expectation of pixel positions under the
// normalized map, mapped to [0,1] by idx/(res-1). Throws on an all-zero map.
Pose decode_softargmax(const HeatmapStack& stack);

// The re-render noise filter: decode, then draw the clean raster.
std::pair<Pose, RasterImage> roundtrip_filter(const HeatmapStack& stack,
                                              const SkeletonTopology& topo,
                                              int w, int h);

void write_png(const RasterImage& img, const std::string& path);
void write_pose_svg(const Pose& pose, const SkeletonTopology& topo, int w,
                    int h, const std::string& path);

struct BetaTrainConfig {
  int hidden = 128;
  int heatmap_res = 32;
  int batch = 128;
  int iterations = 2500;
  double lr = 1e-3;
};

// Trained beta: fully connected raster -> per-joint heatmap logits ->
// softmax -> soft-argmax coordinates.
class BetaRegressor {
 public:
  BetaRegressor(int width, int height, int joints, const BetaTrainConfig& cfg);

  Pose predict(const RasterImage& img) const;
  std::vector<Pose> predict_batch(const std::vector<RasterImage>& imgs) const;

  int width() const { return width_; }
  int height() const { return height_; }

  // Trainable tensors, in update order.
  std::vector<diff::Tensor*> params();

 private:
  friend BetaRegressor train_beta(const PoseSet&, int, int,
                                  const BetaTrainConfig&, uint64_t,
                                  std::vector<double>*);
  int width_, height_, joints_, res_, hidden_;
  diff::Tensor w1_, b1_, w2_, b2_;
};

// Minimizes |y - beta(alpha(y))|^2 over the rasterized poses. Deterministic
// given the seed; per-epoch mean losses are appended to loss_trace when
// given. Throws if the loss goes non-finite (message names the iteration).
BetaRegressor train_beta(const PoseSet& poses, int w, int h,
                         const BetaTrainConfig& cfg, uint64_t seed,
                         std::vector<double>* loss_trace = nullptr);

}  // namespace flexpose::render
