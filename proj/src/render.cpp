#include "flexpose/render.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <zlib.h>

#include "flexpose/adam.hpp"
#include "flexpose/graph.hpp"
#include "flexpose/kernels.hpp"

namespace flexpose::render {

namespace {

inline int to_px(double v, int extent) {
  const double c = std::clamp(v, 0.0, 1.0);
  return static_cast<int>(std::lround(c * (extent - 1)));
}

void put(RasterImage& img, int x, int y, uint8_t r, uint8_t g, uint8_t b) {
  if (x < 0 || x >= img.width || y < 0 || y >= img.height) return;
  uint8_t* p = img.px(x, y);
  p[0] = r;
  p[1] = g;
  p[2] = b;
}

void draw_line(RasterImage& img, int x0, int y0, int x1, int y1, Rgb color) {
  int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
  int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  while (true) {
    put(img, x0, y0, color[0], color[1], color[2]);
    if (x0 == x1 && y0 == y1) break;
    const int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

}  // namespace

RasterImage rasterize(const Pose& pose, const SkeletonTopology& topo, int w,
                      int h, bool grayscale) {
  if (w < 8 || h < 8)
    throw std::invalid_argument("rasterize: canvas must be at least 8x8");
  if (auto violation = validate_pose(pose, topo))
    throw std::invalid_argument("rasterize: invalid pose: " + *violation);

  RasterImage img;
  img.width = w;
  img.height = h;
  img.rgb.assign(static_cast<size_t>(w) * h * 3, 0);

  for (size_t b = 0; b < topo.bones.size(); ++b) {
    const auto [pj, cj] = topo.bones[b];
    Rgb color = topo.bone_colors[b];
    if (grayscale) {
      // Luma-weighted reduction; bones keep distinct intensities.
      const uint8_t y = static_cast<uint8_t>(std::lround(
          0.299 * color[0] + 0.587 * color[1] + 0.114 * color[2]));
      color = {y, y, y};
    }
    draw_line(img, to_px(pose.coords[pj].x, w), to_px(pose.coords[pj].y, h),
              to_px(pose.coords[cj].x, w), to_px(pose.coords[cj].y, h), color);
  }
  for (const auto& c : pose.coords) {
    const int x = to_px(c.x, w), y = to_px(c.y, h);
    for (int dy = 0; dy < 2; ++dy)
      for (int dx = 0; dx < 2; ++dx) put(img, x + dx, y + dy, 255, 255, 255);
  }
  return img;
}

HeatmapStack render_heatmaps(const Pose& pose, int res, double sigma_px) {
  if (res < 2) throw std::invalid_argument("render_heatmaps: res must be >= 2");
  if (!(sigma_px > 0.0))
    throw std::invalid_argument("render_heatmaps: sigma must be > 0");

  HeatmapStack st;
  st.joints = static_cast<int>(pose.coords.size());
  st.res = res;
  st.data.assign(static_cast<size_t>(st.joints) * res * res, 0.0);

  const double inv = 1.0 / (2.0 * sigma_px * sigma_px);
  for (int j = 0; j < st.joints; ++j) {
    const double cx = pose.coords[j].x * (res - 1);
    const double cy = pose.coords[j].y * (res - 1);
    double* m = st.map(j);
    double total = 0.0;
    for (int r = 0; r < res; ++r)
      for (int c = 0; c < res; ++c) {
        const double v =
            std::exp(-((c - cx) * (c - cx) + (r - cy) * (r - cy)) * inv);
        m[r * res + c] = v;
        total += v;
      }
    if (total <= 0.0)
      throw std::runtime_error("render_heatmaps: joint too far off canvas");
    const double norm = 1.0 / total;
    for (int i = 0; i < res * res; ++i) m[i] *= norm;
  }
  return st;
}

Pose decode_softargmax(const HeatmapStack& stack) {
  Pose pose;
  pose.coords.resize(stack.joints);
  const int res = stack.res;
  const double inv = 1.0 / (res - 1);
  for (int j = 0; j < stack.joints; ++j) {
    const double* m = stack.map(j);
    double total = 0.0, sx = 0.0, sy = 0.0;
    for (int r = 0; r < res; ++r)
      for (int c = 0; c < res; ++c) {
        const double v = m[r * res + c];
        total += v;
        sx += v * (c * inv);
        sy += v * (r * inv);
      }
    if (!(total > 0.0)) throw std::runtime_error("degenerate heatmap");
    pose.coords[j] = {sx / total, sy / total};
  }
  return pose;
}

std::pair<Pose, RasterImage> roundtrip_filter(const HeatmapStack& stack,
                                              const SkeletonTopology& topo,
                                              int w, int h) {
  Pose decoded = decode_softargmax(stack);
  RasterImage img = rasterize(decoded, topo, w, h);
  return {std::move(decoded), std::move(img)};
}

namespace {

void png_chunk(std::ofstream& out, const char* tag,
               const std::vector<uint8_t>& payload) {
  auto be32 = [&](uint32_t v) {
    const uint8_t b[4] = {static_cast<uint8_t>(v >> 24),
                          static_cast<uint8_t>(v >> 16),
                          static_cast<uint8_t>(v >> 8),
                          static_cast<uint8_t>(v)};
    out.write(reinterpret_cast<const char*>(b), 4);
  };
  be32(static_cast<uint32_t>(payload.size()));
  out.write(tag, 4);
  if (!payload.empty())
    out.write(reinterpret_cast<const char*>(payload.data()),
              static_cast<std::streamsize>(payload.size()));
  uLong crc = crc32(0L, reinterpret_cast<const Bytef*>(tag), 4);
  if (!payload.empty()) crc = crc32(crc, payload.data(), static_cast<uInt>(payload.size()));
  be32(static_cast<uint32_t>(crc));
}

}  // namespace

void write_png(const RasterImage& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  static const uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  out.write(reinterpret_cast<const char*>(sig), 8);

  std::vector<uint8_t> ihdr(13);
  auto put32 = [&](size_t at, uint32_t v) {
    ihdr[at] = static_cast<uint8_t>(v >> 24);
    ihdr[at + 1] = static_cast<uint8_t>(v >> 16);
    ihdr[at + 2] = static_cast<uint8_t>(v >> 8);
    ihdr[at + 3] = static_cast<uint8_t>(v);
  };
  put32(0, static_cast<uint32_t>(img.width));
  put32(4, static_cast<uint32_t>(img.height));
  ihdr[8] = 8;   // bit depth
  ihdr[9] = 2;   // truecolor
  ihdr[10] = ihdr[11] = ihdr[12] = 0;
  png_chunk(out, "IHDR", ihdr);

  // Scanlines with filter byte 0, then one zlib stream.
  std::vector<uint8_t> raw;
  raw.reserve(static_cast<size_t>(img.height) * (1 + 3 * img.width));
  for (int y = 0; y < img.height; ++y) {
    raw.push_back(0);
    raw.insert(raw.end(), img.rgb.begin() + static_cast<size_t>(y) * img.width * 3,
               img.rgb.begin() + static_cast<size_t>(y + 1) * img.width * 3);
  }
  uLongf bound = compressBound(static_cast<uLong>(raw.size()));
  std::vector<uint8_t> idat(bound);
  if (compress2(idat.data(), &bound, raw.data(), static_cast<uLong>(raw.size()),
                6) != Z_OK)
    throw std::runtime_error("png deflate failed");
  idat.resize(bound);
  png_chunk(out, "IDAT", idat);
  png_chunk(out, "IEND", {});
  if (!out) throw std::runtime_error("write failed: " + path);
}

void write_pose_svg(const Pose& pose, const SkeletonTopology& topo, int w,
                    int h, const std::string& path) {
  if (auto violation = validate_pose(pose, topo))
    throw std::invalid_argument("write_pose_svg: invalid pose: " + *violation);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w
      << "\" height=\"" << h << "\" viewBox=\"0 0 " << w << " " << h
      << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"black\"/>\n";
  for (size_t b = 0; b < topo.bones.size(); ++b) {
    const auto [pj, cj] = topo.bones[b];
    const Rgb& c = topo.bone_colors[b];
    out << "<line x1=\"" << pose.coords[pj].x * (w - 1) << "\" y1=\""
        << pose.coords[pj].y * (h - 1) << "\" x2=\""
        << pose.coords[cj].x * (w - 1) << "\" y2=\""
        << pose.coords[cj].y * (h - 1) << "\" stroke=\"rgb("
        << int(c[0]) << "," << int(c[1]) << "," << int(c[2])
        << ")\" stroke-width=\"1\"/>\n";
  }
  for (const auto& c : pose.coords)
    out << "<rect x=\"" << c.x * (w - 1) << "\" y=\"" << c.y * (h - 1)
        << "\" width=\"2\" height=\"2\" fill=\"white\"/>\n";
  out << "</svg>\n";
}

BetaRegressor::BetaRegressor(int width, int height, int joints,
                             const BetaTrainConfig& cfg)
    : width_(width),
      height_(height),
      joints_(joints),
      res_(cfg.heatmap_res),
      hidden_(cfg.hidden),
      w1_({width * height * 3, cfg.hidden}),
      b1_({cfg.hidden}),
      w2_({cfg.hidden, joints * cfg.heatmap_res * cfg.heatmap_res}),
      b2_({joints * cfg.heatmap_res * cfg.heatmap_res}) {}

std::vector<diff::Tensor*> BetaRegressor::params() {
  return {&w1_, &b1_, &w2_, &b2_};
}

std::vector<Pose> BetaRegressor::predict_batch(
    const std::vector<RasterImage>& imgs) const {
  const int n = static_cast<int>(imgs.size());
  const int din = width_ * height_ * 3;
  diff::Tensor x({n, din});
  for (int i = 0; i < n; ++i) {
    if (imgs[i].width != width_ || imgs[i].height != height_)
      throw std::invalid_argument("beta: raster size mismatch");
    for (int p = 0; p < din; ++p)
      x.data[static_cast<size_t>(i) * din + p] = imgs[i].rgb[p] / 255.0;
  }

  diff::Tensor hidden({n, hidden_});
  kern::matmul_nn(x.data.data(), w1_.data.data(), hidden.data.data(), n, din,
                  hidden_);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < hidden_; ++j) {
      double v = hidden.data[static_cast<size_t>(i) * hidden_ + j] + b1_.data[j];
      hidden.data[static_cast<size_t>(i) * hidden_ + j] = v >= 0.0 ? v : 0.2 * v;
    }

  const int dout = joints_ * res_ * res_;
  diff::Tensor logits({n, dout});
  kern::matmul_nn(hidden.data.data(), w2_.data.data(), logits.data.data(), n,
                  hidden_, dout);

  std::vector<Pose> out(n);
  const int g = res_ * res_;
  const double inv = 1.0 / (res_ - 1);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    out[i].coords.resize(joints_);
    for (int j = 0; j < joints_; ++j) {
      double* m = logits.data.data() + static_cast<size_t>(i) * dout +
                  static_cast<size_t>(j) * g;
      for (int p = 0; p < g; ++p) m[p] += b2_.data[static_cast<size_t>(j) * g + p];
      double mx = m[0];
      for (int p = 1; p < g; ++p) mx = std::max(mx, m[p]);
      double total = 0.0, sx = 0.0, sy = 0.0;
      for (int r = 0; r < res_; ++r)
        for (int c = 0; c < res_; ++c) {
          const double e = std::exp(m[r * res_ + c] - mx);
          total += e;
          sx += e * (c * inv);
          sy += e * (r * inv);
        }
      out[i].coords[j] = {sx / total, sy / total};
    }
  }
  return out;
}

Pose BetaRegressor::predict(const RasterImage& img) const {
  return predict_batch({img})[0];
}

BetaRegressor train_beta(const PoseSet& poses, int w, int h,
                         const BetaTrainConfig& cfg, uint64_t seed,
                         std::vector<double>* loss_trace) {
  const int n = static_cast<int>(poses.poses.size());
  if (n < 100)
    throw std::invalid_argument("train_beta: need at least 100 poses");
  const int m = poses.topology.joint_count;
  const int din = w * h * 3;

  // Pre-render every training pose once (bytes; converted per batch).
  std::vector<RasterImage> rasters(n);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i)
    rasters[i] = rasterize(poses.poses[i], poses.topology, w, h);

  BetaRegressor beta(w, h, m, cfg);
  Rng init_rng(derive_seed(seed, 0));
  auto init = [&](diff::Tensor& t, int fan_in) {
    const double std = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (auto& v : t.data) v = init_rng.normal(0.0, std);
  };
  init(beta.w1_, din);
  init(beta.w2_, cfg.hidden);

  const int batch = std::min(cfg.batch, n);
  diff::Graph graph;
  const int x_in = graph.leaf(diff::Tensor({batch, din}), "raster_batch");
  const int y_in = graph.leaf(diff::Tensor({batch, 2 * m}), "target_coords");
  const int p_w1 = graph.param(&beta.w1_, true, "beta.w1");
  const int p_b1 = graph.param(&beta.b1_, true, "beta.b1");
  const int p_w2 = graph.param(&beta.w2_, true, "beta.w2");
  const int p_b2 = graph.param(&beta.b2_, true, "beta.b2");

  int hid = graph.leaky_relu(graph.add(graph.matmul(x_in, p_w1), p_b1));
  int logits = graph.add(graph.matmul(hid, p_w2), p_b2);
  int prob = graph.softmax_groups(logits, cfg.heatmap_res * cfg.heatmap_res);
  int coords = graph.heatmap_expect(prob, m, cfg.heatmap_res);
  int loss = graph.scalar_mul(graph.sqerr(coords, y_in), 1.0 / batch);

  diff::Adam opt(cfg.lr);
  for (auto* p : beta.params()) opt.attach(p);

  Rng order_rng(derive_seed(seed, 1));
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;

  diff::Tensor xb({batch, din}), yb({batch, 2 * m});
  const int iters_per_epoch = std::max(1, n / batch);
  double epoch_loss = 0.0;
  int epoch_count = 0;

  for (int it = 0; it < cfg.iterations; ++it) {
    if (it % iters_per_epoch == 0) {
      // Fisher-Yates reshuffle at each epoch boundary.
      for (int i = n - 1; i > 0; --i)
        std::swap(order[i], order[static_cast<int>(order_rng.uniform_index(i + 1))]);
      if (epoch_count > 0 && loss_trace)
        loss_trace->push_back(epoch_loss / epoch_count);
      epoch_loss = 0.0;
      epoch_count = 0;
    }
    const int base = (it % iters_per_epoch) * batch;
    for (int b = 0; b < batch; ++b) {
      const int idx = order[(base + b) % n];
      const RasterImage& img = rasters[idx];
      for (int p = 0; p < din; ++p)
        xb.data[static_cast<size_t>(b) * din + p] = img.rgb[p] / 255.0;
      for (int j = 0; j < m; ++j) {
        yb.data[static_cast<size_t>(b) * 2 * m + 2 * j] =
            poses.poses[idx].coords[j].x;
        yb.data[static_cast<size_t>(b) * 2 * m + 2 * j + 1] =
            poses.poses[idx].coords[j].y;
      }
    }
    graph.set_value(x_in, xb);
    graph.set_value(y_in, yb);
    try {
      graph.forward();
      graph.backward(loss);
    } catch (const std::runtime_error& e) {
      throw std::runtime_error("train_beta diverged at iteration " +
                               std::to_string(it) + ": " + e.what());
    }
    epoch_loss += graph.value(loss).data[0];
    ++epoch_count;
    opt.step({&graph.grad(p_w1), &graph.grad(p_b1), &graph.grad(p_w2),
              &graph.grad(p_b2)});
  }
  if (epoch_count > 0 && loss_trace)
    loss_trace->push_back(epoch_loss / epoch_count);
  return beta;
}

}  // namespace flexpose::render
