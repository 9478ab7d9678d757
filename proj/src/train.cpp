#include "flexpose/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "flexpose/adam.hpp"
#include "flexpose/rng.hpp"

namespace flexpose::train {

void SourceTrainConfig::validate() const {
  if (batch < 4) throw std::invalid_argument("source batch must be >= 4");
  if (iterations < 0) throw std::invalid_argument("iterations must be >= 0");
  if (!(lr > 0.0)) throw std::invalid_argument("lr must be > 0");
  if (bandwidth_multipliers.empty())
    throw std::invalid_argument("need at least one bandwidth multiplier");
}

std::vector<int> AdaptConfig::all_layers(int count) {
  std::vector<int> out(count);
  for (int l = 0; l < count; ++l) out[l] = l + 1;
  return out;
}

void AdaptConfig::validate(int layers, int shots) const {
  if (layer_set.empty()) throw std::invalid_argument("layer set is empty");
  for (int l : layer_set)
    if (l < 1 || l > layers)
      throw std::invalid_argument("layer set out of range [1, L]");
  if (mixup_on && shots < 2)
    throw std::invalid_argument("mixup needs at least two shots");
  if (!mixup_on && shots < 1)
    throw std::invalid_argument("adaptation needs at least one shot");
  if (!(lr > 0.0) || batch < 1 || iterations < 0 || mixup_size < 1)
    throw std::invalid_argument("bad adapt config");
  if (low_rank < 0) throw std::invalid_argument("low_rank must be >= 0");
  if (low_rank > 0 && !linear_on)
    throw std::invalid_argument("low_rank and nonlinear modes are exclusive");
}

FeatureExtractor::FeatureExtractor(const SkeletonTopology& topo)
    : joints_(topo.joint_count), bones_(topo.bones) {
  topo.validate();
}

std::vector<double> FeatureExtractor::features(const Pose& pose) const {
  if (static_cast<int>(pose.coords.size()) != joints_)
    throw std::invalid_argument("featurize: joint count mismatch");
  std::vector<double> out;
  out.reserve(dim());
  for (const auto& c : pose.coords) {
    out.push_back(c.x);
    out.push_back(c.y);
  }
  for (const auto& [p, c] : bones_) {
    out.push_back(pose.coords[c].x - pose.coords[p].x);
    out.push_back(pose.coords[c].y - pose.coords[p].y);
  }
  return out;
}

metrics::SampleMatrix FeatureExtractor::features(const PoseSet& set) const {
  metrics::SampleMatrix out(static_cast<int>(set.poses.size()), dim());
  for (size_t i = 0; i < set.poses.size(); ++i) {
    const auto f = features(set.poses[i]);
    std::copy(f.begin(), f.end(), out.row(static_cast<int>(i)));
  }
  return out;
}

int FeatureExtractor::build(diff::Graph& graph, int coords_node) const {
  // Bone vectors as a constant linear map: row b of the matrix selects
  // child minus parent for one coordinate.
  const int nb = static_cast<int>(bones_.size());
  diff::Tensor bone_mat({2 * nb, 2 * joints_});
  for (int b = 0; b < nb; ++b) {
    const auto [p, c] = bones_[b];
    bone_mat.at(2 * b, 2 * c) = 1.0;
    bone_mat.at(2 * b, 2 * p) = -1.0;
    bone_mat.at(2 * b + 1, 2 * c + 1) = 1.0;
    bone_mat.at(2 * b + 1, 2 * p + 1) = -1.0;
  }
  const int mat = graph.leaf(std::move(bone_mat), "bone_matrix");
  const int bones = graph.matmul_bt(coords_node, mat);
  return graph.concat(coords_node, bones);
}

namespace {

diff::Tensor normal_batch(Rng& rng, int n, int d) {
  diff::Tensor t({n, d});
  for (auto& v : t.data) v = rng.normal();
  return t;
}

}  // namespace

std::vector<double> train_source(gen::Generator& g, const PoseSet& source,
                                 const SourceTrainConfig& cfg) {
  cfg.validate();
  if (source.poses.empty())
    throw std::invalid_argument("train_source: empty source set");
  if (source.topology.joint_count != g.cfg.joints)
    throw std::invalid_argument("train_source: joint count mismatch");

  const FeatureExtractor gamma(source.topology);
  const metrics::SampleMatrix real_feats = gamma.features(source);

  diff::Graph graph;
  gen::ForwardNodes fwd =
      gen::build_forward(graph, g, nullptr, cfg.batch, true, false);
  const int feats = gamma.build(graph, fwd.coords);
  const int real = graph.leaf(diff::Tensor({cfg.batch, gamma.dim()}), "real");
  const int loss = graph.mmd2(feats, real, cfg.bandwidth_multipliers);

  diff::Adam opt(cfg.lr);
  const auto leaves = graph.trainable();
  if (g.parameters().size() != leaves.size())
    throw std::logic_error("trainable leaves do not match parameters");
  // Leaf order is the pairing contract between grads and moments.
  for (int id : leaves) opt.attach(graph.external_of(id));

  Rng z_rng(derive_seed(cfg.seed, 101));
  Rng batch_rng(derive_seed(cfg.seed, 202));

  std::vector<double> trace;
  trace.reserve(cfg.iterations);
  diff::Tensor real_batch({cfg.batch, gamma.dim()});

  for (int it = 0; it < cfg.iterations; ++it) {
    graph.set_value(fwd.z, normal_batch(z_rng, cfg.batch, g.cfg.d_z));
    for (int b = 0; b < cfg.batch; ++b) {
      const auto idx = batch_rng.uniform_index(source.poses.size());
      std::copy_n(real_feats.row(static_cast<int>(idx)), gamma.dim(),
                  real_batch.data.data() + static_cast<size_t>(b) * gamma.dim());
    }
    graph.set_value(real, real_batch);
    try {
      graph.forward();
      graph.backward(loss);
    } catch (const std::runtime_error& e) {
      throw std::runtime_error("train_source failed at iteration " +
                               std::to_string(it) + ": " + e.what());
    }
    trace.push_back(graph.value(loss).data[0]);
    std::vector<const diff::Tensor*> grads;
    grads.reserve(leaves.size());
    for (int id : leaves)
      grads.push_back(graph.has_grad(id) ? &graph.grad(id) : nullptr);
    opt.step(grads);
  }
  return trace;
}

Guidance build_guidance(const PoseSet& t, const AdaptConfig& cfg, int d_z,
                        uint64_t seed) {
  const int shots = static_cast<int>(t.poses.size());
  if (cfg.mixup_on && shots < 2)
    throw std::invalid_argument("mixup needs at least two shots");
  if (!cfg.mixup_on && shots < 1)
    throw std::invalid_argument("adaptation needs at least one shot");
  if (cfg.mixup_size < 1) throw std::invalid_argument("mixup_size must be >= 1");
  Guidance out;
  out.poses = t;
  if (cfg.mixup_on) {
    PoseSet star = pose_mixup(t, cfg.mixup_size, derive_seed(seed, 1));
    for (auto& p : star.poses) out.poses.poses.push_back(std::move(p));
    out.poses.labels.clear();
  }
  Rng rng(derive_seed(seed, 2));
  out.latents =
      normal_batch(rng, static_cast<int>(out.poses.poses.size()), d_z);
  return out;
}

namespace {

gen::TransferMatrix make_tau(const gen::GeneratorConfig& gcfg,
                             const AdaptConfig& cfg, uint64_t seed) {
  gen::TransferMatrix tau = gen::TransferMatrix::identity(gcfg);
  for (int l : cfg.layer_set) {
    if (!cfg.linear_on)
      tau.set_nonlinear(l, derive_seed(seed, 1000 + l));
    else if (cfg.low_rank > 0)
      tau.set_low_rank(l, cfg.low_rank, derive_seed(seed, 1000 + l));
    else
      tau.set_dense(l);
  }
  return tau;
}

// Full-guidance reconstruction loss, evaluated in chunks.
double full_loss(gen::Generator& g, gen::TransferMatrix& tau,
                 const Guidance& guidance, const FeatureExtractor& gamma) {
  const int n = static_cast<int>(guidance.poses.poses.size());
  const int d_z = g.cfg.d_z;
  const metrics::SampleMatrix target = gamma.features(guidance.poses);
  double total = 0.0;
  const int chunk = 256;
  for (int base = 0; base < n; base += chunk) {
    const int b = std::min(chunk, n - base);
    diff::Graph graph;
    gen::ForwardNodes fwd = gen::build_forward(graph, g, &tau, b, false, false);
    const int feats = gamma.build(graph, fwd.coords);
    diff::Tensor z({b, d_z});
    std::copy_n(guidance.latents.data.data() + static_cast<size_t>(base) * d_z,
                static_cast<size_t>(b) * d_z, z.data.data());
    graph.set_value(fwd.z, z);
    graph.forward();
    const diff::Tensor& f = graph.value(feats);
    for (int i = 0; i < b; ++i) {
      const double* row = f.data.data() + static_cast<size_t>(i) * gamma.dim();
      const double* want = target.row(base + i);
      for (int k = 0; k < gamma.dim(); ++k) {
        const double diff = row[k] - want[k];
        total += diff * diff;
      }
    }
  }
  return total / n;
}

}  // namespace

double adapt_loss(gen::Generator& g, gen::TransferMatrix& tau,
                  const Guidance& guidance) {
  const FeatureExtractor gamma(guidance.poses.topology);
  return full_loss(g, tau, guidance, gamma);
}

AdaptResult adapt(gen::Generator& g, const Guidance& guidance,
                  const AdaptConfig& cfg, uint64_t seed) {
  cfg.validate(g.cfg.layers, static_cast<int>(guidance.poses.poses.size()));
  const int n = static_cast<int>(guidance.poses.poses.size());
  if (guidance.latents.shape != std::vector<int>{n, g.cfg.d_z})
    throw std::invalid_argument("guidance latents do not match pose count");

  const FeatureExtractor gamma(guidance.poses.topology);
  const metrics::SampleMatrix target = gamma.features(guidance.poses);

  AdaptResult result;
  result.tau = make_tau(g.cfg, cfg, seed);
  result.initial_loss = full_loss(g, result.tau, guidance, gamma);
  if (cfg.iterations == 0) {
    result.final_loss = result.initial_loss;
    return result;
  }

  const int batch = std::min(cfg.batch, n);
  diff::Graph graph;
  gen::ForwardNodes fwd =
      gen::build_forward(graph, g, &result.tau, batch, false, true);
  const int feats = gamma.build(graph, fwd.coords);
  const int want = graph.leaf(diff::Tensor({batch, gamma.dim()}), "target");
  const int loss = graph.scalar_mul(graph.sqerr(feats, want), 1.0 / batch);

  diff::Adam opt(cfg.lr, cfg.beta1, cfg.beta2);
  const auto leaves = graph.trainable();
  if (result.tau.trainables().size() != leaves.size())
    throw std::logic_error("tau trainables do not match graph leaves");
  for (int id : leaves) opt.attach(graph.external_of(id));

  Rng batch_rng(derive_seed(seed, 3));
  diff::Tensor zb({batch, g.cfg.d_z}), tb({batch, gamma.dim()});

  for (int it = 0; it < cfg.iterations; ++it) {
    for (int b = 0; b < batch; ++b) {
      const auto idx = batch_rng.uniform_index(n);
      std::copy_n(
          guidance.latents.data.data() + idx * g.cfg.d_z, g.cfg.d_z,
          zb.data.data() + static_cast<size_t>(b) * g.cfg.d_z);
      std::copy_n(target.row(static_cast<int>(idx)), gamma.dim(),
                  tb.data.data() + static_cast<size_t>(b) * gamma.dim());
    }
    graph.set_value(fwd.z, zb);
    graph.set_value(want, tb);
    try {
      graph.forward();
      graph.backward(loss);
    } catch (const std::runtime_error& e) {
      throw std::runtime_error("adapt failed at iteration " +
                               std::to_string(it) + ": " + e.what());
    }
    result.loss_trace.push_back(graph.value(loss).data[0]);
    std::vector<const diff::Tensor*> grads;
    grads.reserve(leaves.size());
    for (int id : leaves)
      grads.push_back(graph.has_grad(id) ? &graph.grad(id) : nullptr);
    opt.step(grads);
  }
  result.final_loss = full_loss(g, result.tau, guidance, gamma);
  return result;
}

std::vector<SweepEntry> layer_sweep(gen::Generator& g,
                                    const Guidance& guidance,
                                    const std::vector<std::vector<int>>& sets,
                                    const AdaptConfig& base_cfg,
                                    uint64_t seed) {
  if (sets.empty()) throw std::invalid_argument("layer_sweep: no layer sets");
  std::vector<SweepEntry> out;
  for (const auto& layer_set : sets) {
    AdaptConfig cfg = base_cfg;
    cfg.layer_set = layer_set;
    AdaptResult r = adapt(g, guidance, cfg, seed);
    out.push_back({layer_set, r.initial_loss, r.final_loss});
  }
  return out;
}

void write_sweep_csv(const std::vector<SweepEntry>& entries,
                     const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "layers,initial_loss,final_loss\n";
  for (const auto& e : entries) {
    for (size_t i = 0; i < e.layer_set.size(); ++i)
      out << (i ? " " : "") << e.layer_set[i];
    char buf[64];
    std::snprintf(buf, sizeof(buf), ",%.17g,", e.initial_loss);
    out << buf;
    std::snprintf(buf, sizeof(buf), "%.17g\n", e.final_loss);
    out << buf;
  }
}

SampleResult sample_target(gen::Generator& g, gen::TransferMatrix& tau,
                           const SkeletonTopology& topo, int n, uint64_t seed,
                           bool with_rasters, int raster_w, int raster_h) {
  if (n < 1) throw std::invalid_argument("sample_target: n must be >= 1");
  if (topo.joint_count != g.cfg.joints)
    throw std::invalid_argument("sample_target: topology mismatch");

  SampleResult out;
  out.poses.topology = topo;
  out.poses.poses.reserve(n);
  if (with_rasters) out.rasters.reserve(n);

  Rng z_rng(derive_seed(seed, 7));
  const int64_t max_attempts = static_cast<int64_t>(10) * n;
  int64_t attempts = 0;
  int skipped = 0;
  const int chunk = 256;

  while (static_cast<int>(out.poses.poses.size()) < n) {
    const int want = n - static_cast<int>(out.poses.poses.size());
    const int b = std::min(chunk, want);
    attempts += b;
    if (attempts > max_attempts + n)
      throw std::runtime_error("sample_target: too many degenerate samples (" +
                               std::to_string(skipped) + " skipped)");

    diff::Graph graph;
    gen::ForwardNodes fwd = gen::build_forward(graph, g, &tau, b, false, false);
    graph.set_value(fwd.z, normal_batch(z_rng, b, g.cfg.d_z));
    graph.forward();
    const diff::Tensor& maps = graph.value(fwd.heatmaps);
    const int per = g.cfg.joints * g.cfg.res * g.cfg.res;
    for (int i = 0; i < b; ++i) {
      render::HeatmapStack st;
      st.joints = g.cfg.joints;
      st.res = g.cfg.res;
      st.data.assign(maps.data.begin() + static_cast<size_t>(i) * per,
                     maps.data.begin() + static_cast<size_t>(i + 1) * per);
      try {
        auto [pose, raster] =
            render::roundtrip_filter(st, topo, raster_w, raster_h);
        out.poses.poses.push_back(std::move(pose));
        if (with_rasters) out.rasters.push_back(std::move(raster));
      } catch (const std::runtime_error&) {
        ++skipped;  // replacement drawn on the next chunk
      }
    }
  }
  return out;
}

void write_loss_csv(const std::vector<double>& trace,
                    const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "iteration,loss\n";
  char buf[64];
  for (size_t i = 0; i < trace.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g\n", i, trace[i]);
    out << buf;
  }
}

}  // namespace flexpose::train
