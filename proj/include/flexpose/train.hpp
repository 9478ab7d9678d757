#pragma once

#include <utility>
#include <vector>

#include "flexpose/generator.hpp"
#include "flexpose/metrics.hpp"
#include "flexpose/pose.hpp"

namespace flexpose::train {

struct SourceTrainConfig {
  int batch = 128;
  int iterations = 20000;
  double lr = 1e-3;
  std::vector<double> bandwidth_multipliers = {0.5, 1.0, 2.0};
  uint64_t seed = 1;

  void validate() const;
};

struct AdaptConfig {
  std::vector<int> layer_set = {3};  // 1-based; layer 1 is the coarsest
  bool mixup_on = true;
  int mixup_size = 1000;
  bool linear_on = true;  // off: blocks become residual 2-layer maps
  int low_rank = 0;       // 0 = dense; r > 0 = LoRA-style U = I + B*A
  double lr = 0.1;
  int batch = 128;
  int iterations = 1000;
  double beta1 = 0.9;
  double beta2 = 0.999;

  static std::vector<int> all_layers(int count);
  void validate(int layers, int shots) const;
};

// Gamma: decoded keypoints plus bone vectors (child - parent), equally
// weighted. Deterministic and differentiable through the soft-argmax, and
// identical whether applied to a pose directly or to generator output.
class FeatureExtractor {
 public:
  explicit FeatureExtractor(const SkeletonTopology& topo);

  int dim() const { return 2 * joints_ + 2 * (joints_ - 1); }

  std::vector<double> features(const Pose& pose) const;
  metrics::SampleMatrix features(const PoseSet& set) const;

  // coords node [B, 2M] -> feature node [B, dim()].
  int build(diff::Graph& graph, int coords_node) const;

 private:
  int joints_;
  std::vector<std::pair<int, int>> bones_;
};

// Fits the generator to the source pose distribution by minimizing the
// summed multi-bandwidth unbiased MMD^2 between extractor features of
// decoded generator output and of real pose batches. Returns the per
// iteration loss trace; the generator is trained in place.
std::vector<double> train_source(gen::Generator& g, const PoseSet& source,
                                 const SourceTrainConfig& cfg);

struct Guidance {
  PoseSet poses;        // T, or T union T* under mixup
  diff::Tensor latents; // [|guidance|, d_z], pairing fixed for the whole run
};

// Guidance set and its fixed latent pairing (one z per guidance pose).
Guidance build_guidance(const PoseSet& t, const AdaptConfig& cfg, int d_z,
                        uint64_t seed);

struct AdaptResult {
  gen::TransferMatrix tau;
  std::vector<double> loss_trace;    // per-iteration minibatch loss
  double initial_loss = 0.0;         // full-guidance loss at identity
  double final_loss = 0.0;           // full-guidance loss of the final tau
};

// Calibrates tau (identity-initialized, only the configured layers
// trainable) against the guidance pairing; the generator stays frozen.
AdaptResult adapt(gen::Generator& g, const Guidance& guidance,
                  const AdaptConfig& cfg, uint64_t seed);

// Mean Eq-style reconstruction loss |Gamma(g_t(z_k)) - Gamma(y_k)|^2 over
// the full guidance set.
double adapt_loss(gen::Generator& g, gen::TransferMatrix& tau,
                  const Guidance& guidance);

struct SweepEntry {
  std::vector<int> layer_set;
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

// Runs adapt once per candidate layer set with a shared seed and guidance.
std::vector<SweepEntry> layer_sweep(gen::Generator& g,
                                    const Guidance& guidance,
                                    const std::vector<std::vector<int>>& sets,
                                    const AdaptConfig& base_cfg,
                                    uint64_t seed);

void write_sweep_csv(const std::vector<SweepEntry>& entries,
                     const std::string& path);

struct SampleResult {
  PoseSet poses;
  std::vector<render::RasterImage> rasters;  // filled when with_rasters
};

// Draws n latents, runs the transferred generator and the re-render filter,
// and returns the decoded poses (plus clean rasters on request).
SampleResult sample_target(gen::Generator& g, gen::TransferMatrix& tau,
                           const SkeletonTopology& topo, int n, uint64_t seed,
                           bool with_rasters = false, int raster_w = 64,
                           int raster_h = 64);

void write_loss_csv(const std::vector<double>& trace, const std::string& path);

}  // namespace flexpose::train
