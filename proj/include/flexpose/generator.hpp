#pragma once

#include <optional>
#include <string>
#include <vector>

#include "flexpose/graph.hpp"
#include "flexpose/render.hpp"
#include "flexpose/tensor.hpp"

namespace flexpose::gen {

struct GeneratorConfig {
  int d_z = 64;    // latent dim
  int d_w = 64;    // mapping output dim
  int layers = 8;  // L
  int d_h = 64;    // synthesis width
  int joints = 13;
  int res = 32;    // heatmap resolution

  int d_s() const { return 2 * d_h; }  // style dim per layer (scale, shift)
  void validate() const;
};

// The factorized generator: mapping f (3-layer MLP), affine heads A (one
// linear map per layer producing the style code), synthesis phi (learned
// start vector, L modulated layers, softmax heatmap head).
struct Generator {
  GeneratorConfig cfg;
  diff::Tensor map_w1, map_b1, map_w2, map_b2, map_w3, map_b3;
  std::vector<diff::Tensor> affine_w, affine_b;
  diff::Tensor start;
  std::vector<diff::Tensor> syn_w, syn_b;
  diff::Tensor head_w, head_b;

  // All tensors in a fixed serialization order.
  std::vector<std::pair<std::string, diff::Tensor*>> named_parameters();
  std::vector<diff::Tensor*> parameters();
  int64_t parameter_count();
};

Generator init_generator(const GeneratorConfig& cfg, uint64_t seed);

// Style codes for one latent: L vectors of d_s entries.
struct StyleCodes {
  std::vector<std::vector<double>> s;
};

enum class BlockKind : uint8_t { identity = 0, dense = 1, low_rank = 2, nonlinear = 3 };

// One per-layer block of the transfer function tau. Dense blocks act as
// s -> U s; low-rank as U = I + B*A (the comparison arm); nonlinear as the
// residual 2-layer map s -> s + W2*lrelu(W1*s). Every kind starts exactly
// at the identity.
struct TransferBlock {
  BlockKind kind = BlockKind::identity;
  diff::Tensor dense;
  diff::Tensor lr_a, lr_b;
  diff::Tensor nl_w1, nl_w2;

  std::vector<diff::Tensor*> trainables();
};

struct TransferMatrix {
  int d_s = 0;
  std::vector<TransferBlock> blocks;  // one per layer

  static TransferMatrix identity(const GeneratorConfig& cfg);

  // layer is 1-based (layer 1 is the coarsest).
  void set_dense(int layer);
  void set_low_rank(int layer, int rank, uint64_t seed);
  void set_nonlinear(int layer, uint64_t seed);

  bool is_identity(int layer) const;
  std::vector<diff::Tensor*> trainables();
  // Frobenius distance of a block from the identity map.
  double distance_from_identity(int layer) const;
};

// Node handles into a generator forward graph.
struct ForwardNodes {
  int z = -1;                   // [B, d_z] owned leaf, swap per iteration
  std::vector<int> styles_pre;  // style codes before tau, per layer
  std::vector<int> styles_post; // after tau (equal to pre at identity blocks)
  int heatmaps = -1;            // [B, M*R*R], softmax per joint
  int coords = -1;              // [B, 2M] soft-argmax decode
  std::vector<int> gen_params;  // generator parameter leaves
  std::vector<int> tau_params;  // tau parameter leaves
};

// Builds z -> heatmaps/coords into the graph. tau may be null (source
// forward). Identity blocks add no nodes, so an all-identity tau is
// bit-identical to no tau. Parameter leaves reference the generator (and
// tau) tensors; train flags choose which side receives gradients.
ForwardNodes build_forward(diff::Graph& graph, Generator& g,
                           TransferMatrix* tau, int batch,
                           bool train_generator, bool train_tau);

// delta = A o f for a single latent.
StyleCodes style_codes(const Generator& g, const std::vector<double>& z);

// phi applied to explicit style codes.
render::HeatmapStack forward(const Generator& g, const StyleCodes& codes);

// phi(tau(A(f(z)))) for a single latent.
render::HeatmapStack forward_with_transfer(const Generator& g,
                                           const TransferMatrix& tau,
                                           const std::vector<double>& z);

// Checkpoint file: "FXP1", u32 version, config, length-prefixed f64 arrays,
// optional tau section, CRC-32 of everything before the trailer.
void save_checkpoint(const Generator& g, const TransferMatrix* tau,
                     const std::string& path);

struct Checkpoint {
  Generator generator;
  std::optional<TransferMatrix> tau;
};

Checkpoint load_checkpoint(const std::string& path);

}  // namespace flexpose::gen
