#include "flexpose/generator.hpp"

#include <cmath>
#include <stdexcept>

#include "flexpose/rng.hpp"

namespace flexpose::gen {

void GeneratorConfig::validate() const {
  if (d_z < 1 || d_w < 1 || d_h < 1 || joints < 1 || res < 2)
    throw std::invalid_argument("generator config dims must be positive");
  if (layers < 4)
    throw std::invalid_argument("generator needs at least 4 layers");
}

std::vector<std::pair<std::string, diff::Tensor*>>
Generator::named_parameters() {
  std::vector<std::pair<std::string, diff::Tensor*>> out = {
      {"map_w1", &map_w1}, {"map_b1", &map_b1}, {"map_w2", &map_w2},
      {"map_b2", &map_b2}, {"map_w3", &map_w3}, {"map_b3", &map_b3}};
  for (int l = 0; l < cfg.layers; ++l) {
    out.emplace_back("affine_w" + std::to_string(l), &affine_w[l]);
    out.emplace_back("affine_b" + std::to_string(l), &affine_b[l]);
  }
  out.emplace_back("start", &start);
  for (int l = 0; l < cfg.layers; ++l) {
    out.emplace_back("syn_w" + std::to_string(l), &syn_w[l]);
    out.emplace_back("syn_b" + std::to_string(l), &syn_b[l]);
  }
  out.emplace_back("head_w", &head_w);
  out.emplace_back("head_b", &head_b);
  return out;
}

std::vector<diff::Tensor*> Generator::parameters() {
  std::vector<diff::Tensor*> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

int64_t Generator::parameter_count() {
  int64_t total = 0;
  for (auto* t : parameters()) total += t->numel();
  return total;
}

Generator init_generator(const GeneratorConfig& cfg, uint64_t seed) {
  cfg.validate();
  Generator g;
  g.cfg = cfg;
  Rng rng(seed);
  auto dense = [&](int in, int out) {
    diff::Tensor t({in, out});
    const double std = 1.0 / std::sqrt(static_cast<double>(in));
    for (auto& v : t.data) v = rng.normal(0.0, std);
    return t;
  };
  const int ds = cfg.d_s();
  g.map_w1 = dense(cfg.d_z, cfg.d_w);
  g.map_b1 = diff::Tensor({cfg.d_w});
  g.map_w2 = dense(cfg.d_w, cfg.d_w);
  g.map_b2 = diff::Tensor({cfg.d_w});
  g.map_w3 = dense(cfg.d_w, cfg.d_w);
  g.map_b3 = diff::Tensor({cfg.d_w});
  for (int l = 0; l < cfg.layers; ++l) {
    g.affine_w.push_back(dense(cfg.d_w, ds));
    g.affine_b.emplace_back(std::vector<int>{ds});
  }
  g.start = diff::Tensor({cfg.d_h});
  for (auto& v : g.start.data) v = rng.normal();
  for (int l = 0; l < cfg.layers; ++l) {
    g.syn_w.push_back(dense(cfg.d_h, cfg.d_h));
    g.syn_b.emplace_back(std::vector<int>{cfg.d_h});
  }
  g.head_w = dense(cfg.d_h, cfg.joints * cfg.res * cfg.res);
  g.head_b = diff::Tensor({cfg.joints * cfg.res * cfg.res});
  return g;
}

std::vector<diff::Tensor*> TransferBlock::trainables() {
  switch (kind) {
    case BlockKind::identity:
      return {};
    case BlockKind::dense:
      return {&dense};
    case BlockKind::low_rank:
      return {&lr_a, &lr_b};
    case BlockKind::nonlinear:
      return {&nl_w1, &nl_w2};
  }
  return {};
}

TransferMatrix TransferMatrix::identity(const GeneratorConfig& cfg) {
  TransferMatrix tau;
  tau.d_s = cfg.d_s();
  tau.blocks.resize(cfg.layers);
  return tau;
}

namespace {

void check_layer(int layer, size_t n) {
  if (layer < 1 || layer > static_cast<int>(n))
    throw std::invalid_argument("tau layer index out of range (1-based)");
}

}  // namespace

void TransferMatrix::set_dense(int layer) {
  check_layer(layer, blocks.size());
  TransferBlock& b = blocks[layer - 1];
  b.kind = BlockKind::dense;
  b.dense = diff::Tensor({d_s, d_s});
  for (int i = 0; i < d_s; ++i) b.dense.at(i, i) = 1.0;
}

void TransferMatrix::set_low_rank(int layer, int rank, uint64_t seed) {
  check_layer(layer, blocks.size());
  if (rank < 1 || rank > d_s)
    throw std::invalid_argument("low-rank rank out of range");
  TransferBlock& b = blocks[layer - 1];
  b.kind = BlockKind::low_rank;
  b.lr_a = diff::Tensor({rank, d_s});
  b.lr_b = diff::Tensor({d_s, rank});  // zero, so U = I at start
  Rng rng(seed);
  const double std = 1.0 / std::sqrt(static_cast<double>(rank));
  for (auto& v : b.lr_a.data) v = rng.normal(0.0, std);
}

void TransferMatrix::set_nonlinear(int layer, uint64_t seed) {
  check_layer(layer, blocks.size());
  TransferBlock& b = blocks[layer - 1];
  b.kind = BlockKind::nonlinear;
  b.nl_w1 = diff::Tensor({d_s, d_s});
  b.nl_w2 = diff::Tensor({d_s, d_s});  // zero, so the residual starts at 0
  Rng rng(seed);
  const double std = 1.0 / std::sqrt(static_cast<double>(d_s));
  for (auto& v : b.nl_w1.data) v = rng.normal(0.0, std);
}

bool TransferMatrix::is_identity(int layer) const {
  check_layer(layer, blocks.size());
  return blocks[layer - 1].kind == BlockKind::identity;
}

std::vector<diff::Tensor*> TransferMatrix::trainables() {
  std::vector<diff::Tensor*> out;
  for (auto& b : blocks)
    for (auto* t : b.trainables()) out.push_back(t);
  return out;
}

double TransferMatrix::distance_from_identity(int layer) const {
  check_layer(layer, blocks.size());
  const TransferBlock& b = blocks[layer - 1];
  double sq = 0.0;
  switch (b.kind) {
    case BlockKind::identity:
      return 0.0;
    case BlockKind::dense:
      for (int i = 0; i < d_s; ++i)
        for (int j = 0; j < d_s; ++j) {
          const double diff = b.dense.at(i, j) - (i == j ? 1.0 : 0.0);
          sq += diff * diff;
        }
      return std::sqrt(sq);
    case BlockKind::low_rank: {
      // U - I = B*A
      const int r = b.lr_a.shape[0];
      for (int i = 0; i < d_s; ++i)
        for (int j = 0; j < d_s; ++j) {
          double v = 0.0;
          for (int t = 0; t < r; ++t) v += b.lr_b.at(i, t) * b.lr_a.at(t, j);
          sq += v * v;
        }
      return std::sqrt(sq);
    }
    case BlockKind::nonlinear:
      throw std::invalid_argument(
          "distance_from_identity undefined for nonlinear blocks");
  }
  return 0.0;
}

ForwardNodes build_forward(diff::Graph& graph, Generator& g,
                           TransferMatrix* tau, int batch,
                           bool train_generator, bool train_tau) {
  g.cfg.validate();
  if (batch < 1) throw std::invalid_argument("batch must be >= 1");
  if (tau) {
    if (static_cast<int>(tau->blocks.size()) != g.cfg.layers ||
        tau->d_s != g.cfg.d_s())
      throw std::invalid_argument("tau block layout does not match config");
  }

  const auto& cfg = g.cfg;
  ForwardNodes out;
  out.z = graph.leaf(diff::Tensor({batch, cfg.d_z}), "z");

  auto P = [&](diff::Tensor* t, const char* name) {
    const int id = graph.param(t, train_generator, name);
    out.gen_params.push_back(id);
    return id;
  };

  // mapping f: three dense layers, leaky-relu between them
  int w = graph.add(graph.matmul(out.z, P(&g.map_w1, "map_w1")),
                    P(&g.map_b1, "map_b1"));
  w = graph.leaky_relu(w);
  w = graph.add(graph.matmul(w, P(&g.map_w2, "map_w2")), P(&g.map_b2, "map_b2"));
  w = graph.leaky_relu(w);
  w = graph.add(graph.matmul(w, P(&g.map_w3, "map_w3")), P(&g.map_b3, "map_b3"));

  // affine heads + tau
  for (int l = 0; l < cfg.layers; ++l) {
    int s = graph.add(
        graph.matmul(w, P(&g.affine_w[l], "affine_w")),
        P(&g.affine_b[l], "affine_b"));
    out.styles_pre.push_back(s);
    if (tau && tau->blocks[l].kind != BlockKind::identity) {
      TransferBlock& blk = tau->blocks[l];
      auto T = [&](diff::Tensor* t, const char* name) {
        const int id = graph.param(t, train_tau, name);
        out.tau_params.push_back(id);
        return id;
      };
      switch (blk.kind) {
        case BlockKind::dense:
          s = graph.matmul_bt(s, T(&blk.dense, "tau_dense"));
          break;
        case BlockKind::low_rank: {
          int down = graph.matmul_bt(s, T(&blk.lr_a, "tau_lr_a"));
          int up = graph.matmul_bt(down, T(&blk.lr_b, "tau_lr_b"));
          s = graph.add(s, up);
          break;
        }
        case BlockKind::nonlinear: {
          int hid = graph.leaky_relu(
              graph.matmul_bt(s, T(&blk.nl_w1, "tau_nl_w1")));
          s = graph.add(s, graph.matmul_bt(hid, T(&blk.nl_w2, "tau_nl_w2")));
          break;
        }
        case BlockKind::identity:
          break;
      }
    }
    out.styles_post.push_back(s);
  }

  // synthesis phi: start vector broadcast over the batch, then L modulated
  // layers h <- s_scale * layernorm(W h + b) + s_shift, leaky-relu.
  int zeros = graph.leaf(diff::Tensor({batch, cfg.d_h}), "zeros");
  int h = graph.add(zeros, P(&g.start, "start"));
  for (int l = 0; l < cfg.layers; ++l) {
    int lin = graph.add(graph.matmul(h, P(&g.syn_w[l], "syn_w")),
                        P(&g.syn_b[l], "syn_b"));
    int norm = graph.layer_norm(lin);
    int scale = graph.slice(out.styles_post[l], 0, cfg.d_h);
    int shift = graph.slice(out.styles_post[l], cfg.d_h, 2 * cfg.d_h);
    h = graph.leaky_relu(graph.add(graph.mul(scale, norm), shift));
  }

  int logits = graph.add(graph.matmul(h, P(&g.head_w, "head_w")),
                         P(&g.head_b, "head_b"));
  out.heatmaps = graph.softmax_groups(logits, cfg.res * cfg.res);
  out.coords = graph.heatmap_expect(out.heatmaps, cfg.joints, cfg.res);
  return out;
}

namespace {

diff::Tensor single_z(const std::vector<double>& z, int d_z) {
  if (static_cast<int>(z.size()) != d_z)
    throw std::invalid_argument("latent has wrong dimension");
  return diff::Tensor({1, d_z}, std::vector<double>(z));
}

render::HeatmapStack stack_from_row(const diff::Tensor& maps, int joints,
                                    int res) {
  render::HeatmapStack st;
  st.joints = joints;
  st.res = res;
  st.data.assign(maps.data.begin(), maps.data.end());
  return st;
}

}  // namespace

StyleCodes style_codes(const Generator& g, const std::vector<double>& z) {
  Generator& gm = const_cast<Generator&>(g);  // read-only graph leaves
  diff::Graph graph;
  ForwardNodes nodes = build_forward(graph, gm, nullptr, 1, false, false);
  graph.set_value(nodes.z, single_z(z, g.cfg.d_z));
  graph.forward();
  StyleCodes codes;
  for (int l = 0; l < g.cfg.layers; ++l)
    codes.s.push_back(graph.value(nodes.styles_pre[l]).data);
  return codes;
}

render::HeatmapStack forward(const Generator& g, const StyleCodes& codes) {
  if (static_cast<int>(codes.s.size()) != g.cfg.layers)
    throw std::invalid_argument("style codes: wrong layer count");
  for (const auto& s : codes.s)
    if (static_cast<int>(s.size()) != g.cfg.d_s())
      throw std::invalid_argument("style codes: wrong dimension");

  Generator& gm = const_cast<Generator&>(g);
  const auto& cfg = g.cfg;
  diff::Graph graph;
  auto P = [&](diff::Tensor* t, const char* name) {
    return graph.param(t, false, name);
  };
  int zeros = graph.leaf(diff::Tensor({1, cfg.d_h}), "zeros");
  int h = graph.add(zeros, P(&gm.start, "start"));
  for (int l = 0; l < cfg.layers; ++l) {
    int s = graph.leaf(diff::Tensor({1, cfg.d_s()}, std::vector<double>(codes.s[l])),
                       "style");
    int lin = graph.add(graph.matmul(h, P(&gm.syn_w[l], "syn_w")),
                        P(&gm.syn_b[l], "syn_b"));
    int norm = graph.layer_norm(lin);
    int scale = graph.slice(s, 0, cfg.d_h);
    int shift = graph.slice(s, cfg.d_h, 2 * cfg.d_h);
    h = graph.leaky_relu(graph.add(graph.mul(scale, norm), shift));
  }
  int logits = graph.add(graph.matmul(h, P(&gm.head_w, "head_w")),
                         P(&gm.head_b, "head_b"));
  int maps = graph.softmax_groups(logits, cfg.res * cfg.res);
  graph.forward();
  return stack_from_row(graph.value(maps), cfg.joints, cfg.res);
}

render::HeatmapStack forward_with_transfer(const Generator& g,
                                           const TransferMatrix& tau,
                                           const std::vector<double>& z) {
  Generator& gm = const_cast<Generator&>(g);
  TransferMatrix& tm = const_cast<TransferMatrix&>(tau);
  diff::Graph graph;
  ForwardNodes nodes = build_forward(graph, gm, &tm, 1, false, false);
  graph.set_value(nodes.z, single_z(z, g.cfg.d_z));
  graph.forward();
  return stack_from_row(graph.value(nodes.heatmaps), g.cfg.joints, g.cfg.res);
}

}  // namespace flexpose::gen
