#include "flexpose/graph.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "flexpose/kernels.hpp"
#include "flexpose/mmd.hpp"

namespace flexpose::diff {

namespace {

[[noreturn]] void shape_error(const std::string& where, const std::string& a,
                              const std::string& b) {
  throw std::invalid_argument(where + ": shape mismatch " + a + " vs " + b);
}

}  // namespace

Graph::Node& Graph::node(int id) {
  if (id < 0 || id >= static_cast<int>(nodes_.size()))
    throw std::invalid_argument("node id out of range");
  return nodes_[id];
}

const Tensor& Graph::val_of(int id) const {
  const Node& n = nodes_[id];
  return (n.op == Op::leaf && n.external) ? *n.external : n.value;
}

int Graph::push(Node n) {
  if (n.a >= 0) n.requires_grad = nodes_[n.a].requires_grad;
  if (n.b >= 0) n.requires_grad = n.requires_grad || nodes_[n.b].requires_grad;
  if (n.op == Op::leaf) n.requires_grad = n.trainable;
  nodes_.push_back(std::move(n));
  forwarded_ = false;
  return static_cast<int>(nodes_.size()) - 1;
}

int Graph::leaf(Tensor value, std::string name) {
  Node n;
  n.op = Op::leaf;
  n.value = std::move(value);
  n.name = std::move(name);
  return push(std::move(n));
}

int Graph::param(Tensor* storage, bool trainable, std::string name) {
  if (!storage) throw std::invalid_argument("param storage is null");
  Node n;
  n.op = Op::leaf;
  n.external = storage;
  n.trainable = trainable;
  n.name = std::move(name);
  return push(std::move(n));
}

void Graph::set_value(int id, const Tensor& v) {
  Node& n = node(id);
  if (n.op != Op::leaf || n.external)
    throw std::invalid_argument("set_value only applies to owned leaves");
  if (!n.value.shape.empty() && n.value.shape != v.shape)
    shape_error("set_value(" + n.name + ")", n.value.shape_str(),
                v.shape_str());
  if (!kern::all_finite(v.data.data(), v.numel()))
    throw std::invalid_argument("set_value(" + n.name + "): non-finite input");
  n.value = v;
  forwarded_ = false;
}

int Graph::add(int a, int b) {
  const Tensor& ta = val_of(a);
  const Tensor& tb = val_of(b);
  const bool bias = ta.ndim() == 2 && tb.ndim() == 1 && tb.cols() == ta.cols();
  if (!bias && ta.shape != tb.shape)
    shape_error("add", ta.shape_str(), tb.shape_str());
  Node n;
  n.op = Op::add;
  n.a = a;
  n.b = b;
  n.value = Tensor(ta.shape);
  return push(std::move(n));
}

int Graph::sub(int a, int b) {
  const Tensor& ta = val_of(a);
  if (ta.shape != val_of(b).shape)
    shape_error("sub", ta.shape_str(), val_of(b).shape_str());
  Node n;
  n.op = Op::sub;
  n.a = a;
  n.b = b;
  n.value = Tensor(ta.shape);
  return push(std::move(n));
}

int Graph::mul(int a, int b) {
  const Tensor& ta = val_of(a);
  if (ta.shape != val_of(b).shape)
    shape_error("mul", ta.shape_str(), val_of(b).shape_str());
  Node n;
  n.op = Op::mul;
  n.a = a;
  n.b = b;
  n.value = Tensor(ta.shape);
  return push(std::move(n));
}

int Graph::scalar_mul(int a, double s) {
  Node n;
  n.op = Op::scalar_mul;
  n.a = a;
  n.scalar = s;
  n.value = Tensor(val_of(a).shape);
  return push(std::move(n));
}

int Graph::matmul(int a, int b) {
  const Tensor& ta = val_of(a);
  const Tensor& tb = val_of(b);
  if (ta.ndim() != 2 || tb.ndim() != 2 || ta.shape[1] != tb.shape[0])
    shape_error("matmul", ta.shape_str(), tb.shape_str());
  Node n;
  n.op = Op::matmul;
  n.a = a;
  n.b = b;
  n.value = Tensor({ta.shape[0], tb.shape[1]});
  return push(std::move(n));
}

int Graph::matmul_bt(int a, int b) {
  const Tensor& ta = val_of(a);
  const Tensor& tb = val_of(b);
  if (ta.ndim() != 2 || tb.ndim() != 2 || ta.shape[1] != tb.shape[1])
    shape_error("matmul_bt", ta.shape_str(), tb.shape_str());
  Node n;
  n.op = Op::matmul_bt;
  n.a = a;
  n.b = b;
  n.value = Tensor({ta.shape[0], tb.shape[0]});
  return push(std::move(n));
}

int Graph::leaky_relu(int a) {
  Node n;
  n.op = Op::leaky_relu;
  n.a = a;
  n.value = Tensor(val_of(a).shape);
  return push(std::move(n));
}

int Graph::softmax_groups(int a, int group) {
  const Tensor& ta = val_of(a);
  if (group < 1 || ta.cols() % group != 0)
    throw std::invalid_argument("softmax_groups: last dim not divisible");
  Node n;
  n.op = Op::softmax_groups;
  n.a = a;
  n.group = group;
  n.value = Tensor(ta.shape);
  return push(std::move(n));
}

int Graph::layer_norm(int a) {
  const Tensor& ta = val_of(a);
  if (ta.ndim() != 2)
    throw std::invalid_argument("layer_norm expects a 2-D input");
  Node n;
  n.op = Op::layer_norm;
  n.a = a;
  n.value = Tensor(ta.shape);
  return push(std::move(n));
}

int Graph::sum(int a) {
  Node n;
  n.op = Op::sum;
  n.a = a;
  n.value = Tensor({1});
  return push(std::move(n));
}

int Graph::mean(int a) {
  Node n;
  n.op = Op::mean;
  n.a = a;
  n.value = Tensor({1});
  return push(std::move(n));
}

int Graph::sqerr(int a, int b) {
  if (val_of(a).shape != val_of(b).shape)
    shape_error("sqerr", val_of(a).shape_str(), val_of(b).shape_str());
  Node n;
  n.op = Op::sqerr;
  n.a = a;
  n.b = b;
  n.value = Tensor({1});
  return push(std::move(n));
}

int Graph::concat(int a, int b) {
  const Tensor& ta = val_of(a);
  const Tensor& tb = val_of(b);
  if (ta.ndim() != 2 || tb.ndim() != 2 || ta.shape[0] != tb.shape[0])
    shape_error("concat", ta.shape_str(), tb.shape_str());
  Node n;
  n.op = Op::concat;
  n.a = a;
  n.b = b;
  n.value = Tensor({ta.shape[0], ta.shape[1] + tb.shape[1]});
  return push(std::move(n));
}

int Graph::slice(int a, int from, int to) {
  const Tensor& ta = val_of(a);
  if (ta.ndim() != 2 || from < 0 || to > ta.shape[1] || from >= to)
    throw std::invalid_argument("slice: bad range on " + ta.shape_str());
  Node n;
  n.op = Op::slice;
  n.a = a;
  n.from = from;
  n.to = to;
  n.value = Tensor({ta.shape[0], to - from});
  return push(std::move(n));
}

int Graph::heatmap_expect(int a, int joints, int res) {
  const Tensor& ta = val_of(a);
  if (ta.ndim() != 2 || ta.shape[1] != joints * res * res)
    throw std::invalid_argument("heatmap_expect: input is not [B, M*R*R]");
  if (res < 2) throw std::invalid_argument("heatmap_expect: res must be >= 2");
  Node n;
  n.op = Op::heatmap_expect;
  n.a = a;
  n.joints = joints;
  n.res = res;
  n.value = Tensor({ta.shape[0], 2 * joints});
  return push(std::move(n));
}

int Graph::mmd2(int a, int b, std::vector<double> bandwidth_multipliers) {
  const Tensor& ta = val_of(a);
  const Tensor& tb = val_of(b);
  if (ta.ndim() != 2 || tb.ndim() != 2 || ta.shape[1] != tb.shape[1])
    shape_error("mmd2", ta.shape_str(), tb.shape_str());
  if (ta.shape[0] < 2 || tb.shape[0] < 2)
    throw std::invalid_argument("unbiased MMD needs >= 2 samples per side");
  if (bandwidth_multipliers.empty())
    throw std::invalid_argument("mmd2 needs at least one bandwidth");
  Node n;
  n.op = Op::mmd2;
  n.a = a;
  n.b = b;
  n.multipliers = std::move(bandwidth_multipliers);
  n.value = Tensor({1});
  return push(std::move(n));
}

int Graph::mmd2_fixed(int a, int b, std::vector<double> sigmas) {
  const int id = mmd2(a, b, sigmas);
  nodes_[id].median_base = false;
  nodes_[id].sigmas = std::move(nodes_[id].multipliers);
  nodes_[id].multipliers.clear();
  return id;
}

void Graph::check_finite(int id) const {
  const Node& n = nodes_[id];
  if (!kern::all_finite(n.value.data.data(), n.value.numel()))
    throw std::runtime_error("numerical blow-up at node " +
                             std::to_string(id) + " (" + n.name + ")");
}

void Graph::eval_node(int id) {
  Node& n = nodes_[id];
  const Tensor* ta = n.a >= 0 ? &val_of(n.a) : nullptr;
  const Tensor* tb = n.b >= 0 ? &val_of(n.b) : nullptr;
  Tensor& out = n.value;

  switch (n.op) {
    case Op::leaf:
      return;  // leaves hold their value (owned or external)
    case Op::add: {
      const int64_t total = ta->numel();
      if (ta->shape == tb->shape) {
        for (int64_t i = 0; i < total; ++i)
          out.data[i] = ta->data[i] + tb->data[i];
      } else {
        const int d = ta->cols();
        const int rows = ta->shape[0];
#pragma omp parallel for schedule(static)
        for (int r = 0; r < rows; ++r)
          for (int j = 0; j < d; ++j)
            out.data[static_cast<size_t>(r) * d + j] =
                ta->data[static_cast<size_t>(r) * d + j] + tb->data[j];
      }
      break;
    }
    case Op::sub:
      for (int64_t i = 0; i < ta->numel(); ++i)
        out.data[i] = ta->data[i] - tb->data[i];
      break;
    case Op::mul:
      for (int64_t i = 0; i < ta->numel(); ++i)
        out.data[i] = ta->data[i] * tb->data[i];
      break;
    case Op::scalar_mul:
      for (int64_t i = 0; i < ta->numel(); ++i)
        out.data[i] = n.scalar * ta->data[i];
      break;
    case Op::matmul:
      kern::matmul_nn(ta->data.data(), tb->data.data(), out.data.data(),
                      ta->shape[0], ta->shape[1], tb->shape[1]);
      break;
    case Op::matmul_bt:
      kern::matmul_nt(ta->data.data(), tb->data.data(), out.data.data(),
                      ta->shape[0], ta->shape[1], tb->shape[0]);
      break;
    case Op::leaky_relu: {
      const int64_t total = ta->numel();
#pragma omp parallel for schedule(static)
      for (int64_t i = 0; i < total; ++i) {
        const double x = ta->data[i];
        out.data[i] = x >= 0.0 ? x : 0.2 * x;
      }
      break;
    }
    case Op::softmax_groups: {
      const int g = n.group;
      const int64_t ngroups = ta->numel() / g;
#pragma omp parallel for schedule(static)
      for (int64_t r = 0; r < ngroups; ++r) {
        const double* x = ta->data.data() + r * g;
        double* y = out.data.data() + r * g;
        double mx = x[0];
        for (int j = 1; j < g; ++j) mx = std::max(mx, x[j]);
        double s = 0.0;
        for (int j = 0; j < g; ++j) {
          y[j] = std::exp(x[j] - mx);
          s += y[j];
        }
        const double inv = 1.0 / s;
        for (int j = 0; j < g; ++j) y[j] *= inv;
      }
      break;
    }
    case Op::layer_norm: {
      const int rows = ta->shape[0];
      const int d = ta->shape[1];
#pragma omp parallel for schedule(static)
      for (int r = 0; r < rows; ++r) {
        const double* x = ta->data.data() + static_cast<size_t>(r) * d;
        double* y = out.data.data() + static_cast<size_t>(r) * d;
        double mu = 0.0;
        for (int j = 0; j < d; ++j) mu += x[j];
        mu /= d;
        double var = 0.0;
        for (int j = 0; j < d; ++j) var += (x[j] - mu) * (x[j] - mu);
        var /= d;
        const double inv = 1.0 / std::sqrt(var + 1e-5);
        for (int j = 0; j < d; ++j) y[j] = (x[j] - mu) * inv;
      }
      break;
    }
    case Op::sum: {
      double s = 0.0;
      for (int64_t i = 0; i < ta->numel(); ++i) s += ta->data[i];
      out.data[0] = s;
      break;
    }
    case Op::mean: {
      double s = 0.0;
      for (int64_t i = 0; i < ta->numel(); ++i) s += ta->data[i];
      out.data[0] = s / static_cast<double>(ta->numel());
      break;
    }
    case Op::sqerr: {
      double s = 0.0;
      for (int64_t i = 0; i < ta->numel(); ++i) {
        const double d = ta->data[i] - tb->data[i];
        s += d * d;
      }
      out.data[0] = s;
      break;
    }
    case Op::concat: {
      const int rows = ta->shape[0];
      const int da = ta->shape[1], db = tb->shape[1];
      for (int r = 0; r < rows; ++r) {
        std::copy_n(ta->data.data() + static_cast<size_t>(r) * da, da,
                    out.data.data() + static_cast<size_t>(r) * (da + db));
        std::copy_n(tb->data.data() + static_cast<size_t>(r) * db, db,
                    out.data.data() + static_cast<size_t>(r) * (da + db) + da);
      }
      break;
    }
    case Op::slice: {
      const int rows = ta->shape[0];
      const int d = ta->shape[1];
      const int w = n.to - n.from;
      for (int r = 0; r < rows; ++r)
        std::copy_n(ta->data.data() + static_cast<size_t>(r) * d + n.from, w,
                    out.data.data() + static_cast<size_t>(r) * w);
      break;
    }
    case Op::heatmap_expect: {
      const int batch = ta->shape[0];
      const int m = n.joints, res = n.res;
      const int g = res * res;
      const double inv = 1.0 / (res - 1);
#pragma omp parallel for schedule(static)
      for (int bi = 0; bi < batch; ++bi) {
        const double* row = ta->data.data() + static_cast<size_t>(bi) * m * g;
        double* y = out.data.data() + static_cast<size_t>(bi) * 2 * m;
        for (int j = 0; j < m; ++j) {
          const double* map = row + static_cast<size_t>(j) * g;
          double sx = 0.0, sy = 0.0;
          for (int r = 0; r < res; ++r)
            for (int c = 0; c < res; ++c) {
              const double v = map[r * res + c];
              sx += v * (c * inv);
              sy += v * (r * inv);
            }
          y[2 * j] = sx;
          y[2 * j + 1] = sy;
        }
      }
      break;
    }
    case Op::mmd2: {
      const int d = ta->shape[1];
      if (n.median_base) {
        const double base = mmdcore::median_bandwidth(
            ta->data.data(), ta->shape[0], tb->data.data(), tb->shape[0], d);
        n.sigmas.clear();
        for (double mult : n.multipliers) n.sigmas.push_back(mult * base);
      }
      double total = 0.0;
      for (double sigma : n.sigmas)
        total += mmdcore::mmd2_unbiased(ta->data.data(), ta->shape[0],
                                        tb->data.data(), tb->shape[0], d,
                                        sigma);
      out.data[0] = total;
      break;
    }
  }
  check_finite(id);
}

void Graph::forward() {
  for (int i = 0; i < static_cast<int>(nodes_.size()); ++i) eval_node(i);
  forwarded_ = true;
}

void Graph::accumulate(int id, const Tensor& g) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return;
  if (n.grad.data.empty()) {
    n.grad = g;
    return;
  }
  for (int64_t i = 0; i < g.numel(); ++i) n.grad.data[i] += g.data[i];
}

void Graph::backprop_node(int id) {
  Node& n = nodes_[id];
  const Tensor& g = n.grad;
  const Tensor* ta = n.a >= 0 ? &val_of(n.a) : nullptr;
  const Tensor* tb = n.b >= 0 ? &val_of(n.b) : nullptr;
  const bool need_a = n.a >= 0 && nodes_[n.a].requires_grad;
  const bool need_b = n.b >= 0 && nodes_[n.b].requires_grad;
  if (!need_a && !need_b) return;

  switch (n.op) {
    case Op::leaf:
      return;
    case Op::add: {
      if (need_a) accumulate(n.a, g);
      if (need_b) {
        if (ta->shape == tb->shape) {
          accumulate(n.b, g);
        } else {
          // bias broadcast: column sums, rows in order
          const int rows = ta->shape[0], d = ta->shape[1];
          Tensor gb(tb->shape);
          for (int r = 0; r < rows; ++r)
            for (int j = 0; j < d; ++j)
              gb.data[j] += g.data[static_cast<size_t>(r) * d + j];
          accumulate(n.b, gb);
        }
      }
      break;
    }
    case Op::sub: {
      if (need_a) accumulate(n.a, g);
      if (need_b) {
        Tensor gb(tb->shape);
        for (int64_t i = 0; i < g.numel(); ++i) gb.data[i] = -g.data[i];
        accumulate(n.b, gb);
      }
      break;
    }
    case Op::mul: {
      if (need_a) {
        Tensor ga(ta->shape);
        for (int64_t i = 0; i < g.numel(); ++i)
          ga.data[i] = g.data[i] * tb->data[i];
        accumulate(n.a, ga);
      }
      if (need_b) {
        Tensor gb(tb->shape);
        for (int64_t i = 0; i < g.numel(); ++i)
          gb.data[i] = g.data[i] * ta->data[i];
        accumulate(n.b, gb);
      }
      break;
    }
    case Op::scalar_mul: {
      Tensor ga(ta->shape);
      for (int64_t i = 0; i < g.numel(); ++i) ga.data[i] = n.scalar * g.data[i];
      accumulate(n.a, ga);
      break;
    }
    case Op::matmul: {
      if (need_a) {  // ga = g * b^T
        Tensor ga(ta->shape);
        kern::matmul_nt(g.data.data(), tb->data.data(), ga.data.data(),
                        g.shape[0], g.shape[1], tb->shape[0]);
        accumulate(n.a, ga);
      }
      if (need_b) {  // gb = a^T * g
        Tensor gb(tb->shape);
        kern::matmul_tn(ta->data.data(), g.data.data(), gb.data.data(),
                        ta->shape[0], ta->shape[1], g.shape[1]);
        accumulate(n.b, gb);
      }
      break;
    }
    case Op::matmul_bt: {
      if (need_a) {  // ga = g * b
        Tensor ga(ta->shape);
        kern::matmul_nn(g.data.data(), tb->data.data(), ga.data.data(),
                        g.shape[0], g.shape[1], tb->shape[1]);
        accumulate(n.a, ga);
      }
      if (need_b) {  // gb = g^T * a
        Tensor gb(tb->shape);
        kern::matmul_tn(g.data.data(), ta->data.data(), gb.data.data(),
                        g.shape[0], g.shape[1], ta->shape[1]);
        accumulate(n.b, gb);
      }
      break;
    }
    case Op::leaky_relu: {
      Tensor ga(ta->shape);
      const int64_t total = ta->numel();
#pragma omp parallel for schedule(static)
      for (int64_t i = 0; i < total; ++i)
        ga.data[i] = (ta->data[i] >= 0.0 ? 1.0 : 0.2) * g.data[i];
      accumulate(n.a, ga);
      break;
    }
    case Op::softmax_groups: {
      const int gr = n.group;
      const int64_t ngroups = n.value.numel() / gr;
      Tensor ga(ta->shape);
#pragma omp parallel for schedule(static)
      for (int64_t r = 0; r < ngroups; ++r) {
        const double* p = n.value.data.data() + r * gr;
        const double* gy = g.data.data() + r * gr;
        double* gx = ga.data.data() + r * gr;
        double dot = 0.0;
        for (int j = 0; j < gr; ++j) dot += gy[j] * p[j];
        for (int j = 0; j < gr; ++j) gx[j] = p[j] * (gy[j] - dot);
      }
      accumulate(n.a, ga);
      break;
    }
    case Op::layer_norm: {
      const int rows = ta->shape[0], d = ta->shape[1];
      Tensor ga(ta->shape);
#pragma omp parallel for schedule(static)
      for (int r = 0; r < rows; ++r) {
        const double* x = ta->data.data() + static_cast<size_t>(r) * d;
        const double* y = n.value.data.data() + static_cast<size_t>(r) * d;
        const double* gy = g.data.data() + static_cast<size_t>(r) * d;
        double* gx = ga.data.data() + static_cast<size_t>(r) * d;
        double mu = 0.0;
        for (int j = 0; j < d; ++j) mu += x[j];
        mu /= d;
        double var = 0.0;
        for (int j = 0; j < d; ++j) var += (x[j] - mu) * (x[j] - mu);
        var /= d;
        const double inv = 1.0 / std::sqrt(var + 1e-5);
        double mg = 0.0, mgy = 0.0;
        for (int j = 0; j < d; ++j) {
          mg += gy[j];
          mgy += gy[j] * y[j];
        }
        mg /= d;
        mgy /= d;
        for (int j = 0; j < d; ++j)
          gx[j] = inv * (gy[j] - mg - y[j] * mgy);
      }
      accumulate(n.a, ga);
      break;
    }
    case Op::sum: {
      Tensor ga(ta->shape);
      const double gv = g.data[0];
      for (int64_t i = 0; i < ga.numel(); ++i) ga.data[i] = gv;
      accumulate(n.a, ga);
      break;
    }
    case Op::mean: {
      Tensor ga(ta->shape);
      const double gv = g.data[0] / static_cast<double>(ta->numel());
      for (int64_t i = 0; i < ga.numel(); ++i) ga.data[i] = gv;
      accumulate(n.a, ga);
      break;
    }
    case Op::sqerr: {
      const double gv = g.data[0];
      if (need_a) {
        Tensor ga(ta->shape);
        for (int64_t i = 0; i < ta->numel(); ++i)
          ga.data[i] = 2.0 * (ta->data[i] - tb->data[i]) * gv;
        accumulate(n.a, ga);
      }
      if (need_b) {
        Tensor gb(tb->shape);
        for (int64_t i = 0; i < tb->numel(); ++i)
          gb.data[i] = -2.0 * (ta->data[i] - tb->data[i]) * gv;
        accumulate(n.b, gb);
      }
      break;
    }
    case Op::concat: {
      const int rows = ta->shape[0];
      const int da = ta->shape[1], db = tb->shape[1];
      if (need_a) {
        Tensor ga(ta->shape);
        for (int r = 0; r < rows; ++r)
          std::copy_n(g.data.data() + static_cast<size_t>(r) * (da + db), da,
                      ga.data.data() + static_cast<size_t>(r) * da);
        accumulate(n.a, ga);
      }
      if (need_b) {
        Tensor gb(tb->shape);
        for (int r = 0; r < rows; ++r)
          std::copy_n(
              g.data.data() + static_cast<size_t>(r) * (da + db) + da, db,
              gb.data.data() + static_cast<size_t>(r) * db);
        accumulate(n.b, gb);
      }
      break;
    }
    case Op::slice: {
      const int rows = ta->shape[0], d = ta->shape[1];
      const int w = n.to - n.from;
      Tensor ga(ta->shape);
      for (int r = 0; r < rows; ++r)
        std::copy_n(g.data.data() + static_cast<size_t>(r) * w, w,
                    ga.data.data() + static_cast<size_t>(r) * d + n.from);
      accumulate(n.a, ga);
      break;
    }
    case Op::heatmap_expect: {
      const int batch = ta->shape[0];
      const int m = n.joints, res = n.res;
      const int gsz = res * res;
      const double inv = 1.0 / (res - 1);
      Tensor ga(ta->shape);
#pragma omp parallel for schedule(static)
      for (int bi = 0; bi < batch; ++bi) {
        double* gx =
            ga.data.data() + static_cast<size_t>(bi) * m * gsz;
        const double* gy = g.data.data() + static_cast<size_t>(bi) * 2 * m;
        for (int j = 0; j < m; ++j) {
          const double gsx = gy[2 * j], gsy = gy[2 * j + 1];
          double* map = gx + static_cast<size_t>(j) * gsz;
          for (int r = 0; r < res; ++r)
            for (int c = 0; c < res; ++c)
              map[r * res + c] = gsx * (c * inv) + gsy * (r * inv);
        }
      }
      accumulate(n.a, ga);
      break;
    }
    case Op::mmd2: {
      const int nx = ta->shape[0], ny = tb->shape[0], d = ta->shape[1];
      const double gv = g.data[0];
      Tensor ga(ta->shape), gb(tb->shape);
      for (double sigma : n.sigmas) {
        const double inv_two = 1.0 / (2.0 * sigma * sigma);
        const double inv_sq = 1.0 / (sigma * sigma);
        const double wxx = 2.0 / (static_cast<double>(nx) * (nx - 1));
        const double wyy = 2.0 / (static_cast<double>(ny) * (ny - 1));
        const double wxy = 2.0 / (static_cast<double>(nx) * ny);
        if (need_a) {
#pragma omp parallel for schedule(static)
          for (int i = 0; i < nx; ++i) {
            const double* xi = ta->data.data() + static_cast<size_t>(i) * d;
            double* gi = ga.data.data() + static_cast<size_t>(i) * d;
            for (int j = 0; j < nx; ++j) {
              if (j == i) continue;
              const double* xj = ta->data.data() + static_cast<size_t>(j) * d;
              double sq = 0.0;
              for (int k = 0; k < d; ++k) sq += (xi[k] - xj[k]) * (xi[k] - xj[k]);
              const double kv = std::exp(-sq * inv_two) * inv_sq;
              for (int k = 0; k < d; ++k)
                gi[k] += gv * wxx * kv * (xj[k] - xi[k]);
            }
            for (int j = 0; j < ny; ++j) {
              const double* yj = tb->data.data() + static_cast<size_t>(j) * d;
              double sq = 0.0;
              for (int k = 0; k < d; ++k) sq += (xi[k] - yj[k]) * (xi[k] - yj[k]);
              const double kv = std::exp(-sq * inv_two) * inv_sq;
              // -2 * dExy/dx_i = -2/(nx*ny) * k * (y_j - x_i)/sigma^2
              for (int k = 0; k < d; ++k)
                gi[k] -= gv * wxy * kv * (yj[k] - xi[k]);
            }
          }
        }
        if (need_b) {
#pragma omp parallel for schedule(static)
          for (int j = 0; j < ny; ++j) {
            const double* yj = tb->data.data() + static_cast<size_t>(j) * d;
            double* gj = gb.data.data() + static_cast<size_t>(j) * d;
            for (int i = 0; i < ny; ++i) {
              if (i == j) continue;
              const double* yi = tb->data.data() + static_cast<size_t>(i) * d;
              double sq = 0.0;
              for (int k = 0; k < d; ++k) sq += (yj[k] - yi[k]) * (yj[k] - yi[k]);
              const double kv = std::exp(-sq * inv_two) * inv_sq;
              for (int k = 0; k < d; ++k)
                gj[k] += gv * wyy * kv * (yi[k] - yj[k]);
            }
            for (int i = 0; i < nx; ++i) {
              const double* xi = ta->data.data() + static_cast<size_t>(i) * d;
              double sq = 0.0;
              for (int k = 0; k < d; ++k) sq += (xi[k] - yj[k]) * (xi[k] - yj[k]);
              const double kv = std::exp(-sq * inv_two) * inv_sq;
              for (int k = 0; k < d; ++k)
                gj[k] -= gv * wxy * kv * (xi[k] - yj[k]);
            }
          }
        }
      }
      if (need_a) accumulate(n.a, ga);
      if (need_b) accumulate(n.b, gb);
      break;
    }
  }
}

void Graph::backward(int loss) {
  if (!forwarded_) forward();
  Node& ln = node(loss);
  if (ln.value.numel() != 1)
    throw std::invalid_argument("backward: loss node must be scalar");
  for (auto& n : nodes_) n.grad = Tensor();
  if (!ln.requires_grad) return;  // nothing trainable feeds the loss
  ln.grad = Tensor::scalar(1.0);
  for (int i = loss; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.data.empty()) continue;
    backprop_node(i);
  }
}

const Tensor& Graph::grad(int id) const {
  const Node& n = nodes_[id];
  if (n.grad.data.empty())
    throw std::runtime_error("no gradient at node " + std::to_string(id) +
                             " (" + n.name + ")");
  return n.grad;
}

std::vector<int> Graph::trainable() const {
  std::vector<int> out;
  for (int i = 0; i < static_cast<int>(nodes_.size()); ++i)
    if (nodes_[i].op == Op::leaf && nodes_[i].trainable) out.push_back(i);
  return out;
}

int64_t Graph::trainable_count() const {
  int64_t total = 0;
  for (int id : trainable()) total += val_of(id).numel();
  return total;
}

const std::vector<double>& Graph::mmd_sigmas(int id) const {
  const Node& n = nodes_[id];
  if (n.op != Op::mmd2)
    throw std::invalid_argument("mmd_sigmas: not an mmd2 node");
  return n.sigmas;
}

double Graph::grad_check(int loss, double eps) {
  const auto leaves = trainable();
  if (trainable_count() > 10000)
    throw std::invalid_argument("grad_check guard: > 1e4 parameters");

  forward();
  backward(loss);
  std::vector<Tensor> analytic;
  analytic.reserve(leaves.size());
  for (int id : leaves)
    analytic.push_back(has_grad(id) ? grad(id) : Tensor(val_of(id).shape));

  double max_rel = 0.0;
  for (size_t li = 0; li < leaves.size(); ++li) {
    Tensor* storage = nodes_[leaves[li]].external;
    if (!storage)
      throw std::logic_error("grad_check: trainable leaf without storage");
    for (int64_t i = 0; i < storage->numel(); ++i) {
      const double saved = storage->data[i];
      storage->data[i] = saved + eps;
      forward();
      const double lp = value(loss).data[0];
      storage->data[i] = saved - eps;
      forward();
      const double lm = value(loss).data[0];
      storage->data[i] = saved;
      const double numeric = (lp - lm) / (2.0 * eps);
      const double a = analytic[li].data[i];
      const double rel =
          std::abs(a - numeric) / std::max(1e-12, std::abs(a) + std::abs(numeric));
      max_rel = std::max(max_rel, rel);
    }
  }
  forward();  // restore consistent cached values
  return max_rel;
}

}  // namespace flexpose::diff
