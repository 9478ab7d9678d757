#pragma once

#include <string>
#include <vector>

#include "flexpose/tensor.hpp"

namespace flexpose::diff {

// Reverse-mode autodiff over a flat node tape. A graph is built once and
// re-evaluated many times: leaf values (batches) are swapped per iteration
// with set_value(), parameter leaves reference external tensors that the
// optimizer updates in place.
//
// Every primitive pins its reduction order (sequential, row-major), so for
// a fixed seed and iteration order the whole training trajectory is
// bit-reproducible regardless of the OpenMP thread count.
class Graph {
 public:
  // Constant leaf owning its value; update per iteration with set_value.
  int leaf(Tensor value, std::string name = "leaf");

  // Leaf referencing external storage (model parameters). Trainable leaves
  // receive gradients; frozen ones are skipped entirely.
  int param(Tensor* storage, bool trainable, std::string name = "param");

  // Primitives. Shapes are validated at build time.
  int add(int a, int b);        // same shape, or b broadcast over leading dim
  int sub(int a, int b);        // same shape
  int mul(int a, int b);        // elementwise, same shape
  int scalar_mul(int a, double s);
  int matmul(int a, int b);     // [m,k] x [k,n]
  int matmul_bt(int a, int b);  // [m,k] x [n,k]^T -> [m,n]
  int leaky_relu(int a);        // slope 0.2
  int softmax_groups(int a, int group);  // softmax over groups of the last dim
  int layer_norm(int a);        // over last dim, epsilon 1e-5
  int sum(int a);               // scalar
  int mean(int a);              // scalar
  int sqerr(int a, int b);      // scalar: sum((a-b)^2)
  int concat(int a, int b);     // along last dim
  int slice(int a, int from, int to);  // along last dim
  // [B, M*R*R] probability maps -> [B, 2M] expected (x,y) per joint, with
  // pixel positions mapped to [0,1] by idx/(R-1).
  int heatmap_expect(int a, int joints, int res);
  // Sum over bandwidth multipliers of unbiased MMD^2 between rows of a and
  // rows of b. The base bandwidth is the pooled median heuristic, recomputed
  // every forward pass and treated as a constant by the backward pass.
  int mmd2(int a, int b, std::vector<double> bandwidth_multipliers);
  // Same loss with absolute bandwidths; fully differentiable, so finite
  // differences agree with backward().
  int mmd2_fixed(int a, int b, std::vector<double> sigmas);

  void set_value(int id, const Tensor& v);

  // Evaluates all nodes in insertion order. Throws on shape errors (build
  // time) and on non-finite outputs ("numerical blow-up at node k").
  void forward();

  // Reverse pass from a scalar loss node. Gradients of trainable leaves are
  // available via grad(); frozen leaves and constants receive none.
  void backward(int loss);

  const Tensor& value(int id) const { return nodes_[id].value; }
  const Tensor& grad(int id) const;
  bool has_grad(int id) const { return !nodes_[id].grad.data.empty(); }

  std::vector<int> trainable() const;
  int64_t trainable_count() const;

  // External storage behind a parameter leaf (null for owned leaves).
  Tensor* external_of(int id) const { return nodes_[id].external; }

  // Bandwidths actually used by the most recent forward of an mmd2 node.
  const std::vector<double>& mmd_sigmas(int id) const;

  // Max relative error between backward() gradients and central finite
  // differences over every trainable leaf. Guarded to <= 10^4 parameters.
  double grad_check(int loss, double eps = 1e-5);

  size_t size() const { return nodes_.size(); }

 private:
  enum class Op {
    leaf, add, sub, mul, scalar_mul, matmul, matmul_bt, leaky_relu,
    softmax_groups, layer_norm, sum, mean, sqerr, concat, slice,
    heatmap_expect, mmd2
  };

  struct Node {
    Op op = Op::leaf;
    int a = -1, b = -1;
    double scalar = 0.0;
    int group = 0;
    int from = 0, to = 0;
    int joints = 0, res = 0;
    std::vector<double> multipliers;
    std::vector<double> sigmas;  // resolved per forward (mmd2)
    bool median_base = true;
    Tensor* external = nullptr;
    bool trainable = false;
    bool requires_grad = false;
    Tensor value;
    Tensor grad;
    std::string name;
  };

  int push(Node n);
  const Tensor& val_of(int id) const;
  void eval_node(int id);
  void accumulate(int id, const Tensor& g);
  void backprop_node(int id);
  void check_finite(int id) const;
  Node& node(int id);

  std::vector<Node> nodes_;
  bool forwarded_ = false;
};

}  // namespace flexpose::diff
