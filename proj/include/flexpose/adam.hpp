#pragma once

#include <vector>

#include "flexpose/tensor.hpp"

namespace flexpose::diff {

// Adam with bias correction. Moment accumulators live here, one pair per
// registered parameter; parameters are updated in place.
class Adam {
 public:
  Adam(double lr, double beta1 = 0.9, double beta2 = 0.999,
       double epsilon = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(epsilon) {}

  // Registration order defines the update order; call once per parameter.
  void attach(Tensor* param);

  // One update over all attached parameters. grads[i] pairs with the i-th
  // attached parameter; an empty gradient tensor means zero gradient.
  void step(const std::vector<const Tensor*>& grads);

  int64_t step_count() const { return t_; }
  double lr() const { return lr_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  int64_t t_ = 0;
  std::vector<Tensor*> params_;
  std::vector<Tensor> m_, v_;
};

}  // namespace flexpose::diff
