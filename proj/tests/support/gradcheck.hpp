#pragma once

#include <functional>

#include "talkgen/core/autodiff.hpp"

namespace talkgen::testing {

// Central-difference gradient check. `fn` must rebuild the graph from the
// leaf on every call (the leaf's value is perturbed in place). Returns the
// worst relative error max|a-n| / max(|a|+|n|, eps).
template <typename S>
double grad_check(const std::function<ad::Var<S>(const ad::Var<S>&)>& fn,
                  Tensor<S> x0, S h = S(1e-5), S eps = S(1e-8)) {
  auto leaf = ad::param(x0);
  auto loss = fn(leaf);
  ad::backward(loss);
  Tensor<S> analytic = leaf->grad_ready ? leaf->grad : Tensor<S>(x0.shape());

  double worst = 0.0;
  for (Index i = 0; i < x0.size(); ++i) {
    S keep = leaf->value[i];
    leaf->value[i] = keep + h;
    S fp = fn(leaf)->value[0];
    leaf->value[i] = keep - h;
    S fm = fn(leaf)->value[0];
    leaf->value[i] = keep;
    double numeric = (double)(fp - fm) / (2.0 * (double)h);
    double a = (double)analytic[i];
    double err = std::abs(a - numeric) / std::max(std::abs(a) + std::abs(numeric),
                                                  (double)eps);
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace talkgen::testing
