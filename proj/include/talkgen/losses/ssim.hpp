#pragma once

#include "talkgen/core/autodiff.hpp"

namespace talkgen::losses {

using ad::Var;

// Structural-similarity pose-sequence loss on a full T x 6 matrix, using
// global mean / variance / covariance (a single SSIM term, not windowed).
// Inputs are expected in normalized pose units; the constants assume a
// dynamic range of about 8 (roughly +-4 sigma after z-scoring).
constexpr double kSsimDynamicRange = 8.0;
constexpr double kSsimC1 = (0.01 * kSsimDynamicRange) * (0.01 * kSsimDynamicRange);
constexpr double kSsimC2 = (0.03 * kSsimDynamicRange) * (0.03 * kSsimDynamicRange);

template <typename S>
Var<S> ssim_pose_loss(const Var<S>& pred, const Var<S>& target,
                      S c1 = (S)kSsimC1, S c2 = (S)kSsimC2) {
  check_contract(pred->value.same_shape(target->value),
                 "ssim_pose_loss: shape mismatch");
  check_invalid(pred->value.rank() == 2 && pred->value.dim(0) >= 2 &&
                    pred->value.dim(1) == 6,
                "ssim_pose_loss: need a [T,6] sequence with T >= 2");
  check_invalid(pred->value.all_finite() && target->value.all_finite(),
                "ssim_pose_loss: non-finite input");

  auto mu_p = ad::mean_all(pred);
  auto mu_t = ad::mean_all(target);
  auto dp = ad::sub(pred, mu_p);
  auto dt = ad::sub(target, mu_t);
  auto var_p = ad::mean_all(ad::square(dp));
  auto var_t = ad::mean_all(ad::square(dt));
  auto cov = ad::mean_all(ad::mul(dp, dt));

  auto num = ad::mul(ad::add_const(ad::scale(ad::mul(mu_p, mu_t), S(2)), c1),
                     ad::add_const(ad::scale(cov, S(2)), c2));
  auto den = ad::mul(
      ad::add_const(ad::add(ad::square(mu_p), ad::square(mu_t)), c1),
      ad::add_const(ad::add(var_p, var_t), c2));
  return ad::add_const(ad::neg(ad::div(num, den)), S(1));
}

// Plain-value convenience wrapper.
template <typename S>
S ssim_pose_loss_value(const Tensor<S>& pred, const Tensor<S>& target,
                       S c1 = (S)kSsimC1, S c2 = (S)kSsimC2) {
  return ssim_pose_loss(ad::constant(pred), ad::constant(target), c1, c2)->value[0];
}

}  // namespace talkgen::losses
