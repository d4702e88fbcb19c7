#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "support/gradcheck.hpp"
#include "talkgen/losses/objectives.hpp"

using namespace talkgen;
using namespace talkgen::losses;
using ad::Var;

namespace {

fomm::Keypoints<double> random_kp(Rng& rng, Index T, Index N, Index H) {
  fomm::Keypoints<double> kp;
  Tensor<double> logits({T, N, H, H});
  rng.fill_normal(logits, 0.0, 1.0);
  kp.heatmaps = ad::softmax_rows(ad::constant(logits), T * N, 0.5);
  Tensor<double> pos({T, N, 2});
  rng.fill_uniform(pos, -0.8, 0.8);
  kp.positions = ad::constant(pos);
  Tensor<double> jac = fomm::identity_jacobians<double>(T, N);
  for (Index i = 0; i < jac.size(); ++i) jac[i] += 0.1 * rng.normal();
  kp.jacobians = ad::constant(jac);
  return kp;
}

Tensor<double> random_image(Rng& rng, Index size) {
  Tensor<double> t({1, 3, size, size});
  rng.fill_uniform(t, 0.0, 1.0);
  return t;
}

// Direct per-channel loop oracle for the perceptual loss, using the same
// frozen weights but an independent convolution/accumulation path.
double perceptual_oracle(const Tensor<double>& a, const Tensor<double>& b,
                         const PerceptualExtractor<double>& ext) {
  auto forward_naive = [&](const Tensor<double>& img) {
    std::vector<Tensor<double>> taps;
    Tensor<double> cur = img;  // [1,C,H,W]
    for (size_t li = 0; li < ext.layers().size(); ++li) {
      const auto& layer = ext.layers()[li];
      Index cin = cur.dim(1), H = cur.dim(2), W = cur.dim(3);
      if (H < 3 || W < 3) break;
      Index cout = layer.w->value.dim(0);
      Tensor<double> next({1, cout, H, W});
      for (Index co = 0; co < cout; ++co)
        for (Index y = 0; y < H; ++y)
          for (Index x = 0; x < W; ++x) {
            double acc = layer.b->value[co];
            for (Index ci = 0; ci < cin; ++ci)
              for (Index ky = 0; ky < 3; ++ky)
                for (Index kx = 0; kx < 3; ++kx) {
                  Index iy = y + ky - 1, ix = x + kx - 1;
                  if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                  acc += layer.w->value(co, (ci * 3 + ky) * 3 + kx) *
                         cur(0, ci, iy, ix);
                }
            next(0, co, y, x) = std::max(0.0, acc);
          }
      taps.push_back(next);
      if (li + 1 < ext.layers().size()) {
        if (H < 2 || W < 2) break;
        Tensor<double> pooled({1, cout, H / 2, W / 2});
        for (Index co = 0; co < cout; ++co)
          for (Index y = 0; y < H / 2; ++y)
            for (Index x = 0; x < W / 2; ++x)
              pooled(0, co, y, x) =
                  (next(0, co, 2 * y, 2 * x) + next(0, co, 2 * y, 2 * x + 1) +
                   next(0, co, 2 * y + 1, 2 * x) + next(0, co, 2 * y + 1, 2 * x + 1)) /
                  4.0;
        cur = pooled;
      }
    }
    return taps;
  };
  auto ta = forward_naive(a);
  auto tb = forward_naive(b);
  double total = 0;
  for (size_t i = 0; i < ta.size(); ++i) {
    Index C = ta[i].dim(1), H = ta[i].dim(2), W = ta[i].dim(3);
    for (Index c = 0; c < C; ++c) {
      double mean_abs = 0;
      for (Index y = 0; y < H; ++y)
        for (Index x = 0; x < W; ++x)
          mean_abs += std::abs(ta[i](0, c, y, x) - tb[i](0, c, y, x));
      total += mean_abs / (double)(H * W);
    }
  }
  return total;
}

}  // namespace

TEST_CASE("stage1 loss: fixed point, offset oracle, lambda_m decay") {
  Rng rng(31);
  auto kp = random_kp(rng, 3, 4, 8);
  LossWeights w;

  auto r0 = stage1_loss(kp, kp, w, 1.0);
  CHECK(r0.total->value[0] == doctest::Approx(0.0).epsilon(1e-12));

  // only positions offset by +0.1 -> lambda_p * 0.1
  fomm::Keypoints<double> shifted = kp;
  Tensor<double> pos = kp.positions->value;
  pos.array() += 0.1;
  shifted.positions = ad::constant(pos);
  auto r1 = stage1_loss(shifted, kp, w, 1.0);
  CHECK(r1.total->value[0] == doctest::Approx(w.lambda_p * 0.1).epsilon(1e-9));
  CHECK(r1.components.at("position_l1") == doctest::Approx(0.1).epsilon(1e-9));

  // after the decay horizon the heatmap term contributes exactly zero
  fomm::Keypoints<double> heat_off = kp;
  Tensor<double> hm = kp.heatmaps->value;
  hm.array() += 0.01;
  heat_off.heatmaps = ad::constant(hm);
  auto with_m = stage1_loss(heat_off, kp, w, 1.0);
  auto no_m = stage1_loss(heat_off, kp, w, lambda_m_schedule(1.0, 10, 10));
  CHECK(no_m.total->value[0] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(with_m.total->value[0] > 0.0);
  CHECK(lambda_m_schedule(1.0, 0, 10) == doctest::Approx(1.0));
  CHECK(lambda_m_schedule(1.0, 5, 10) == doctest::Approx(0.5));
  CHECK(lambda_m_schedule(1.0, 999, 10) == 0.0);
}

TEST_CASE("stage1 gradient check through heatmaps, positions and jacobians") {
  Rng rng(32);
  auto target = random_kp(rng, 2, 3, 6);
  LossWeights w;
  Tensor<double> pos0({2, 3, 2});
  rng.fill_uniform(pos0, -0.5, 0.5);
  double err = testing::grad_check<double>(
      [&](const Var<double>& v) {
        fomm::Keypoints<double> pred;
        pred.heatmaps = target.heatmaps;
        pred.positions = v;
        pred.jacobians = target.jacobians;
        return stage1_loss(pred, target, w, 0.7).total;
      },
      pos0, 1e-6);
  CHECK(err < 1e-3);
}

TEST_CASE("perceptual loss: fixed point, nonnegativity, symmetry, loop oracle") {
  Rng rng(33);
  PerceptualExtractor<double> ext(99, 4);
  auto a = random_image(rng, 32);
  auto b = random_image(rng, 32);

  auto va = ad::constant(a);
  auto vb = ad::constant(b);
  CHECK(perceptual_loss(va, va, ext)->value[0] == 0.0);

  double lab = perceptual_loss(va, vb, ext)->value[0];
  double lba = perceptual_loss(vb, va, ext)->value[0];
  CHECK(lab >= 0.0);
  CHECK(lab == doctest::Approx(lba).epsilon(1e-12));

  double oracle = perceptual_oracle(a, b, ext);
  CHECK(lab == doctest::Approx(oracle).epsilon(1e-6));
}

TEST_CASE("pyramid loss: degenerate pyramid, additivity, minimum size guard") {
  Rng rng(34);
  PerceptualExtractor<double> ext(7, 4);
  auto a = ad::constant(random_image(rng, 32));
  auto b = ad::constant(random_image(rng, 32));

  double single = pyramid_perceptual_loss(a, b, ext, {1.0})->value[0];
  double plain = perceptual_loss(a, b, ext)->value[0];
  CHECK(single == doctest::Approx(plain).epsilon(1e-12));

  CHECK(pyramid_perceptual_loss(a, a, ext)->value[0] == 0.0);

  std::vector<double> scales = {1.0, 0.5, 0.25, 0.125};
  double sum = 0;
  for (double s : scales)
    sum += pyramid_perceptual_loss(a, b, ext, {s})->value[0];
  double all = pyramid_perceptual_loss(a, b, ext, scales)->value[0];
  CHECK(all == doctest::Approx(sum).epsilon(1e-9));

  CHECK_THROWS_AS((void)pyramid_perceptual_loss(a, b, ext, {1.0 / 32}), Error);
  CHECK_THROWS_AS((void)pyramid_perceptual_loss(a, b, ext, {0.0}), Error);
}

TEST_CASE("pyramid loss gradient matches finite differences") {
  Rng rng(35);
  PerceptualExtractor<double> ext(11, 4);
  auto gt = ad::constant(random_image(rng, 16));
  Tensor<double> gen0 = random_image(rng, 16);
  double err = testing::grad_check<double>(
      [&](const Var<double>& v) {
        return pyramid_perceptual_loss(v, gt, ext, {1.0, 0.5});
      },
      gen0, 1e-6);
  CHECK(err < 1e-3);
}

TEST_CASE("stage2 loss: fixed point, position-only oracle, weight linearity") {
  Rng rng(36);
  PerceptualExtractor<double> ext(13, 4);
  LossWeights w;

  Tensor<double> pos({4, 3, 2});
  rng.fill_uniform(pos, -0.5, 0.5);
  auto target = ad::constant(pos);

  fomm::EquivarianceLosses<double> eq_zero;
  eq_zero.position = ad::constant(Tensor<double>::scalar(0.0));
  eq_zero.jacobian = ad::constant(Tensor<double>::scalar(0.0));

  auto img = ad::constant(random_image(rng, 32));
  auto r0 = stage2_loss(target, target, {img}, {img}, ext, eq_zero, w);
  CHECK(r0.total->value[0] == doctest::Approx(0.0).epsilon(1e-12));

  Tensor<double> shifted = pos;
  shifted.array() += 0.01;
  auto r1 = stage2_loss(ad::constant(shifted), target, {img}, {img}, ext, eq_zero, w);
  CHECK(r1.total->value[0] == doctest::Approx(1.0).epsilon(1e-9));

  // doubling a lambda doubles exactly that term
  auto imgb = ad::constant(random_image(rng, 32));
  auto base = stage2_loss(ad::constant(shifted), target, {img}, {imgb}, ext, eq_zero, w);
  LossWeights w2 = w;
  w2.lambda_rec *= 2.0;
  auto doubled =
      stage2_loss(ad::constant(shifted), target, {img}, {imgb}, ext, eq_zero, w2);
  double rec_term = base.components.at("reconstruction") * w.lambda_rec;
  CHECK(doubled.total->value[0] - base.total->value[0] ==
        doctest::Approx(rec_term).epsilon(1e-9));
  // and the reported components satisfy total = sum lambda_i * comp_i
  double reconstructed =
      w.lambda_p_prime * base.components.at("position_l1") +
      w.lambda_rec * base.components.at("reconstruction") +
      w.lambda_eq_p * base.components.at("equivariance_p") +
      w.lambda_eq_j * base.components.at("equivariance_j");
  CHECK(base.total->value[0] == doctest::Approx(reconstructed).epsilon(1e-9));
}

TEST_CASE("stage2: gradients reach trainable inputs, frozen constants get none") {
  Rng rng(37);
  PerceptualExtractor<double> ext(17, 4);
  LossWeights w;

  Tensor<double> pos0({2, 2, 2});
  rng.fill_uniform(pos0, -0.5, 0.5);
  auto pred = ad::param(pos0);
  Tensor<double> tgt = pos0;
  tgt.array() += 0.05;
  auto target = ad::constant(tgt);

  fomm::EquivarianceLosses<double> eq_zero;
  eq_zero.position = ad::constant(Tensor<double>::scalar(0.0));
  eq_zero.jacobian = ad::constant(Tensor<double>::scalar(0.0));
  auto img = ad::constant(random_image(rng, 32));

  auto r = stage2_loss(pred, target, {img}, {img}, ext, eq_zero, w);
  ad::backward(r.total);
  CHECK(pred->grad_ready);
  CHECK_FALSE(target->grad_ready);
  CHECK_FALSE(img->grad_ready);
  double gmax = 0;
  for (Index i = 0; i < pred->grad.size(); ++i)
    gmax = std::max(gmax, std::abs(pred->grad[i]));
  CHECK(gmax > 0.0);
}

TEST_CASE("weights must be nonnegative") {
  LossWeights w;
  w.lambda_rec = -1.0;
  CHECK_THROWS_AS(w.validate(), Error);
}
