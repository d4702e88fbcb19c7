#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "support/gradcheck.hpp"
#include "talkgen/nets/fomm.hpp"

using namespace talkgen;
using namespace talkgen::fomm;
using ad::Var;

namespace {

ArchConfig tiny_arch() {
  ArchConfig a;
  a.image_size = 16;
  a.num_keypoints = 3;
  a.detector_base = 8;
  a.detector_levels = 2;
  a.dense_motion_base = 8;
  a.dense_motion_levels = 2;
  a.generator_base = 8;
  a.generator_res_blocks = 2;
  return a;
}

Tensor<double> random_image(Rng& rng, Index B, Index size) {
  Tensor<double> t({B, 3, size, size});
  rng.fill_uniform(t, 0.0, 1.0);
  return t;
}

}  // namespace

TEST_CASE("detector: determinism, arity and heatmap normalization") {
  Rng rng(5);
  nets::ParamRegistry<double> reg;
  auto arch = tiny_arch();
  KeypointDetector<double> det(reg, rng, "nd", arch);

  auto img = ad::constant(random_image(rng, 2, 16));
  auto a = det.detect(img);
  auto b = det.detect(img);
  CHECK(a.positions->value.shape() == Shape{2, 3, 2});
  CHECK(a.jacobians->value.shape() == Shape{2, 3, 2, 2});
  for (Index i = 0; i < a.positions->value.size(); ++i)
    CHECK(a.positions->value[i] == b.positions->value[i]);

  // partition of unity per heatmap
  for (Index bn = 0; bn < 2 * 3; ++bn) {
    double s = 0;
    for (Index i = 0; i < 16 * 16; ++i) s += a.heatmaps->value[bn * 256 + i];
    CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
  }
  // positions always inside the grid hull
  for (Index i = 0; i < a.positions->value.size(); ++i) {
    CHECK(a.positions->value[i] <= 1.0 + 1e-6);
    CHECK(a.positions->value[i] >= -1.0 - 1e-6);
  }

  auto bad = random_image(rng, 1, 16);
  bad[7] = std::nan("");
  CHECK_THROWS_AS((void)det.detect(ad::constant(bad)), Error);
}

TEST_CASE("no_jacobian ablation pins jacobians to exact identity") {
  Rng rng(6);
  nets::ParamRegistry<double> reg;
  auto arch = tiny_arch();
  arch.no_jacobian = true;
  KeypointDetector<double> det(reg, rng, "nd", arch);
  auto kp = det.detect(ad::constant(random_image(rng, 1, 16)));
  for (Index n = 0; n < 3; ++n) {
    CHECK(kp.jacobians->value(0, n, 0, 0) == 1.0);
    CHECK(kp.jacobians->value(0, n, 0, 1) == 0.0);
    CHECK(kp.jacobians->value(0, n, 1, 0) == 0.0);
    CHECK(kp.jacobians->value(0, n, 1, 1) == 1.0);
  }
}

TEST_CASE("zero-initialized jacobian head starts at identity") {
  Rng rng(7);
  nets::ParamRegistry<double> reg;
  KeypointDetector<double> det(reg, rng, "nd", tiny_arch());
  auto kp = det.detect(ad::constant(random_image(rng, 1, 16)));
  for (Index n = 0; n < 3; ++n) {
    CHECK(kp.jacobians->value(0, n, 0, 0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(kp.jacobians->value(0, n, 0, 1) == doctest::Approx(0.0).epsilon(1e-12));
  }
}

TEST_CASE("combine_dense_motion: one-hot background, linear mixtures, oracle") {
  Rng rng(8);
  const Index N = 3, H = 8, W = 8;
  Tensor<double> cands({N + 1, H, W, 2});
  rng.fill_uniform(cands, -1.0, 1.0);
  auto grid = ad::make_grid<double>(H, W);
  for (Index y = 0; y < H; ++y)
    for (Index x = 0; x < W; ++x)
      for (Index c = 0; c < 2; ++c) cands(N, y, x, c) = grid(y, x, c);

  SUBCASE("one-hot mask on the background gives the identity flow") {
    Tensor<double> masks({N + 1, H, W});
    for (Index y = 0; y < H; ++y)
      for (Index x = 0; x < W; ++x) masks(N, y, x) = 1.0;
    auto f = combine_dense_motion(ad::constant(cands), ad::constant(masks),
                                  ad::constant(Tensor<double>({1, H, W})));
    for (Index y = 0; y < H; ++y)
      for (Index x = 0; x < W; ++x)
        for (Index c = 0; c < 2; ++c)
          CHECK(f.flow->value(y, x, c) == doctest::Approx(grid(y, x, c)));
    // zero logits -> occlusion 0.5
    CHECK(f.occlusion->value(0, 3, 3) == doctest::Approx(0.5));
  }

  SUBCASE("uniform masks over two constant candidates average them") {
    Tensor<double> c2({2, H, W, 2});
    for (Index y = 0; y < H; ++y)
      for (Index x = 0; x < W; ++x) {
        c2(0, y, x, 0) = 0.3;
        c2(0, y, x, 1) = -0.1;
        c2(1, y, x, 0) = -0.5;
        c2(1, y, x, 1) = 0.7;
      }
    auto m = Tensor<double>::full({2, H, W}, 0.5);
    auto f = combine_dense_motion(ad::constant(c2), ad::constant(m),
                                  ad::constant(Tensor<double>({1, H, W})));
    for (Index y = 0; y < H; ++y)
      for (Index x = 0; x < W; ++x) {
        CHECK(f.flow->value(y, x, 0) == doctest::Approx(-0.1));
        CHECK(f.flow->value(y, x, 1) == doctest::Approx(0.3));
      }
  }

  SUBCASE("random masks match the per-pixel brute-force mixture") {
    Tensor<double> logits({N + 1, H, W});
    rng.fill_normal(logits, 0.0, 1.0);
    auto masks = ad::softmax_channel(
        ad::reshape(ad::constant(logits), {1, N + 1, H * W}), 1, N + 1);
    auto masks3 = ad::reshape(masks, {N + 1, H, W});
    auto f = combine_dense_motion(ad::constant(cands), masks3,
                                  ad::constant(Tensor<double>({1, H, W})));
    for (Index y = 0; y < H; ++y)
      for (Index x = 0; x < W; ++x)
        for (Index c = 0; c < 2; ++c) {
          double acc = 0;
          for (Index k = 0; k <= N; ++k)
            acc += masks3->value(k, y, x) * cands(k, y, x, c);
          CHECK(std::abs(f.flow->value(y, x, c) - acc) < 1e-6);
        }
  }
}

TEST_CASE("warp: identity exact, integer shift on the interior, occlusion gate") {
  Rng rng(9);
  const Index H = 8, W = 8;
  Tensor<double> img({3, H, W});
  rng.fill_uniform(img, 0.0, 1.0);

  auto ident = ad::constant(ad::make_grid<double>(H, W));
  auto out = warp(ad::constant(img), ident);
  for (Index i = 0; i < img.size(); ++i)
    CHECK(std::abs(out->value[i] - img[i]) < 1e-6);

  // constant one-pixel shift: out(y,x) = img(y, x+1)
  Tensor<double> shifted = ad::make_grid<double>(H, W);
  const double step = 2.0 / (W - 1);
  for (Index y = 0; y < H; ++y)
    for (Index x = 0; x < W; ++x) shifted(y, x, 0) += step;
  auto out2 = warp(ad::constant(img), ad::constant(shifted));
  for (Index c = 0; c < 3; ++c)
    for (Index y = 0; y < H; ++y)
      for (Index x = 0; x + 1 < W; ++x)
        CHECK(std::abs(out2->value(c, y, x) - img(c, y, x + 1)) < 1e-6);

  auto gated = ad::mul_gate(out, ad::constant(Tensor<double>({1, H, W})));
  for (Index i = 0; i < gated->value.size(); ++i) CHECK(gated->value[i] == 0.0);
}

TEST_CASE("dense motion network: masks form a partition of unity") {
  Rng rng(10);
  nets::ParamRegistry<double> reg;
  auto arch = tiny_arch();
  DenseMotionNetwork<double> dm(reg, rng, "dm", arch);
  KeypointDetector<double> det(reg, rng, "nd", arch);

  auto img = ad::constant(random_image(rng, 2, 16));
  auto kp = det.detect(img);
  auto chw = ad::reshape(ad::slice(img, 0, 0, 1), {3, 16, 16});
  auto field = dm.forward(chw, kp, 0, kp, 1);
  CHECK(field.flow->value.shape() == Shape{16, 16, 2});
  CHECK(field.occlusion->value.min() >= 0.0);
  CHECK(field.occlusion->value.max() <= 1.0);
  for (Index y = 0; y < 16; ++y)
    for (Index x = 0; x < 16; ++x) {
      double s = 0;
      for (Index k = 0; k < 4; ++k) s += field.masks->value(k, y, x);
      CHECK(s == doctest::Approx(1.0).epsilon(1e-5));
    }
}

TEST_CASE("generator: output shape, range and order preservation") {
  Rng rng(11);
  nets::ParamRegistry<double> reg;
  auto arch = tiny_arch();
  OcclusionAwareGenerator<double> gen(reg, rng, "ni", arch);
  KeypointDetector<double> det(reg, rng, "nd", arch);

  auto frames = ad::constant(random_image(rng, 3, 16));
  auto kp = det.detect(frames);
  auto src = ad::slice(frames, 0, 0, 1);

  auto f1 = gen.generate(src, kp, 0, kp, 1);
  auto f2 = gen.generate(src, kp, 0, kp, 2);
  CHECK(f1->value.shape() == Shape{1, 3, 16, 16});
  CHECK(f1->value.min() >= 0.0);
  CHECK(f1->value.max() <= 1.0);
  auto f1_again = gen.generate(src, kp, 0, kp, 1);
  double d_same = 0, d_other = 0;
  for (Index i = 0; i < f1->value.size(); ++i) {
    d_same = std::max(d_same, std::abs(f1->value[i] - f1_again->value[i]));
    d_other = std::max(d_other, std::abs(f1->value[i] - f2->value[i]));
  }
  CHECK(d_same == 0.0);   // deterministic
  CHECK(d_other > 0.0);   // order-sensitive in the driving keypoints
}

TEST_CASE("tps: zero magnitude is the identity with zero losses") {
  Rng rng(12);
  auto tps = TpsTransform::random(rng, 0.0, 0.0, 5);
  CHECK(tps.is_identity());
  Eigen::Vector2d z(0.3, -0.7);
  CHECK((tps.apply(z) - z).norm() == 0.0);
  CHECK((tps.jacobian(z) - Eigen::Matrix2d::Identity()).norm() == 0.0);

  nets::ParamRegistry<double> reg;
  KeypointDetector<double> det(reg, rng, "nd", tiny_arch());
  auto img = ad::constant(random_image(rng, 1, 16));
  auto kp = det.detect(img);
  auto warped_img = warp(ad::reshape(img, {3, 16, 16}),
                         ad::constant(tps.warp_grid<double>(16, 16)));
  auto kp_w = det.detect(ad::reshape(warped_img, {1, 3, 16, 16}));
  auto eq = equivariance_losses(kp, kp_w, tps, true);
  CHECK(eq.position->value[0] == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(eq.jacobian->value[0] == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("tps: pure affine transform has jacobian A everywhere") {
  Eigen::Matrix2d A;
  A << 1.2, 0.3, -0.1, 0.9;
  auto tps = TpsTransform::affine(A, Eigen::Vector2d(0.05, -0.02));
  for (double x : {-0.8, 0.0, 0.6})
    for (double y : {-0.5, 0.2, 0.9}) {
      Eigen::Matrix2d J = tps.jacobian(Eigen::Vector2d(x, y));
      CHECK((J - A).norm() < 1e-12);
    }
}

TEST_CASE("tps: analytic jacobian matches finite differences") {
  Rng rng(13);
  auto tps = TpsTransform::random(rng, 0.05, 0.01, 5);
  const double h = 1e-6;
  for (int trial = 0; trial < 10; ++trial) {
    Eigen::Vector2d z(rng.uniform(-0.9, 0.9), rng.uniform(-0.9, 0.9));
    Eigen::Matrix2d J = tps.jacobian(z);
    for (int c = 0; c < 2; ++c) {
      Eigen::Vector2d zp = z, zm = z;
      zp[c] += h;
      zm[c] -= h;
      Eigen::Vector2d fd = (tps.apply(zp) - tps.apply(zm)) / (2 * h);
      for (int r = 0; r < 2; ++r) {
        double denom = std::max(1.0, std::abs(fd[r]));
        CHECK(std::abs(J(r, c) - fd[r]) / denom < 1e-3);
      }
    }
  }
}

TEST_CASE("equivariance losses are nonnegative and differentiable") {
  Rng rng(14);
  auto tps = TpsTransform::random(rng, 0.05, 0.005, 5);
  const Index B = 1, N = 3;

  Tensor<double> p0({B, N, 2}), pw({B, N, 2});
  rng.fill_uniform(p0, -0.5, 0.5);
  rng.fill_uniform(pw, -0.5, 0.5);
  Tensor<double> j0 = identity_jacobians<double>(B, N);
  Tensor<double> jw = identity_jacobians<double>(B, N);
  for (Index i = 0; i < j0.size(); ++i) {
    j0[i] += 0.1 * rng.normal();
    jw[i] += 0.1 * rng.normal();
  }

  Keypoints<double> kw;
  kw.positions = ad::constant(pw);
  kw.jacobians = ad::constant(jw);

  auto make_loss = [&](const Var<double>& pos_var, const Var<double>& jac_var) {
    Keypoints<double> k;
    k.positions = pos_var;
    k.jacobians = jac_var;
    auto eq = equivariance_losses(k, kw, tps, true);
    return ad::add(eq.position, eq.jacobian);
  };
  {
    auto l = make_loss(ad::constant(p0), ad::constant(j0));
    CHECK(l->value[0] >= 0.0);
  }
  auto jfix = ad::constant(j0);
  CHECK(testing::grad_check<double>(
            [&](const Var<double>& v) { return make_loss(v, jfix); }, p0) < 1e-6);
  auto pfix = ad::constant(p0);
  CHECK(testing::grad_check<double>(
            [&](const Var<double>& v) { return make_loss(pfix, v); }, j0, 1e-6) <
        1e-5);
}

TEST_CASE("singular driving jacobian raises a named error") {
  const Index N = 2, H = 4, W = 4;
  Tensor<double> p({N, 2});
  Tensor<double> ident = identity_jacobians<double>(1, N).reshaped({N, 2, 2});
  Tensor<double> sing = ident;
  sing(1, 0, 0) = 0.0;
  sing(1, 1, 1) = 0.0;  // keypoint 1 singular
  CHECK_THROWS_WITH_AS(
      (void)ad::affine_candidate_flows(ad::constant(p), ad::constant(ident),
                                       ad::constant(p), ad::constant(sing), H, W),
      doctest::Contains("keypoint 1"), Error);
}
