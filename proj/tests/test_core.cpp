#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "support/gradcheck.hpp"
#include "talkgen/core/autodiff.hpp"
#include "talkgen/core/kp_ops.hpp"
#include "talkgen/core/nn_ops.hpp"
#include "talkgen/core/rng.hpp"
#include "talkgen/core/serialize.hpp"
#include "talkgen/core/tensor.hpp"

using namespace talkgen;
using ad::Var;
namespace tt = talkgen::testing;

namespace {
Tensor<double> randn(Rng& rng, Shape s, double sd = 1.0) {
  Tensor<double> t(std::move(s));
  rng.fill_normal(t, 0.0, sd);
  return t;
}
}  // namespace

TEST_CASE("tensor basics") {
  auto t = TensorD::from({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t(1, 2) == 6);
  CHECK(t.sum() == 21);
  auto r = t.reshaped({3, 2});
  CHECK(r(2, 1) == 6);
  CHECK_THROWS_AS((void)t.reshaped({4, 2}), Error);
  auto m = t.matrix(2, 3);
  CHECK(m(0, 1) == 2);
}

TEST_CASE("rng determinism and serialization") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  auto st = a.serialize();
  double x = a.normal();
  Rng c;
  c.deserialize(st);
  CHECK(c.normal() == x);
}

TEST_CASE("backward accumulates through shared leaves") {
  auto x = ad::param(TensorD::from({2}, {3.0, -2.0}));
  auto y = ad::add(ad::mul(x, x), ad::scale(x, 2.0));  // x^2 + 2x
  auto loss = ad::sum_all(y);
  ad::backward(loss);
  CHECK(x->grad[0] == doctest::Approx(2 * 3.0 + 2));
  CHECK(x->grad[1] == doctest::Approx(2 * -2.0 + 2));
}

TEST_CASE("elementwise and reduction gradients match finite differences") {
  Rng rng(7);
  auto x0 = randn(rng, {3, 4});
  auto c = ad::constant(randn(rng, {3, 4}));
  auto scalar = ad::constant(TensorD::scalar(0.7));

  std::vector<std::pair<const char*, std::function<Var<double>(const Var<double>&)>>>
      cases = {
          {"mul", [&](const Var<double>& v) { return ad::mean_all(ad::mul(v, c)); }},
          {"div",
           [&](const Var<double>& v) {
             return ad::mean_all(ad::div(v, ad::add_const(ad::square(c), 1.0)));
           }},
          {"scalar-broadcast",
           [&](const Var<double>& v) {
             return ad::sum_all(ad::mul(ad::sub(v, scalar), scalar));
           }},
          {"sigmoid",
           [&](const Var<double>& v) { return ad::mean_all(ad::sigmoid(v)); }},
          {"tanh", [&](const Var<double>& v) { return ad::mean_all(ad::tanh_(v)); }},
          {"exp", [&](const Var<double>& v) { return ad::mean_all(ad::exp_(v)); }},
          {"square-sqrt",
           [&](const Var<double>& v) {
             return ad::mean_all(ad::sqrt_(ad::add_const(ad::square(v), 1.0)));
           }},
          {"leaky_relu",
           [&](const Var<double>& v) {
             return ad::mean_all(ad::leaky_relu(v, 0.2));
           }},
          {"abs", [&](const Var<double>& v) { return ad::mean_all(ad::abs_(v)); }},
      };
  for (auto& [name, fn] : cases) {
    INFO(name);
    CHECK(tt::grad_check<double>(fn, x0) < 1e-6);
  }
}

TEST_CASE("matmul and linear gradients") {
  Rng rng(11);
  auto a0 = randn(rng, {3, 5});
  auto b = ad::constant(randn(rng, {5, 2}));
  CHECK(tt::grad_check<double>(
            [&](const Var<double>& v) { return ad::sum_all(ad::square(ad::matmul(v, b))); },
            a0) < 1e-6);

  auto x = ad::constant(randn(rng, {4, 5}));
  auto bias = ad::constant(randn(rng, {2}));
  CHECK(tt::grad_check<double>(
            [&](const Var<double>& v) {
              return ad::mean_all(ad::square(ad::linear(x, v, bias)));
            },
            randn(rng, {5, 2})) < 1e-6);
}

TEST_CASE("concat and slice round trip gradients") {
  Rng rng(13);
  auto x0 = randn(rng, {2, 3, 2});
  auto other = ad::constant(randn(rng, {2, 2, 2}));
  auto fn = [&](const Var<double>& v) {
    auto cat = ad::concat<double>({v, other}, 1);      // [2,5,2]
    auto sl = ad::slice(cat, 1, 1, 3);                 // includes v rows 1,2
    return ad::mean_all(ad::square(sl));
  };
  CHECK(tt::grad_check<double>(fn, x0) < 1e-6);
}

TEST_CASE("conv2d matches direct computation and gradients") {
  Rng rng(17);
  // direct check on a tiny case
  auto x = ad::constant(randn(rng, {1, 1, 3, 3}));
  auto w = ad::constant(randn(rng, {1, 4}));
  auto b = ad::constant(TensorD::zeros({1}));
  auto y = ad::conv2d(x, w, b, 2, 1, 0);
  double expect = x->value(0, 0, 0, 0) * w->value[0] + x->value(0, 0, 0, 1) * w->value[1] +
                  x->value(0, 0, 1, 0) * w->value[2] + x->value(0, 0, 1, 1) * w->value[3];
  CHECK(y->value(0, 0, 0, 0) == doctest::Approx(expect));

  auto xin = ad::constant(randn(rng, {2, 3, 5, 5}));
  auto bias = ad::constant(randn(rng, {4}));
  CHECK(tt::grad_check<double>(
            [&](const Var<double>& v) {
              return ad::mean_all(ad::square(ad::conv2d(xin, v, bias, 3, 2, 1)));
            },
            randn(rng, {4, 27}, 0.5)) < 1e-6);
  auto wfix = ad::constant(randn(rng, {4, 27}, 0.5));
  CHECK(tt::grad_check<double>(
            [&](const Var<double>& v) {
              return ad::mean_all(ad::square(ad::conv2d(v, wfix, bias, 3, 2, 1)));
            },
            randn(rng, {2, 3, 5, 5})) < 1e-6);
}

TEST_CASE("conv1d and conv3d gradients") {
  Rng rng(19);
  auto b1 = ad::constant(randn(rng, {2}));
  auto x1 = ad::constant(randn(rng, {2, 3, 9}));
  CHECK(tt::grad_check<double>(
            [&](const Var<double>& v) {
              return ad::mean_all(ad::square(ad::conv1d(x1, v, b1, 4, 2, 0)));
            },
            randn(rng, {2, 12}, 0.5)) < 1e-6);

  auto b3 = ad::constant(randn(rng, {2}));
  auto w3 = ad::constant(randn(rng, {2, 2 * 27}, 0.4));
  CHECK(tt::grad_check<double>(
            [&](const Var<double>& v) {
              return ad::mean_all(ad::square(ad::conv3d(v, w3, b3, 3, 1, 1)));
            },
            randn(rng, {2, 4, 4, 4})) < 1e-6);
}

TEST_CASE("pool, upsample, instance norm gradients") {
  Rng rng(23);
  CHECK(tt::grad_check<double>(
            [&](const Var<double>& v) {
              return ad::mean_all(ad::square(ad::avg_pool2d(v, 2)));
            },
            randn(rng, {1, 2, 4, 4})) < 1e-6);
  CHECK(tt::grad_check<double>(
            [&](const Var<double>& v) {
              return ad::mean_all(ad::square(ad::upsample_nearest2d(v, 2)));
            },
            randn(rng, {1, 2, 3, 3})) < 1e-6);
  CHECK(tt::grad_check<double>(
            [&](const Var<double>& v) {
              return ad::mean_all(ad::square(ad::avg_pool3d(v, 2)));
            },
            randn(rng, {2, 2, 4, 4})) < 1e-6);

  auto gate = ad::constant(randn(rng, {1, 3, 3}));
  CHECK(tt::grad_check<double>(
            [&](const Var<double>& v) {
              return ad::mean_all(ad::square(ad::mul_gate(v, gate)));
            },
            randn(rng, {2, 3, 3})) < 1e-6);
  auto feat = ad::constant(randn(rng, {2, 3, 3}));
  CHECK(tt::grad_check<double>(
            [&](const Var<double>& v) {
              return ad::mean_all(ad::square(ad::mul_gate(feat, v)));
            },
            randn(rng, {1, 3, 3})) < 1e-6);

  auto gamma = ad::constant(TensorD::from({2}, {1.3, 0.8}));
  auto beta = ad::constant(TensorD::from({2}, {0.1, -0.2}));
  auto target = ad::constant(randn(rng, {2, 2, 6}));
  CHECK(tt::grad_check<double>(
            [&](const Var<double>& v) {
              return ad::mean_all(ad::square(
                  ad::sub(ad::instance_norm(v, 2, 2, gamma, beta), target)));
            },
            randn(rng, {2, 2, 6})) < 1e-5);
  // gamma/beta path
  auto x = ad::constant(randn(rng, {2, 2, 6}));
  CHECK(tt::grad_check<double>(
            [&](const Var<double>& v) {
              return ad::mean_all(ad::square(
                  ad::sub(ad::instance_norm(x, 2, 2, v, beta), target)));
            },
            randn(rng, {2})) < 1e-6);
}

TEST_CASE("softmax ops: normalization and gradients") {
  Rng rng(29);
  auto x0 = randn(rng, {2, 3, 4});
  {
    auto v = ad::constant(x0);
    auto p = ad::softmax_rows(v, 6, 0.1);
    for (Index g = 0; g < 6; ++g) {
      double s = 0;
      for (Index i = 0; i < 4; ++i) s += p->value[g * 4 + i];
      CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
    }
    auto q = ad::softmax_channel(v, 2, 3);
    for (Index b = 0; b < 2; ++b)
      for (Index i = 0; i < 4; ++i) {
        double s = 0;
        for (Index c = 0; c < 3; ++c) s += q->value[(b * 3 + c) * 4 + i];
        CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
      }
  }
  auto tgt = ad::constant(randn(rng, {2, 3, 4}));
  CHECK(tt::grad_check<double>(
            [&](const Var<double>& v) {
              return ad::mean_all(ad::square(ad::sub(ad::softmax_rows(v, 6, 0.5), tgt)));
            },
            x0) < 1e-6);
  CHECK(tt::grad_check<double>(
            [&](const Var<double>& v) {
              return ad::mean_all(
                  ad::square(ad::sub(ad::softmax_channel(v, 2, 3), tgt)));
            },
            x0) < 1e-6);
}

TEST_CASE("grid_sample: identity grid reproduces input; gradients") {
  Rng rng(31);
  auto input = ad::constant(randn(rng, {2, 5, 6}));
  auto grid = ad::constant(ad::make_grid<double>(5, 6));
  auto out = ad::grid_sample(input, grid);
  for (Index i = 0; i < out->value.size(); ++i)
    CHECK(out->value[i] == doctest::Approx(input->value[i]).epsilon(1e-12));

  // gradient wrt input
  Tensor<double> g0 = ad::make_grid<double>(4, 4);
  g0.array() *= 0.7;  // interior samples
  auto gridc = ad::constant(g0);
  CHECK(tt::grad_check<double>(
            [&](const Var<double>& v) {
              return ad::mean_all(ad::square(ad::grid_sample(v, gridc)));
            },
            randn(rng, {2, 5, 5})) < 1e-6);
  // gradient wrt grid
  auto inc = ad::constant(randn(rng, {2, 7, 7}));
  CHECK(tt::grad_check<double>(
            [&](const Var<double>& v) {
              return ad::mean_all(ad::square(ad::grid_sample(inc, v)));
            },
            g0, 1e-6) < 1e-4);
}

TEST_CASE("keypoint ops gradients") {
  Rng rng(37);
  // kp_gaussian
  Tensor<double> kp0({3, 2});
  rng.fill_uniform(kp0, -0.5, 0.5);
  CHECK(tt::grad_check<double>(
            [&](const Var<double>& v) {
              return ad::mean_all(ad::square(ad::kp_gaussian(v, 8, 8, 0.05)));
            },
            kp0, 1e-6) < 1e-5);
  // spatial_expectation: delta map recovers grid position
  {
    Tensor<double> probs({1, 1, 5, 5});
    probs(0, 0, 2, 3) = 1.0;
    auto e = ad::spatial_expectation(ad::constant(probs), 5, 5);
    auto grid = ad::make_grid<double>(5, 5);
    CHECK(e->value(0, 0, 0) == doctest::Approx(grid(2, 3, 0)));
    CHECK(e->value(0, 0, 1) == doctest::Approx(grid(2, 3, 1)));
  }
  CHECK(tt::grad_check<double>(
            [&](const Var<double>& v) {
              auto p = ad::softmax_rows(v, 2, 1.0);
              auto pr = ad::reshape(p, {1, 2, 4, 4});
              return ad::mean_all(ad::square(ad::spatial_expectation(pr, 4, 4)));
            },
            randn(rng, {2, 16})) < 1e-6);
  // heatmap_weighted_sum
  auto maps = ad::constant(randn(rng, {1, 8, 4, 4}));
  CHECK(tt::grad_check<double>(
            [&](const Var<double>& v) {
              return ad::mean_all(ad::square(ad::heatmap_weighted_sum(v, maps, 4)));
            },
            randn(rng, {1, 2, 4, 4})) < 1e-6);
  // matmul2x2 / inv2x2
  Tensor<double> j0({2, 2, 2});
  j0(0, 0, 0) = 1.4;
  j0(0, 1, 1) = 0.8;
  j0(0, 0, 1) = 0.2;
  j0(0, 1, 0) = -0.1;
  j0(1, 0, 0) = 0.9;
  j0(1, 1, 1) = 1.1;
  j0(1, 0, 1) = -0.3;
  j0(1, 1, 0) = 0.25;
  auto other = ad::constant(randn(rng, {2, 2, 2}));
  CHECK(tt::grad_check<double>(
            [&](const Var<double>& v) {
              return ad::mean_all(ad::square(ad::matmul2x2(v, other)));
            },
            j0) < 1e-6);
  CHECK(tt::grad_check<double>(
            [&](const Var<double>& v) {
              return ad::mean_all(ad::square(ad::inv2x2(v)));
            },
            j0, 1e-6) < 1e-5);
}

TEST_CASE("affine candidate flows: closed form cases") {
  const Index H = 6, W = 6, N = 1;
  auto grid = ad::make_grid<double>(H, W);
  Tensor<double> ident({N, 2, 2});
  ident(0, 0, 0) = 1;
  ident(0, 1, 1) = 1;

  SUBCASE("same keypoints, identity jacobians -> identity flow everywhere") {
    Tensor<double> p({N, 2});
    p(0, 0) = 0.3;
    p(0, 1) = -0.2;
    auto f = ad::affine_candidate_flows(ad::constant(p), ad::constant(ident),
                                        ad::constant(p), ad::constant(ident), H, W);
    for (Index y = 0; y < H; ++y)
      for (Index x = 0; x < W; ++x)
        for (Index c = 0; c < 2; ++c) {
          CHECK(f->value(0, y, x, c) == doctest::Approx(grid(y, x, c)).epsilon(1e-12));
          CHECK(f->value(1, y, x, c) == doctest::Approx(grid(y, x, c)).epsilon(1e-12));
        }
  }
  SUBCASE("translated keypoint -> constant shift z - d") {
    Tensor<double> ps({N, 2}), pd({N, 2});
    ps(0, 0) = 0.1;
    ps(0, 1) = 0.0;
    const double dx = 0.25, dy = -0.15;
    pd(0, 0) = ps(0, 0) + dx;
    pd(0, 1) = ps(0, 1) + dy;
    auto f = ad::affine_candidate_flows(ad::constant(ps), ad::constant(ident),
                                        ad::constant(pd), ad::constant(ident), H, W);
    for (Index y = 0; y < H; ++y)
      for (Index x = 0; x < W; ++x) {
        CHECK(f->value(0, y, x, 0) == doctest::Approx(grid(y, x, 0) - dx));
        CHECK(f->value(0, y, x, 1) == doctest::Approx(grid(y, x, 1) - dy));
      }
  }
  SUBCASE("driving jacobian 2I contracts about the keypoint by 1/2") {
    Tensor<double> p({N, 2});
    p(0, 0) = 0.2;
    p(0, 1) = 0.1;
    Tensor<double> jd({N, 2, 2});
    jd(0, 0, 0) = 2;
    jd(0, 1, 1) = 2;
    auto f = ad::affine_candidate_flows(ad::constant(p), ad::constant(ident),
                                        ad::constant(p), ad::constant(jd), H, W);
    for (Index y = 0; y < H; ++y)
      for (Index x = 0; x < W; ++x) {
        CHECK(f->value(0, y, x, 0) ==
              doctest::Approx(p(0, 0) + 0.5 * (grid(y, x, 0) - p(0, 0))));
        CHECK(f->value(0, y, x, 1) ==
              doctest::Approx(p(0, 1) + 0.5 * (grid(y, x, 1) - p(0, 1))));
      }
  }
}

TEST_CASE("affine flow and mask mixture gradients") {
  Rng rng(41);
  const Index H = 4, W = 4, N = 2;
  Tensor<double> ps0({N, 2}), pd0({N, 2});
  rng.fill_uniform(ps0, -0.4, 0.4);
  rng.fill_uniform(pd0, -0.4, 0.4);
  Tensor<double> js0({N, 2, 2}), jd0({N, 2, 2});
  for (Index n = 0; n < N; ++n) {
    js0(n, 0, 0) = 1 + 0.2 * rng.normal();
    js0(n, 1, 1) = 1 + 0.2 * rng.normal();
    js0(n, 0, 1) = 0.1 * rng.normal();
    js0(n, 1, 0) = 0.1 * rng.normal();
    jd0(n, 0, 0) = 1 + 0.2 * rng.normal();
    jd0(n, 1, 1) = 1 + 0.2 * rng.normal();
    jd0(n, 0, 1) = 0.1 * rng.normal();
    jd0(n, 1, 0) = 0.1 * rng.normal();
  }
  auto ps = ad::constant(ps0);
  auto js = ad::constant(js0);

  CHECK(tt::grad_check<double>(
            [&](const Var<double>& v) {
              return ad::mean_all(ad::square(ad::affine_candidate_flows(
                  ps, js, v, ad::constant(jd0), H, W)));
            },
            pd0) < 1e-6);
  CHECK(tt::grad_check<double>(
            [&](const Var<double>& v) {
              return ad::mean_all(ad::square(ad::affine_candidate_flows(
                  ps, js, ad::constant(pd0), v, H, W)));
            },
            jd0, 1e-6) < 1e-5);

  auto cands = ad::constant(randn(rng, {N + 1, H, W, 2}));
  CHECK(tt::grad_check<double>(
            [&](const Var<double>& v) {
              auto m = ad::softmax_channel(ad::reshape(v, {1, N + 1, H * W}), 1, N + 1);
              return ad::mean_all(ad::square(
                  ad::mask_mixture_flow(cands, ad::reshape(m, {N + 1, H, W}))));
            },
            randn(rng, {N + 1, H, W})) < 1e-6);
}

TEST_CASE("tensor container and archive round trip") {
  Rng rng(43);
  auto dir = std::filesystem::temp_directory_path() / "talkgen_core_test";
  std::filesystem::create_directories(dir);
  auto t = randn(rng, {3, 4, 2});
  io::save_tensor((dir / "t.tgtb").string(), t);
  auto back = io::load_tensor<double>((dir / "t.tgtb").string());
  REQUIRE(back.shape() == t.shape());
  for (Index i = 0; i < t.size(); ++i) CHECK(back[i] == t[i]);

  io::Archive<float> a;
  a.put("w1", t.cast<float>());
  a.put("w2", TensorF::full({2, 2}, 0.5f));
  a.save((dir / "a.tgwa").string());
  auto a2 = io::Archive<float>::load((dir / "a.tgwa").string());
  CHECK(a2.size() == 2);
  CHECK(a2.get("w2")(1, 1) == 0.5f);
  CHECK(a2.get("w1").shape() == Shape{3, 4, 2});
}
