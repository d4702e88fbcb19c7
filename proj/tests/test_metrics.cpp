#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "talkgen/core/rng.hpp"
#include "talkgen/metrics/metrics.hpp"

using namespace talkgen;
using namespace talkgen::metrics;

namespace {

Tensor<float> random_image(Rng& rng, Index size) {
  Tensor<float> t({3, size, size});
  rng.fill_uniform(t, 0.0, 1.0);
  return t;
}

// Independent windowed-SSIM implementation (plain loops, no shared code
// path with the library beyond the pinned definition).
double ssim_reference(const Tensor<float>& a, const Tensor<float>& b) {
  auto ya = img::luma(a);
  auto yb = img::luma(b);
  const Index H = ya.dim(1), W = ya.dim(2);
  const int win = 11;
  const double sigma = 1.5, c1 = 1e-4, c2 = 9e-4;
  std::vector<double> k((size_t)(win * win));
  double ks = 0;
  for (int i = 0; i < win; ++i)
    for (int j = 0; j < win; ++j) {
      double v = std::exp(-((i - 5.0) * (i - 5.0) + (j - 5.0) * (j - 5.0)) /
                          (2 * sigma * sigma));
      k[(size_t)(i * win + j)] = v;
      ks += v;
    }
  for (auto& v : k) v /= ks;
  double total = 0;
  long n = 0;
  for (Index y = 0; y + win <= H; ++y)
    for (Index x = 0; x + win <= W; ++x) {
      double ma = 0, mb = 0, va = 0, vb = 0, cov = 0;
      for (int i = 0; i < win; ++i)
        for (int j = 0; j < win; ++j) {
          ma += k[(size_t)(i * win + j)] * ya(0, y + i, x + j);
          mb += k[(size_t)(i * win + j)] * yb(0, y + i, x + j);
        }
      for (int i = 0; i < win; ++i)
        for (int j = 0; j < win; ++j) {
          double da = ya(0, y + i, x + j) - ma, db = yb(0, y + i, x + j) - mb;
          va += k[(size_t)(i * win + j)] * da * da;
          vb += k[(size_t)(i * win + j)] * db * db;
          cov += k[(size_t)(i * win + j)] * da * db;
        }
      total += (2 * ma * mb + c1) * (2 * cov + c2) /
               ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++n;
    }
  return total / n;
}

}  // namespace

TEST_CASE("psnr: cap, closed forms, symmetry") {
  Rng rng(61);
  auto a = random_image(rng, 16);
  CHECK(psnr(a, a) == 99.0);

  // uniform squared error of 0.01 -> 20 dB
  Tensor<float> b = a;
  for (Index i = 0; i < b.size(); ++i)
    b[i] += (i % 2 == 0 ? 0.1f : -0.1f);
  CHECK(psnr(a, b) == doctest::Approx(20.0).epsilon(1e-4));

  auto zeros = Tensor<float>({3, 8, 8});
  auto ones = Tensor<float>::full({3, 8, 8}, 1.0f);
  CHECK(psnr(zeros, ones) == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(psnr(a, b) == doctest::Approx(psnr(b, a)).epsilon(1e-12));
  CHECK_THROWS_AS((void)psnr(a, zeros), Error);
}

TEST_CASE("image ssim: identity, oracle agreement, monotone degradation") {
  Rng rng(62);
  auto a = random_image(rng, 24);
  CHECK(image_ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));

  for (int trial = 0; trial < 3; ++trial) {
    auto x = random_image(rng, 24);
    auto y = random_image(rng, 24);
    CHECK(image_ssim(x, y) == doctest::Approx(ssim_reference(x, y)).epsilon(1e-6));
    CHECK(image_ssim(x, y) == doctest::Approx(image_ssim(y, x)).epsilon(1e-12));
  }

  // fixed noise direction, growing magnitude
  Tensor<float> noise({3, 24, 24});
  rng.fill_normal(noise, 0.0, 1.0);
  double prev = 1.0;
  for (double eps : {0.02, 0.05, 0.1, 0.2}) {
    Tensor<float> b = a;
    for (Index i = 0; i < b.size(); ++i)
      b[i] = std::clamp(a[i] + (float)eps * noise[i], 0.0f, 1.0f);
    double s = image_ssim(a, b);
    CHECK(s < prev);
    prev = s;
  }

  Tensor<float> small({3, 8, 8});
  CHECK_THROWS_AS((void)image_ssim(small, small), Error);
}

TEST_CASE("frechet distance: identical sets vanish, exact shifted-set oracle") {
  Rng rng(63);
  std::vector<Eigen::VectorXd> fa;
  for (int i = 0; i < 40; ++i) {
    Eigen::VectorXd v(2);
    v << rng.normal(), rng.normal();
    fa.push_back(v);
  }
  CHECK(frechet_distance(fa, fa) <= 1e-6);

  // shifting every feature by d leaves covariances equal: distance is d^2
  const double d = 1.7;
  std::vector<Eigen::VectorXd> fb;
  for (const auto& v : fa) {
    Eigen::VectorXd w = v;
    w(0) += d;
    fb.push_back(w);
  }
  CHECK(frechet_distance(fa, fb) == doctest::Approx(d * d).epsilon(1e-6));
  CHECK(frechet_distance(fa, fb) ==
        doctest::Approx(frechet_distance(fb, fa)).epsilon(1e-9));
}

TEST_CASE("fid over images: zero for identical sets, symmetric, embedder works") {
  Rng rng(64);
  std::vector<Tensor<float>> set_a, set_b;
  for (int i = 0; i < 6; ++i) {
    set_a.push_back(random_image(rng, 16));
    set_b.push_back(random_image(rng, 16));
  }
  auto emb = seeded_random_embedder(5, 16);
  CHECK(fid(set_a, set_a, emb) <= 1e-6);
  double ab = fid(set_a, set_b, emb);
  double ba = fid(set_b, set_a, emb);
  CHECK(ab >= -1e-6);
  CHECK(ab == doctest::Approx(ba).epsilon(1e-9));
}

TEST_CASE("pose errors: fixed point, constant offset, loop oracle, metric axioms") {
  Rng rng(65);
  pose::PoseSequence gt;
  gt.poses.setRandom(20, 6);
  CHECK(head_motion_error(gt, gt) == 0.0);

  pose::PoseSequence off = gt;
  off.poses.array() += 0.19;
  CHECK(head_motion_error(off, gt) == doctest::Approx(0.19).epsilon(1e-12));

  pose::PoseSequence a = gt, b = gt, c = gt;
  a.poses.setRandom();
  b.poses.setRandom();
  c.poses.setRandom();
  double loop = 0;
  for (Index i = 0; i < 20; ++i)
    for (int j = 0; j < 6; ++j) loop += std::abs(a.poses(i, j) - b.poses(i, j));
  loop /= 120.0;
  CHECK(head_motion_error(a, b) == doctest::Approx(loop).epsilon(1e-12));
  CHECK(head_motion_error(a, b) == doctest::Approx(head_motion_error(b, a)));
  CHECK(head_motion_error(a, c) <=
        head_motion_error(a, b) + head_motion_error(b, c) + 1e-12);

  Tensor<float> kp_a({5, 10, 2}), kp_b({5, 10, 2});
  rng.fill_uniform(kp_a, -1.0, 1.0);
  rng.fill_uniform(kp_b, -1.0, 1.0);
  double ke_loop = 0;
  for (Index i = 0; i < kp_a.size(); ++i) ke_loop += std::abs(kp_a[i] - kp_b[i]);
  CHECK(keypoint_error(kp_a, kp_b) ==
        doctest::Approx(ke_loop / kp_a.size()).epsilon(1e-6));
}

TEST_CASE("background jitter: still background is zero, motion counts") {
  std::vector<Tensor<float>> frames;
  for (int t = 0; t < 4; ++t) {
    Tensor<float> f({3, 16, 16});
    // moving block inside the face box, still outside
    for (Index y = 4; y < 12; ++y)
      for (Index x = 4; x < 12; ++x) f(0, y, x) = (float)t * 0.1f;
    frames.push_back(f);
  }
  std::array<long, 4> box = {4, 4, 12, 12};
  CHECK(background_jitter(frames, box) == 0.0);
  std::array<long, 4> empty_box = {0, 0, 0, 0};
  CHECK(background_jitter(frames, empty_box) > 0.0);
}

TEST_CASE("pca trajectory: eigenvalue identity, overlays, degenerate error") {
  pose::PoseSequence gt;
  gt.poses.resize(50, 6);
  Rng rng(66);
  for (Index t = 0; t < 50; ++t)
    for (int c = 0; c < 6; ++c)
      gt.poses(t, c) = std::sin(0.1 * (double)t * (c + 1)) + 0.05 * rng.normal();

  auto pca = fit_pose_pca(gt);
  auto proj = pca.project(gt);
  double mean = 0;
  for (double v : proj) mean += v;
  mean /= (double)proj.size();
  double var = 0;
  for (double v : proj) var += (v - mean) * (v - mean);
  var /= (double)proj.size();
  CHECK(var == doctest::Approx(pca.top_eigenvalue).epsilon(1e-9));

  // constant sequence projects to a constant line
  pose::PoseSequence constant;
  constant.poses = Eigen::MatrixXd::Ones(50, 6);
  auto cproj = pca.project(constant);
  for (double v : cproj) CHECK(v == doctest::Approx(cproj[0]).epsilon(1e-12));

  // identical sequences overlay exactly
  auto proj2 = pca.project(gt);
  for (size_t i = 0; i < proj.size(); ++i) CHECK(proj[i] == proj2[i]);

  pose::PoseSequence degenerate;
  degenerate.poses = Eigen::MatrixXd::Zero(10, 6);
  CHECK_THROWS_AS((void)fit_pose_pca(degenerate), Error);

  auto dir = std::filesystem::temp_directory_path() / "talkgen_metrics_test";
  std::filesystem::create_directories(dir);
  auto out = (dir / "pca.png").string();
  pca_trajectory_plot(out, {gt, constant}, {"gt", "const"}, gt);
  CHECK(std::filesystem::exists(out));
  auto im = img::read_png(out);
  CHECK(im.width > 0);
}
