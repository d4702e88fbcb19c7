#pragma once

#include <Eigen/Eigenvalues>

#include <functional>
#include <optional>
#include <vector>

#include "talkgen/core/image.hpp"
#include "talkgen/core/rng.hpp"
#include "talkgen/metrics/plot.hpp"
#include "talkgen/pose/pose.hpp"

namespace talkgen::metrics {

constexpr double kPsnrCap = 99.0;

// 10 log10(1 / MSE) on [0,1] images; identical images cap at 99 dB.
template <typename S>
double psnr(const Tensor<S>& a, const Tensor<S>& b) {
  check_contract(a.same_shape(b), "psnr: shape mismatch");
  check_invalid(a.size() > 0, "psnr: empty image");
  double mse = 0;
  for (Index i = 0; i < a.size(); ++i) {
    double d = (double)a[i] - (double)b[i];
    mse += d * d;
  }
  mse /= (double)a.size();
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

// Mean windowed SSIM over luma with an 11x11 Gaussian window (sigma 1.5),
// valid positions only. This is the image metric; the pose-sequence loss
// uses the separate global-statistics form.
template <typename S>
double image_ssim(const Tensor<S>& a, const Tensor<S>& b) {
  check_contract(a.same_shape(b), "image_ssim: shape mismatch");
  constexpr Index win = 11;
  constexpr double sigma = 1.5;
  constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;

  Tensor<S> ya = a.dim(0) == 3 ? img::luma(a) : a;
  Tensor<S> yb = b.dim(0) == 3 ? img::luma(b) : b;
  const Index H = ya.dim(1), W = ya.dim(2);
  check_invalid(H >= win && W >= win, "image_ssim: image smaller than the 11x11 window");

  double kernel[win][win];
  double ksum = 0;
  for (Index i = 0; i < win; ++i)
    for (Index j = 0; j < win; ++j) {
      double dy = (double)i - 5.0, dx = (double)j - 5.0;
      kernel[i][j] = std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
      ksum += kernel[i][j];
    }
  for (Index i = 0; i < win; ++i)
    for (Index j = 0; j < win; ++j) kernel[i][j] /= ksum;

  double total = 0;
  Index count = 0;
  for (Index y = 0; y + win <= H; ++y)
    for (Index x = 0; x + win <= W; ++x) {
      double mu_a = 0, mu_b = 0;
      for (Index i = 0; i < win; ++i)
        for (Index j = 0; j < win; ++j) {
          mu_a += kernel[i][j] * (double)ya(0, y + i, x + j);
          mu_b += kernel[i][j] * (double)yb(0, y + i, x + j);
        }
      double va = 0, vb = 0, cov = 0;
      for (Index i = 0; i < win; ++i)
        for (Index j = 0; j < win; ++j) {
          double da = (double)ya(0, y + i, x + j) - mu_a;
          double db = (double)yb(0, y + i, x + j) - mu_b;
          va += kernel[i][j] * da * da;
          vb += kernel[i][j] * db * db;
          cov += kernel[i][j] * da * db;
        }
      total += (2 * mu_a * mu_b + c1) * (2 * cov + c2) /
               ((mu_a * mu_a + mu_b * mu_b + c1) * (va + vb + c2));
      ++count;
    }
  return total / (double)count;
}

// Image-set embedder for the Frechet distance; pluggable. The default is a
// frozen seeded-random convolutional stack; a pretrained classifier can be
// substituted behind the same signature.
using Embedder = std::function<Eigen::VectorXd(const Tensor<float>&)>;

Embedder seeded_random_embedder(uint64_t seed = 77, Index dim = 64);

// ||mu_a - mu_b||^2 + Tr(Sa + Sb - 2 (Sa Sb)^{1/2}) over embedded features.
double frechet_distance(const std::vector<Eigen::VectorXd>& feats_a,
                        const std::vector<Eigen::VectorXd>& feats_b,
                        double epsilon = 1e-6);

double fid(const std::vector<Tensor<float>>& set_a,
           const std::vector<Tensor<float>>& set_b, const Embedder& embedder,
           double epsilon = 1e-6);

// Mean absolute difference over all entries of two pose sequences (HE), and
// the same reduction for keypoint tensors (KE).
double head_motion_error(const pose::PoseSequence& pred, const pose::PoseSequence& gt);

template <typename S>
double keypoint_error(const Tensor<S>& pred, const Tensor<S>& gt) {
  check_contract(pred.same_shape(gt), "keypoint_error: shape mismatch");
  double acc = 0;
  for (Index i = 0; i < pred.size(); ++i)
    acc += std::abs((double)pred[i] - (double)gt[i]);
  return acc / (double)pred.size();
}

// Mean |frame_t - frame_{t-1}| outside the face box; the stage-2 temporal
// stability probe.
double background_jitter(const std::vector<Tensor<float>>& frames,
                         const std::array<long, 4>& face_box);

// PCA fitted on the ground-truth sequence; every sequence is projected on
// the first component and drawn into one plot.
struct PcaProjection {
  Eigen::Matrix<double, 6, 1> component;
  Eigen::Matrix<double, 6, 1> mean;
  double top_eigenvalue = 0;

  std::vector<double> project(const pose::PoseSequence& seq) const {
    std::vector<double> out((size_t)seq.size());
    for (Index t = 0; t < seq.size(); ++t)
      out[(size_t)t] = (seq.poses.row(t).transpose() - mean).dot(component);
    return out;
  }
};

PcaProjection fit_pose_pca(const pose::PoseSequence& gt);

void pca_trajectory_plot(const std::string& path,
                         const std::vector<pose::PoseSequence>& seqs,
                         const std::vector<std::string>& labels,
                         const pose::PoseSequence& gt);

struct EvalReport {
  double psnr_db = 0;
  double ssim = 0;
  std::optional<double> fid;
  std::optional<double> he;
  std::optional<double> ke;
  std::vector<std::pair<double, double>> per_frame;  // (psnr, ssim)
};

}  // namespace talkgen::metrics
