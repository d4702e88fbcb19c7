#include "talkgen/metrics/metrics.hpp"

#include "talkgen/nets/modules.hpp"

namespace talkgen::metrics {

Embedder seeded_random_embedder(uint64_t seed, Index dim) {
  // Frozen random conv stack + global average pooling + random projection.
  struct Weights {
    std::vector<Tensor<float>> w, b;
    Eigen::MatrixXd proj;
  };
  auto weights = std::make_shared<Weights>();
  Rng rng(seed);
  Index cin = 3;
  Index cout = 16;
  for (int i = 0; i < 3; ++i) {
    weights->w.push_back(nets::he_normal<float>(rng, {cout, cin * 9}, cin * 9));
    weights->b.push_back(Tensor<float>({cout}));
    cin = cout;
    cout = std::min<Index>(cout * 2, 64);
  }
  weights->proj.resize(dim, cin);
  for (Index r = 0; r < dim; ++r)
    for (Index c = 0; c < cin; ++c)
      weights->proj(r, c) = rng.normal() / std::sqrt((double)cin);

  return [weights](const Tensor<float>& image) {
    check_invalid(image.rank() == 3 && image.dim(0) == 3,
                  "embedder: expected [3,H,W] image");
    auto h = ad::constant(image.reshaped({1, 3, image.dim(1), image.dim(2)}));
    for (size_t i = 0; i < weights->w.size(); ++i) {
      h = ad::relu(ad::conv2d(h, ad::constant(weights->w[i]),
                              ad::constant(weights->b[i]), 3, 1, 1));
      if (h->value.dim(2) >= 2 && h->value.dim(3) >= 2) h = ad::avg_pool2d(h, 2);
    }
    const Index C = h->value.dim(1), M = h->value.dim(2) * h->value.dim(3);
    Eigen::VectorXd pooled(C);
    for (Index c = 0; c < C; ++c) {
      double acc = 0;
      for (Index i = 0; i < M; ++i) acc += (double)h->value[c * M + i];
      pooled(c) = acc / (double)M;
    }
    return Eigen::VectorXd(weights->proj * pooled);
  };
}

double frechet_distance(const std::vector<Eigen::VectorXd>& feats_a,
                        const std::vector<Eigen::VectorXd>& feats_b,
                        double epsilon) {
  check_invalid(feats_a.size() >= 2 && feats_b.size() >= 2,
                "frechet distance needs at least 2 samples per set");
  const Index D = feats_a[0].size();
  auto stats = [&](const std::vector<Eigen::VectorXd>& f, Eigen::VectorXd& mu,
                   Eigen::MatrixXd& cov) {
    mu = Eigen::VectorXd::Zero(D);
    for (const auto& v : f) mu += v;
    mu /= (double)f.size();
    cov = Eigen::MatrixXd::Zero(D, D);
    for (const auto& v : f) cov += (v - mu) * (v - mu).transpose();
    cov /= (double)(f.size() - 1);
    cov.diagonal().array() += epsilon;
  };
  Eigen::VectorXd mu_a, mu_b;
  Eigen::MatrixXd ca, cb;
  stats(feats_a, mu_a, ca);
  stats(feats_b, mu_b, cb);

  // Tr((Sa Sb)^{1/2}) via the symmetric similarity Sa^{1/2} Sb Sa^{1/2}.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es_a(ca);
  Eigen::VectorXd ev = es_a.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  Eigen::MatrixXd sqrt_a =
      es_a.eigenvectors() * ev.asDiagonal() * es_a.eigenvectors().transpose();
  Eigen::MatrixXd inner = sqrt_a * cb * sqrt_a;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es_i(inner);
  double tr_sqrt = es_i.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();

  double d2 = (mu_a - mu_b).squaredNorm() + ca.trace() + cb.trace() - 2.0 * tr_sqrt;
  return d2;
}

double fid(const std::vector<Tensor<float>>& set_a,
           const std::vector<Tensor<float>>& set_b, const Embedder& embedder,
           double epsilon) {
  check_invalid(set_a.size() >= 2 && set_b.size() >= 2,
                "fid needs at least 2 images per set");
  std::vector<Eigen::VectorXd> fa, fb;
  fa.reserve(set_a.size());
  fb.reserve(set_b.size());
  for (const auto& im : set_a) fa.push_back(embedder(im));
  for (const auto& im : set_b) fb.push_back(embedder(im));
  return frechet_distance(fa, fb, epsilon);
}

double head_motion_error(const pose::PoseSequence& pred, const pose::PoseSequence& gt) {
  check_contract(pred.size() == gt.size(), "head_motion_error: length mismatch");
  check_invalid(pred.size() > 0, "head_motion_error: empty sequence");
  return (pred.poses - gt.poses).array().abs().mean();
}

double background_jitter(const std::vector<Tensor<float>>& frames,
                         const std::array<long, 4>& face_box) {
  check_invalid(frames.size() >= 2, "jitter metric needs at least 2 frames");
  const Index H = frames[0].dim(1), W = frames[0].dim(2);
  double total = 0;
  long count = 0;
  for (size_t t = 1; t < frames.size(); ++t) {
    check_contract(frames[t].same_shape(frames[0]), "jitter: frame shape mismatch");
    for (Index y = 0; y < H; ++y)
      for (Index x = 0; x < W; ++x) {
        bool inside = x >= face_box[0] && x < face_box[2] && y >= face_box[1] &&
                      y < face_box[3];
        if (inside) continue;
        for (Index c = 0; c < frames[t].dim(0); ++c) {
          total += std::abs((double)frames[t](c, y, x) - (double)frames[t - 1](c, y, x));
          ++count;
        }
      }
  }
  check_invalid(count > 0, "jitter: face box covers the whole frame");
  return total / (double)count;
}

PcaProjection fit_pose_pca(const pose::PoseSequence& gt) {
  check_invalid(gt.size() >= 2, "pca: need at least 2 poses");
  PcaProjection p;
  p.mean = gt.poses.colwise().mean().transpose();
  Eigen::MatrixXd centered = gt.poses.rowwise() - p.mean.transpose();
  Eigen::Matrix<double, 6, 6> cov =
      (centered.transpose() * centered) / (double)gt.size();
  check_invalid(cov.norm() > 1e-12, "pca: ground-truth sequence has zero variance");
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 6, 6>> es(cov);
  p.component = es.eigenvectors().col(5);
  p.top_eigenvalue = es.eigenvalues()(5);
  return p;
}

void pca_trajectory_plot(const std::string& path,
                         const std::vector<pose::PoseSequence>& seqs,
                         const std::vector<std::string>& labels,
                         const pose::PoseSequence& gt) {
  check_invalid(!seqs.empty() && seqs.size() == labels.size(),
                "pca plot: sequences and labels must align");
  auto pca = fit_pose_pca(gt);
  static const std::array<std::array<uint8_t, 3>, 6> palette = {{{20, 90, 200},
                                                                 {200, 60, 40},
                                                                 {30, 150, 70},
                                                                 {150, 60, 170},
                                                                 {220, 150, 20},
                                                                 {60, 60, 60}}};
  std::vector<plot::Series> series;
  for (size_t i = 0; i < seqs.size(); ++i) {
    plot::Series s;
    s.label = labels[i];
    s.values = pca.project(seqs[i]);
    s.color = palette[i % palette.size()];
    series.push_back(std::move(s));
  }
  plot::line_plot_png(path, series);
}

}  // namespace talkgen::metrics
