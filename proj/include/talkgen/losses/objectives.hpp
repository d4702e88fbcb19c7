#pragma once

#include <map>

#include "talkgen/nets/fomm.hpp"

namespace talkgen::losses {

using ad::Var;
using fomm::Keypoints;

// All loss weights are configuration; defaults follow the two-stage setup
// (lambda_m decays to zero on a schedule owned by the trainer).
struct LossWeights {
  double lambda_m = 1.0;
  double lambda_p = 10.0;
  double lambda_j = 10.0;
  double lambda_p_prime = 100.0;
  double lambda_rec = 10.0;
  double lambda_eq_p = 10.0;
  double lambda_eq_j = 10.0;

  void validate() const {
    check_invalid(lambda_m >= 0 && lambda_p >= 0 && lambda_j >= 0 &&
                      lambda_p_prime >= 0 && lambda_rec >= 0 && lambda_eq_p >= 0 &&
                      lambda_eq_j >= 0,
                  "loss weights must be nonnegative");
  }
};

// A loss value plus its per-term breakdown for the training logs.
template <typename S>
struct LossReport {
  Var<S> total;
  std::map<std::string, double> components;
};

// Frozen multi-layer convolutional feature extractor for the reconstruction
// loss. Weights are seeded-random by default (never trained); a different
// weight source can be loaded in place of the seeded one.
template <typename S>
class PerceptualExtractor {
 public:
  explicit PerceptualExtractor(uint64_t seed = 2024, Index base = 8) {
    Rng rng(seed);
    Index cin = 3;
    Index cout = base;
    for (int i = 0; i < 5; ++i) {
      Layer l;
      l.w = ad::constant(nets::he_normal<S>(rng, {cout, cin * 9}, cin * 9));
      l.b = ad::constant(Tensor<S>({cout}));
      layers_.push_back(l);
      cin = cout;
      cout = std::min<Index>(2 * cout, 32);
    }
  }

  // image [1,3,H,W] -> tapped feature maps (one per layer that fits).
  std::vector<Var<S>> taps(const Var<S>& image) const {
    std::vector<Var<S>> out;
    Var<S> h = image;
    for (size_t i = 0; i < layers_.size(); ++i) {
      if (h->value.dim(2) < 3 || h->value.dim(3) < 3) break;
      h = ad::relu(ad::conv2d(h, layers_[i].w, layers_[i].b, 3, 1, 1));
      out.push_back(h);
      if (i + 1 < layers_.size()) {
        if (h->value.dim(2) < 2 || h->value.dim(3) < 2) break;
        h = ad::avg_pool2d(h, 2);
      }
    }
    return out;
  }

  struct Layer {
    Var<S> w, b;
  };
  const std::vector<Layer>& layers() const { return layers_; }

 private:
  std::vector<Layer> layers_;
};

// Sum over tapped layers of the per-channel mean absolute feature
// difference (i.e. sum over channels of mean over pixels).
template <typename S>
Var<S> perceptual_loss(const Var<S>& gen, const Var<S>& gt,
                       const PerceptualExtractor<S>& ext) {
  check_contract(gen->value.same_shape(gt->value), "perceptual loss: shape mismatch");
  auto tg = ext.taps(gen);
  auto tt = ext.taps(gt);
  Var<S> total = ad::constant(Tensor<S>::scalar(S(0)));
  for (size_t i = 0; i < tg.size(); ++i) {
    const Index hw = tg[i]->value.dim(2) * tg[i]->value.dim(3);
    auto diff = ad::sum_all(ad::abs_(ad::sub(tg[i], tt[i])));
    total = ad::add(total, ad::scale(diff, S(1) / (S)hw));
  }
  return total;
}

// Reconstruction loss summed over an average-pooled image pyramid.
template <typename S>
Var<S> pyramid_perceptual_loss(const Var<S>& gen, const Var<S>& gt,
                               const PerceptualExtractor<S>& ext,
                               const std::vector<double>& scales = {1.0, 0.5, 0.25,
                                                                    0.125}) {
  check_invalid(!scales.empty(), "pyramid loss: no scales");
  check_contract(gen->value.same_shape(gt->value), "pyramid loss: shape mismatch");
  const Index H = gen->value.dim(2);
  Var<S> total = ad::constant(Tensor<S>::scalar(S(0)));
  for (double s : scales) {
    check_invalid(s > 0.0 && s <= 1.0, "pyramid loss: scale must be in (0,1]");
    Index target = (Index)std::llround((double)H * s);
    check_invalid(target >= 4, "pyramid loss: scale produces an image below 4 px");
    Var<S> g = gen, t = gt;
    while (g->value.dim(2) > target) {
      g = ad::avg_pool2d(g, 2);
      t = ad::avg_pool2d(t, 2);
    }
    check_contract(g->value.dim(2) == target, "pyramid loss: scale must be a power of 1/2");
    total = ad::add(total, perceptual_loss(g, t, ext));
  }
  return total;
}

// Stage-1 guidance loss: heatmap, position, and Jacobian L1 against the
// frozen detector outputs, averaged over the window.
template <typename S>
LossReport<S> stage1_loss(const Keypoints<S>& pred, const Keypoints<S>& target,
                          const LossWeights& w, double lambda_m_current) {
  w.validate();
  check_contract(pred.heatmaps->value.same_shape(target.heatmaps->value) &&
                     pred.positions->value.same_shape(target.positions->value) &&
                     pred.jacobians->value.same_shape(target.jacobians->value),
                 "stage1 loss: shape mismatch");
  LossReport<S> r;
  auto l_m = ad::l1_loss(pred.heatmaps, target.heatmaps);
  auto l_p = ad::l1_loss(pred.positions, target.positions);
  auto l_j = ad::l1_loss(pred.jacobians, target.jacobians);
  r.components["heatmap_l1"] = (double)l_m->value[0];
  r.components["position_l1"] = (double)l_p->value[0];
  r.components["jacobian_l1"] = (double)l_j->value[0];
  r.components["lambda_m"] = lambda_m_current;
  r.total = ad::add(
      ad::scale(l_m, (S)lambda_m_current),
      ad::add(ad::scale(l_p, (S)w.lambda_p), ad::scale(l_j, (S)w.lambda_j)));
  r.components["total"] = (double)r.total->value[0];
  return r;
}

// Stage-2 fine-tuning loss: position guidance, multi-resolution perceptual
// reconstruction on rendered frames, and the two equivariance terms.
template <typename S>
LossReport<S> stage2_loss(const Var<S>& pred_positions, const Var<S>& target_positions,
                          const std::vector<Var<S>>& generated,
                          const std::vector<Var<S>>& ground_truth,
                          const PerceptualExtractor<S>& ext,
                          const fomm::EquivarianceLosses<S>& eq,
                          const LossWeights& w) {
  w.validate();
  check_contract(pred_positions->value.same_shape(target_positions->value),
                 "stage2 loss: position shape mismatch");
  check_contract(generated.size() == ground_truth.size(),
                 "stage2 loss: frame count mismatch");
  LossReport<S> r;
  auto l_p = ad::l1_loss(pred_positions, target_positions);
  Var<S> l_rec = ad::constant(Tensor<S>::scalar(S(0)));
  for (size_t i = 0; i < generated.size(); ++i)
    l_rec = ad::add(l_rec, pyramid_perceptual_loss(generated[i], ground_truth[i], ext));
  if (!generated.empty()) l_rec = ad::scale(l_rec, S(1) / (S)generated.size());

  r.components["position_l1"] = (double)l_p->value[0];
  r.components["reconstruction"] = (double)l_rec->value[0];
  r.components["equivariance_p"] = (double)eq.position->value[0];
  r.components["equivariance_j"] = (double)eq.jacobian->value[0];
  r.total = ad::add(
      ad::add(ad::scale(l_p, (S)w.lambda_p_prime), ad::scale(l_rec, (S)w.lambda_rec)),
      ad::add(ad::scale(eq.position, (S)w.lambda_eq_p),
              ad::scale(eq.jacobian, (S)w.lambda_eq_j)));
  r.components["total"] = (double)r.total->value[0];
  return r;
}

// Linear decay of lambda_m from its initial value to zero across
// `decay_steps`, pinned at zero afterwards.
inline double lambda_m_schedule(double initial, long step, long decay_steps) {
  if (decay_steps <= 0 || step >= decay_steps) return 0.0;
  return initial * (1.0 - (double)step / (double)decay_steps);
}

}  // namespace talkgen::losses
