#pragma once

#include "talkgen/nets/modules.hpp"

namespace talkgen::train {

// Adam with the classic L2-style weight decay (decay added to the gradient).
template <typename S>
class Adam {
 public:
  Adam() = default;
  Adam(const std::vector<std::pair<std::string, ad::Var<S>>>& params, double lr,
       double weight_decay = 0.0, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8)
      : params_(params), lr_(lr), wd_(weight_decay), b1_(beta1), b2_(beta2),
        eps_(eps) {
    for (auto& [name, v] : params_) {
      m_.emplace_back(v->value.shape());
      v2_.emplace_back(v->value.shape());
    }
  }

  void zero_grads() {
    for (auto& [name, p] : params_) p->drop_grad();
  }

  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(b1_, (double)t_);
    const double bc2 = 1.0 - std::pow(b2_, (double)t_);
    for (size_t i = 0; i < params_.size(); ++i) {
      auto& p = params_[i].second;
      if (!p->grad_ready) continue;
      auto& m = m_[i];
      auto& v = v2_[i];
      for (Index j = 0; j < p->value.size(); ++j) {
        double g = (double)p->grad[j] + wd_ * (double)p->value[j];
        double mj = b1_ * (double)m[j] + (1.0 - b1_) * g;
        double vj = b2_ * (double)v[j] + (1.0 - b2_) * g * g;
        m[j] = (S)mj;
        v[j] = (S)vj;
        double update = lr_ * (mj / bc1) / (std::sqrt(vj / bc2) + eps_);
        p->value[j] = (S)((double)p->value[j] - update);
      }
    }
  }

  long steps_taken() const { return t_; }
  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }

  void save_state(io::Archive<S>& a, const std::string& prefix) const {
    for (size_t i = 0; i < params_.size(); ++i) {
      a.put(prefix + "m." + params_[i].first, m_[i]);
      a.put(prefix + "v." + params_[i].first, v2_[i]);
    }
    Tensor<S> t({1});
    t[0] = (S)t_;
    a.put(prefix + "t", t);
  }

  void load_state(const io::Archive<S>& a, const std::string& prefix) {
    for (size_t i = 0; i < params_.size(); ++i) {
      m_[i] = a.get(prefix + "m." + params_[i].first);
      v2_[i] = a.get(prefix + "v." + params_[i].first);
    }
    t_ = (long)a.get(prefix + "t")[0];
  }

 private:
  std::vector<std::pair<std::string, ad::Var<S>>> params_;
  std::vector<Tensor<S>> m_, v2_;
  double lr_ = 2e-4, wd_ = 0.0, b1_ = 0.9, b2_ = 0.999, eps_ = 1e-8;
  long t_ = 0;
};

}  // namespace talkgen::train
