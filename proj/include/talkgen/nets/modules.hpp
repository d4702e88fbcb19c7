#pragma once

#include <string>
#include <vector>

#include "talkgen/core/nn_ops.hpp"
#include "talkgen/core/rng.hpp"
#include "talkgen/core/serialize.hpp"

namespace talkgen::nets {

using ad::Var;

// Owns the named trainable leaves of a network. Modules register their
// weights here; optimizers and checkpoints walk the registry.
template <typename S>
class ParamRegistry {
 public:
  Var<S> add(const std::string& name, Tensor<S> init) {
    for (auto& [n, v] : params_)
      check_contract(n != name, "duplicate parameter name: " + name);
    auto v = ad::param(std::move(init));
    params_.emplace_back(name, v);
    return v;
  }

  const std::vector<std::pair<std::string, Var<S>>>& params() const {
    return params_;
  }

  void zero_grads() {
    for (auto& [n, v] : params_) v->drop_grad();
  }

  // Frozen parameters receive no gradients at all; backward skips their
  // subgraphs entirely.
  void freeze() {
    for (auto& [n, v] : params_) {
      v->requires_grad = false;
      v->drop_grad();
    }
  }
  void unfreeze() {
    for (auto& [n, v] : params_) v->requires_grad = true;
  }
  bool frozen() const {
    return !params_.empty() && !params_.front().second->requires_grad;
  }

  Index total_size() const {
    Index n = 0;
    for (auto& [name, v] : params_) n += v->value.size();
    return n;
  }

  io::Archive<S> to_archive() const {
    io::Archive<S> a;
    for (auto& [name, v] : params_) a.put(name, v->value);
    return a;
  }

  void from_archive(const io::Archive<S>& a) {
    for (auto& [name, v] : params_) {
      const Tensor<S>& t = a.get(name);
      check_contract(t.shape() == v->value.shape(),
                     "checkpoint shape mismatch for " + name);
      v->value = t;
    }
  }

 private:
  std::vector<std::pair<std::string, Var<S>>> params_;
};

// ---- initializers ----

template <typename S>
Tensor<S> he_normal(Rng& rng, Shape shape, Index fan_in) {
  Tensor<S> t(std::move(shape));
  rng.fill_normal(t, 0.0, std::sqrt(2.0 / (double)fan_in));
  return t;
}

template <typename S>
Tensor<S> uniform_init(Rng& rng, Shape shape, double bound) {
  Tensor<S> t(std::move(shape));
  rng.fill_uniform(t, -bound, bound);
  return t;
}

// ---- layers ----

template <typename S>
struct Linear {
  Var<S> w, b;
  Linear() = default;
  Linear(ParamRegistry<S>& reg, Rng& rng, const std::string& name, Index in,
         Index out, bool zero_init = false) {
    double bound = 1.0 / std::sqrt((double)in);
    w = reg.add(name + ".w", zero_init ? Tensor<S>({in, out})
                                       : uniform_init<S>(rng, {in, out}, bound));
    b = reg.add(name + ".b", Tensor<S>({out}));
  }
  Var<S> forward(const Var<S>& x) const { return ad::linear(x, w, b); }
};

template <typename S>
struct Conv2d {
  Var<S> w, b;
  Index k = 3, stride = 1, pad = 1;
  Conv2d() = default;
  Conv2d(ParamRegistry<S>& reg, Rng& rng, const std::string& name, Index cin,
         Index cout, Index k_, Index stride_ = 1, Index pad_ = -1,
         bool zero_init = false)
      : k(k_), stride(stride_), pad(pad_ < 0 ? k_ / 2 : pad_) {
    w = reg.add(name + ".w", zero_init
                                 ? Tensor<S>({cout, cin * k * k})
                                 : he_normal<S>(rng, {cout, cin * k * k}, cin * k * k));
    b = reg.add(name + ".b", Tensor<S>({cout}));
  }
  Var<S> forward(const Var<S>& x) const { return ad::conv2d(x, w, b, k, stride, pad); }
};

template <typename S>
struct Conv1d {
  Var<S> w, b;
  Index k = 4, stride = 2, pad = 0;
  Conv1d() = default;
  Conv1d(ParamRegistry<S>& reg, Rng& rng, const std::string& name, Index cin,
         Index cout, Index k_, Index stride_, Index pad_ = 0) : k(k_), stride(stride_), pad(pad_) {
    w = reg.add(name + ".w", he_normal<S>(rng, {cout, cin * k}, cin * k));
    b = reg.add(name + ".b", Tensor<S>({cout}));
  }
  Var<S> forward(const Var<S>& x) const { return ad::conv1d(x, w, b, k, stride, pad); }
};

template <typename S>
struct Conv3d {
  Var<S> w, b;
  Index k = 3, stride = 1, pad = 1;
  Conv3d() = default;
  Conv3d(ParamRegistry<S>& reg, Rng& rng, const std::string& name, Index cin,
         Index cout, Index k_, Index stride_ = 1, Index pad_ = -1)
      : k(k_), stride(stride_), pad(pad_ < 0 ? k_ / 2 : pad_) {
    w = reg.add(name + ".w", he_normal<S>(rng, {cout, cin * k * k * k}, cin * k * k * k));
    b = reg.add(name + ".b", Tensor<S>({cout}));
  }
  Var<S> forward(const Var<S>& x) const { return ad::conv3d(x, w, b, k, stride, pad); }
};

template <typename S>
struct InstanceNorm {
  Var<S> gamma, beta;
  Index channels = 0;
  InstanceNorm() = default;
  InstanceNorm(ParamRegistry<S>& reg, const std::string& name, Index c)
      : channels(c) {
    gamma = reg.add(name + ".gamma", Tensor<S>::full({c}, S(1)));
    beta = reg.add(name + ".beta", Tensor<S>({c}));
  }
  // x [B,C,...]
  Var<S> forward(const Var<S>& x) const {
    return ad::instance_norm(x, x->value.dim(0), channels, gamma, beta);
  }
  // x [C,T,H,W]: per-frame statistics so the temporal receptive field stays
  // bounded by the convolution ladder.
  Var<S> forward3d(const Var<S>& x) const {
    auto tchw = ad::swap01(x);
    auto normed = ad::instance_norm(tchw, x->value.dim(1), channels, gamma, beta);
    return ad::swap01(normed);
  }
};

// ---- 2d composite blocks ----

template <typename S>
struct SameBlock2d {
  Conv2d<S> conv;
  InstanceNorm<S> norm;
  SameBlock2d() = default;
  SameBlock2d(ParamRegistry<S>& reg, Rng& rng, const std::string& name, Index cin,
              Index cout, Index k = 7)
      : conv(reg, rng, name + ".conv", cin, cout, k),
        norm(reg, name + ".norm", cout) {}
  Var<S> forward(const Var<S>& x) const {
    return ad::relu(norm.forward(conv.forward(x)));
  }
};

template <typename S>
struct DownBlock2d {
  Conv2d<S> conv;
  InstanceNorm<S> norm;
  DownBlock2d() = default;
  DownBlock2d(ParamRegistry<S>& reg, Rng& rng, const std::string& name, Index cin,
              Index cout)
      : conv(reg, rng, name + ".conv", cin, cout, 3),
        norm(reg, name + ".norm", cout) {}
  Var<S> forward(const Var<S>& x) const {
    return ad::avg_pool2d(ad::relu(norm.forward(conv.forward(x))), 2);
  }
};

template <typename S>
struct UpBlock2d {
  Conv2d<S> conv;
  InstanceNorm<S> norm;
  UpBlock2d() = default;
  UpBlock2d(ParamRegistry<S>& reg, Rng& rng, const std::string& name, Index cin,
            Index cout)
      : conv(reg, rng, name + ".conv", cin, cout, 3),
        norm(reg, name + ".norm", cout) {}
  Var<S> forward(const Var<S>& x) const {
    return ad::relu(norm.forward(conv.forward(ad::upsample_nearest2d(x, 2))));
  }
};

template <typename S>
struct ResBlock2d {
  Conv2d<S> conv1, conv2;
  InstanceNorm<S> norm1, norm2;
  ResBlock2d() = default;
  ResBlock2d(ParamRegistry<S>& reg, Rng& rng, const std::string& name, Index c)
      : conv1(reg, rng, name + ".conv1", c, c, 3),
        conv2(reg, rng, name + ".conv2", c, c, 3),
        norm1(reg, name + ".norm1", c),
        norm2(reg, name + ".norm2", c) {}
  Var<S> forward(const Var<S>& x) const {
    auto h = conv1.forward(ad::relu(norm1.forward(x)));
    h = conv2.forward(ad::relu(norm2.forward(h)));
    return ad::add(x, h);
  }
};

// Encoder-decoder with skip connections; the decoder output keeps
// block_expansion + in_channels channels at full resolution.
template <typename S>
struct Hourglass2d {
  std::vector<DownBlock2d<S>> down;
  std::vector<UpBlock2d<S>> up;
  Index in_channels = 0, base = 0, levels = 0, max_ch = 0;

  Hourglass2d() = default;
  Hourglass2d(ParamRegistry<S>& reg, Rng& rng, const std::string& name, Index cin,
              Index base_, Index levels_, Index max_ch_ = 1024)
      : in_channels(cin), base(base_), levels(levels_), max_ch(max_ch_) {
    for (Index i = 0; i < levels; ++i) {
      Index ci = i == 0 ? cin : std::min(max_ch, base * (Index(1) << i));
      Index co = std::min(max_ch, base * (Index(1) << (i + 1)));
      down.emplace_back(reg, rng, name + ".down" + std::to_string(i), ci, co);
    }
    for (Index i = levels - 1; i >= 0; --i) {
      Index skip = i == 0 ? cin : std::min(max_ch, base * (Index(1) << i));
      Index ci = std::min(max_ch, base * (Index(1) << (i + 1))) +
                 (i == levels - 1 ? 0 : std::min(max_ch, base * (Index(1) << (i + 1))));
      Index co = std::min(max_ch, base * (Index(1) << i));
      (void)skip;
      up.emplace_back(reg, rng, name + ".up" + std::to_string(i), ci, co);
    }
  }

  Index out_channels() const { return base + in_channels; }

  Var<S> forward(const Var<S>& x) const {
    std::vector<Var<S>> skips{x};
    Var<S> h = x;
    for (const auto& d : down) {
      h = d.forward(h);
      skips.push_back(h);
    }
    for (size_t i = 0; i < up.size(); ++i) {
      h = up[i].forward(h);
      const Var<S>& skip = skips[skips.size() - 2 - i];
      h = ad::concat<S>({h, skip}, 1);
    }
    return h;  // channels = base + in_channels
  }
};

// ---- 3d composite blocks ----

template <typename S>
struct SameBlock3d {
  Conv3d<S> conv;
  InstanceNorm<S> norm;
  SameBlock3d() = default;
  SameBlock3d(ParamRegistry<S>& reg, Rng& rng, const std::string& name, Index cin,
              Index cout)
      : conv(reg, rng, name + ".conv", cin, cout, 3),
        norm(reg, name + ".norm", cout) {}
  Var<S> forward(const Var<S>& x) const {
    return ad::relu(norm.forward3d(conv.forward(x)));
  }
};

template <typename S>
struct DownBlock3d {
  Conv3d<S> conv;
  InstanceNorm<S> norm;
  DownBlock3d() = default;
  DownBlock3d(ParamRegistry<S>& reg, Rng& rng, const std::string& name, Index cin,
              Index cout)
      : conv(reg, rng, name + ".conv", cin, cout, 3),
        norm(reg, name + ".norm", cout) {}
  Var<S> forward(const Var<S>& x) const {
    return ad::avg_pool3d(ad::relu(norm.forward3d(conv.forward(x))), 2);
  }
};

template <typename S>
struct UpBlock3d {
  Conv3d<S> conv;
  InstanceNorm<S> norm;
  UpBlock3d() = default;
  UpBlock3d(ParamRegistry<S>& reg, Rng& rng, const std::string& name, Index cin,
            Index cout)
      : conv(reg, rng, name + ".conv", cin, cout, 3),
        norm(reg, name + ".norm", cout) {}
  Var<S> forward(const Var<S>& x) const {
    return ad::relu(norm.forward3d(conv.forward(ad::upsample_nearest3d(x, 2))));
  }
};

// Space-time hourglass over [C,T,H,W]; stride-2 down/up on all three axes.
template <typename S>
struct Hourglass3d {
  std::vector<DownBlock3d<S>> down;
  std::vector<UpBlock3d<S>> up;
  Index in_channels = 0, base = 0, levels = 0;

  Hourglass3d() = default;
  Hourglass3d(ParamRegistry<S>& reg, Rng& rng, const std::string& name, Index cin,
              Index base_, Index levels_)
      : in_channels(cin), base(base_), levels(levels_) {
    for (Index i = 0; i < levels; ++i) {
      Index ci = i == 0 ? cin : base * (Index(1) << i);
      Index co = base * (Index(1) << (i + 1));
      down.emplace_back(reg, rng, name + ".down" + std::to_string(i), ci, co);
    }
    for (Index i = levels - 1; i >= 0; --i) {
      Index ci = base * (Index(1) << (i + 1)) +
                 (i == levels - 1 ? 0 : base * (Index(1) << (i + 1)));
      Index co = base * (Index(1) << i);
      up.emplace_back(reg, rng, name + ".up" + std::to_string(i), ci, co);
    }
  }

  Index temporal_factor() const { return Index(1) << levels; }
  Index out_channels() const { return base + in_channels; }

  Var<S> forward(const Var<S>& x) const {
    check_invalid(x->value.dim(1) >= temporal_factor(),
                  "hourglass3d: T shorter than the temporal downsampling factor");
    std::vector<Var<S>> skips{x};
    Var<S> h = x;
    for (const auto& d : down) {
      h = d.forward(h);
      skips.push_back(h);
    }
    for (size_t i = 0; i < up.size(); ++i) {
      h = up[i].forward(h);
      const Var<S>& skip = skips[skips.size() - 2 - i];
      h = ad::concat<S>({h, skip}, 0);
    }
    return h;
  }
};

// ---- ResNet-34 style encoder ----

template <typename S>
struct BasicBlock {
  Conv2d<S> conv1, conv2;
  InstanceNorm<S> norm1, norm2;
  Conv2d<S> proj;  // 1x1 projection when shape changes
  bool has_proj = false;

  BasicBlock() = default;
  BasicBlock(ParamRegistry<S>& reg, Rng& rng, const std::string& name, Index cin,
             Index cout, Index stride)
      : conv1(reg, rng, name + ".conv1", cin, cout, 3, stride, 1),
        conv2(reg, rng, name + ".conv2", cout, cout, 3, 1, 1),
        norm1(reg, name + ".norm1", cout),
        norm2(reg, name + ".norm2", cout) {
    if (stride != 1 || cin != cout) {
      proj = Conv2d<S>(reg, rng, name + ".proj", cin, cout, 1, stride, 0);
      has_proj = true;
    }
  }

  Var<S> forward(const Var<S>& x) const {
    auto h = ad::relu(norm1.forward(conv1.forward(x)));
    h = norm2.forward(conv2.forward(h));
    auto skip = has_proj ? proj.forward(x) : x;
    return ad::relu(ad::add(h, skip));
  }
};

// Depth-34 residual encoder: stem conv + [3,4,6,3] basic blocks + pooled
// linear head. Width and stem geometry are configurable so the same code
// serves the image encoder (3 x H x H) and the acoustic-frame encoder
// (1 x 4 x 41).
template <typename S>
struct ResNet34Encoder {
  Conv2d<S> stem;
  InstanceNorm<S> stem_norm;
  bool stem_pool = false;
  std::vector<BasicBlock<S>> blocks;
  Linear<S> head;
  Index out_dim = 0;

  ResNet34Encoder() = default;
  ResNet34Encoder(ParamRegistry<S>& reg, Rng& rng, const std::string& name,
                  Index cin, Index width, Index out_dim_, bool small_input)
      : out_dim(out_dim_) {
    if (small_input) {
      stem = Conv2d<S>(reg, rng, name + ".stem", cin, width, 3, 1, 1);
      stem_pool = false;
    } else {
      stem = Conv2d<S>(reg, rng, name + ".stem", cin, width, 7, 2, 3);
      stem_pool = true;
    }
    stem_norm = InstanceNorm<S>(reg, name + ".stem_norm", width);
    const Index stage_blocks[4] = {3, 4, 6, 3};
    Index cprev = width;
    for (int s = 0; s < 4; ++s) {
      Index cout = width * (Index(1) << s);
      for (Index bi = 0; bi < stage_blocks[s]; ++bi) {
        Index stride = (s > 0 && bi == 0) ? 2 : 1;
        blocks.emplace_back(reg, rng,
                            name + ".s" + std::to_string(s) + "b" + std::to_string(bi),
                            cprev, cout, stride);
        cprev = cout;
      }
    }
    head = Linear<S>(reg, rng, name + ".head", cprev, out_dim);
  }

  // x [B,C,H,W] -> [B,out_dim]
  Var<S> forward(const Var<S>& x) const {
    auto h = ad::relu(stem_norm.forward(stem.forward(x)));
    if (stem_pool) h = ad::avg_pool2d(h, 2);
    for (const auto& b : blocks) h = b.forward(h);
    // global average pool
    const Index B = h->value.dim(0), C = h->value.dim(1);
    const Index M = h->value.dim(2) * h->value.dim(3);
    auto flat = ad::reshape(h, {B, C, M});
    auto pooled = ad::scale(ad::reshape(ad::sum_rows(flat, B * C), {B, C}), S(1) / (S)M);
    return head.forward(pooled);
  }
};

// ---- LSTM ----

template <typename S>
struct LSTMLayer {
  Var<S> w_ih, w_hh, b;  // gates ordered i,f,g,o
  Index hidden = 0;

  LSTMLayer() = default;
  LSTMLayer(ParamRegistry<S>& reg, Rng& rng, const std::string& name, Index in,
            Index hidden_)
      : hidden(hidden_) {
    double bound = 1.0 / std::sqrt((double)hidden);
    w_ih = reg.add(name + ".w_ih", uniform_init<S>(rng, {in, 4 * hidden}, bound));
    w_hh = reg.add(name + ".w_hh", uniform_init<S>(rng, {hidden, 4 * hidden}, bound));
    Tensor<S> bias({4 * hidden});
    for (Index i = hidden; i < 2 * hidden; ++i) bias[i] = S(1);  // forget gate
    b = reg.add(name + ".b", std::move(bias));
  }

  // x [1,in], h/c [1,hidden] -> (h', c')
  std::pair<Var<S>, Var<S>> step(const Var<S>& x, const Var<S>& h,
                                 const Var<S>& c) const {
    auto gates = ad::add(ad::linear(x, w_ih, b), ad::matmul(h, w_hh));
    auto i = ad::sigmoid(ad::slice(gates, 1, 0, hidden));
    auto f = ad::sigmoid(ad::slice(gates, 1, hidden, hidden));
    auto g = ad::tanh_(ad::slice(gates, 1, 2 * hidden, hidden));
    auto o = ad::sigmoid(ad::slice(gates, 1, 3 * hidden, hidden));
    auto c_new = ad::add(ad::mul(f, c), ad::mul(i, g));
    auto h_new = ad::mul(o, ad::tanh_(c_new));
    return {h_new, c_new};
  }
};

}  // namespace talkgen::nets
