#pragma once

#include "talkgen/audio/features.hpp"
#include "talkgen/losses/ssim.hpp"
#include "talkgen/nets/arch.hpp"
#include "talkgen/nets/modules.hpp"
#include "talkgen/pose/pose.hpp"

namespace talkgen::headpose {

using ad::Var;
using nets::ArchConfig;

// Recurrent state of the two-layer core.
template <typename S>
struct RecurrentState {
  Var<S> h1, c1, h2, c2;
};

// The head motion predictor N_H: a reference-image encoder E_I seeds the
// spatial embedding e_0; per step, an audio encoder E_A embeds a_i, the
// two-layer LSTM consumes E_A(a_i) ++ e_{i-1} and a projection produces
// e_i, decoded to a 6-DoF pose by E_D. Feeding e_{i-1} forward is the
// spatial embedding transition; the no_set ablation replaces it with zeros.
template <typename S>
class HeadPosePredictor {
 public:
  HeadPosePredictor() = default;
  HeadPosePredictor(nets::ParamRegistry<S>& reg, Rng& rng, const std::string& name,
                    const ArchConfig& arch)
      : arch_(arch) {
    image_encoder_ = nets::ResNet34Encoder<S>(reg, rng, name + ".ei", 3,
                                              arch.encoder_width, arch.embed_dim,
                                              /*small_input=*/false);
    audio_encoder_ = nets::ResNet34Encoder<S>(reg, rng, name + ".ea", 1,
                                              arch.encoder_width, arch.embed_dim,
                                              /*small_input=*/true);
    lstm1_ = nets::LSTMLayer<S>(reg, rng, name + ".lstm1",
                                arch.embed_dim + arch.embed_dim, arch.lstm_hidden);
    lstm2_ = nets::LSTMLayer<S>(reg, rng, name + ".lstm2", arch.lstm_hidden,
                                arch.lstm_hidden);
    embed_proj_ = nets::Linear<S>(reg, rng, name + ".proj", arch.lstm_hidden,
                                  arch.embed_dim);
    dec_hidden_ = nets::Linear<S>(reg, rng, name + ".dec1", arch.embed_dim, 64);
    dec_out_ = nets::Linear<S>(reg, rng, name + ".dec2", 64, 6, /*zero_init=*/true);
  }

  const ArchConfig& arch() const { return arch_; }

  // image [1,3,H,W] with H = W = image_size -> e_0 [1,D_e]
  Var<S> encode_reference(const Var<S>& image) const {
    check_invalid(image->value.rank() == 4 && image->value.dim(1) == 3 &&
                      image->value.dim(2) == image->value.dim(3),
                  "encode_reference: expected a square [1,3,H,H] image");
    check_invalid(image->value.all_finite(), "encode_reference: non-finite pixels");
    check_invalid(image->value.min() >= S(0) && image->value.max() <= S(1),
                  "encode_reference: pixels must lie in [0,1]");
    return image_encoder_.forward(image);
  }

  // frames [T,4,41] (normalized features) -> [T,D_e]
  Var<S> encode_audio(const Var<S>& frames) const {
    check_invalid(frames->value.rank() == 3 && frames->value.dim(1) == 4 &&
                      frames->value.dim(2) == 41,
                  "encode_audio: expected [T,4,41] acoustic frames");
    const Index T = frames->value.dim(0);
    return audio_encoder_.forward(ad::reshape(frames, {T, 1, 4, 41}));
  }

  RecurrentState<S> initial_state() const {
    RecurrentState<S> s;
    s.h1 = ad::constant(Tensor<S>({1, arch_.lstm_hidden}));
    s.c1 = ad::constant(Tensor<S>({1, arch_.lstm_hidden}));
    s.h2 = ad::constant(Tensor<S>({1, arch_.lstm_hidden}));
    s.c2 = ad::constant(Tensor<S>({1, arch_.lstm_hidden}));
    return s;
  }

  // One recurrence step: consumes the previous embedding (SET) and yields
  // (e_i, pose_i). With no_set the previous embedding is replaced by zeros.
  std::pair<Var<S>, Var<S>> step(RecurrentState<S>& state, const Var<S>& audio_emb,
                                 const Var<S>& prev_embedding) const {
    check_contract(audio_emb->value.dim(1) == arch_.embed_dim &&
                       prev_embedding->value.dim(1) == arch_.embed_dim,
                   "step: embedding dimension mismatch");
    Var<S> e_prev = prev_embedding;
    if (arch_.no_set)
      e_prev = ad::constant(Tensor<S>({1, arch_.embed_dim}));
    auto x = ad::concat<S>({audio_emb, e_prev}, 1);
    auto [h1, c1] = lstm1_.step(x, state.h1, state.c1);
    auto [h2, c2] = lstm2_.step(h1, state.h2, state.c2);
    state.h1 = h1;
    state.c1 = c1;
    state.h2 = h2;
    state.c2 = c2;
    auto e_i = embed_proj_.forward(h2);
    auto pose = dec_out_.forward(ad::relu(dec_hidden_.forward(e_i)));
    return {e_i, pose};
  }

  // Full unrolled sequence: image [1,3,H,H], features [T,4,41] -> [T,6]
  // poses in normalized units.
  Var<S> predict_normalized(const Var<S>& image, const Var<S>& features) const {
    auto e = encode_reference(image);
    auto a = encode_audio(features);
    const Index T = features->value.dim(0);
    auto state = initial_state();
    std::vector<Var<S>> poses;
    poses.reserve((size_t)T);
    for (Index t = 0; t < T; ++t) {
      auto a_t = ad::slice(a, 0, t, 1);
      auto [e_i, pose] = step(state, a_t, e);
      e = e_i;
      poses.push_back(pose);
    }
    return ad::concat<S>(poses, 0);
  }

 private:
  ArchConfig arch_;
  nets::ResNet34Encoder<S> image_encoder_;
  nets::ResNet34Encoder<S> audio_encoder_;
  nets::LSTMLayer<S> lstm1_, lstm2_;
  nets::Linear<S> embed_proj_;
  nets::Linear<S> dec_hidden_, dec_out_;
};

// 1-D PatchGAN discriminator on pose sequences along the temporal axis.
// Kernel 4 everywhere; strides 2,2,1,1; channels 64 -> 128 -> 256 -> 1.
// Receptive field 34, total stride 4: score length floor((T-34)/4)+1.
template <typename S>
class PatchGan1d {
 public:
  static constexpr Index kReceptiveField = 34;
  static constexpr Index kTotalStride = 4;

  PatchGan1d() = default;
  PatchGan1d(nets::ParamRegistry<S>& reg, Rng& rng, const std::string& name,
             Index width = 64) {
    c1_ = nets::Conv1d<S>(reg, rng, name + ".c1", 6, width, 4, 2);
    c2_ = nets::Conv1d<S>(reg, rng, name + ".c2", width, 2 * width, 4, 2);
    c3_ = nets::Conv1d<S>(reg, rng, name + ".c3", 2 * width, 4 * width, 4, 1);
    c4_ = nets::Conv1d<S>(reg, rng, name + ".c4", 4 * width, 1, 4, 1);
  }

  static Index score_length(Index T) {
    check_invalid(T >= kReceptiveField,
                  "patchgan: sequence shorter than the receptive field (34)");
    return (T - kReceptiveField) / kTotalStride + 1;
  }

  // poses [T,6] (normalized) -> patch scores [L]
  Var<S> forward(const Var<S>& poses) const {
    const Index T = poses->value.dim(0);
    const Index L = score_length(T);
    auto x = ad::reshape(ad::swap01(poses), {1, 6, T});
    auto h = ad::leaky_relu(c1_.forward(x), S(0.2));
    h = ad::leaky_relu(c2_.forward(h), S(0.2));
    h = ad::leaky_relu(c3_.forward(h), S(0.2));
    auto out = c4_.forward(h);
    check_contract(out->value.dim(2) == L, "patchgan: unexpected score length");
    return ad::reshape(out, {L});
  }

 private:
  nets::Conv1d<S> c1_, c2_, c3_, c4_;
};

// LSGAN objectives with real/fake targets 1/0.
template <typename S>
Var<S> lsgan_real_loss(const Var<S>& scores) {
  return ad::mean_all(ad::square(ad::add_const(scores, S(-1))));
}
template <typename S>
Var<S> lsgan_fake_loss(const Var<S>& scores) {
  return ad::mean_all(ad::square(scores));
}

// Per-channel pose normalization statistics stored with checkpoints.
struct PoseStats {
  Eigen::Matrix<double, 6, 1> mean = Eigen::Matrix<double, 6, 1>::Zero();
  Eigen::Matrix<double, 6, 1> stddev = Eigen::Matrix<double, 6, 1>::Ones();

  template <typename S>
  Tensor<S> normalize(const pose::PoseSequence& seq) const {
    Tensor<S> out({seq.size(), 6});
    for (Index t = 0; t < seq.size(); ++t)
      for (int c = 0; c < 6; ++c)
        out(t, c) = (S)((seq.poses(t, c) - mean(c)) / stddev(c));
    return out;
  }

  pose::PoseSequence denormalize(const Tensor<float>& norm) const {
    pose::PoseSequence seq;
    seq.poses.resize(norm.dim(0), 6);
    for (Index t = 0; t < norm.dim(0); ++t)
      for (int c = 0; c < 6; ++c)
        seq.poses(t, c) = (double)norm(t, c) * stddev(c) + mean(c);
    return seq;
  }

  template <typename S>
  Tensor<S> serialize() const {
    Tensor<S> t({2, 6});
    for (int c = 0; c < 6; ++c) {
      t(0, c) = (S)mean(c);
      t(1, c) = (S)stddev(c);
    }
    return t;
  }
  template <typename S>
  static PoseStats deserialize(const Tensor<S>& t) {
    PoseStats s;
    for (int c = 0; c < 6; ++c) {
      s.mean(c) = (double)t(0, c);
      s.stddev(c) = (double)t(1, c);
    }
    return s;
  }
};

// Per-feature z-score statistics for the 41 acoustic features.
struct AudioStats {
  Eigen::Matrix<double, 41, 1> mean = Eigen::Matrix<double, 41, 1>::Zero();
  Eigen::Matrix<double, 41, 1> stddev = Eigen::Matrix<double, 41, 1>::Ones();

  template <typename S>
  Tensor<S> normalize(const Tensor<float>& frames) const {
    Tensor<S> out({frames.dim(0), frames.dim(1), frames.dim(2)});
    for (Index t = 0; t < frames.dim(0); ++t)
      for (Index w = 0; w < frames.dim(1); ++w)
        for (Index f = 0; f < frames.dim(2); ++f)
          out(t, w, f) = (S)(((double)frames(t, w, f) - mean(f)) / stddev(f));
    return out;
  }

  template <typename S>
  Tensor<S> serialize() const {
    Tensor<S> t({2, 41});
    for (int c = 0; c < 41; ++c) {
      t(0, c) = (S)mean(c);
      t(1, c) = (S)stddev(c);
    }
    return t;
  }
  template <typename S>
  static AudioStats deserialize(const Tensor<S>& t) {
    AudioStats s;
    for (int c = 0; c < 41; ++c) {
      s.mean(c) = (double)t(0, c);
      s.stddev(c) = (double)t(1, c);
    }
    return s;
  }
};

}  // namespace talkgen::headpose
