#pragma once

#include "talkgen/audio/features.hpp"
#include "talkgen/core/image.hpp"
#include "talkgen/nets/fomm.hpp"
#include "talkgen/pose/render.hpp"

namespace talkgen::motion {

using ad::Var;
using fomm::Keypoints;
using nets::ArchConfig;

// Fusion volume V: channels ordered (V_I:3, V_S:1, V_A:2), stored [6,T,H,W],
// logically [W,H,6,T].
template <typename S>
struct FusionTensor {
  Var<S> data;  // [6,T,H,W]
  Index width() const { return data->value.dim(3); }
  Index height() const { return data->value.dim(2); }
  Index channels() const { return data->value.dim(0); }
  Index frames() const { return data->value.dim(1); }
};

// Per-frame acoustic encoder: one a_i block [4,41] to a [2,H,W] feature map
// via convolutions and nearest-neighbor upsampling.
template <typename S>
struct AudioMapEncoder {
  nets::Conv2d<S> conv_in;
  nets::Linear<S> to_grid;
  nets::Conv2d<S> up_conv1, up_conv2, up_conv3;
  Index map_size = 64;

  AudioMapEncoder() = default;
  AudioMapEncoder(nets::ParamRegistry<S>& reg, Rng& rng, const std::string& name,
                  Index map_size_)
      : map_size(map_size_) {
    check_contract(map_size % 8 == 0, "audio map size must be divisible by 8");
    conv_in = nets::Conv2d<S>(reg, rng, name + ".conv_in", 1, 8, 3, 1, 1);
    const Index seed = map_size / 8;
    to_grid = nets::Linear<S>(reg, rng, name + ".to_grid", 8 * 4 * 41, 4 * seed * seed);
    up_conv1 = nets::Conv2d<S>(reg, rng, name + ".up1", 4, 8, 3, 1, 1);
    up_conv2 = nets::Conv2d<S>(reg, rng, name + ".up2", 8, 8, 3, 1, 1);
    up_conv3 = nets::Conv2d<S>(reg, rng, name + ".up3", 8, 2, 3, 1, 1);
  }

  // frames [T,4,41] (already normalized) -> [T,2,H,W]
  Var<S> forward(const Var<S>& frames) const {
    const Index T = frames->value.dim(0);
    check_invalid(frames->value.rank() == 3 && frames->value.dim(1) == 4 &&
                      frames->value.dim(2) == 41,
                  "audio encoder: expected [T,4,41] acoustic frames");
    const Index seed = map_size / 8;
    auto h = ad::relu(conv_in.forward(ad::reshape(frames, {T, 1, 4, 41})));
    auto flat = ad::reshape(h, {T, 8 * 4 * 41});
    auto g = ad::reshape(to_grid.forward(flat), {T, 4, seed, seed});
    g = ad::relu(up_conv1.forward(ad::upsample_nearest2d(g, 2)));
    g = ad::relu(up_conv2.forward(ad::upsample_nearest2d(g, 2)));
    g = up_conv3.forward(ad::upsample_nearest2d(g, 2));
    return g;  // [T,2,H,W]
  }
};

// V_I: bilinear-downsampled reference repeated T times, [3,T,H,W].
template <typename S>
Tensor<S> repeat_reference(const Tensor<S>& image, Index size, Index T) {
  Tensor<S> small = img::resize_bilinear(image, size, size);
  Tensor<S> out({3, T, size, size});
  for (Index c = 0; c < 3; ++c)
    for (Index t = 0; t < T; ++t)
      std::copy_n(small.data() + c * size * size, size * size,
                  out.data() + (c * T + t) * size * size);
  return out;
}

// Concatenates V_I, V_S, V_A along channels. Throws naming the stream whose
// frame count disagrees.
template <typename S>
FusionTensor<S> build_fusion_tensor(const Tensor<S>& reference,
                                    const pose::PoseTensor& vs,
                                    const Var<S>& audio_maps, Index size) {
  const Index T = audio_maps->value.dim(0);
  check_contract(vs.frames() == T,
                 "fusion tensor: pose stream has T=" + std::to_string(vs.frames()) +
                     " but audio stream has T=" + std::to_string(T));
  check_contract(vs.height() == size && vs.width() == size,
                 "fusion tensor: pose stream spatial size mismatch");
  check_contract(audio_maps->value.dim(2) == size && audio_maps->value.dim(3) == size,
                 "fusion tensor: audio stream spatial size mismatch");
  check_contract(reference.rank() == 3 && reference.dim(0) == 3,
                 "fusion tensor: reference image must be [3,H,W]");

  auto vi = ad::constant(repeat_reference(reference, size, T));
  auto vs_var = ad::constant(vs.data.template cast<S>());
  auto va = ad::swap01(audio_maps);  // [2,T,H,W]
  FusionTensor<S> f;
  f.data = ad::concat<S>({vi, vs_var, va}, 0);
  return f;
}

// The motion field generator N_M: fuse image, pose boxes and audio, run the
// space-time hourglass, then decode per-frame keypoints and Jacobians.
template <typename S>
struct MotionFieldGenerator {
  AudioMapEncoder<S> audio_encoder;
  nets::Hourglass3d<S> hourglass;
  nets::Conv2d<S> latent_conv;
  fomm::KeypointHead<S> head;
  ArchConfig arch;

  MotionFieldGenerator() = default;
  MotionFieldGenerator(nets::ParamRegistry<S>& reg, Rng& rng, const std::string& name,
                       const ArchConfig& arch_)
      : arch(arch_) {
    audio_encoder = AudioMapEncoder<S>(reg, rng, name + ".audio", arch.fusion_size);
    hourglass = nets::Hourglass3d<S>(reg, rng, name + ".hg", 6, arch.hourglass3d_base,
                                     arch.hourglass3d_levels);
    latent_conv = nets::Conv2d<S>(reg, rng, name + ".latent",
                                  hourglass.out_channels(), 32, 3, 1, 1);
    head = fomm::KeypointHead<S>(reg, rng, name + ".head", 32, arch);
  }

  Index temporal_factor() const { return hourglass.temporal_factor(); }

  // latent features per frame, [T, 32, H, W]
  Var<S> encode(const FusionTensor<S>& v) const {
    check_invalid(v.channels() == 6, "fusion tensor must have 6 channels");
    auto latent = hourglass.forward(v.data);          // [C?,T,H,W]
    auto per_frame = ad::swap01(latent);              // [T,C,H,W]
    return ad::relu(latent_conv.forward(per_frame));  // [T,32,H,W]
  }

  // Decode keypoints for every frame of the window.
  Keypoints<S> decode(const Var<S>& latent) const { return head.forward(latent); }

  Keypoints<S> forward(const FusionTensor<S>& v) const { return decode(encode(v)); }
};

// Keypoint sequence container serialization: positions and Jacobians packed
// per frame as [T, N, 6] (px, py, j00, j01, j10, j11).
template <typename S>
Tensor<S> pack_keypoint_sequence(const Keypoints<S>& kp) {
  const Index T = kp.positions->value.dim(0), N = kp.positions->value.dim(1);
  Tensor<S> out({T, N, 6});
  for (Index t = 0; t < T; ++t)
    for (Index n = 0; n < N; ++n) {
      out(t, n, 0) = kp.positions->value(t, n, 0);
      out(t, n, 1) = kp.positions->value(t, n, 1);
      out(t, n, 2) = kp.jacobians->value.data()[((t * N + n) * 2 + 0) * 2 + 0];
      out(t, n, 3) = kp.jacobians->value.data()[((t * N + n) * 2 + 0) * 2 + 1];
      out(t, n, 4) = kp.jacobians->value.data()[((t * N + n) * 2 + 1) * 2 + 0];
      out(t, n, 5) = kp.jacobians->value.data()[((t * N + n) * 2 + 1) * 2 + 1];
    }
  return out;
}

template <typename S>
std::pair<Tensor<S>, Tensor<S>> unpack_keypoint_sequence(const Tensor<S>& packed) {
  check_invalid(packed.rank() == 3 && packed.dim(2) == 6,
                "keypoint sequence must be [T,N,6]");
  const Index T = packed.dim(0), N = packed.dim(1);
  Tensor<S> pos({T, N, 2}), jac({T, N, 2, 2});
  for (Index t = 0; t < T; ++t)
    for (Index n = 0; n < N; ++n) {
      pos(t, n, 0) = packed(t, n, 0);
      pos(t, n, 1) = packed(t, n, 1);
      jac.data()[((t * N + n) * 2 + 0) * 2 + 0] = packed(t, n, 2);
      jac.data()[((t * N + n) * 2 + 0) * 2 + 1] = packed(t, n, 3);
      jac.data()[((t * N + n) * 2 + 1) * 2 + 0] = packed(t, n, 4);
      jac.data()[((t * N + n) * 2 + 1) * 2 + 1] = packed(t, n, 5);
    }
  return {std::move(pos), std::move(jac)};
}

}  // namespace talkgen::motion
