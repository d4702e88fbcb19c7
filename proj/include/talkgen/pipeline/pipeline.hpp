#pragma once

#include <filesystem>

#include "talkgen/metrics/metrics.hpp"
#include "talkgen/train/trainers.hpp"

namespace talkgen::pipeline {

using train::FommModel;
using train::HeadModel;
using train::MotionModel;

// Inference runs in float32; intermediate artifacts round-trip through the
// same files the stage subcommands produce, so a chained run is bit
// identical to the fused one.
using S = float;

inline Tensor<float> load_reference(const std::string& path, Index size) {
  auto im = img::load_image<float>(path);
  if (im.dim(1) != size || im.dim(2) != size)
    im = img::resize_bilinear(im, size, size);
  return im;
}

// ---- stage functions (each backs one CLI subcommand) ----

inline void extract_features_cmd(const std::string& audio_path,
                                 const std::string& out_path,
                                 const std::string& csv_path = "") {
  auto clip = audio::load_audio_16k(audio_path);
  auto seq = audio::extract_features(clip);
  audio::save_features(out_path, seq);
  if (!csv_path.empty()) audio::save_features_csv(csv_path, seq);
}

inline pose::PoseSequence predict_pose_from_features(
    const HeadModel<S>& model, const Tensor<float>& reference,
    const audio::AcousticSequence& features) {
  auto feats = ad::constant(model.audio_stats.normalize<S>(features.frames));
  auto ref = ad::constant(
      reference.reshaped({1, 3, reference.dim(1), reference.dim(2)}));
  auto pred = model.net.predict_normalized(ref, feats);
  return model.pose_stats.denormalize(pred->value);
}

inline void predict_pose_cmd(const std::string& head_ckpt,
                             const std::string& image_path,
                             const std::string& audio_path,
                             const std::string& out_csv) {
  auto model = HeadModel<S>::load(head_ckpt);
  auto ref = load_reference(image_path, model.arch.image_size);
  auto features = audio::extract_features(audio::load_audio_16k(audio_path));
  auto poses = predict_pose_from_features(model, ref, features);
  pose::write_pose_csv(out_csv, poses);
}

inline void render_pose_cmd(const std::string& poses_csv, const std::string& out_dir,
                            Index size = 64) {
  auto poses = pose::read_pose_csv(poses_csv);
  auto vs = pose::render_pose_sequence(poses, pose::square_camera(size));
  std::filesystem::create_directories(out_dir);
  for (Index t = 0; t < vs.frames(); ++t) {
    Tensor<float> frame({1, size, size});
    for (Index y = 0; y < size; ++y)
      for (Index x = 0; x < size; ++x) frame(0, y, x) = vs.data(0, t, y, x);
    char name[32];
    std::snprintf(name, sizeof(name), "%06ld.png", (long)t);
    img::save_image((std::filesystem::path(out_dir) / name).string(), frame);
  }
}

// Keypoints for an arbitrary-length sequence: the fusion window is padded
// to a multiple of the hourglass temporal factor by repeating the last
// frame, and the outputs are cropped back to T.
inline Tensor<float> predict_keypoints_from_inputs(
    MotionModel<S>& model, const Tensor<float>& reference,
    const audio::AcousticSequence& features, const pose::PoseSequence& poses) {
  const Index T = features.frame_count();
  check_contract(poses.size() == T,
                 "keypoint prediction: pose stream has T=" +
                     std::to_string(poses.size()) + " but audio stream has T=" +
                     std::to_string(T));
  const Index factor = model.net.temporal_factor();
  const Index padded_T = ((T + factor - 1) / factor) * factor;

  pose::PoseSequence padded = poses;
  padded.poses.conservativeResize(padded_T, 6);
  for (Index t = T; t < padded_T; ++t)
    padded.poses.row(t) = poses.poses.row(T - 1);
  Tensor<float> feats({padded_T, 4, 41});
  for (Index t = 0; t < padded_T; ++t)
    for (Index w = 0; w < 4; ++w)
      for (Index f = 0; f < 41; ++f)
        feats(t, w, f) = features.frames(std::min(t, T - 1), w, f);

  auto cam = pose::square_camera(model.arch.fusion_size);
  auto vs = pose::render_pose_sequence(padded, cam);
  Tensor<S> norm = model.audio_stats.normalize<S>(feats);
  auto audio_maps = model.net.audio_encoder.forward(ad::constant(norm));
  auto fusion =
      motion::build_fusion_tensor<S>(reference, vs, audio_maps, model.arch.fusion_size);
  auto kp = model.net.forward(fusion);

  Tensor<float> packed = motion::pack_keypoint_sequence(kp);
  if (padded_T == T) return packed;
  Tensor<float> cropped({T, packed.dim(1), 6});
  std::copy_n(packed.data(), cropped.size(), cropped.data());
  return cropped;
}

inline void predict_keypoints_cmd(const std::string& motion_ckpt,
                                  const std::string& image_path,
                                  const std::string& audio_path,
                                  const std::string& poses_csv,
                                  const std::string& out_path) {
  auto model = MotionModel<S>::load(motion_ckpt);
  auto ref = load_reference(image_path, model.arch.fusion_size);
  auto features = audio::extract_features(audio::load_audio_16k(audio_path));
  auto poses = pose::read_pose_csv(poses_csv);
  auto packed = predict_keypoints_from_inputs(model, ref, features, poses);
  io::save_tensor(out_path, packed);
  nlohmann::json side;
  side["keypoints"] = (long)packed.dim(1);
  side["frames"] = (long)packed.dim(0);
  side["layout"] = "[T,N,6] = px,py,j00,j01,j10,j11";
  io::write_text_file(out_path + ".json", side.dump(2) + "\n");
}

inline std::vector<Tensor<float>> render_video_frames(FommModel<S>& model,
                                                      const Tensor<float>& reference,
                                                      const Tensor<float>& packed_kp) {
  auto [pos, jac] = motion::unpack_keypoint_sequence(packed_kp);
  const Index T = pos.dim(0);
  auto ref_b = ad::constant(
      reference.reshaped({1, 3, reference.dim(1), reference.dim(2)}));
  auto src_kp = model.detector.detect(ref_b);
  fomm::Keypoints<S> drv;
  drv.positions = ad::constant(pos);
  drv.jacobians = ad::constant(jac);
  std::vector<Tensor<float>> frames;
  frames.reserve((size_t)T);
  for (Index t = 0; t < T; ++t) {
    auto gen = model.generator.generate(ref_b, src_kp, 0, drv, t);
    frames.push_back(
        gen->value.reshaped({3, gen->value.dim(2), gen->value.dim(3)}));
  }
  return frames;
}

inline void write_frames(const std::string& out_dir,
                         const std::vector<Tensor<float>>& frames) {
  std::filesystem::create_directories(out_dir);
  for (size_t t = 0; t < frames.size(); ++t) {
    char name[32];
    std::snprintf(name, sizeof(name), "%06ld.png", (long)t);
    img::save_image((std::filesystem::path(out_dir) / name).string(), frames[t]);
  }
}

// Raw-tensor video container: one float32 tensor [T,H,W,3].
inline void write_video_container(const std::string& path,
                                  const std::vector<Tensor<float>>& frames) {
  check_invalid(!frames.empty(), "video container: no frames");
  const Index H = frames[0].dim(1), W = frames[0].dim(2);
  Tensor<float> vid({(Index)frames.size(), H, W, 3});
  for (size_t t = 0; t < frames.size(); ++t)
    for (Index y = 0; y < H; ++y)
      for (Index x = 0; x < W; ++x)
        for (Index c = 0; c < 3; ++c)
          vid((Index)t, y, x, c) = frames[t](c, y, x);
  io::save_tensor(path, vid);
}

inline std::vector<Tensor<float>> read_frames_dir(const std::string& dir) {
  std::vector<Tensor<float>> frames;
  for (const auto& p : train::list_frames(dir))
    frames.push_back(img::load_image<float>(p));
  check_invalid(!frames.empty(), "no PNG frames in " + dir);
  return frames;
}

inline void render_video_cmd(const std::string& fomm_ckpt,
                             const std::string& image_path,
                             const std::string& keypoints_path,
                             const std::string& out_dir,
                             const std::string& container_path = "") {
  auto model = FommModel<S>::load(fomm_ckpt);
  auto ref = load_reference(image_path, model.arch.image_size);
  auto packed = io::load_tensor<float>(keypoints_path);
  auto frames = render_video_frames(model, ref, packed);
  write_frames(out_dir, frames);
  if (!container_path.empty()) write_video_container(container_path, frames);
}

// ---- the fused end-to-end flow ----

struct GenerateOptions {
  std::string image_path;
  std::string audio_path;
  std::string head_ckpt;
  std::string motion_ckpt;
  std::string fomm_ckpt;
  std::string out_dir;
  std::string pose_source;      // optional CSV bypassing the head predictor
  std::string keypoint_source;  // optional tensor file bypassing the motion net
  bool dump_intermediates = false;
  uint64_t seed = 0;  // reserved; inference is deterministic
};

inline void generate(const GenerateOptions& opt) {
  namespace fs = std::filesystem;
  (void)opt.seed;
  fs::create_directories(opt.out_dir);

  auto fomm_model = FommModel<S>::load(opt.fomm_ckpt);
  auto motion_info = train::read_checkpoint_info(opt.motion_ckpt);
  train::expect_checkpoint_kind(motion_info, "motion", opt.motion_ckpt);
  const uint64_t fomm_hash =
      train::read_checkpoint_info(opt.fomm_ckpt).arch_hash;
  if (motion_info.arch_hash != fomm_hash)
    throw Error(ErrorKind::incompatible_checkpoint,
                "motion and fomm checkpoints disagree on [arch]");

  auto features = audio::extract_features(audio::load_audio_16k(opt.audio_path));
  const Index T = features.frame_count();

  // head poses (predicted or supplied), always written then re-read
  const std::string poses_csv = (fs::path(opt.out_dir) / "poses.csv").string();
  if (opt.pose_source.empty()) {
    auto head_model = HeadModel<S>::load(opt.head_ckpt);
    if (train::read_checkpoint_info(opt.head_ckpt).arch_hash != fomm_hash)
      throw Error(ErrorKind::incompatible_checkpoint,
                  "head and fomm checkpoints disagree on [arch]");
    auto ref_h = load_reference(opt.image_path, head_model.arch.image_size);
    auto poses = predict_pose_from_features(head_model, ref_h, features);
    pose::write_pose_csv(poses_csv, poses);
  } else {
    auto poses = pose::read_pose_csv(opt.pose_source);
    check_invalid(poses.size() == T,
                  "pose csv length does not match the audio frame count");
    pose::write_pose_csv(poses_csv, poses);
  }
  auto poses = pose::read_pose_csv(poses_csv);

  // keypoints (predicted or supplied), written then re-read
  const std::string kp_path = (fs::path(opt.out_dir) / "keypoints.tgtb").string();
  if (opt.keypoint_source.empty()) {
    auto motion_model = MotionModel<S>::load(opt.motion_ckpt);
    auto ref_m = load_reference(opt.image_path, motion_model.arch.fusion_size);
    auto packed = predict_keypoints_from_inputs(motion_model, ref_m, features, poses);
    io::save_tensor(kp_path, packed);
  } else {
    auto packed = io::load_tensor<float>(opt.keypoint_source);
    check_invalid(packed.dim(0) == T,
                  "keypoint file length does not match the audio frame count");
    io::save_tensor(kp_path, packed);
  }
  auto packed = io::load_tensor<float>(kp_path);

  auto ref = load_reference(opt.image_path, fomm_model.arch.image_size);
  auto frames = render_video_frames(fomm_model, ref, packed);
  write_frames((fs::path(opt.out_dir) / "frames").string(), frames);

  if (opt.dump_intermediates) {
    audio::save_features((fs::path(opt.out_dir) / "features.tgtb").string(), features);
    audio::save_features_csv((fs::path(opt.out_dir) / "features.csv").string(),
                             features);
    render_pose_cmd(poses_csv, (fs::path(opt.out_dir) / "pose_boxes").string(),
                    fomm_model.arch.fusion_size);
    write_video_container((fs::path(opt.out_dir) / "video.tgtb").string(), frames);
  }
}

}  // namespace talkgen::pipeline
