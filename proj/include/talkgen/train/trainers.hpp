#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>

#include "talkgen/losses/objectives.hpp"
#include "talkgen/train/checkpoint.hpp"
#include "talkgen/train/dataset.hpp"

namespace talkgen::train {

struct TrainConfig {
  long steps = 100;
  double lr = 2e-4;
  double weight_decay = 2e-6;
  Index batch_size = 4;
  Index window_T = 64;
  uint64_t seed = 0;
  long lambda_m_decay_steps = 100;
  Index stage2_render_frames = 4;
  std::string pose_loss = "ssim";  // "ssim" | "l1" (ablation)
  std::string log_path;
  std::string resume_from;
  losses::LossWeights weights;

  static TrainConfig from_config(const Config& c) {
    TrainConfig t;
    t.steps = c.get_int("train", "steps", t.steps);
    t.lr = c.get_num("train", "lr", t.lr);
    t.weight_decay = c.get_num("train", "weight_decay", t.weight_decay);
    t.batch_size = c.get_int("train", "batch_size", t.batch_size);
    t.window_T = c.get_int("train", "window_T", t.window_T);
    t.seed = (uint64_t)c.get_int("train", "seed", 0);
    t.lambda_m_decay_steps =
        c.get_int("train", "lambda_m_decay_steps", t.lambda_m_decay_steps);
    t.stage2_render_frames =
        c.get_int("train", "stage2_render_frames", t.stage2_render_frames);
    t.pose_loss = c.get("train", "pose_loss", t.pose_loss);
    t.weights.lambda_m = c.get_num("loss", "lambda_m", t.weights.lambda_m);
    t.weights.lambda_p = c.get_num("loss", "lambda_p", t.weights.lambda_p);
    t.weights.lambda_j = c.get_num("loss", "lambda_j", t.weights.lambda_j);
    t.weights.lambda_p_prime =
        c.get_num("loss", "lambda_p_prime", t.weights.lambda_p_prime);
    t.weights.lambda_rec = c.get_num("loss", "lambda_rec", t.weights.lambda_rec);
    t.weights.lambda_eq_p = c.get_num("loss", "lambda_eq_p", t.weights.lambda_eq_p);
    t.weights.lambda_eq_j = c.get_num("loss", "lambda_eq_j", t.weights.lambda_eq_j);
    t.weights.validate();
    check_invalid(t.lr > 0, "train config: lr must be positive");
    check_invalid(t.window_T >= 2, "train config: window_T must be >= 2");
    return t;
  }

  void to_config(Config& c) const {
    auto num = [](double v) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.9g", v);
      return std::string(buf);
    };
    c.set("train", "steps", std::to_string(steps));
    c.set("train", "lr", num(lr));
    c.set("train", "weight_decay", num(weight_decay));
    c.set("train", "batch_size", std::to_string(batch_size));
    c.set("train", "window_T", std::to_string(window_T));
    c.set("train", "seed", std::to_string((long)seed));
    c.set("train", "lambda_m_decay_steps", std::to_string(lambda_m_decay_steps));
    c.set("train", "stage2_render_frames", std::to_string(stage2_render_frames));
    c.set("train", "pose_loss", pose_loss);
    c.set("loss", "lambda_m", num(weights.lambda_m));
    c.set("loss", "lambda_p", num(weights.lambda_p));
    c.set("loss", "lambda_j", num(weights.lambda_j));
    c.set("loss", "lambda_p_prime", num(weights.lambda_p_prime));
    c.set("loss", "lambda_rec", num(weights.lambda_rec));
    c.set("loss", "lambda_eq_p", num(weights.lambda_eq_p));
    c.set("loss", "lambda_eq_j", num(weights.lambda_eq_j));
  }
};

struct TrainResult {
  std::vector<std::map<std::string, double>> history;
  std::string checkpoint_dir;
};

// Long-format CSV log: step, wall_time, term, value.
class TrainLogger {
 public:
  explicit TrainLogger(const std::string& path) {
    if (!path.empty()) {
      os_.open(path);
      if (!os_) throw_io("cannot open training log: " + path);
      os_ << "step,wall_time,term,value\n";
    }
    start_ = std::chrono::steady_clock::now();
  }
  void log(long step, const std::map<std::string, double>& terms,
           TrainResult& result) {
    result.history.push_back(terms);
    if (!os_.is_open()) return;
    double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_)
            .count();
    for (const auto& [term, value] : terms)
      os_ << step << "," << wall << "," << term << "," << value << "\n";
  }

 private:
  std::ofstream os_;
  std::chrono::steady_clock::time_point start_;
};

namespace detail {

template <typename S>
Tensor<S> stack_frames(const std::vector<Tensor<float>>& frames,
                       const std::vector<Index>& indices) {
  const Index C = frames[0].dim(0), H = frames[0].dim(1), W = frames[0].dim(2);
  Tensor<S> out({(Index)indices.size(), C, H, W});
  for (size_t b = 0; b < indices.size(); ++b)
    for (Index i = 0; i < C * H * W; ++i)
      out[(Index)b * C * H * W + i] = (S)frames[(size_t)indices[b]][i];
  return out;
}

// Window of frame indices with repetition padding for short clips.
inline std::vector<Index> sample_window(Rng& rng, Index clip_len, Index window_T) {
  std::vector<Index> idx((size_t)window_T);
  if (clip_len >= window_T) {
    Index start = (Index)rng.below((uint64_t)(clip_len - window_T + 1));
    for (Index i = 0; i < window_T; ++i) idx[(size_t)i] = start + i;
  } else {
    for (Index i = 0; i < window_T; ++i) idx[(size_t)i] = std::min(i, clip_len - 1);
  }
  return idx;
}

template <typename S>
fomm::Keypoints<S> slice_keypoints(const fomm::Keypoints<S>& kp, Index b) {
  const Index N = kp.positions->value.dim(1);
  fomm::Keypoints<S> out;
  out.positions = ad::reshape(ad::slice(kp.positions, 0, b, 1), {1, N, 2});
  out.jacobians = ad::reshape(ad::slice(kp.jacobians, 0, b, 1), {1, N, 2, 2});
  if (kp.heatmaps) {
    const Index H = kp.heatmaps->value.dim(2), W = kp.heatmaps->value.dim(3);
    out.heatmaps = ad::reshape(ad::slice(kp.heatmaps, 0, b, 1), {1, N, H, W});
  }
  return out;
}

inline void check_nonempty(const Dataset& data) {
  check_invalid(data.size() > 0, "training requires a non-empty dataset");
}

template <typename S>
void check_finite_loss(const ad::Var<S>& loss, long step) {
  if (!std::isfinite((double)loss->value[0]))
    throw Error(ErrorKind::training,
                "non-finite loss at step " + std::to_string(step));
}

}  // namespace detail

// ---- FOMM pretraining: detector + generator on same-clip frame pairs ----

template <typename S>
TrainResult train_fomm(const Dataset& data, const nets::ArchConfig& arch,
                       const TrainConfig& tcfg, const std::string& out_dir) {
  detail::check_nonempty(data);
  FommModel<S> model(arch, tcfg.seed);
  Rng rng(tcfg.seed + 1);
  Adam<S> opt(model.reg.params(), tcfg.lr, tcfg.weight_decay);
  if (!tcfg.resume_from.empty()) {
    auto prev = FommModel<S>::load(tcfg.resume_from);
    model.reg.from_archive(prev.reg.to_archive());
    load_train_state(tcfg.resume_from, opt, rng);
  }
  losses::PerceptualExtractor<S> ext;
  TrainLogger logger(tcfg.log_path);
  TrainResult result;

  for (long it = 0; it < tcfg.steps; ++it) {
    const long step = opt.steps_taken();
    ad::Var<S> total = ad::constant(Tensor<S>::scalar(S(0)));
    double rec_sum = 0, eqp_sum = 0, eqj_sum = 0;
    for (Index b = 0; b < tcfg.batch_size; ++b) {
      const auto& clip = data.clips()[rng.below(data.size())];
      Index src = (Index)rng.below((uint64_t)clip.frames.size());
      Index drv = (Index)rng.below((uint64_t)clip.frames.size());
      auto pair_batch =
          ad::constant(detail::stack_frames<S>(clip.frames, {src, drv}));
      auto kp = model.detector.detect(pair_batch);

      auto src_b = ad::slice(pair_batch, 0, 0, 1);
      auto drv_b = ad::slice(pair_batch, 0, 1, 1);
      auto generated = model.generator.generate(src_b, kp, 0, kp, 1);
      auto rec = losses::pyramid_perceptual_loss(generated, drv_b, ext);

      auto tps = fomm::TpsTransform::random(rng);
      const Index sz = arch.image_size;
      auto drv_chw = ad::reshape(drv_b, {3, sz, sz});
      auto warped = fomm::warp(drv_chw, ad::constant(tps.warp_grid<S>(sz, sz)));
      auto kp_w = model.detector.detect(ad::reshape(warped, {1, 3, sz, sz}));
      auto kp_drv = detail::slice_keypoints(kp, 1);
      auto eq = fomm::equivariance_losses(kp_drv, kp_w, tps, !arch.no_jacobian);

      auto pair_loss =
          ad::add(ad::scale(rec, (S)tcfg.weights.lambda_rec),
                  ad::add(ad::scale(eq.position, (S)tcfg.weights.lambda_eq_p),
                          ad::scale(eq.jacobian, (S)tcfg.weights.lambda_eq_j)));
      total = ad::add(total, pair_loss);
      rec_sum += (double)rec->value[0];
      eqp_sum += (double)eq.position->value[0];
      eqj_sum += (double)eq.jacobian->value[0];
    }
    total = ad::scale(total, S(1) / (S)tcfg.batch_size);
    detail::check_finite_loss(total, step);
    opt.zero_grads();
    ad::backward(total);
    opt.step();
    logger.log(step, {{"total", (double)total->value[0]},
                      {"reconstruction", rec_sum / tcfg.batch_size},
                      {"equivariance_p", eqp_sum / tcfg.batch_size},
                      {"equivariance_j", eqj_sum / tcfg.batch_size}},
               result);
  }

  Config cfg;
  arch.to_config(cfg);
  tcfg.to_config(cfg);
  model.save(out_dir, cfg, opt.steps_taken());
  save_train_state(out_dir, opt, rng);
  result.checkpoint_dir = out_dir;
  return result;
}

namespace detail {

// Shared fusion forward for the two motion stages: window indices -> the
// motion net prediction plus the frozen-detector targets.
template <typename S>
struct MotionStep {
  fomm::Keypoints<S> pred;
  fomm::Keypoints<S> target;
  std::vector<Index> idx;
  Index ref_index = 0;
};

template <typename S>
MotionStep<S> motion_forward(const LoadedClip& clip, const FommModel<S>& fomm_model,
                             MotionModel<S>& motion_model, Rng& rng, Index window_T) {
  MotionStep<S> out;
  out.idx = sample_window(rng, (Index)clip.frames.size(), window_T);
  out.ref_index = out.idx.front();

  const auto& arch = motion_model.arch;
  pose::CameraModel cam = pose::square_camera(arch.fusion_size);

  pose::PoseSequence window_poses;
  window_poses.poses.resize(window_T, 6);
  for (Index i = 0; i < window_T; ++i)
    window_poses.poses.row(i) = clip.poses.poses.row(out.idx[(size_t)i]);
  auto vs = pose::render_pose_sequence(window_poses, cam);

  Tensor<float> feats({window_T, 4, 41});
  for (Index i = 0; i < window_T; ++i)
    for (Index w = 0; w < 4; ++w)
      for (Index f = 0; f < 41; ++f)
        feats(i, w, f) = clip.features.frames(out.idx[(size_t)i], w, f);
  Tensor<S> norm = motion_model.audio_stats.template normalize<S>(feats);

  auto audio_maps = motion_model.net.audio_encoder.forward(ad::constant(norm));
  Tensor<S> ref = clip.frames[(size_t)out.ref_index].template cast<S>();
  auto fusion = motion::build_fusion_tensor<S>(ref, vs, audio_maps, arch.fusion_size);
  out.pred = motion_model.net.forward(fusion);

  auto frames_b = ad::constant(stack_frames<S>(clip.frames, out.idx));
  out.target = fomm_model.detector.detect(frames_b);
  return out;
}

}  // namespace detail

// ---- N_M stage 1: match the frozen detector's keypoints ----

template <typename S>
TrainResult train_motion_stage1(const Dataset& data, const std::string& fomm_dir,
                                const TrainConfig& tcfg, const std::string& out_dir) {
  detail::check_nonempty(data);
  auto fomm_model = FommModel<S>::load(fomm_dir);
  fomm_model.reg.freeze();

  MotionModel<S> motion_model(fomm_model.arch, tcfg.seed);
  motion_model.audio_stats = data.audio_stats();
  Rng rng(tcfg.seed + 2);
  Adam<S> opt(motion_model.reg.params(), tcfg.lr, tcfg.weight_decay);
  if (!tcfg.resume_from.empty()) {
    auto prev = MotionModel<S>::load(tcfg.resume_from);
    motion_model.reg.from_archive(prev.reg.to_archive());
    motion_model.audio_stats = prev.audio_stats;
    load_train_state(tcfg.resume_from, opt, rng);
  }
  TrainLogger logger(tcfg.log_path);
  TrainResult result;

  for (long it = 0; it < tcfg.steps; ++it) {
    const long step = opt.steps_taken();
    const auto& clip = data.clips()[rng.below(data.size())];
    auto ms = detail::motion_forward(clip, fomm_model, motion_model, rng, tcfg.window_T);
    double lm = losses::lambda_m_schedule(tcfg.weights.lambda_m, step,
                                          tcfg.lambda_m_decay_steps);
    auto report = losses::stage1_loss(ms.pred, ms.target, tcfg.weights, lm);
    detail::check_finite_loss(report.total, step);
    opt.zero_grads();
    ad::backward(report.total);
    opt.step();
    logger.log(step, report.components, result);
  }

  Config cfg;
  motion_model.arch.to_config(cfg);
  tcfg.to_config(cfg);
  motion_model.save(out_dir, cfg, opt.steps_taken());
  save_train_state(out_dir, opt, rng);
  result.checkpoint_dir = out_dir;
  return result;
}

// ---- N_M stage 2: fine-tune through the frozen generator ----

template <typename S>
TrainResult train_motion_stage2(const Dataset& data, const std::string& fomm_dir,
                                const std::string& stage1_dir, const TrainConfig& tcfg,
                                const std::string& out_dir) {
  detail::check_nonempty(data);
  auto fomm_model = FommModel<S>::load(fomm_dir);
  fomm_model.reg.freeze();
  auto motion_model = MotionModel<S>::load(stage1_dir);

  Rng rng(tcfg.seed + 3);
  Adam<S> opt(motion_model.reg.params(), tcfg.lr, tcfg.weight_decay);
  if (!tcfg.resume_from.empty()) load_train_state(tcfg.resume_from, opt, rng);
  losses::PerceptualExtractor<S> ext;
  TrainLogger logger(tcfg.log_path);
  TrainResult result;

  const Index sz = motion_model.arch.image_size;
  for (long it = 0; it < tcfg.steps; ++it) {
    const long step = opt.steps_taken();
    const auto& clip = data.clips()[rng.below(data.size())];
    auto ms = detail::motion_forward(clip, fomm_model, motion_model, rng, tcfg.window_T);

    // render a random subset of window frames through the frozen generator
    auto ref_b = ad::constant(detail::stack_frames<S>(clip.frames, {ms.ref_index}));
    auto src_kp = fomm_model.detector.detect(ref_b);
    std::vector<ad::Var<S>> gens, gts;
    const Index K = std::min<Index>(tcfg.stage2_render_frames, tcfg.window_T);
    for (Index r = 0; r < K; ++r) {
      Index t = (Index)rng.below((uint64_t)tcfg.window_T);
      gens.push_back(
          fomm_model.generator.generate(ref_b, src_kp, 0, ms.pred, t));
      gts.push_back(ad::constant(
          detail::stack_frames<S>(clip.frames, {ms.idx[(size_t)t]})));
    }

    // equivariance on one random frame of the prediction
    Index t_eq = (Index)rng.below((uint64_t)tcfg.window_T);
    auto tps = fomm::TpsTransform::random(rng);
    auto frame_chw = ad::constant(
        clip.frames[(size_t)ms.idx[(size_t)t_eq]].template cast<S>());
    auto warped = fomm::warp(frame_chw, ad::constant(tps.warp_grid<S>(sz, sz)));
    auto kp_w = fomm_model.detector.detect(ad::reshape(warped, {1, 3, sz, sz}));
    auto kp_pred_t = detail::slice_keypoints(ms.pred, t_eq);
    auto eq =
        fomm::equivariance_losses(kp_pred_t, kp_w, tps, !motion_model.arch.no_jacobian);

    auto report = losses::stage2_loss(ms.pred.positions, ms.target.positions, gens,
                                      gts, ext, eq, tcfg.weights);
    detail::check_finite_loss(report.total, step);
    opt.zero_grads();
    ad::backward(report.total);
    opt.step();
    logger.log(step, report.components, result);
  }

  Config cfg;
  motion_model.arch.to_config(cfg);
  tcfg.to_config(cfg);
  motion_model.save(out_dir, cfg, opt.steps_taken());
  save_train_state(out_dir, opt, rng);
  result.checkpoint_dir = out_dir;
  return result;
}

// ---- N_H: alternating LSGAN + SSIM pose training ----

template <typename S>
TrainResult train_head(const Dataset& data, const nets::ArchConfig& arch,
                       const TrainConfig& tcfg, const std::string& out_dir) {
  detail::check_nonempty(data);
  std::vector<size_t> usable;
  for (size_t i = 0; i < data.size(); ++i) {
    if ((Index)data.clips()[i].frames.size() >= tcfg.window_T)
      usable.push_back(i);
    else
      std::fprintf(stderr,
                   "train_head: skipping clip '%s' shorter than window_T=%ld\n",
                   data.clips()[i].id.c_str(), (long)tcfg.window_T);
  }
  check_invalid(!usable.empty(), "train_head: no clip is as long as window_T");
  check_invalid(tcfg.window_T >= headpose::PatchGan1d<S>::kReceptiveField,
                "train_head: window_T shorter than the discriminator receptive field");

  HeadModel<S> model(arch, tcfg.seed);
  model.audio_stats = data.audio_stats();
  model.pose_stats = data.pose_stats();
  Rng rng(tcfg.seed + 4);
  Adam<S> opt_g(model.reg.params(), tcfg.lr, tcfg.weight_decay);
  Adam<S> opt_d(model.disc_reg.params(), tcfg.lr, tcfg.weight_decay);
  if (!tcfg.resume_from.empty()) {
    auto prev = HeadModel<S>::load(tcfg.resume_from);
    model.reg.from_archive(prev.reg.to_archive());
    model.disc_reg.from_archive(prev.disc_reg.to_archive());
    model.audio_stats = prev.audio_stats;
    model.pose_stats = prev.pose_stats;
    load_train_state(tcfg.resume_from, opt_g, rng);
    io::Archive<S> a = io::Archive<S>::load(
        (std::filesystem::path(tcfg.resume_from) / "optim_d.tgwa").string());
    opt_d.load_state(a, "adam.");
  }
  TrainLogger logger(tcfg.log_path);
  TrainResult result;
  const bool use_l1 = tcfg.pose_loss == "l1";

  for (long it = 0; it < tcfg.steps; ++it) {
    const long step = opt_g.steps_taken();
    const auto& clip = data.clips()[usable[rng.below(usable.size())]];
    const Index len = (Index)clip.frames.size();
    Index start = (Index)rng.below((uint64_t)(len - tcfg.window_T + 1));

    auto ref = ad::constant(detail::stack_frames<S>(clip.frames, {start}));
    Tensor<float> feats({tcfg.window_T, 4, 41});
    for (Index i = 0; i < tcfg.window_T; ++i)
      for (Index w = 0; w < 4; ++w)
        for (Index f = 0; f < 41; ++f)
          feats(i, w, f) = clip.features.frames(start + i, w, f);
    auto feats_norm = ad::constant(model.audio_stats.template normalize<S>(feats));

    pose::PoseSequence window_poses;
    window_poses.poses.resize(tcfg.window_T, 6);
    for (Index i = 0; i < tcfg.window_T; ++i)
      window_poses.poses.row(i) = clip.poses.poses.row(start + i);
    auto gt = ad::constant(model.pose_stats.template normalize<S>(window_poses));

    // generator update (discriminator weights frozen for this pass)
    model.disc_reg.freeze();
    auto pred = model.net.predict_normalized(ref, feats_norm);
    auto pose_term = use_l1 ? ad::l1_loss(pred, gt)
                            : losses::ssim_pose_loss(pred, gt);
    auto g_gan = headpose::lsgan_real_loss(model.disc.forward(pred));
    auto g_total = ad::add(pose_term, g_gan);
    detail::check_finite_loss(g_total, step);
    opt_g.zero_grads();
    ad::backward(g_total);
    opt_g.step();

    // discriminator update on real vs detached fake
    model.disc_reg.unfreeze();
    auto fake = ad::constant(pred->value);
    auto d_real = headpose::lsgan_real_loss(model.disc.forward(gt));
    auto d_fake = headpose::lsgan_fake_loss(model.disc.forward(fake));
    auto d_total = ad::add(d_real, d_fake);
    detail::check_finite_loss(d_total, step);
    opt_d.zero_grads();
    ad::backward(d_total);
    opt_d.step();

    logger.log(step, {{use_l1 ? "pose_l1" : "ssim", (double)pose_term->value[0]},
                      {"g_gan", (double)g_gan->value[0]},
                      {"d_real", (double)d_real->value[0]},
                      {"d_fake", (double)d_fake->value[0]},
                      {"total", (double)g_total->value[0]}},
               result);
  }

  Config cfg;
  arch.to_config(cfg);
  tcfg.to_config(cfg);
  model.save(out_dir, cfg, opt_g.steps_taken());
  save_train_state(out_dir, opt_g, rng);
  {
    io::Archive<S> a;
    opt_d.save_state(a, "adam.");
    a.save((std::filesystem::path(out_dir) / "optim_d.tgwa").string());
  }
  result.checkpoint_dir = out_dir;
  return result;
}

}  // namespace talkgen::train
