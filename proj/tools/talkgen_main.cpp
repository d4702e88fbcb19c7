// talkgen: audio-driven talking-head generation CLI.
//
// Subcommands cover the full pipeline (generate) plus every stage in
// isolation, the four training procedures, evaluation and plotting.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

#include "talkgen/pipeline/pipeline.hpp"

using namespace talkgen;
namespace fs = std::filesystem;

namespace {

struct ConfigArgs {
  std::string config_path;
  std::vector<std::string> overrides;

  train::Config load() const {
    train::Config cfg;
    if (!config_path.empty()) cfg = train::Config::parse_file(config_path);
    for (const auto& o : overrides) cfg.set_override(o);
    return cfg;
  }
};

void add_config_args(CLI::App* cmd, ConfigArgs& args) {
  cmd->add_option("--config", args.config_path,
                  "configuration file (key = value with [sections])");
  cmd->add_option("--set", args.overrides, "override, e.g. --set train.steps=100")
      ->take_all();
}

int run_evaluate(const std::string& gen_dir, const std::string& gt_dir,
                 bool with_fid, const std::string& pred_poses,
                 const std::string& gt_poses, const std::string& out_json,
                 const std::string& out_csv) {
  auto gen = pipeline::read_frames_dir(gen_dir);
  auto gt = pipeline::read_frames_dir(gt_dir);
  check_invalid(gen.size() == gt.size(),
                "evaluate: generated and ground-truth frame counts differ");
  metrics::EvalReport report;
  double psnr_sum = 0, ssim_sum = 0;
  for (size_t i = 0; i < gen.size(); ++i) {
    double p = metrics::psnr(gen[i], gt[i]);
    double s = metrics::image_ssim(gen[i], gt[i]);
    report.per_frame.emplace_back(p, s);
    psnr_sum += p;
    ssim_sum += s;
  }
  report.psnr_db = psnr_sum / (double)gen.size();
  report.ssim = ssim_sum / (double)gen.size();
  if (with_fid)
    report.fid = metrics::fid(gen, gt, metrics::seeded_random_embedder());
  if (!pred_poses.empty() && !gt_poses.empty()) {
    auto pp = pose::read_pose_csv(pred_poses);
    auto gp = pose::read_pose_csv(gt_poses);
    report.he = metrics::head_motion_error(pp, gp);
  }

  nlohmann::json j;
  j["psnr_db"] = report.psnr_db;
  j["ssim"] = report.ssim;
  j["frames"] = gen.size();
  if (report.fid) {
    j["fid"] = *report.fid;
    j["fid_embedder"] = "seeded-random-conv";
  }
  if (report.he) j["he"] = *report.he;
  std::string text = j.dump(2) + "\n";
  std::cout << text;
  if (!out_json.empty()) io::write_text_file(out_json, text);
  if (!out_csv.empty()) {
    std::string csv = "frame,psnr_db,ssim\n";
    for (size_t i = 0; i < report.per_frame.size(); ++i)
      csv += std::to_string(i) + "," + std::to_string(report.per_frame[i].first) +
             "," + std::to_string(report.per_frame[i].second) + "\n";
    io::write_text_file(out_csv, csv);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"audio-driven talking-head generation"};
  app.require_subcommand(1);

  // ---- generate ----
  pipeline::GenerateOptions gen_opt;
  std::string gen_pose_source_kind = "model", gen_kp_source_kind = "model";
  auto* gen = app.add_subcommand("generate", "full pipeline: audio + image -> video");
  gen->add_option("--image", gen_opt.image_path, "reference image (PNG)")->required();
  gen->add_option("--audio", gen_opt.audio_path, "driving audio (WAV)")->required();
  gen->add_option("--head", gen_opt.head_ckpt, "head-pose checkpoint dir");
  gen->add_option("--motion", gen_opt.motion_ckpt, "motion-field checkpoint dir")
      ->required();
  gen->add_option("--fomm", gen_opt.fomm_ckpt, "detector/generator checkpoint dir")
      ->required();
  gen->add_option("--out", gen_opt.out_dir, "output directory")->required();
  gen->add_option("--pose-source", gen_pose_source_kind,
                  "'model' or 'csv' (with --poses)");
  std::string gen_poses_file, gen_kp_file;
  gen->add_option("--poses", gen_poses_file, "pose CSV for --pose-source csv");
  gen->add_option("--keypoint-source", gen_kp_source_kind,
                  "'model' or 'file' (with --keypoints)");
  gen->add_option("--keypoints", gen_kp_file,
                  "keypoint tensor for --keypoint-source file");
  gen->add_flag("--dump-intermediates", gen_opt.dump_intermediates,
                "also write features, pose boxes and the raw video tensor");
  gen->add_option("--seed", gen_opt.seed, "seed (inference is deterministic)");

  // ---- stage subcommands ----
  std::string sf_audio, sf_out, sf_csv;
  auto* sf = app.add_subcommand("extract-features", "WAV -> acoustic feature tensor");
  sf->add_option("--audio", sf_audio)->required();
  sf->add_option("--out", sf_out)->required();
  sf->add_option("--csv", sf_csv, "also write a CSV view");

  std::string pp_head, pp_image, pp_audio, pp_out;
  auto* pp = app.add_subcommand("predict-pose", "audio + image -> pose CSV");
  pp->add_option("--head", pp_head)->required();
  pp->add_option("--image", pp_image)->required();
  pp->add_option("--audio", pp_audio)->required();
  pp->add_option("--out", pp_out)->required();

  std::string rp_poses, rp_out;
  long rp_size = 64;
  auto* rp = app.add_subcommand("render-pose", "pose CSV -> binary box PNGs");
  rp->add_option("--poses", rp_poses)->required();
  rp->add_option("--out", rp_out)->required();
  rp->add_option("--size", rp_size, "canvas size (default 64)");

  std::string pk_motion, pk_image, pk_audio, pk_poses, pk_out;
  auto* pk = app.add_subcommand("predict-keypoints",
                                "audio + image + poses -> keypoint tensor");
  pk->add_option("--motion", pk_motion)->required();
  pk->add_option("--image", pk_image)->required();
  pk->add_option("--audio", pk_audio)->required();
  pk->add_option("--poses", pk_poses)->required();
  pk->add_option("--out", pk_out)->required();

  std::string rv_fomm, rv_image, rv_kp, rv_out, rv_container;
  auto* rv = app.add_subcommand("render-video", "keypoints + image -> frames");
  rv->add_option("--fomm", rv_fomm)->required();
  rv->add_option("--image", rv_image)->required();
  rv->add_option("--keypoints", rv_kp)->required();
  rv->add_option("--out", rv_out)->required();
  rv->add_option("--container", rv_container, "also write a raw video tensor");

  // ---- training ----
  struct TrainArgs {
    std::string manifest, out, resume;
    ConfigArgs cfg;
    long steps = -1;
    long seed = -1;
    bool no_set = false, no_jacobian = false;
    std::string loss;
  };
  auto add_train_args = [&](CLI::App* cmd, TrainArgs& a, bool head_flags) {
    cmd->add_option("--manifest", a.manifest, "dataset manifest (JSON)")->required();
    cmd->add_option("--out", a.out, "checkpoint output directory")->required();
    add_config_args(cmd, a.cfg);
    cmd->add_option("--steps", a.steps, "override train.steps");
    cmd->add_option("--seed", a.seed, "override train.seed");
    cmd->add_option("--resume", a.resume, "resume from checkpoint dir");
    if (head_flags) {
      cmd->add_flag("--no-set", a.no_set,
                    "ablation: zero the spatial embedding transition");
      cmd->add_option("--loss", a.loss, "pose objective: ssim (default) or l1");
    } else {
      cmd->add_flag("--no-jacobian", a.no_jacobian,
                    "ablation: pin Jacobians to identity");
    }
  };
  TrainArgs tf, th, t1, t2;
  auto* ctf = app.add_subcommand("train-fomm", "pretrain detector + generator");
  add_train_args(ctf, tf, false);
  auto* cth = app.add_subcommand("train-head", "train the head-pose predictor");
  add_train_args(cth, th, true);
  auto* ct1 =
      app.add_subcommand("train-motion1", "motion net stage 1 (detector guidance)");
  add_train_args(ct1, t1, false);
  std::string t1_fomm;
  ct1->add_option("--fomm", t1_fomm, "frozen fomm checkpoint")->required();
  auto* ct2 =
      app.add_subcommand("train-motion2", "motion net stage 2 (generator fine-tune)");
  add_train_args(ct2, t2, false);
  std::string t2_fomm, t2_stage1;
  ct2->add_option("--fomm", t2_fomm, "frozen fomm checkpoint")->required();
  ct2->add_option("--stage1", t2_stage1, "stage-1 motion checkpoint")->required();

  // ---- evaluation / plotting ----
  std::string ev_gen, ev_gt, ev_json, ev_csv, ev_pred_poses, ev_gt_poses;
  bool ev_fid = false;
  auto* ev = app.add_subcommand("evaluate", "PSNR / SSIM / FID / pose error report");
  ev->add_option("--gen", ev_gen, "generated frames dir")->required();
  ev->add_option("--gt", ev_gt, "ground-truth frames dir")->required();
  ev->add_flag("--fid", ev_fid, "include FID (seeded-random embedder)");
  ev->add_option("--pred-poses", ev_pred_poses);
  ev->add_option("--gt-poses", ev_gt_poses);
  ev->add_option("--json", ev_json, "write the JSON report here");
  ev->add_option("--csv", ev_csv, "write the per-frame CSV here");

  std::string ph_pred, ph_gt, ph_out;
  auto* ph = app.add_subcommand("plot-headpose", "PCA trajectory comparison plot");
  ph->add_option("--pred", ph_pred)->required();
  ph->add_option("--gt", ph_gt)->required();
  ph->add_option("--out", ph_out)->required();

  CLI11_PARSE(app, argc, argv);

  auto fill_train = [](TrainArgs& a) {
    auto cfg = a.cfg.load();
    auto tcfg = train::TrainConfig::from_config(cfg);
    if (a.steps >= 0) tcfg.steps = a.steps;
    if (a.seed >= 0) tcfg.seed = (uint64_t)a.seed;
    tcfg.resume_from = a.resume;
    if (!a.loss.empty()) {
      check_invalid(a.loss == "ssim" || a.loss == "l1", "--loss must be ssim or l1");
      tcfg.pose_loss = a.loss;
    }
    if (tcfg.log_path.empty())
      tcfg.log_path = (fs::path(a.out) / "train_log.csv").string();
    fs::create_directories(a.out);
    return std::pair{cfg, tcfg};
  };

  std::string stage = app.get_subcommands().empty()
                          ? "talkgen"
                          : app.get_subcommands().front()->get_name();
  try {
    if (*gen) {
      check_invalid(gen_pose_source_kind == "model" || gen_pose_source_kind == "csv",
                    "--pose-source must be 'model' or 'csv'");
      check_invalid(gen_kp_source_kind == "model" || gen_kp_source_kind == "file",
                    "--keypoint-source must be 'model' or 'file'");
      if (gen_pose_source_kind == "csv") {
        check_invalid(!gen_poses_file.empty(), "--pose-source csv requires --poses");
        gen_opt.pose_source = gen_poses_file;
      } else {
        check_invalid(!gen_opt.head_ckpt.empty(),
                      "generate needs --head unless --pose-source csv");
      }
      if (gen_kp_source_kind == "file") {
        check_invalid(!gen_kp_file.empty(),
                      "--keypoint-source file requires --keypoints");
        gen_opt.keypoint_source = gen_kp_file;
      }
      pipeline::generate(gen_opt);
    } else if (*sf) {
      pipeline::extract_features_cmd(sf_audio, sf_out, sf_csv);
    } else if (*pp) {
      pipeline::predict_pose_cmd(pp_head, pp_image, pp_audio, pp_out);
    } else if (*rp) {
      pipeline::render_pose_cmd(rp_poses, rp_out, rp_size);
    } else if (*pk) {
      pipeline::predict_keypoints_cmd(pk_motion, pk_image, pk_audio, pk_poses, pk_out);
    } else if (*rv) {
      pipeline::render_video_cmd(rv_fomm, rv_image, rv_kp, rv_out, rv_container);
    } else if (*ctf) {
      auto [cfg, tcfg] = fill_train(tf);
      auto arch = nets::ArchConfig::from_config(cfg);
      if (tf.no_jacobian) arch.no_jacobian = true;
      auto data = train::Dataset::load(train::DatasetManifest::load(tf.manifest),
                                       arch.image_size);
      train::train_fomm<float>(data, arch, tcfg, tf.out);
    } else if (*cth) {
      auto [cfg, tcfg] = fill_train(th);
      auto arch = nets::ArchConfig::from_config(cfg);
      if (th.no_set) arch.no_set = true;
      auto data = train::Dataset::load(train::DatasetManifest::load(th.manifest),
                                       arch.image_size);
      train::train_head<float>(data, arch, tcfg, th.out);
    } else if (*ct1) {
      auto [cfg, tcfg] = fill_train(t1);
      auto info = train::read_checkpoint_info(t1_fomm);
      auto data = train::Dataset::load(
          train::DatasetManifest::load(t1.manifest),
          nets::ArchConfig::from_config(info.config).image_size);
      train::train_motion_stage1<float>(data, t1_fomm, tcfg, t1.out);
    } else if (*ct2) {
      auto [cfg, tcfg] = fill_train(t2);
      auto info = train::read_checkpoint_info(t2_fomm);
      auto data = train::Dataset::load(
          train::DatasetManifest::load(t2.manifest),
          nets::ArchConfig::from_config(info.config).image_size);
      train::train_motion_stage2<float>(data, t2_fomm, t2_stage1, tcfg, t2.out);
    } else if (*ev) {
      return run_evaluate(ev_gen, ev_gt, ev_fid, ev_pred_poses, ev_gt_poses, ev_json,
                          ev_csv);
    } else if (*ph) {
      auto pred = pose::read_pose_csv(ph_pred);
      auto gt = pose::read_pose_csv(ph_gt);
      metrics::pca_trajectory_plot(ph_out, {gt, pred}, {"ground-truth", "predicted"},
                                   gt);
    }
  } catch (const Error& e) {
    std::cerr << stage << ": error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << stage << ": error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
