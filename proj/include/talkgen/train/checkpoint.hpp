#pragma once

#include <json.hpp>

#include <filesystem>
#include <fstream>

#include "talkgen/nets/head_pose.hpp"
#include "talkgen/nets/motion_net.hpp"
#include "talkgen/train/optimizer.hpp"

namespace talkgen::train {

// Checkpoint directory layout:
//   weights.tgwa   model parameters + "stats.*" normalization tensors
//   optim.tgwa     optimizer moments, RNG state, step counter (optional)
//   config.ini     full configuration including [arch]
//   meta.json      kind, format version, arch hash, step
//
// The [arch] section hash is the cross-checkpoint compatibility key checked
// by the pipeline before chaining models.

constexpr int kCheckpointVersion = 1;

struct CheckpointInfo {
  std::string kind;
  uint64_t arch_hash = 0;
  long step = 0;
  Config config;
};

inline void write_checkpoint_meta(const std::string& dir, const std::string& kind,
                                  const Config& cfg, long step) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  cfg.save((fs::path(dir) / "config.ini").string());
  nlohmann::json meta;
  meta["kind"] = kind;
  meta["version"] = kCheckpointVersion;
  meta["arch_hash"] = cfg.section_hash("arch");
  meta["step"] = step;
  std::ofstream os(fs::path(dir) / "meta.json");
  if (!os) throw_io("cannot write checkpoint meta: " + dir);
  os << meta.dump(2) << "\n";
}

inline CheckpointInfo read_checkpoint_info(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream is(fs::path(dir) / "meta.json");
  if (!is) throw_io("not a checkpoint directory (missing meta.json): " + dir);
  nlohmann::json meta;
  is >> meta;
  CheckpointInfo info;
  info.kind = meta.at("kind").get<std::string>();
  if (meta.at("version").get<int>() != kCheckpointVersion)
    throw Error(ErrorKind::incompatible_checkpoint,
                "unsupported checkpoint version in " + dir);
  info.arch_hash = meta.at("arch_hash").get<uint64_t>();
  info.step = meta.at("step").get<long>();
  info.config = Config::parse_file((fs::path(dir) / "config.ini").string());
  return info;
}

inline void expect_checkpoint_kind(const CheckpointInfo& info, const std::string& kind,
                                   const std::string& dir) {
  if (info.kind != kind)
    throw Error(ErrorKind::incompatible_checkpoint,
                dir + " holds a '" + info.kind + "' checkpoint, expected '" + kind +
                    "'");
}

// ---- model bundles ----

template <typename S>
struct FommModel {
  nets::ParamRegistry<S> reg;
  fomm::KeypointDetector<S> detector;
  fomm::OcclusionAwareGenerator<S> generator;
  nets::ArchConfig arch;

  FommModel(const nets::ArchConfig& a, uint64_t init_seed) : arch(a) {
    Rng rng(init_seed);
    detector = fomm::KeypointDetector<S>(reg, rng, "nd", arch);
    generator = fomm::OcclusionAwareGenerator<S>(reg, rng, "ni", arch);
  }

  void save(const std::string& dir, const Config& cfg, long step) const {
    write_checkpoint_meta(dir, "fomm", cfg, step);
    reg.to_archive().save(
        (std::filesystem::path(dir) / "weights.tgwa").string());
  }

  static FommModel load(const std::string& dir) {
    auto info = read_checkpoint_info(dir);
    expect_checkpoint_kind(info, "fomm", dir);
    FommModel m(nets::ArchConfig::from_config(info.config), 0);
    m.reg.from_archive(io::Archive<S>::load(
        (std::filesystem::path(dir) / "weights.tgwa").string()));
    return m;
  }
};

template <typename S>
struct MotionModel {
  nets::ParamRegistry<S> reg;
  motion::MotionFieldGenerator<S> net;
  headpose::AudioStats audio_stats;
  nets::ArchConfig arch;

  MotionModel(const nets::ArchConfig& a, uint64_t init_seed) : arch(a) {
    Rng rng(init_seed);
    net = motion::MotionFieldGenerator<S>(reg, rng, "nm", arch);
  }

  void save(const std::string& dir, const Config& cfg, long step) const {
    write_checkpoint_meta(dir, "motion", cfg, step);
    auto a = reg.to_archive();
    a.put("stats.audio", audio_stats.template serialize<S>());
    a.save((std::filesystem::path(dir) / "weights.tgwa").string());
  }

  static MotionModel load(const std::string& dir) {
    auto info = read_checkpoint_info(dir);
    expect_checkpoint_kind(info, "motion", dir);
    MotionModel m(nets::ArchConfig::from_config(info.config), 0);
    auto a = io::Archive<S>::load(
        (std::filesystem::path(dir) / "weights.tgwa").string());
    m.reg.from_archive(a);
    m.audio_stats = headpose::AudioStats::deserialize(a.get("stats.audio"));
    return m;
  }
};

template <typename S>
struct HeadModel {
  nets::ParamRegistry<S> reg;       // predictor
  nets::ParamRegistry<S> disc_reg;  // discriminator (training only)
  headpose::HeadPosePredictor<S> net;
  headpose::PatchGan1d<S> disc;
  headpose::AudioStats audio_stats;
  headpose::PoseStats pose_stats;
  nets::ArchConfig arch;

  HeadModel(const nets::ArchConfig& a, uint64_t init_seed) : arch(a) {
    Rng rng(init_seed);
    net = headpose::HeadPosePredictor<S>(reg, rng, "nh", arch);
    disc = headpose::PatchGan1d<S>(disc_reg, rng, "d", 64);
  }

  void save(const std::string& dir, const Config& cfg, long step) const {
    write_checkpoint_meta(dir, "head", cfg, step);
    auto a = reg.to_archive();
    a.put("stats.audio", audio_stats.template serialize<S>());
    a.put("stats.pose", pose_stats.template serialize<S>());
    a.save((std::filesystem::path(dir) / "weights.tgwa").string());
    disc_reg.to_archive().save((std::filesystem::path(dir) / "disc.tgwa").string());
  }

  static HeadModel load(const std::string& dir) {
    auto info = read_checkpoint_info(dir);
    expect_checkpoint_kind(info, "head", dir);
    HeadModel m(nets::ArchConfig::from_config(info.config), 0);
    auto a = io::Archive<S>::load(
        (std::filesystem::path(dir) / "weights.tgwa").string());
    m.reg.from_archive(a);
    m.audio_stats = headpose::AudioStats::deserialize(a.get("stats.audio"));
    m.pose_stats = headpose::PoseStats::deserialize(a.get("stats.pose"));
    auto disc_path = std::filesystem::path(dir) / "disc.tgwa";
    if (std::filesystem::exists(disc_path))
      m.disc_reg.from_archive(io::Archive<S>::load(disc_path.string()));
    return m;
  }
};

// Optimizer + sampler state for bit-exact resumption.
template <typename S>
void save_train_state(const std::string& dir, const Adam<S>& opt, const Rng& rng) {
  io::Archive<S> a;
  opt.save_state(a, "adam.");
  a.save((std::filesystem::path(dir) / "optim.tgwa").string());
  auto st = rng.serialize();
  Tensor<uint64_t> r({6});
  for (int i = 0; i < 6; ++i) r[i] = st[(size_t)i];
  io::Archive<uint64_t> b;
  b.put("rng", r);
  b.save((std::filesystem::path(dir) / "rng.tgwa").string());
}

template <typename S>
bool load_train_state(const std::string& dir, Adam<S>& opt, Rng& rng) {
  namespace fs = std::filesystem;
  auto opt_path = fs::path(dir) / "optim.tgwa";
  auto rng_path = fs::path(dir) / "rng.tgwa";
  if (!fs::exists(opt_path) || !fs::exists(rng_path)) return false;
  auto a = io::Archive<S>::load(opt_path.string());
  opt.load_state(a, "adam.");
  auto b = io::Archive<uint64_t>::load(rng_path.string());
  const auto& r = b.get("rng");
  std::array<uint64_t, 6> st{};
  for (int i = 0; i < 6; ++i) st[(size_t)i] = r[i];
  rng.deserialize(st);
  return true;
}

}  // namespace talkgen::train
