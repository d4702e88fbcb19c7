// Deterministic test-fixture generator: synthetic talking-head clip (64
// frames at 64x64 with matching pose CSV and audio), WAV fixtures for the
// audio frontend plus their golden feature files, and the overfit training
// configs. Everything it writes is committed under tests/fixtures/.

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>

#include "talkgen/audio/features.hpp"
#include "talkgen/audio/wav.hpp"
#include "talkgen/core/image.hpp"
#include "talkgen/core/rng.hpp"
#include "talkgen/core/serialize.hpp"
#include "talkgen/pose/pose.hpp"
#include "talkgen/train/manifest.hpp"

using namespace talkgen;
namespace fs = std::filesystem;

namespace {

constexpr int kFrames = 64;
constexpr int kSize = 64;
constexpr double kFps = 25.0;

double smoothstep(double e0, double e1, double x) {
  double t = std::clamp((x - e0) / (e1 - e0), 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

// Syllable-like amplitude envelope in [0,1] shared by audio and mouth.
double speech_envelope(double t_sec) {
  double syl = 0.5 + 0.5 * std::sin(2.0 * M_PI * 2.2 * t_sec - 0.4);
  double gate = 0.5 + 0.5 * std::sin(2.0 * M_PI * 0.45 * t_sec + 0.8);
  double env = std::pow(syl, 1.6) * smoothstep(0.25, 0.6, gate);
  return std::clamp(env, 0.0, 1.0);
}

struct HeadParams {
  double cx, cy, rot, scale, mouth;
};

HeadParams head_at_frame(int t) {
  double ph = 2.0 * M_PI * (double)t / kFrames;
  HeadParams h;
  h.cx = 31.5 + 5.0 * std::sin(1.5 * ph + 0.3);
  h.cy = 29.5 + 3.0 * std::sin(2.3 * ph + 0.9);
  h.rot = 0.12 * std::sin(ph + 1.7);
  h.scale = 1.0 + 0.06 * std::sin(0.7 * ph + 2.4);
  h.mouth = speech_envelope((double)t / kFps);
  return h;
}

Tensor<float> render_frame(int t) {
  auto h = head_at_frame(t);
  Tensor<float> im({3, kSize, kSize});
  for (int y = 0; y < kSize; ++y)
    for (int x = 0; x < kSize; ++x) {
      // smooth background with two fixed soft blobs
      double fy = (double)y / (kSize - 1);
      double r = 0.36 - 0.20 * fy, g = 0.44 - 0.22 * fy, b = 0.60 - 0.28 * fy;
      double d1 = std::hypot(x - 10.0, y - 50.0);
      double d2 = std::hypot(x - 55.0, y - 12.0);
      double blob = 0.08 * std::exp(-d1 * d1 / 180.0) + 0.06 * std::exp(-d2 * d2 / 140.0);
      r += blob;
      g += blob * 0.8;
      b += blob * 0.5;

      // head-local coordinates (unrotate, unscale)
      double px = ((double)x - h.cx), py = ((double)y - h.cy);
      double ca = std::cos(-h.rot), sa = std::sin(-h.rot);
      double lx = (ca * px - sa * py) / h.scale;
      double ly = (sa * px + ca * py) / h.scale;

      // face ellipse
      double face = lx * lx / (13.0 * 13.0) + ly * ly / (16.0 * 16.0);
      double face_a = smoothstep(1.12, 0.95, face);
      if (face_a > 0) {
        double shade = 1.0 - 0.15 * (ly + 16.0) / 32.0;
        double fr = 0.86 * shade, fg = 0.66 * shade, fb = 0.54 * shade;
        r = r * (1 - face_a) + fr * face_a;
        g = g * (1 - face_a) + fg * face_a;
        b = b * (1 - face_a) + fb * face_a;
      }
      // hair cap over the upper face
      double hair = lx * lx / (13.8 * 13.8) + (ly + 6.0) * (ly + 6.0) / (13.0 * 13.0);
      double hair_a = (ly < -7.0) ? smoothstep(1.1, 0.92, hair) : 0.0;
      if (hair_a > 0) {
        r = r * (1 - hair_a) + 0.22 * hair_a;
        g = g * (1 - hair_a) + 0.15 * hair_a;
        b = b * (1 - hair_a) + 0.10 * hair_a;
      }
      // eyes
      for (double ex : {-5.0, 5.0}) {
        double de = std::hypot(lx - ex, ly + 3.5) / 1.7;
        double eye_a = smoothstep(1.1, 0.8, de);
        if (eye_a > 0) {
          r = r * (1 - eye_a) + 0.12 * eye_a;
          g = g * (1 - eye_a) + 0.10 * eye_a;
          b = b * (1 - eye_a) + 0.12 * eye_a;
        }
      }
      // mouth opens with the speech envelope
      double mh = 1.0 + 2.4 * h.mouth;
      double mouth = lx * lx / (4.5 * 4.5) + (ly - 8.0) * (ly - 8.0) / (mh * mh);
      double mouth_a = smoothstep(1.15, 0.85, mouth);
      if (mouth_a > 0) {
        r = r * (1 - mouth_a) + 0.45 * mouth_a;
        g = g * (1 - mouth_a) + 0.20 * mouth_a;
        b = b * (1 - mouth_a) + 0.22 * mouth_a;
      }

      im(0, y, x) = (float)std::clamp(r, 0.0, 1.0);
      im(1, y, x) = (float)std::clamp(g, 0.0, 1.0);
      im(2, y, x) = (float)std::clamp(b, 0.0, 1.0);
    }
  return im;
}

pose::PoseSequence clip_poses() {
  pose::PoseSequence seq;
  seq.poses.resize(kFrames, 6);
  for (int t = 0; t < kFrames; ++t) {
    auto h = head_at_frame(t);
    double ph = 2.0 * M_PI * (double)t / kFrames;
    seq.poses(t, 0) = 0.05 * std::sin(1.9 * ph + 0.2);  // rx
    seq.poses(t, 1) = 0.06 * std::sin(1.3 * ph + 1.1);  // ry
    seq.poses(t, 2) = h.rot;                            // rz
    seq.poses(t, 3) = (h.cx - 31.5) / 32.0;             // tx
    seq.poses(t, 4) = (h.cy - 31.5) / 32.0;             // ty
    seq.poses(t, 5) = (h.scale - 1.0);                  // tz
  }
  return seq;
}

audio::AudioClip speech_like_audio(double seconds, double f0_base, uint64_t seed) {
  audio::AudioClip clip;
  clip.sample_rate = 16000;
  size_t n = (size_t)std::llround(seconds * clip.sample_rate);
  clip.samples.resize(n);
  Rng rng(seed);
  double phase = 0.0;
  for (size_t i = 0; i < n; ++i) {
    double t = (double)i / clip.sample_rate;
    double env = speech_envelope(t);
    double f0 = f0_base + 24.0 * std::sin(2.0 * M_PI * 0.6 * t);
    phase += 2.0 * M_PI * f0 / clip.sample_rate;
    double v = 0.0;
    for (int harm = 1; harm <= 8; ++harm)
      v += std::sin(phase * harm) / (double)harm;
    v = 0.35 * env * v + 0.008 * rng.normal();
    clip.samples[i] = std::clamp(v, -0.99, 0.99);
  }
  return clip;
}

void write_golden(const fs::path& wav_path, const fs::path& golden_path) {
  auto clip = audio::load_audio_16k(wav_path.string());
  auto seq = audio::extract_features(clip);
  audio::save_features(golden_path.string(), seq);
}

void write_configs(const fs::path& dir) {
  fs::create_directories(dir);
  const std::string arch64 = R"([arch]
image_size = 64
fusion_size = 64
num_keypoints = 10
embed_dim = 256
lstm_hidden = 128
encoder_width = 8
hourglass3d_base = 16
hourglass3d_levels = 3
detector_base = 24
detector_levels = 3
dense_motion_base = 24
dense_motion_levels = 3
generator_base = 32
generator_res_blocks = 6
kp_temperature = 0.1
kp_gaussian_variance = 0.01
)";
  io::write_text_file((dir / "overfit_fomm.ini").string(), arch64 + R"(
[train]
steps = 2000
lr = 0.001
weight_decay = 2e-06
batch_size = 2
seed = 7
)");
  io::write_text_file((dir / "overfit_motion1.ini").string(), arch64 + R"(
[train]
steps = 500
lr = 0.001
weight_decay = 2e-06
window_T = 32
lambda_m_decay_steps = 200
seed = 11
)");
  io::write_text_file((dir / "overfit_motion2.ini").string(), arch64 + R"(
[train]
steps = 300
lr = 0.0005
weight_decay = 2e-06
window_T = 32
stage2_render_frames = 4
seed = 13
)");
  io::write_text_file((dir / "overfit_head.ini").string(), arch64 + R"(
[train]
steps = 500
lr = 0.001
weight_decay = 2e-06
window_T = 64
seed = 17
)");
  // miniature architecture for fast CLI and smoke tests
  io::write_text_file((dir / "tiny.ini").string(), R"([arch]
image_size = 16
fusion_size = 16
num_keypoints = 4
embed_dim = 24
lstm_hidden = 16
encoder_width = 4
hourglass3d_base = 4
hourglass3d_levels = 2
detector_base = 8
detector_levels = 2
dense_motion_base = 8
dense_motion_levels = 2
generator_base = 8
generator_res_blocks = 2
kp_temperature = 0.1
kp_gaussian_variance = 0.01

[train]
steps = 4
lr = 0.001
weight_decay = 2e-06
batch_size = 1
window_T = 8
lambda_m_decay_steps = 4
stage2_render_frames = 2
seed = 5
)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"write the committed test fixtures"};
  std::string out_dir = "tests/fixtures";
  app.add_option("--out", out_dir, "fixture root (default tests/fixtures)");
  CLI11_PARSE(app, argc, argv);

  fs::path root(out_dir);
  fs::create_directories(root / "wav");
  fs::create_directories(root / "golden");
  fs::create_directories(root / "clip" / "frames");
  fs::create_directories(root / "pipeline");

  // audio frontend fixtures + goldens
  {
    audio::AudioClip silence;
    silence.sample_rate = 16000;
    silence.samples.assign(16000, 0.0);
    audio::write_wav((root / "wav" / "silence.wav").string(), silence);

    audio::AudioClip tone;
    tone.sample_rate = 16000;
    tone.samples.resize(16000);
    for (size_t i = 0; i < tone.samples.size(); ++i)
      tone.samples[i] = 0.95 * std::sin(2.0 * M_PI * 440.0 * (double)i / 16000.0);
    audio::write_wav((root / "wav" / "tone440.wav").string(), tone);

    audio::write_wav((root / "wav" / "speech.wav").string(),
                     speech_like_audio(1.2, 120.0, 99));

    write_golden(root / "wav" / "silence.wav", root / "golden" / "silence.tgtb");
    write_golden(root / "wav" / "tone440.wav", root / "golden" / "tone440.tgtb");
    write_golden(root / "wav" / "speech.wav", root / "golden" / "speech.tgtb");
  }

  // the overfit clip: frames, poses, clip audio, manifest
  {
    for (int t = 0; t < kFrames; ++t) {
      char name[32];
      std::snprintf(name, sizeof(name), "%06d.png", t);
      img::save_image((root / "clip" / "frames" / name).string(), render_frame(t));
    }
    pose::write_pose_csv((root / "clip" / "poses.csv").string(), clip_poses());
    audio::write_wav((root / "clip" / "audio.wav").string(),
                     speech_like_audio((double)kFrames / kFps, 115.0, 41));

    train::DatasetManifest m;
    train::ClipEntry e;
    e.clip_id = "overfit64";
    e.frames_dir = "clip/frames";
    e.audio_path = "clip/audio.wav";
    e.pose_csv = "clip/poses.csv";
    e.fps = 25.0;
    e.face_box = {10, 5, 54, 56};
    m.entries.push_back(e);
    m.split = "train";
    m.save((root / "manifest.json").string());
  }

  // pipeline fixtures: reference image + exactly 2 s of audio (50 frames)
  {
    img::save_image((root / "pipeline" / "ref.png").string(), render_frame(0));
    audio::write_wav((root / "pipeline" / "audio2s.wav").string(),
                     speech_like_audio(2.0, 118.0, 77));
  }

  write_configs(root / "configs");
  std::printf("fixtures written to %s\n", root.string().c_str());
  return 0;
}
