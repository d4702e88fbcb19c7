#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "talkgen/audio/features.hpp"
#include "talkgen/audio/wav.hpp"
#include "talkgen/core/rng.hpp"
#include "talkgen/core/serialize.hpp"

using namespace talkgen;
using namespace talkgen::audio;
namespace fs = std::filesystem;

namespace {

AudioClip sine_clip(double freq, double seconds, double amp = 0.95, int sr = 16000) {
  AudioClip c;
  c.sample_rate = sr;
  c.samples.resize((size_t)std::llround(seconds * sr));
  for (size_t i = 0; i < c.samples.size(); ++i)
    c.samples[i] = amp * std::sin(2.0 * M_PI * freq * (double)i / sr);
  return c;
}

fs::path temp_dir() {
  auto d = fs::temp_directory_path() / "talkgen_audio_test";
  fs::create_directories(d);
  return d;
}

// Minimal stereo PCM16 WAV for the rejection test.
void write_stereo_wav(const std::string& path, int sr, int nsamples) {
  std::ofstream os(path, std::ios::binary);
  auto u32 = [&](uint32_t v) { os.write((char*)&v, 4); };
  auto u16 = [&](uint16_t v) { os.write((char*)&v, 2); };
  uint32_t data_size = (uint32_t)nsamples * 4;
  os.write("RIFF", 4);
  u32(36 + data_size);
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  u32(16);
  u16(1);
  u16(2);  // stereo
  u32((uint32_t)sr);
  u32((uint32_t)sr * 4);
  u16(4);
  u16(16);
  os.write("data", 4);
  u32(data_size);
  for (int i = 0; i < nsamples * 2; ++i) {
    int16_t v = 0;
    os.write((char*)&v, 2);
  }
}

}  // namespace

TEST_CASE("sliding windows: counts, sizes and tail padding") {
  auto w1 = sliding_windows(sine_clip(440.0, 1.0));
  CHECK(w1.size() == 100);
  for (auto& w : w1) CHECK(w.size() == 400);

  auto w2 = sliding_windows(sine_clip(440.0, 0.04));
  CHECK(w2.size() == 4);
  // last window starts at 480 of 640 samples; the final 240 must be padding
  for (size_t i = 160; i < 400; ++i) CHECK(w2[3][i] == 0.0);

  AudioClip empty;
  CHECK_THROWS_AS((void)sliding_windows(empty), Error);
}

TEST_CASE("stereo wav is rejected") {
  auto p = (temp_dir() / "stereo.wav").string();
  write_stereo_wav(p, 16000, 1600);
  CHECK_THROWS_WITH_AS((void)read_wav(p), doctest::Contains("mono"), Error);
}

TEST_CASE("wav round trip and resampling") {
  auto clip = sine_clip(440.0, 0.5);
  auto p = (temp_dir() / "tone.wav").string();
  write_wav(p, clip);
  auto back = read_wav(p);
  REQUIRE(back.samples.size() == clip.samples.size());
  for (size_t i = 0; i < 100; ++i)
    CHECK(back.samples[i] == doctest::Approx(clip.samples[i]).epsilon(1e-3));

  auto hi = sine_clip(440.0, 0.5, 0.95, 48000);
  auto down = resample(hi, 16000);
  CHECK(down.sample_rate == 16000);
  CHECK(down.samples.size() == 8000);
}

TEST_CASE("window features: silence is unvoiced with floored filterbanks") {
  std::vector<double> zero(400, 0.0);
  auto f = window_features(zero, 16000);
  FrontendConfig cfg;
  for (int m = 0; m < kNumFbank; ++m)
    CHECK(f[(size_t)(kNumMfcc + m)] == doctest::Approx(std::log(cfg.log_floor)));
  CHECK(f[39] == 0.0);  // pitch
  CHECK(f[40] == 0.0);  // voicing
}

TEST_CASE("window features: 440 Hz tone is voiced at 440 +- 10 Hz") {
  auto clip = sine_clip(440.0, 0.1);
  std::vector<double> w(clip.samples.begin(), clip.samples.begin() + 400);
  auto f = window_features(w, 16000);
  CHECK(f[40] == 1.0);
  CHECK(std::abs(f[39] - 440.0) <= 10.0);
}

TEST_CASE("window features: seeded white noise is mostly unvoiced") {
  Rng rng(1234);
  int unvoiced = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> w(400);
    for (auto& v : w) v = rng.normal() * 0.25;
    auto f = window_features(w, 16000);
    if (f[40] == 0.0) ++unvoiced;
  }
  CHECK(unvoiced >= 90);
}

TEST_CASE("window features: NaN input rejected") {
  std::vector<double> w(400, 0.1);
  w[10] = std::nan("");
  CHECK_THROWS_AS((void)window_features(w, 16000), Error);
}

TEST_CASE("assemble frames: grouping and divisibility contract") {
  std::vector<AcousticWindow> ws(100);
  for (size_t i = 0; i < ws.size(); ++i) ws[i].fill((double)i);
  auto seq = assemble_frames(ws);
  CHECK(seq.frame_count() == 25);
  CHECK(seq.frames.shape() == Shape{25, 4, 41});
  CHECK(seq.frames(3, 2, 0) == doctest::Approx(14.0));  // window 4*3+2

  std::vector<AcousticWindow> one(4);
  CHECK(assemble_frames(one).frame_count() == 1);
  std::vector<AcousticWindow> five(5);
  CHECK_THROWS_AS((void)assemble_frames(five), Error);
}

TEST_CASE("frame-rate alignment for arbitrary durations") {
  Rng rng(5);
  for (int trial = 0; trial < 8; ++trial) {
    double seconds = 0.05 + rng.uniform() * 2.0;
    auto clip = sine_clip(200.0, seconds);
    auto seq = extract_features(clip);
    CHECK(seq.frame_count() == frame_count_for_duration(clip.duration()));
  }
}

TEST_CASE("determinism: identical clips give bit-identical features") {
  auto clip = sine_clip(313.0, 0.48, 0.8);
  auto a = extract_features(clip);
  auto b = extract_features(clip);
  REQUIRE(a.frames.size() == b.frames.size());
  for (Index i = 0; i < a.frames.size(); ++i) CHECK(a.frames[i] == b.frames[i]);
}

TEST_CASE("feature locality: a perturbed sample only touches covering frames") {
  auto clip = sine_clip(250.0, 1.0, 0.5);
  auto base = extract_features(clip);

  const size_t sample = 8000;  // 0.5 s in
  auto perturbed = clip;
  perturbed.samples[sample] += 0.05;
  auto mod = extract_features(perturbed);

  // windows covering the sample: k*160 <= sample < k*160 + 400
  std::vector<Index> frames_touched;
  for (Index k = 0; k < 100; ++k)
    if ((Index)sample >= k * 160 && (Index)sample < k * 160 + 400)
      frames_touched.push_back(k / 4);

  for (Index t = 0; t < base.frame_count(); ++t) {
    bool touched = false;
    for (Index ft : frames_touched) touched = touched || ft == t;
    bool differs = false;
    for (Index w = 0; w < 4; ++w)
      for (Index f = 0; f < 41; ++f)
        differs = differs || base.frames(t, w, f) != mod.frames(t, w, f);
    if (!touched) CHECK_FALSE(differs);
    if (t == frames_touched.front()) CHECK(differs);
  }
}

TEST_CASE("silence invariant over a whole clip") {
  AudioClip silence;
  silence.sample_rate = 16000;
  silence.samples.assign(16000, 0.0);
  auto seq = extract_features(silence);
  for (Index t = 0; t < seq.frame_count(); ++t)
    for (Index w = 0; w < 4; ++w) {
      CHECK(seq.frames(t, w, 39) == 0.0f);
      CHECK(seq.frames(t, w, 40) == 0.0f);
    }
}

TEST_CASE("feature files round trip and csv export") {
  auto seq = extract_features(sine_clip(440.0, 0.2));
  auto dir = temp_dir();
  save_features((dir / "f.tgtb").string(), seq);
  auto back = load_features((dir / "f.tgtb").string());
  CHECK(back.frames.shape() == seq.frames.shape());
  for (Index i = 0; i < seq.frames.size(); ++i) CHECK(back.frames[i] == seq.frames[i]);
  save_features_csv((dir / "f.csv").string(), seq);
  std::ifstream is(dir / "f.csv");
  std::string header;
  std::getline(is, header);
  CHECK(header.substr(0, 18) == "frame,window,mfcc0");
}
