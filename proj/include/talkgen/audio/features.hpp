#pragma once

#include <array>
#include <string>
#include <vector>

#include "talkgen/audio/wav.hpp"
#include "talkgen/core/tensor.hpp"

namespace talkgen::audio {

// Per sliding window: 13 MFCC, 26 log mel-filterbank energies, pitch in Hz
// (0 when unvoiced) and a {0,1} voicing flag, in that order.
constexpr int kNumMfcc = 13;
constexpr int kNumFbank = 26;
constexpr int kWindowFeatureDim = kNumMfcc + kNumFbank + 2;  // 41
constexpr int kWindowsPerFrame = 4;
constexpr int kVideoFps = 25;

struct FrontendConfig {
  int sample_rate = 16000;
  double window_sec = 0.025;
  double step_sec = 0.010;
  int n_fft = 512;
  double preemphasis = 0.97;
  double log_floor = 1e-10;
  double pitch_min_hz = 60.0;
  double pitch_max_hz = 500.0;
  double voicing_threshold = 0.3;
};

using AcousticWindow = std::array<double, kWindowFeatureDim>;

// Acoustic feature sequence aligned to 25 fps video: frames [T, 4, 41].
struct AcousticSequence {
  Tensor<float> frames;
  int fps = kVideoFps;

  Index frame_count() const { return frames.rank() == 3 ? frames.dim(0) : 0; }
};

// Number of video-aligned frames for a clip duration (round half away from
// zero), and the window count 4x that.
Index frame_count_for_duration(double seconds);

// Cuts the clip into 25 ms windows at a 10 ms step. The window count is
// always 4 * frame_count_for_duration(clip); the tail is zero padded.
std::vector<std::vector<double>> sliding_windows(const AudioClip& clip,
                                                 const FrontendConfig& cfg = {});

// 41 features from one raw window.
AcousticWindow window_features(const std::vector<double>& window, int sample_rate,
                               const FrontendConfig& cfg = {});

// Groups 4 successive windows per video frame. Window count must be
// divisible by 4.
AcousticSequence assemble_frames(const std::vector<AcousticWindow>& windows);

// sliding_windows + window_features + assemble_frames.
AcousticSequence extract_features(const AudioClip& clip, const FrontendConfig& cfg = {});

void save_features(const std::string& path, const AcousticSequence& seq);
AcousticSequence load_features(const std::string& path);
void save_features_csv(const std::string& path, const AcousticSequence& seq);

}  // namespace talkgen::audio
