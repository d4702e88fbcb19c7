#pragma once

#include <string>
#include <vector>

namespace talkgen::audio {

// Mono audio clip. Samples are stored as doubles in [-1, 1].
struct AudioClip {
  std::vector<double> samples;
  int sample_rate = 16000;

  double duration() const {
    return sample_rate > 0 ? (double)samples.size() / sample_rate : 0.0;
  }
};

// Reads a RIFF/WAVE file. Accepts 16-bit PCM and 32-bit float, mono only
// (multi-channel input is rejected, not downmixed).
AudioClip read_wav(const std::string& path);

// Writes 16-bit PCM.
void write_wav(const std::string& path, const AudioClip& clip);

// Linear-interpolation resampler.
AudioClip resample(const AudioClip& clip, int target_rate);

// read_wav + resample to 16 kHz + invariant checks; the canonical loader for
// the feature frontend.
AudioClip load_audio_16k(const std::string& path);

}  // namespace talkgen::audio
