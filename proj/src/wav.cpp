#include "talkgen/audio/wav.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "talkgen/core/errors.hpp"

namespace talkgen::audio {

namespace {

uint32_t rd_u32(std::istream& is) {
  uint8_t b[4];
  is.read((char*)b, 4);
  return (uint32_t)b[0] | ((uint32_t)b[1] << 8) | ((uint32_t)b[2] << 16) |
         ((uint32_t)b[3] << 24);
}
uint16_t rd_u16(std::istream& is) {
  uint8_t b[2];
  is.read((char*)b, 2);
  return (uint16_t)((uint32_t)b[0] | ((uint32_t)b[1] << 8));
}
void wr_u32(std::ostream& os, uint32_t v) {
  uint8_t b[4] = {(uint8_t)(v), (uint8_t)(v >> 8), (uint8_t)(v >> 16),
                  (uint8_t)(v >> 24)};
  os.write((char*)b, 4);
}
void wr_u16(std::ostream& os, uint16_t v) {
  uint8_t b[2] = {(uint8_t)(v), (uint8_t)(v >> 8)};
  os.write((char*)b, 2);
}

}  // namespace

AudioClip read_wav(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw_io("cannot open wav: " + path);
  char tag[4];
  is.read(tag, 4);
  if (std::memcmp(tag, "RIFF", 4) != 0) throw_invalid("not a RIFF file: " + path);
  rd_u32(is);  // riff size
  is.read(tag, 4);
  if (std::memcmp(tag, "WAVE", 4) != 0) throw_invalid("not a WAVE file: " + path);

  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  std::vector<char> data;
  bool have_fmt = false, have_data = false;
  while (is.read(tag, 4)) {
    uint32_t size = rd_u32(is);
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      format = rd_u16(is);
      channels = rd_u16(is);
      rate = rd_u32(is);
      rd_u32(is);  // byte rate
      rd_u16(is);  // block align
      bits = rd_u16(is);
      if (size > 16) is.seekg(size - 16, std::ios::cur);
      have_fmt = true;
    } else if (std::memcmp(tag, "data", 4) == 0) {
      data.resize(size);
      is.read(data.data(), size);
      have_data = true;
    } else {
      is.seekg(size + (size & 1), std::ios::cur);
    }
  }
  if (!have_fmt || !have_data) throw_invalid("wav missing fmt/data chunk: " + path);
  if (channels != 1)
    throw_invalid("wav must be mono, got " + std::to_string(channels) +
                  " channels: " + path);
  if (data.empty()) throw_invalid("wav has no samples: " + path);

  AudioClip clip;
  clip.sample_rate = (int)rate;
  if (format == 1 && bits == 16) {
    size_t n = data.size() / 2;
    clip.samples.resize(n);
    for (size_t i = 0; i < n; ++i) {
      int16_t v;
      std::memcpy(&v, data.data() + 2 * i, 2);
      clip.samples[i] = (double)v / 32768.0;
    }
  } else if (format == 3 && bits == 32) {
    size_t n = data.size() / 4;
    clip.samples.resize(n);
    for (size_t i = 0; i < n; ++i) {
      float v;
      std::memcpy(&v, data.data() + 4 * i, 4);
      clip.samples[i] = (double)v;
    }
  } else {
    throw_invalid("unsupported wav encoding (need PCM16 or float32): " + path);
  }
  for (double s : clip.samples)
    if (!std::isfinite(s)) throw_invalid("wav contains non-finite samples: " + path);
  return clip;
}

void write_wav(const std::string& path, const AudioClip& clip) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw_io("cannot open for writing: " + path);
  uint32_t n = (uint32_t)clip.samples.size();
  uint32_t data_size = n * 2;
  os.write("RIFF", 4);
  wr_u32(os, 36 + data_size);
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  wr_u32(os, 16);
  wr_u16(os, 1);  // PCM
  wr_u16(os, 1);  // mono
  wr_u32(os, (uint32_t)clip.sample_rate);
  wr_u32(os, (uint32_t)clip.sample_rate * 2);
  wr_u16(os, 2);
  wr_u16(os, 16);
  os.write("data", 4);
  wr_u32(os, data_size);
  for (uint32_t i = 0; i < n; ++i) {
    double v = std::max(-1.0, std::min(1.0, clip.samples[i]));
    int16_t q = (int16_t)std::lrint(v * 32767.0);
    os.write((char*)&q, 2);
  }
  if (!os) throw_io("write failed: " + path);
}

AudioClip resample(const AudioClip& clip, int target_rate) {
  if (clip.sample_rate == target_rate) return clip;
  check_invalid(clip.sample_rate > 0 && target_rate > 0, "resample: bad rate");
  AudioClip out;
  out.sample_rate = target_rate;
  size_t n_out =
      (size_t)std::llround(clip.duration() * target_rate);
  out.samples.resize(n_out);
  double step = (double)clip.sample_rate / target_rate;
  for (size_t i = 0; i < n_out; ++i) {
    double pos = i * step;
    size_t i0 = (size_t)pos;
    if (i0 + 1 >= clip.samples.size()) {
      out.samples[i] = clip.samples.back();
    } else {
      double f = pos - i0;
      out.samples[i] = clip.samples[i0] * (1.0 - f) + clip.samples[i0 + 1] * f;
    }
  }
  return out;
}

AudioClip load_audio_16k(const std::string& path) {
  AudioClip clip = read_wav(path);
  check_invalid(clip.sample_rate >= 8000,
                "sample rate too low (need >= 8000 Hz): " + path);
  return resample(clip, 16000);
}

}  // namespace talkgen::audio
