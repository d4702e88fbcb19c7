#include "talkgen/audio/features.hpp"

#include <cmath>
#include <complex>
#include <fstream>

#include "talkgen/core/errors.hpp"
#include "talkgen/core/serialize.hpp"

namespace talkgen::audio {

namespace {

// Iterative radix-2 FFT; n must be a power of two.
void fft_radix2(std::vector<std::complex<double>>& a) {
  const size_t n = a.size();
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    double ang = -2.0 * M_PI / (double)len;
    std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0);
      for (size_t j = 0; j < len / 2; ++j) {
        auto u = a[i + j];
        auto v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

// Triangular mel filters, [n_mels x (n_fft/2+1)], spanning 0..sr/2.
std::vector<std::vector<double>> mel_filterbank(int sr, int n_fft, int n_mels) {
  const int bins = n_fft / 2 + 1;
  const double mel_max = hz_to_mel(sr / 2.0);
  std::vector<double> centers(n_mels + 2);
  for (int i = 0; i < n_mels + 2; ++i)
    centers[i] = mel_to_hz(mel_max * i / (n_mels + 1));
  std::vector<std::vector<double>> fb(n_mels, std::vector<double>(bins, 0.0));
  for (int m = 0; m < n_mels; ++m) {
    double lo = centers[m], mid = centers[m + 1], hi = centers[m + 2];
    for (int b = 0; b < bins; ++b) {
      double f = (double)b * sr / n_fft;
      if (f > lo && f < mid)
        fb[m][b] = (f - lo) / (mid - lo);
      else if (f >= mid && f < hi)
        fb[m][b] = (hi - f) / (hi - mid);
    }
  }
  return fb;
}

// Normalized autocorrelation pitch with parabolic peak refinement.
// Runs on the raw (mean-removed) window; unvoiced when the peak is weak.
void detect_pitch(const std::vector<double>& window, int sr,
                  const FrontendConfig& cfg, double* pitch, double* voicing) {
  *pitch = 0.0;
  *voicing = 0.0;
  const int n = (int)window.size();
  double mean = 0.0;
  for (double v : window) mean += v;
  mean /= n;
  std::vector<double> x(window.size());
  double energy = 0.0;
  for (int i = 0; i < n; ++i) {
    x[i] = window[i] - mean;
    energy += x[i] * x[i];
  }
  if (energy < 1e-12) return;  // silence

  int lag_min = (int)std::floor(sr / cfg.pitch_max_hz);
  int lag_max = (int)std::ceil(sr / cfg.pitch_min_hz);
  lag_max = std::min(lag_max, n - 2);
  if (lag_min < 2 || lag_min >= lag_max) return;

  std::vector<double> nac(lag_max + 1, 0.0);
  double best = -1.0;
  for (int lag = lag_min; lag <= lag_max; ++lag) {
    double num = 0.0, e0 = 0.0, e1 = 0.0;
    for (int i = 0; i + lag < n; ++i) {
      num += x[i] * x[i + lag];
      e0 += x[i] * x[i];
      e1 += x[i + lag] * x[i + lag];
    }
    double denom = std::sqrt(e0 * e1);
    double r = denom > 1e-12 ? num / denom : 0.0;
    nac[lag] = r;
    best = std::max(best, r);
  }
  if (best < cfg.voicing_threshold) return;

  // Prefer the smallest lag whose peak is close to the global maximum;
  // otherwise period multiples win and the pitch halves.
  int best_lag = 0;
  for (int lag = lag_min; lag <= lag_max; ++lag) {
    bool local_peak = (lag == lag_min || nac[lag] >= nac[lag - 1]) &&
                      (lag == lag_max || nac[lag] >= nac[lag + 1]);
    if (local_peak && nac[lag] >= 0.9 * best && nac[lag] >= cfg.voicing_threshold) {
      best_lag = lag;
      break;
    }
  }
  if (best_lag == 0) return;

  double lag = (double)best_lag;
  if (best_lag > lag_min && best_lag < lag_max) {
    double y0 = nac[best_lag - 1], y1 = nac[best_lag], y2 = nac[best_lag + 1];
    double denom = y0 - 2.0 * y1 + y2;
    if (std::abs(denom) > 1e-12) {
      double delta = 0.5 * (y0 - y2) / denom;
      if (std::abs(delta) <= 1.0) lag += delta;
    }
  }
  *pitch = sr / lag;
  *voicing = 1.0;
}

}  // namespace

Index frame_count_for_duration(double seconds) {
  return (Index)std::llround(seconds * kVideoFps);
}

std::vector<std::vector<double>> sliding_windows(const AudioClip& clip,
                                                 const FrontendConfig& cfg) {
  check_invalid(!clip.samples.empty(), "audio clip is empty");
  check_invalid(clip.sample_rate >= 8000, "sample rate too low (need >= 8000 Hz)");
  for (double s : clip.samples)
    check_invalid(std::isfinite(s), "audio clip contains non-finite samples");

  const Index frames = frame_count_for_duration(clip.duration());
  check_invalid(frames >= 1, "audio clip shorter than one video frame (40 ms)");
  const Index count = frames * kWindowsPerFrame;
  const Index win = (Index)std::lround(cfg.window_sec * clip.sample_rate);
  const Index step = (Index)std::lround(cfg.step_sec * clip.sample_rate);

  std::vector<std::vector<double>> out((size_t)count);
  for (Index k = 0; k < count; ++k) {
    std::vector<double> w((size_t)win, 0.0);
    Index start = k * step;
    for (Index i = 0; i < win; ++i) {
      Index src = start + i;
      if (src < (Index)clip.samples.size()) w[(size_t)i] = clip.samples[(size_t)src];
    }
    out[(size_t)k] = std::move(w);
  }
  return out;
}

AcousticWindow window_features(const std::vector<double>& window, int sample_rate,
                               const FrontendConfig& cfg) {
  const int n = (int)window.size();
  check_invalid(n == (int)std::lround(cfg.window_sec * sample_rate),
                "window length does not match 25 ms at the given rate");
  check_invalid(n <= cfg.n_fft, "window longer than FFT size");
  for (double v : window)
    check_invalid(std::isfinite(v), "window contains non-finite samples");

  // Pre-emphasis + Hamming, zero padded to n_fft.
  std::vector<std::complex<double>> buf((size_t)cfg.n_fft, 0.0);
  for (int i = 0; i < n; ++i) {
    double s = window[(size_t)i] - cfg.preemphasis * (i > 0 ? window[(size_t)i - 1] : 0.0);
    double ham = 0.54 - 0.46 * std::cos(2.0 * M_PI * i / (n - 1));
    buf[(size_t)i] = s * ham;
  }
  fft_radix2(buf);
  const int bins = cfg.n_fft / 2 + 1;
  std::vector<double> power((size_t)bins);
  for (int b = 0; b < bins; ++b) power[(size_t)b] = std::norm(buf[(size_t)b]);

  static thread_local std::vector<std::vector<double>> fb;
  static thread_local int fb_sr = 0;
  if (fb.empty() || fb_sr != sample_rate) {
    fb = mel_filterbank(sample_rate, cfg.n_fft, kNumFbank);
    fb_sr = sample_rate;
  }

  std::array<double, kNumFbank> fbank{};
  for (int m = 0; m < kNumFbank; ++m) {
    double e = 0.0;
    for (int b = 0; b < bins; ++b) e += fb[(size_t)m][(size_t)b] * power[(size_t)b];
    fbank[(size_t)m] = std::log(std::max(e, cfg.log_floor));
  }

  // Orthonormal DCT-II of the 26 log energies; c0..c12 kept, no deltas.
  std::array<double, kNumMfcc> mfcc{};
  const double norm0 = std::sqrt(1.0 / kNumFbank);
  const double normk = std::sqrt(2.0 / kNumFbank);
  for (int k = 0; k < kNumMfcc; ++k) {
    double acc = 0.0;
    for (int m = 0; m < kNumFbank; ++m)
      acc += fbank[(size_t)m] * std::cos(M_PI * k * (m + 0.5) / kNumFbank);
    mfcc[(size_t)k] = acc * (k == 0 ? norm0 : normk);
  }

  double pitch = 0.0, voicing = 0.0;
  detect_pitch(window, sample_rate, cfg, &pitch, &voicing);

  AcousticWindow out{};
  int idx = 0;
  for (int k = 0; k < kNumMfcc; ++k) out[(size_t)idx++] = mfcc[(size_t)k];
  for (int m = 0; m < kNumFbank; ++m) out[(size_t)idx++] = fbank[(size_t)m];
  out[(size_t)idx++] = pitch;
  out[(size_t)idx++] = voicing;
  return out;
}

AcousticSequence assemble_frames(const std::vector<AcousticWindow>& windows) {
  check_contract(!windows.empty() && windows.size() % kWindowsPerFrame == 0,
                 "window count must be a positive multiple of 4");
  const Index T = (Index)windows.size() / kWindowsPerFrame;
  AcousticSequence seq;
  seq.frames = Tensor<float>({T, kWindowsPerFrame, kWindowFeatureDim});
  for (Index t = 0; t < T; ++t)
    for (Index w = 0; w < kWindowsPerFrame; ++w)
      for (Index f = 0; f < kWindowFeatureDim; ++f)
        seq.frames(t, w, f) =
            (float)windows[(size_t)(t * kWindowsPerFrame + w)][(size_t)f];
  return seq;
}

AcousticSequence extract_features(const AudioClip& clip, const FrontendConfig& cfg) {
  auto windows = sliding_windows(clip, cfg);
  std::vector<AcousticWindow> feats(windows.size());
  for (size_t i = 0; i < windows.size(); ++i)
    feats[i] = window_features(windows[i], clip.sample_rate, cfg);
  return assemble_frames(feats);
}

void save_features(const std::string& path, const AcousticSequence& seq) {
  io::save_tensor(path, seq.frames);
}

AcousticSequence load_features(const std::string& path) {
  AcousticSequence seq;
  seq.frames = io::load_tensor<float>(path);
  check_invalid(seq.frames.rank() == 3 && seq.frames.dim(1) == kWindowsPerFrame &&
                    seq.frames.dim(2) == kWindowFeatureDim,
                "feature file has wrong shape: " + path);
  return seq;
}

void save_features_csv(const std::string& path, const AcousticSequence& seq) {
  std::ofstream os(path);
  if (!os) throw_io("cannot open for writing: " + path);
  os << "frame,window";
  for (int k = 0; k < kNumMfcc; ++k) os << ",mfcc" << k;
  for (int m = 0; m < kNumFbank; ++m) os << ",fbank" << m;
  os << ",pitch,voicing\n";
  const Index T = seq.frame_count();
  char buf[48];
  for (Index t = 0; t < T; ++t)
    for (Index w = 0; w < kWindowsPerFrame; ++w) {
      os << t << "," << w;
      for (Index f = 0; f < kWindowFeatureDim; ++f) {
        std::snprintf(buf, sizeof(buf), "%.9g", (double)seq.frames(t, w, f));
        os << "," << buf;
      }
      os << "\n";
    }
  if (!os) throw_io("write failed: " + path);
}

}  // namespace talkgen::audio
