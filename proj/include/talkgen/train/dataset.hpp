#pragma once

#include "talkgen/audio/features.hpp"
#include "talkgen/core/image.hpp"
#include "talkgen/nets/head_pose.hpp"
#include "talkgen/train/manifest.hpp"

namespace talkgen::train {

struct LoadedClip {
  std::string id;
  std::vector<Tensor<float>> frames;  // [3,S,S] at the working resolution
  audio::AcousticSequence features;   // raw (un-normalized) [T,4,41]
  pose::PoseSequence poses;
  std::array<long, 4> face_box = {-1, -1, -1, -1};
};

// In-memory dataset at desk scale: all clips loaded eagerly, frames resized
// to the architecture's working resolution.
class Dataset {
 public:
  static Dataset load(const DatasetManifest& manifest, Index image_size) {
    manifest.validate();
    Dataset d;
    for (const auto& e : manifest.entries) {
      LoadedClip clip;
      clip.id = e.clip_id;
      for (const auto& path : list_frames(e.frames_dir)) {
        auto im = img::load_image<float>(path);
        if (im.dim(1) != image_size || im.dim(2) != image_size)
          im = img::resize_bilinear(im, image_size, image_size);
        clip.frames.push_back(std::move(im));
      }
      clip.features = audio::extract_features(audio::load_audio_16k(e.audio_path));
      clip.poses = pose::read_pose_csv(e.pose_csv);
      check_invalid((Index)clip.frames.size() == clip.poses.size() &&
                        clip.poses.size() == clip.features.frame_count(),
                    e.clip_id + ": frame/pose/audio length mismatch");
      clip.face_box = e.face_box;
      d.clips_.push_back(std::move(clip));
    }
    return d;
  }

  const std::vector<LoadedClip>& clips() const { return clips_; }
  size_t size() const { return clips_.size(); }

  headpose::AudioStats audio_stats() const {
    headpose::AudioStats s;
    Eigen::Matrix<double, 41, 1> sum = Eigen::Matrix<double, 41, 1>::Zero();
    Eigen::Matrix<double, 41, 1> sq = Eigen::Matrix<double, 41, 1>::Zero();
    long n = 0;
    for (const auto& c : clips_) {
      const auto& f = c.features.frames;
      for (Index t = 0; t < f.dim(0); ++t)
        for (Index w = 0; w < f.dim(1); ++w) {
          for (Index k = 0; k < 41; ++k) {
            double v = (double)f(t, w, k);
            sum(k) += v;
            sq(k) += v * v;
          }
          ++n;
        }
    }
    check_invalid(n > 0, "audio stats: empty dataset");
    for (int k = 0; k < 41; ++k) {
      s.mean(k) = sum(k) / n;
      double var = sq(k) / n - s.mean(k) * s.mean(k);
      s.stddev(k) = std::sqrt(std::max(var, 1e-8));
    }
    return s;
  }

  headpose::PoseStats pose_stats() const {
    headpose::PoseStats s;
    Eigen::Matrix<double, 6, 1> sum = Eigen::Matrix<double, 6, 1>::Zero();
    Eigen::Matrix<double, 6, 1> sq = Eigen::Matrix<double, 6, 1>::Zero();
    long n = 0;
    for (const auto& c : clips_) {
      for (Index t = 0; t < c.poses.size(); ++t) {
        for (int k = 0; k < 6; ++k) {
          double v = c.poses.poses(t, k);
          sum(k) += v;
          sq(k) += v * v;
        }
        ++n;
      }
    }
    check_invalid(n > 0, "pose stats: empty dataset");
    for (int k = 0; k < 6; ++k) {
      s.mean(k) = sum(k) / n;
      double var = sq(k) / n - s.mean(k) * s.mean(k);
      s.stddev(k) = std::sqrt(std::max(var, 1e-8));
    }
    return s;
  }

 private:
  std::vector<LoadedClip> clips_;
};

}  // namespace talkgen::train
