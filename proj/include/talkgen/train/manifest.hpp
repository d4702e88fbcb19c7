#pragma once

#include <array>
#include <string>
#include <vector>

#include "talkgen/core/tensor.hpp"

namespace talkgen::train {

struct ClipEntry {
  std::string clip_id;
  std::string frames_dir;
  std::string audio_path;
  std::string pose_csv;
  double fps = 25.0;
  // Optional pixel box [x0, y0, x1, y1] around the face; used by the
  // background-jitter metric. Negative values mean "unset".
  std::array<long, 4> face_box = {-1, -1, -1, -1};

  bool has_face_box() const { return face_box[0] >= 0; }
};

struct DatasetManifest {
  std::vector<ClipEntry> entries;
  std::string split = "train";

  static DatasetManifest load(const std::string& path);
  void save(const std::string& path) const;

  // Checks every referenced file exists and that frame count, pose rows and
  // round(audio duration * 25) agree for each clip.
  void validate() const;
};

// Sorted list of "*.png" paths in a directory.
std::vector<std::string> list_frames(const std::string& frames_dir);

}  // namespace talkgen::train
