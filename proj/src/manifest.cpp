#include "talkgen/train/manifest.hpp"

#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "talkgen/audio/features.hpp"
#include "talkgen/audio/wav.hpp"
#include "talkgen/core/errors.hpp"
#include "talkgen/pose/pose.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace talkgen::train {

std::vector<std::string> list_frames(const std::string& frames_dir) {
  check_invalid(fs::is_directory(frames_dir), "not a directory: " + frames_dir);
  std::vector<std::string> out;
  for (const auto& e : fs::directory_iterator(frames_dir))
    if (e.is_regular_file() && e.path().extension() == ".png")
      out.push_back(e.path().string());
  std::sort(out.begin(), out.end());
  return out;
}

DatasetManifest DatasetManifest::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw_io("cannot open manifest: " + path);
  json j;
  try {
    is >> j;
  } catch (const std::exception& e) {
    throw_invalid(std::string("manifest parse error: ") + e.what());
  }
  DatasetManifest m;
  m.split = j.value("split", "train");
  const fs::path base = fs::path(path).parent_path();
  auto resolve = [&](const std::string& p) {
    fs::path fp(p);
    return fp.is_absolute() ? fp.string() : (base / fp).string();
  };
  for (const auto& je : j.at("entries")) {
    ClipEntry e;
    e.clip_id = je.at("clip_id").get<std::string>();
    e.frames_dir = resolve(je.at("frames_dir").get<std::string>());
    e.audio_path = resolve(je.at("audio_path").get<std::string>());
    e.pose_csv = resolve(je.at("pose_csv").get<std::string>());
    e.fps = je.value("fps", 25.0);
    if (je.contains("face_box")) {
      auto fb = je.at("face_box");
      for (int i = 0; i < 4; ++i) e.face_box[(size_t)i] = fb.at((size_t)i).get<long>();
    }
    m.entries.push_back(std::move(e));
  }
  return m;
}

void DatasetManifest::save(const std::string& path) const {
  json j;
  j["split"] = split;
  j["entries"] = json::array();
  for (const auto& e : entries) {
    json je;
    je["clip_id"] = e.clip_id;
    je["frames_dir"] = e.frames_dir;
    je["audio_path"] = e.audio_path;
    je["pose_csv"] = e.pose_csv;
    je["fps"] = e.fps;
    if (e.has_face_box()) je["face_box"] = e.face_box;
    j["entries"].push_back(je);
  }
  std::ofstream os(path);
  if (!os) throw_io("cannot open for writing: " + path);
  os << j.dump(2) << "\n";
}

void DatasetManifest::validate() const {
  check_invalid(!entries.empty(), "manifest has no entries");
  for (const auto& e : entries) {
    check_invalid(fs::exists(e.audio_path), e.clip_id + ": missing audio " + e.audio_path);
    check_invalid(fs::exists(e.pose_csv), e.clip_id + ": missing pose csv " + e.pose_csv);
    auto frames = list_frames(e.frames_dir);
    check_invalid(!frames.empty(), e.clip_id + ": no frames in " + e.frames_dir);
    auto poses = pose::read_pose_csv(e.pose_csv);
    check_invalid((Index)frames.size() == poses.size(),
                  e.clip_id + ": frame count != pose rows");
    auto clip = audio::load_audio_16k(e.audio_path);
    Index expect = audio::frame_count_for_duration(clip.duration());
    check_invalid(expect == (Index)frames.size(),
                  e.clip_id + ": frame count != round(duration * 25)");
  }
}

}  // namespace talkgen::train
