#include "talkgen/pose/pose.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "talkgen/core/errors.hpp"

namespace talkgen::pose {

PoseSequence read_pose_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw_io("cannot open pose csv: " + path);
  std::string line;
  if (!std::getline(is, line)) throw_invalid("empty pose csv: " + path);
  // tolerate surrounding whitespace / CR
  std::string header;
  for (char c : line)
    if (!std::isspace((unsigned char)c)) header.push_back(c);
  check_invalid(header == "frame,rx,ry,rz,tx,ty,tz",
                "pose csv header must be 'frame,rx,ry,rz,tx,ty,tz': " + path);

  std::vector<std::array<double, 6>> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::array<double, 7> vals{};
    int i = 0;
    while (std::getline(ss, cell, ',') && i < 7) vals[(size_t)i++] = std::stod(cell);
    check_invalid(i == 7, "pose csv row needs 7 columns: " + path);
    std::array<double, 6> r{};
    for (int c = 0; c < 6; ++c) {
      r[(size_t)c] = vals[(size_t)c + 1];
      check_invalid(std::isfinite(r[(size_t)c]), "pose csv has non-finite value");
    }
    rows.push_back(r);
  }
  check_invalid(!rows.empty(), "pose csv has no rows: " + path);

  PoseSequence seq;
  seq.poses.resize((Index)rows.size(), 6);
  for (Index i = 0; i < (Index)rows.size(); ++i)
    for (int c = 0; c < 6; ++c) seq.poses(i, c) = rows[(size_t)i][(size_t)c];
  return seq;
}

void write_pose_csv(const std::string& path, const PoseSequence& seq) {
  std::ofstream os(path);
  if (!os) throw_io("cannot open for writing: " + path);
  os << "frame,rx,ry,rz,tx,ty,tz\n";
  char buf[48];
  for (Index i = 0; i < seq.size(); ++i) {
    os << i;
    for (int c = 0; c < 6; ++c) {
      // %.9g round-trips float32 exactly; pipeline stages re-read this file.
      std::snprintf(buf, sizeof(buf), "%.9g", (double)(float)seq.poses(i, c));
      os << "," << buf;
    }
    os << "\n";
  }
  if (!os) throw_io("write failed: " + path);
}

}  // namespace talkgen::pose
