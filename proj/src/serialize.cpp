#include "talkgen/core/serialize.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

namespace talkgen::io {

std::string read_text_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw_io("cannot open: " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw_io("cannot open for writing: " + path);
  os << text;
  if (!os) throw_io("write failed: " + path);
}

bool same_file_bytes(const std::string& a, const std::string& b) {
  std::error_code ec;
  if (std::filesystem::file_size(a, ec) != std::filesystem::file_size(b, ec)) return false;
  if (ec) return false;
  return read_text_file(a) == read_text_file(b);
}

}  // namespace talkgen::io
