#pragma once

#include <cstdint>
#include <map>
#include <string>

namespace talkgen::train {

// Declarative key-value configuration with [section] headers, '#' comments
// and CLI overrides of the form "section.key=value". The canonical text
// (sections and keys sorted) feeds the config hash embedded in checkpoints.
class Config {
 public:
  static Config parse_string(const std::string& text);
  static Config parse_file(const std::string& path);

  bool has(const std::string& section, const std::string& key) const;
  std::string get(const std::string& section, const std::string& key,
                  const std::string& fallback) const;
  double get_num(const std::string& section, const std::string& key,
                 double fallback) const;
  long get_int(const std::string& section, const std::string& key,
               long fallback) const;
  bool get_bool(const std::string& section, const std::string& key,
                bool fallback) const;
  void set(const std::string& section, const std::string& key,
           const std::string& value);
  // "section.key=value"
  void set_override(const std::string& assignment);

  std::string canonical_text() const;
  std::string section_text(const std::string& section) const;
  uint64_t hash() const;
  uint64_t section_hash(const std::string& section) const;

  void save(const std::string& path) const;

  const std::map<std::string, std::map<std::string, std::string>>& sections()
      const {
    return sections_;
  }

 private:
  std::map<std::string, std::map<std::string, std::string>> sections_;
};

uint64_t fnv1a64(const std::string& text);

}  // namespace talkgen::train
