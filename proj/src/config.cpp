#include "talkgen/train/config.hpp"

#include <fstream>
#include <sstream>

#include "talkgen/core/errors.hpp"

namespace talkgen::train {

namespace {
std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}
}  // namespace

uint64_t fnv1a64(const std::string& text) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

Config Config::parse_string(const std::string& text) {
  Config cfg;
  std::istringstream is(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      check_invalid(t.back() == ']', "config line " + std::to_string(lineno) +
                                         ": unterminated section header");
      section = trim(t.substr(1, t.size() - 2));
      cfg.sections_[section];
      continue;
    }
    size_t eq = t.find('=');
    check_invalid(eq != std::string::npos,
                  "config line " + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    check_invalid(!key.empty(), "config line " + std::to_string(lineno) + ": empty key");
    cfg.sections_[section][key] = value;
  }
  return cfg;
}

Config Config::parse_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw_io("cannot open config: " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_string(ss.str());
}

bool Config::has(const std::string& section, const std::string& key) const {
  auto it = sections_.find(section);
  return it != sections_.end() && it->second.count(key) > 0;
}

std::string Config::get(const std::string& section, const std::string& key,
                        const std::string& fallback) const {
  auto it = sections_.find(section);
  if (it == sections_.end()) return fallback;
  auto kt = it->second.find(key);
  return kt == it->second.end() ? fallback : kt->second;
}

double Config::get_num(const std::string& section, const std::string& key,
                       double fallback) const {
  if (!has(section, key)) return fallback;
  return std::stod(get(section, key, ""));
}

long Config::get_int(const std::string& section, const std::string& key,
                     long fallback) const {
  if (!has(section, key)) return fallback;
  return std::stol(get(section, key, ""));
}

bool Config::get_bool(const std::string& section, const std::string& key,
                      bool fallback) const {
  if (!has(section, key)) return fallback;
  std::string v = get(section, key, "");
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw_invalid("config: boolean expected for " + section + "." + key);
}

void Config::set(const std::string& section, const std::string& key,
                 const std::string& value) {
  sections_[section][key] = value;
}

void Config::set_override(const std::string& assignment) {
  size_t eq = assignment.find('=');
  check_invalid(eq != std::string::npos, "override must be section.key=value");
  std::string lhs = trim(assignment.substr(0, eq));
  std::string value = trim(assignment.substr(eq + 1));
  size_t dot = lhs.find('.');
  check_invalid(dot != std::string::npos, "override must be section.key=value");
  set(lhs.substr(0, dot), lhs.substr(dot + 1), value);
}

std::string Config::canonical_text() const {
  std::ostringstream os;
  for (const auto& [sec, kv] : sections_) {
    os << "[" << sec << "]\n";
    for (const auto& [k, v] : kv) os << k << " = " << v << "\n";
  }
  return os.str();
}

std::string Config::section_text(const std::string& section) const {
  std::ostringstream os;
  auto it = sections_.find(section);
  if (it == sections_.end()) return "";
  os << "[" << section << "]\n";
  for (const auto& [k, v] : it->second) os << k << " = " << v << "\n";
  return os.str();
}

uint64_t Config::hash() const { return fnv1a64(canonical_text()); }

uint64_t Config::section_hash(const std::string& section) const {
  return fnv1a64(section_text(section));
}

void Config::save(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw_io("cannot open for writing: " + path);
  os << canonical_text();
  if (!os) throw_io("write failed: " + path);
}

}  // namespace talkgen::train
