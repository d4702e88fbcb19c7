#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "talkgen/core/errors.hpp"
#include "talkgen/core/tensor.hpp"

namespace talkgen::io {

// Flat binary tensor container. Byte layout (little endian, documented in
// docs/formats.md):
//   magic "TGTB", u32 version, u32 dtype, u32 rank, u64 dims[rank], payload.
// dtype: 1 = float32, 2 = float64, 3 = uint8, 4 = uint64.

constexpr uint32_t kTensorVersion = 1;

template <typename T>
struct DtypeOf;
template <>
struct DtypeOf<float> { static constexpr uint32_t value = 1; };
template <>
struct DtypeOf<double> { static constexpr uint32_t value = 2; };
template <>
struct DtypeOf<uint8_t> { static constexpr uint32_t value = 3; };
template <>
struct DtypeOf<uint64_t> { static constexpr uint32_t value = 4; };

static_assert(std::endian::native == std::endian::little,
              "serialized formats assume a little-endian host");

inline void write_raw(std::ostream& os, const void* p, size_t n) {
  os.write(reinterpret_cast<const char*>(p), (std::streamsize)n);
}
inline void read_raw(std::istream& is, void* p, size_t n) {
  is.read(reinterpret_cast<char*>(p), (std::streamsize)n);
  if (!is) throw_io("unexpected end of stream");
}
template <typename T>
void write_pod(std::ostream& os, T v) {
  write_raw(os, &v, sizeof(T));
}
template <typename T>
T read_pod(std::istream& is) {
  T v;
  read_raw(is, &v, sizeof(T));
  return v;
}

template <typename S>
void write_tensor(std::ostream& os, const Tensor<S>& t) {
  write_raw(os, "TGTB", 4);
  write_pod<uint32_t>(os, kTensorVersion);
  write_pod<uint32_t>(os, DtypeOf<S>::value);
  write_pod<uint32_t>(os, (uint32_t)t.rank());
  for (Index d : t.shape()) write_pod<uint64_t>(os, (uint64_t)d);
  write_raw(os, t.data(), sizeof(S) * (size_t)t.size());
}

// Reads a tensor, converting the stored dtype to S.
template <typename S>
Tensor<S> read_tensor(std::istream& is) {
  char magic[4];
  read_raw(is, magic, 4);
  if (std::memcmp(magic, "TGTB", 4) != 0) throw_io("not a tensor container");
  uint32_t ver = read_pod<uint32_t>(is);
  if (ver != kTensorVersion) throw_io("unsupported tensor container version");
  uint32_t dtype = read_pod<uint32_t>(is);
  uint32_t rank = read_pod<uint32_t>(is);
  Shape shape(rank);
  for (auto& d : shape) d = (Index)read_pod<uint64_t>(is);
  Tensor<S> out(shape);
  auto load_as = [&](auto tag) {
    using T = decltype(tag);
    std::vector<T> buf((size_t)out.size());
    read_raw(is, buf.data(), sizeof(T) * buf.size());
    for (Index i = 0; i < out.size(); ++i) out[i] = (S)buf[(size_t)i];
  };
  switch (dtype) {
    case 1: load_as(float{}); break;
    case 2: load_as(double{}); break;
    case 3: load_as(uint8_t{}); break;
    case 4: load_as(uint64_t{}); break;
    default: throw_io("unknown tensor dtype");
  }
  return out;
}

template <typename S>
void save_tensor(const std::string& path, const Tensor<S>& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw_io("cannot open for writing: " + path);
  write_tensor(os, t);
  if (!os) throw_io("write failed: " + path);
}

template <typename S>
Tensor<S> load_tensor(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw_io("cannot open: " + path);
  return read_tensor<S>(is);
}

// Named tensor archive ("TGWA"): u32 version, u32 count, then per entry a
// u16 name length, the name bytes, and an embedded tensor record.
template <typename S>
class Archive {
 public:
  void put(const std::string& name, Tensor<S> t) {
    auto it = index_.find(name);
    if (it != index_.end()) {
      entries_[it->second].second = std::move(t);
      return;
    }
    index_[name] = entries_.size();
    entries_.emplace_back(name, std::move(t));
  }
  bool has(const std::string& name) const { return index_.count(name) > 0; }
  const Tensor<S>& get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw_io("archive: missing tensor " + name);
    return entries_[it->second].second;
  }
  const std::vector<std::pair<std::string, Tensor<S>>>& entries() const {
    return entries_;
  }
  size_t size() const { return entries_.size(); }

  void save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw_io("cannot open for writing: " + path);
    write_raw(os, "TGWA", 4);
    write_pod<uint32_t>(os, 1u);
    write_pod<uint32_t>(os, (uint32_t)entries_.size());
    for (const auto& [name, t] : entries_) {
      write_pod<uint16_t>(os, (uint16_t)name.size());
      write_raw(os, name.data(), name.size());
      write_tensor(os, t);
    }
    if (!os) throw_io("write failed: " + path);
  }

  static Archive load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw_io("cannot open: " + path);
    char magic[4];
    read_raw(is, magic, 4);
    if (std::memcmp(magic, "TGWA", 4) != 0) throw_io("not a tensor archive");
    uint32_t ver = read_pod<uint32_t>(is);
    if (ver != 1) throw_io("unsupported archive version");
    uint32_t count = read_pod<uint32_t>(is);
    Archive a;
    for (uint32_t i = 0; i < count; ++i) {
      uint16_t len = read_pod<uint16_t>(is);
      std::string name(len, '\0');
      read_raw(is, name.data(), len);
      a.put(name, read_tensor<S>(is));
    }
    return a;
  }

 private:
  std::vector<std::pair<std::string, Tensor<S>>> entries_;
  std::map<std::string, size_t> index_;
};

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);
bool same_file_bytes(const std::string& a, const std::string& b);

}  // namespace talkgen::io
