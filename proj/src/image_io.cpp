#include <zlib.h>

#include <cstring>
#include <fstream>

#include "talkgen/core/errors.hpp"
#include "talkgen/core/image.hpp"

namespace talkgen::img {

namespace {

void wr_u32be(std::string& out, uint32_t v) {
  out.push_back((char)(v >> 24));
  out.push_back((char)(v >> 16));
  out.push_back((char)(v >> 8));
  out.push_back((char)v);
}

uint32_t rd_u32be(const uint8_t* p) {
  return ((uint32_t)p[0] << 24) | ((uint32_t)p[1] << 16) | ((uint32_t)p[2] << 8) |
         (uint32_t)p[3];
}

void append_chunk(std::string& out, const char type[4], const std::string& data) {
  wr_u32be(out, (uint32_t)data.size());
  size_t crc_start = out.size();
  out.append(type, 4);
  out.append(data);
  uint32_t crc = crc32(0, (const Bytef*)out.data() + crc_start, (uInt)(out.size() - crc_start));
  wr_u32be(out, crc);
}

int paeth(int a, int b, int c) {
  int p = a + b - c;
  int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

}  // namespace

void write_png(const std::string& path, const ImageU8& im) {
  check_invalid(im.width > 0 && im.height > 0, "write_png: empty image");
  check_invalid(im.channels == 1 || im.channels == 3 || im.channels == 4,
                "write_png: unsupported channel count");
  const uint8_t color_type = im.channels == 1 ? 0 : (im.channels == 3 ? 2 : 6);

  std::string ihdr;
  wr_u32be(ihdr, (uint32_t)im.width);
  wr_u32be(ihdr, (uint32_t)im.height);
  ihdr.push_back(8);  // bit depth
  ihdr.push_back((char)color_type);
  ihdr.push_back(0);  // compression
  ihdr.push_back(0);  // filter
  ihdr.push_back(0);  // no interlace

  const size_t stride = (size_t)im.width * im.channels;
  std::vector<uint8_t> raw((stride + 1) * im.height);
  for (int y = 0; y < im.height; ++y) {
    raw[(stride + 1) * y] = 0;  // filter: none
    std::memcpy(raw.data() + (stride + 1) * y + 1, im.pixels.data() + stride * y,
                stride);
  }
  uLongf comp_size = compressBound((uLong)raw.size());
  std::vector<uint8_t> comp(comp_size);
  if (compress2(comp.data(), &comp_size, raw.data(), (uLong)raw.size(), 6) != Z_OK)
    throw_io("png deflate failed");
  comp.resize(comp_size);

  std::string out("\x89PNG\r\n\x1a\n", 8);
  append_chunk(out, "IHDR", ihdr);
  append_chunk(out, "IDAT", std::string((const char*)comp.data(), comp.size()));
  append_chunk(out, "IEND", "");

  std::ofstream os(path, std::ios::binary);
  if (!os) throw_io("cannot open for writing: " + path);
  os.write(out.data(), (std::streamsize)out.size());
  if (!os) throw_io("write failed: " + path);
}

ImageU8 read_png(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw_io("cannot open: " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(is)),
                             std::istreambuf_iterator<char>());
  static const uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (bytes.size() < 8 || std::memcmp(bytes.data(), sig, 8) != 0)
    throw_invalid("not a PNG file: " + path);

  ImageU8 im;
  int bit_depth = 0, color_type = -1, interlace = 0;
  std::vector<uint8_t> idat;
  size_t pos = 8;
  while (pos + 8 <= bytes.size()) {
    uint32_t len = rd_u32be(bytes.data() + pos);
    const char* type = (const char*)bytes.data() + pos + 4;
    const uint8_t* data = bytes.data() + pos + 8;
    if (pos + 12 + len > bytes.size()) throw_invalid("truncated PNG: " + path);
    if (std::memcmp(type, "IHDR", 4) == 0) {
      im.width = (int)rd_u32be(data);
      im.height = (int)rd_u32be(data + 4);
      bit_depth = data[8];
      color_type = data[9];
      interlace = data[12];
    } else if (std::memcmp(type, "IDAT", 4) == 0) {
      idat.insert(idat.end(), data, data + len);
    } else if (std::memcmp(type, "IEND", 4) == 0) {
      break;
    }
    pos += 12 + len;
  }
  if (bit_depth != 8 || interlace != 0)
    throw_invalid("unsupported PNG (need 8-bit non-interlaced): " + path);
  switch (color_type) {
    case 0: im.channels = 1; break;
    case 2: im.channels = 3; break;
    case 6: im.channels = 4; break;
    default: throw_invalid("unsupported PNG color type: " + path);
  }

  const size_t stride = (size_t)im.width * im.channels;
  uLongf raw_size = (uLongf)((stride + 1) * im.height);
  std::vector<uint8_t> raw(raw_size);
  if (uncompress(raw.data(), &raw_size, idat.data(), (uLong)idat.size()) != Z_OK ||
      raw_size != (stride + 1) * (size_t)im.height)
    throw_invalid("PNG inflate failed: " + path);

  im.pixels.resize(stride * im.height);
  const int bpp = im.channels;
  for (int y = 0; y < im.height; ++y) {
    uint8_t filter = raw[(stride + 1) * y];
    const uint8_t* src = raw.data() + (stride + 1) * y + 1;
    uint8_t* cur = im.pixels.data() + stride * y;
    const uint8_t* up = y > 0 ? im.pixels.data() + stride * (y - 1) : nullptr;
    for (size_t x = 0; x < stride; ++x) {
      int a = x >= (size_t)bpp ? cur[x - bpp] : 0;
      int b = up ? up[x] : 0;
      int c = (up && x >= (size_t)bpp) ? up[x - bpp] : 0;
      int v = src[x];
      switch (filter) {
        case 0: break;
        case 1: v += a; break;
        case 2: v += b; break;
        case 3: v += (a + b) / 2; break;
        case 4: v += paeth(a, b, c); break;
        default: throw_invalid("unsupported PNG filter: " + path);
      }
      cur[x] = (uint8_t)v;
    }
  }
  return im;
}

}  // namespace talkgen::img
