#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "talkgen/core/tensor.hpp"

namespace talkgen::img {

// 8-bit interleaved image, row major, channels = 1, 3 or 4.
struct ImageU8 {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<uint8_t> pixels;
};

// PNG subset: 8-bit gray / RGB / RGBA, non-interlaced.
ImageU8 read_png(const std::string& path);
void write_png(const std::string& path, const ImageU8& im);

// Planar float image [C,H,W], values in [0,1].
template <typename S>
Tensor<S> to_planar(const ImageU8& im) {
  Tensor<S> t({im.channels, im.height, im.width});
  for (int c = 0; c < im.channels; ++c)
    for (int y = 0; y < im.height; ++y)
      for (int x = 0; x < im.width; ++x)
        t(c, y, x) = (S)im.pixels[(size_t)(y * im.width + x) * im.channels + c] / S(255);
  return t;
}

template <typename S>
ImageU8 to_u8(const Tensor<S>& t) {
  ImageU8 im;
  im.channels = (int)t.dim(0);
  im.height = (int)t.dim(1);
  im.width = (int)t.dim(2);
  im.pixels.resize((size_t)im.channels * im.height * im.width);
  for (int c = 0; c < im.channels; ++c)
    for (int y = 0; y < im.height; ++y)
      for (int x = 0; x < im.width; ++x) {
        S v = t(c, y, x);
        v = std::min(S(1), std::max(S(0), v));
        im.pixels[(size_t)(y * im.width + x) * im.channels + c] =
            (uint8_t)std::lround((double)v * 255.0);
      }
  return im;
}

template <typename S>
Tensor<S> load_image(const std::string& path) {
  ImageU8 im = read_png(path);
  if (im.channels == 4) {  // drop alpha
    ImageU8 rgb;
    rgb.width = im.width;
    rgb.height = im.height;
    rgb.channels = 3;
    rgb.pixels.resize((size_t)im.width * im.height * 3);
    for (size_t p = 0; p < (size_t)im.width * im.height; ++p)
      for (int c = 0; c < 3; ++c) rgb.pixels[p * 3 + c] = im.pixels[p * 4 + c];
    im = std::move(rgb);
  }
  if (im.channels == 1) {  // expand gray to RGB
    ImageU8 rgb;
    rgb.width = im.width;
    rgb.height = im.height;
    rgb.channels = 3;
    rgb.pixels.resize((size_t)im.width * im.height * 3);
    for (size_t p = 0; p < (size_t)im.width * im.height; ++p)
      for (int c = 0; c < 3; ++c) rgb.pixels[p * 3 + c] = im.pixels[p];
    im = std::move(rgb);
  }
  return to_planar<S>(im);
}

template <typename S>
void save_image(const std::string& path, const Tensor<S>& t) {
  write_png(path, to_u8(t));
}

// Bilinear resize with the half-pixel convention; works for both up and
// down scaling. src [C,H,W] -> [C,Ho,Wo].
template <typename S>
Tensor<S> resize_bilinear(const Tensor<S>& src, Index Ho, Index Wo) {
  const Index C = src.dim(0), H = src.dim(1), W = src.dim(2);
  Tensor<S> out({C, Ho, Wo});
  const double sy = (double)H / Ho, sx = (double)W / Wo;
  for (Index y = 0; y < Ho; ++y) {
    double fy = std::max(0.0, (y + 0.5) * sy - 0.5);
    Index y0 = std::min((Index)fy, H - 1), y1 = std::min(y0 + 1, H - 1);
    double wy = fy - y0;
    for (Index x = 0; x < Wo; ++x) {
      double fx = std::max(0.0, (x + 0.5) * sx - 0.5);
      Index x0 = std::min((Index)fx, W - 1), x1 = std::min(x0 + 1, W - 1);
      double wx = fx - x0;
      for (Index c = 0; c < C; ++c) {
        double v = (1 - wy) * ((1 - wx) * src(c, y0, x0) + wx * src(c, y0, x1)) +
                   wy * ((1 - wx) * src(c, y1, x0) + wx * src(c, y1, x1));
        out(c, y, x) = (S)v;
      }
    }
  }
  return out;
}

// Rec.601 luma from an RGB planar image.
template <typename S>
Tensor<S> luma(const Tensor<S>& rgb) {
  check_contract(rgb.dim(0) == 3, "luma: need RGB");
  const Index H = rgb.dim(1), W = rgb.dim(2);
  Tensor<S> out({1, H, W});
  for (Index y = 0; y < H; ++y)
    for (Index x = 0; x < W; ++x)
      out(0, y, x) = S(0.299) * rgb(0, y, x) + S(0.587) * rgb(1, y, x) +
                     S(0.114) * rgb(2, y, x);
  return out;
}

}  // namespace talkgen::img
