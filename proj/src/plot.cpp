#include "talkgen/metrics/plot.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>

#include "talkgen/core/errors.hpp"
#include "talkgen/core/image.hpp"

namespace talkgen::plot {

namespace {

void put(img::ImageU8& im, int x, int y, const std::array<uint8_t, 3>& c) {
  if (x < 0 || x >= im.width || y < 0 || y >= im.height) return;
  size_t p = (size_t)(y * im.width + x) * 3;
  im.pixels[p] = c[0];
  im.pixels[p + 1] = c[1];
  im.pixels[p + 2] = c[2];
}

void line(img::ImageU8& im, int x0, int y0, int x1, int y1,
          const std::array<uint8_t, 3>& c) {
  int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
  int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  while (true) {
    put(im, x0, y0, c);
    if (x0 == x1 && y0 == y1) break;
    int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

}  // namespace

void line_plot_png(const std::string& path, const std::vector<Series>& series,
                   int width, int height) {
  check_invalid(!series.empty(), "line_plot: no series");
  size_t n = 0;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& s : series) {
    n = std::max(n, s.values.size());
    for (double v : s.values) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  check_invalid(n >= 2, "line_plot: need at least two points");
  if (hi - lo < 1e-12) {
    lo -= 0.5;
    hi += 0.5;
  }

  img::ImageU8 im;
  im.width = width;
  im.height = height;
  im.channels = 3;
  im.pixels.assign((size_t)width * height * 3, 255);

  const int mx = 40, my = 20;  // margins
  const std::array<uint8_t, 3> black = {0, 0, 0};
  line(im, mx, my, mx, height - my, black);
  line(im, mx, height - my, width - mx, height - my, black);

  auto to_x = [&](size_t i, size_t len) {
    return mx + (int)std::lround((double)i / (double)(len - 1) * (width - 2 * mx));
  };
  auto to_y = [&](double v) {
    double f = (v - lo) / (hi - lo);
    return (height - my) - (int)std::lround(f * (height - 2 * my));
  };

  for (const auto& s : series) {
    if (s.values.size() < 2) continue;
    for (size_t i = 0; i + 1 < s.values.size(); ++i)
      line(im, to_x(i, s.values.size()), to_y(s.values[i]),
           to_x(i + 1, s.values.size()), to_y(s.values[i + 1]), s.color);
  }
  // legend: one color swatch per series in the top-left corner
  for (size_t si = 0; si < series.size(); ++si)
    for (int d = 0; d < 24; ++d)
      for (int th = 0; th < 3; ++th)
        put(im, mx + 8 + d, my + 6 + (int)si * 8 + th, series[si].color);

  img::write_png(path, im);

  nlohmann::json j;
  j["y_min"] = lo;
  j["y_max"] = hi;
  j["series"] = nlohmann::json::array();
  for (const auto& s : series) {
    nlohmann::json e;
    e["label"] = s.label;
    e["color"] = s.color;
    e["points"] = s.values.size();
    j["series"].push_back(e);
  }
  std::ofstream os(path + ".json");
  if (!os) throw_io("cannot open for writing: " + path + ".json");
  os << j.dump(2) << "\n";
}

}  // namespace talkgen::plot
