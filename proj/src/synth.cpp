#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "gridcast/dataio.hpp"

namespace gridcast {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct Road {
  std::vector<int64_t> pixels;  // flat y*W+x, in drawing order, deduplicated
  int heading = 0;              // dominant volume/speed channel
  double base = 0.0;
  double amplitude = 0.0;
  double mix = 0.5;
  double phase1 = 0.0;
  double phase2 = 0.0;
  double speed_base = 0.0;
};

void add_pixel(Road& road, std::vector<uint8_t>& seen, int64_t y, int64_t x, int64_t w) {
  int64_t p = y * w + x;
  if (seen[static_cast<size_t>(p)]) return;
  seen[static_cast<size_t>(p)] = 1;
  road.pixels.push_back(p);
}

// Bresenham segment, clipped to the grid.
void draw_segment(Road& road, std::vector<uint8_t>& seen, int64_t h, int64_t w, int64_t y0,
                  int64_t x0, int64_t y1, int64_t x1) {
  int64_t dy = std::abs(y1 - y0), dx = std::abs(x1 - x0);
  int64_t sy = y0 < y1 ? 1 : -1, sx = x0 < x1 ? 1 : -1;
  int64_t err = dx - dy;
  int64_t y = y0, x = x0;
  while (true) {
    if (y >= 0 && y < h && x >= 0 && x < w) add_pixel(road, seen, y, x, w);
    if (y == y1 && x == x1) break;
    int64_t e2 = 2 * err;
    if (e2 > -dy) {
      err -= dy;
      x += sx;
    }
    if (e2 < dx) {
      err += dx;
      y += sy;
    }
  }
}

}  // namespace

SynthResult synth_generate(uint64_t seed, int64_t height, int64_t width, int days) {
  if (height < 16 || width < 16)
    throw ValidationError("synthetic grids need height and width >= 16");
  if (days < 1) throw ValidationError("need at least one synthetic day");

  Rng rng(seed);
  int64_t t_count = static_cast<int64_t>(days) * kFramesPerDay;
  int64_t n_roads = std::max<int64_t>(3, (height * width) / ((height + width) * 2));

  std::vector<Road> roads;
  roads.reserve(static_cast<size_t>(n_roads));
  std::vector<uint8_t> junction_count(static_cast<size_t>(height * width), 0);
  for (int64_t r = 0; r < n_roads; ++r) {
    Road road;
    std::vector<uint8_t> seen(static_cast<size_t>(height * width), 0);
    double y = rng.uniform(0.0, static_cast<double>(height));
    double x = rng.uniform(0.0, static_cast<double>(width));
    double angle = rng.uniform(0.0, 2.0 * kPi);
    int64_t segments = rng.uniform_int(2, 4);
    for (int64_t s = 0; s < segments; ++s) {
      double len = rng.uniform(0.25, 0.6) * static_cast<double>(height + width) / 2.0;
      double y1 = y + len * std::sin(angle);
      double x1 = x + len * std::cos(angle);
      draw_segment(road, seen, height, width, std::llround(y), std::llround(x), std::llround(y1),
                   std::llround(x1));
      y = y1;
      x = x1;
      angle += rng.uniform(-1.0, 1.0);
    }
    road.heading = static_cast<int>(rng.uniform_int(0, 3));
    road.amplitude = rng.uniform(3.0, 110.0);  // weak roads fall under the mask threshold
    road.base = rng.uniform(2.0, 40.0);
    road.mix = rng.uniform(0.3, 0.7);
    road.phase1 = rng.uniform(0.0, 2.0 * kPi);
    road.phase2 = rng.uniform(0.0, 2.0 * kPi);
    road.speed_base = rng.uniform(90.0, 200.0);
    for (int64_t p : road.pixels) {
      if (junction_count[static_cast<size_t>(p)] < 255) junction_count[static_cast<size_t>(p)]++;
    }
    roads.push_back(std::move(road));
  }

  Tensor frames = Tensor::zeros({t_count, height, width, kMovieChannels}, Dtype::Byte);
  auto buf = frames.u8();
  auto cell = [&](int64_t t, int64_t p, int64_t ch) -> uint8_t& {
    return buf[static_cast<size_t>(((t * height * width) + p) * kMovieChannels + ch)];
  };
  auto put_max = [&](int64_t t, int64_t p, int64_t ch, double v) {
    double clamped = std::clamp(v, 0.0, 200.0);
    uint8_t b = static_cast<uint8_t>(std::llround(clamped));
    uint8_t& slot = cell(t, p, ch);
    slot = std::max(slot, b);
  };

  for (const Road& road : roads) {
    std::vector<double> profile(static_cast<size_t>(t_count));
    for (int64_t t = 0; t < t_count; ++t) {
      double d1 = 0.5 * (1.0 + std::sin(2.0 * kPi * static_cast<double>(t % kFramesPerDay) /
                                            kFramesPerDay +
                                        road.phase1));
      double d2 = 0.5 * (1.0 + std::sin(2.0 * kPi * static_cast<double>(t % 144) / 144.0 +
                                        road.phase2));
      profile[static_cast<size_t>(t)] =
          road.base + road.amplitude * (road.mix * d1 + (1.0 - road.mix) * d2);
    }
    int h1 = road.heading;
    int h2 = (road.heading + 2) % 4;
    for (int64_t p : road.pixels) {
      for (int64_t t = 0; t < t_count; ++t) {
        double noise = static_cast<double>(rng.uniform_int(-3, 3));
        double v = profile[static_cast<size_t>(t)] + noise;
        put_max(t, p, h1, v);
        put_max(t, p, h2, 0.6 * v);
        double s = road.speed_base - 0.35 * profile[static_cast<size_t>(t)] + noise;
        put_max(t, p, 4 + h1, s);
        put_max(t, p, 4 + h2, 0.9 * s);
      }
    }
    // occasional incidents on the whole road
    for (int d = 0; d < days; ++d) {
      double coin = rng.uniform();
      int64_t t0 = rng.uniform_int(0, kFramesPerDay - 25);
      int64_t len = rng.uniform_int(6, 24);
      double level = rng.uniform(60.0, 160.0);
      if (coin < 0.4) {
        for (int64_t t = d * kFramesPerDay + t0; t < d * kFramesPerDay + t0 + len; ++t)
          for (int64_t p : road.pixels) put_max(t, p, 8, level);
      }
    }
  }

  Tensor stat = Tensor::zeros({height, width, kStaticChannels}, Dtype::Byte);
  auto sbuf = stat.u8();
  auto scell = [&](int64_t p, int64_t ch) -> uint8_t& {
    return sbuf[static_cast<size_t>(p * kStaticChannels + ch)];
  };
  for (int64_t p = 0; p < height * width; ++p) {
    if (junction_count[static_cast<size_t>(p)] >= 1) scell(p, 0) = 200;
  }
  for (int64_t y = 0; y < height; ++y)
    for (int64_t x = 0; x < width; ++x) {
      if (junction_count[static_cast<size_t>(y * width + x)] < 2) continue;
      for (int64_t yy = std::max<int64_t>(0, y - 1); yy <= std::min(height - 1, y + 1); ++yy)
        for (int64_t xx = std::max<int64_t>(0, x - 1); xx <= std::min(width - 1, x + 1); ++xx)
          scell(yy * width + xx, 1) = 200;
    }
  for (int64_t ch = 2; ch < kStaticChannels; ++ch) {
    int64_t blobs = rng.uniform_int(2, 3);
    for (int64_t bidx = 0; bidx < blobs; ++bidx) {
      int64_t y0 = rng.uniform_int(0, height - 2);
      int64_t x0 = rng.uniform_int(0, width - 2);
      int64_t bh = rng.uniform_int(2, std::max<int64_t>(2, height / 6));
      int64_t bw = rng.uniform_int(2, std::max<int64_t>(2, width / 6));
      uint8_t level = static_cast<uint8_t>(rng.uniform_int(80, 200));
      for (int64_t y = y0; y < std::min(height, y0 + bh); ++y)
        for (int64_t x = x0; x < std::min(width, x0 + bw); ++x)
          scell(y * width + x, ch) = level;
    }
  }

  SynthResult out;
  out.movie.frames = std::move(frames);
  out.static_map.channels = std::move(stat);
  return out;
}

}  // namespace gridcast
