#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "gridcast/tensor.hpp"

namespace gridcast {

// On-disk container, little-endian:
//   bytes 0-3   magic "GCT1"
//   u32         dtype code (0=byte, 1=float32, 2=float64, 3=uint64)
//   u32         ndim
//   ndim x u64  dims
//   payload     row-major
// A file may hold several records back to back (graphs, checkpoints).
void write_tensor(std::ostream& os, const Tensor& t);
Tensor read_tensor(std::istream& is);
void write_tensor_file(const std::string& path, const Tensor& t);
Tensor read_tensor_file(const std::string& path);
void write_tensor_records(const std::string& path, const std::vector<Tensor>& ts);
std::vector<Tensor> read_tensor_records(const std::string& path, size_t expect_count = 0);

constexpr int kFramesPerDay = 288;
constexpr int kMovieChannels = 9;   // 4 volume headings, 4 speed headings, 1 incident
constexpr int kOutputChannels = 8;  // volume + speed only
constexpr int kStaticChannels = 7;
constexpr int kInputFrames = 12;
constexpr int kTargetFrames = 12;
constexpr int kWindowFrames = kInputFrames + kTargetFrames;

// (T,H,W,9) byte raster of 5-minute frames.
struct TrafficMovie {
  Tensor frames;

  int64_t t() const { return frames.dim(0); }
  int64_t height() const { return frames.dim(1); }
  int64_t width() const { return frames.dim(2); }
  void validate() const;
};

// (H,W,7) byte context channels: junctions and landmark blobs.
struct StaticMap {
  Tensor channels;

  int64_t height() const { return channels.dim(0); }
  int64_t width() const { return channels.dim(1); }
};

// Input frames [start, start+12), target frames [start+12, start+24).
struct SampleWindow {
  int64_t start = 0;
  int clock = 0;  // start mod 288
};

std::vector<SampleWindow> make_windows(const TrafficMovie& movie, int64_t stride);

// Copy of frames [t0, t1). Window clocks inside a slice stay aligned with the
// original movie when t0 is passed as clock_offset to shift_clocks.
TrafficMovie slice_movie(const TrafficMovie& movie, int64_t t0, int64_t t1);
void shift_clocks(std::vector<SampleWindow>& windows, int64_t clock_offset);

struct SynthResult {
  TrafficMovie movie;
  StaticMap static_map;
};

// Deterministic desk-scale substitute for the competition data: sparse
// polyline roads with a smooth two-sinusoid daily profile plus integer noise,
// scaled into [0,200] so the clamp table stays below saturation.
SynthResult synth_generate(uint64_t seed, int64_t height, int64_t width, int days);

}  // namespace gridcast
