#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "gridcast/dataio.hpp"
#include "gridcast/features.hpp"
#include "oracle_utils.hpp"

using namespace gridcast;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

std::string file_bytes(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  REQUIRE(is.good());
  return std::string(std::istreambuf_iterator<char>(is), {});
}

}  // namespace

TEST_CASE("single byte tensor round-trips bit-identically") {
  std::string path = temp_path("gc_t1.gct");
  write_tensor_file(path, Tensor::from_bytes({1}, {7}));
  Tensor back = read_tensor_file(path);
  CHECK(back.dtype() == Dtype::Byte);
  CHECK(back.dims() == std::vector<int64_t>{1});
  CHECK(back.u8()[0] == 7);
}

TEST_CASE("float32 tensor round-trips bit-identically") {
  Rng rng(1);
  Tensor t = testutil::random_tensor(rng, {2, 3}, Dtype::Float32);
  std::string path = temp_path("gc_t2.gct");
  write_tensor_file(path, t);
  Tensor back = read_tensor_file(path);
  CHECK(back.same_dims(t));
  CHECK(std::equal(t.f32().begin(), t.f32().end(), back.f32().begin()));
}

TEST_CASE("round-trip law holds for all dtypes and ranks 1-4") {
  Rng rng(2);
  for (Dtype dt : {Dtype::Byte, Dtype::Float32, Dtype::Float64, Dtype::UInt64}) {
    for (int rank = 1; rank <= 4; ++rank) {
      std::vector<int64_t> dims;
      for (int i = 0; i < rank; ++i) dims.push_back(rng.uniform_int(1, 5));
      Tensor t = testutil::random_tensor(rng, dims, dt);
      std::string path = temp_path("gc_t3.gct");
      write_tensor_file(path, t);
      Tensor back = read_tensor_file(path);
      CHECK(back.dtype() == dt);
      CHECK(back.same_dims(t));
      CHECK(max_abs_diff(back, t) == 0.0);
    }
  }
}

TEST_CASE("truncated file fails without a partial tensor") {
  Rng rng(3);
  Tensor t = testutil::random_tensor(rng, {4, 4}, Dtype::Float64);
  std::string path = temp_path("gc_t4.gct");
  write_tensor_file(path, t);
  std::string bytes = file_bytes(path);
  std::ofstream os(path, std::ios::binary);
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 1));
  os.close();
  CHECK_THROWS_AS(read_tensor_file(path), IoError);
}

TEST_CASE("bad magic and unknown dtype codes are rejected") {
  std::string path = temp_path("gc_t5.gct");
  {
    std::ofstream os(path, std::ios::binary);
    os << "NOPE" << std::string(16, '\0');
  }
  CHECK_THROWS_AS(read_tensor_file(path), IoError);
  {
    std::ofstream os(path, std::ios::binary);
    os << "GCT1";
    uint32_t code = 9, ndim = 1;
    uint64_t dim = 1;
    os.write(reinterpret_cast<char*>(&code), 4);
    os.write(reinterpret_cast<char*>(&ndim), 4);
    os.write(reinterpret_cast<char*>(&dim), 8);
    os << '\0';
  }
  CHECK_THROWS_AS(read_tensor_file(path), IoError);
}

TEST_CASE("zero extents are rejected by file io") {
  Tensor t = Tensor::zeros({0, 2}, Dtype::Float32);
  CHECK_THROWS_AS(write_tensor_file(temp_path("gc_t6.gct"), t), IoError);
}

TEST_CASE("window count follows floor((T-24)/stride)+1") {
  TrafficMovie m24;
  m24.frames = Tensor::zeros({24, 16, 16, 9}, Dtype::Byte);
  CHECK(make_windows(m24, 1).size() == 1);

  TrafficMovie m288;
  m288.frames = Tensor::zeros({288, 16, 16, 9}, Dtype::Byte);
  CHECK(make_windows(m288, 12).size() == 23);

  TrafficMovie m23;
  m23.frames = Tensor::zeros({23, 16, 16, 9}, Dtype::Byte);
  CHECK_THROWS_AS(make_windows(m23, 1), ValidationError);
}

TEST_CASE("stride-1 windows tile the timeline without gaps") {
  TrafficMovie m;
  m.frames = Tensor::zeros({60, 16, 16, 9}, Dtype::Byte);
  auto windows = make_windows(m, 1);
  std::vector<bool> covered(static_cast<size_t>(60 - kInputFrames), false);
  for (const SampleWindow& w : windows)
    for (int f = 0; f < kInputFrames; ++f) covered[static_cast<size_t>(w.start + f)] = true;
  for (size_t i = 0; i < covered.size(); ++i) CHECK(covered[i]);
  CHECK(windows.front().start == 0);
  CHECK(windows.back().start == 60 - kWindowFrames);
}

TEST_CASE("window clocks wrap at the day boundary") {
  TrafficMovie m;
  m.frames = Tensor::zeros({2 * kFramesPerDay, 16, 16, 9}, Dtype::Byte);
  auto windows = make_windows(m, 100);
  for (const SampleWindow& w : windows) CHECK(w.clock == w.start % kFramesPerDay);
}

TEST_CASE("synthetic movies are bit-identical for the same seed") {
  SynthResult a = synth_generate(11, 16, 20, 1);
  SynthResult b = synth_generate(11, 16, 20, 1);
  CHECK(max_abs_diff(a.movie.frames, b.movie.frames) == 0.0);
  CHECK(max_abs_diff(a.static_map.channels, b.static_map.channels) == 0.0);
  SynthResult c = synth_generate(12, 16, 20, 1);
  CHECK(max_abs_diff(a.movie.frames, c.movie.frames) > 0.0);
}

TEST_CASE("off-road pixels carry zero in every channel of every frame") {
  SynthResult r = synth_generate(0, 32, 32, 1);
  auto stat = r.static_map.channels.u8();
  auto frames = r.movie.frames.u8();
  int64_t hw = 32 * 32;
  int checked = 0;
  for (int64_t p = 0; p < hw && checked < 40; ++p) {
    if (stat[static_cast<size_t>(p * kStaticChannels)] != 0) continue;  // road presence channel
    ++checked;
    for (int64_t t = 0; t < r.movie.t(); ++t)
      for (int c = 0; c < kMovieChannels; ++c)
        REQUIRE(frames[static_cast<size_t>((t * hw + p) * kMovieChannels + c)] == 0);
  }
  CHECK(checked > 0);
}

TEST_CASE("road fraction at threshold 5 stays in the regression band") {
  SynthResult r = synth_generate(0, 32, 32, 1);
  Tensor maxvol = compute_max_volume_map(r.movie);
  auto v = maxvol.f32();
  int64_t on = 0;
  for (float x : v)
    if (x >= 5.0f) ++on;
  double fraction = static_cast<double>(on) / static_cast<double>(v.size());
  MESSAGE("road fraction: " << fraction);
  CHECK(fraction >= 0.02);
  CHECK(fraction <= 0.40);
}

TEST_CASE("synthetic generator rejects degenerate dims") {
  CHECK_THROWS_AS(synth_generate(0, 8, 32, 1), ValidationError);
  CHECK_THROWS_AS(synth_generate(0, 32, 32, 0), ValidationError);
}

TEST_CASE("movie slicing preserves frames and clock shifting realigns windows") {
  SynthResult r = synth_generate(5, 16, 16, 1);
  TrafficMovie part = slice_movie(r.movie, 100, 164);
  CHECK(part.t() == 64);
  CHECK(part.frames.get({0, 3, 4, 0}) == r.movie.frames.get({100, 3, 4, 0}));
  auto windows = make_windows(part, 12);
  shift_clocks(windows, 100);
  for (const SampleWindow& w : windows)
    CHECK(w.clock == (w.start + 100) % kFramesPerDay);
}
