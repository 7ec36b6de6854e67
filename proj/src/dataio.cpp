#include "gridcast/dataio.hpp"

#include <cstring>
#include <fstream>

namespace gridcast {

namespace {

constexpr char kMagic[4] = {0x47, 0x43, 0x54, 0x31};  // "GCT1"

template <class T>
void write_le(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_le(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw IoError("tensor file truncated while reading header");
  return v;
}

}  // namespace

void write_tensor(std::ostream& os, const Tensor& t) {
  for (int64_t d : t.dims()) {
    if (d < 1) throw IoError("tensor file dims must each be >= 1, got " + dims_to_string(t.dims()));
  }
  if (t.rank() < 1) throw IoError("tensor file requires rank >= 1");
  os.write(kMagic, 4);
  write_le<uint32_t>(os, static_cast<uint32_t>(t.dtype()));
  write_le<uint32_t>(os, static_cast<uint32_t>(t.rank()));
  for (int64_t d : t.dims()) write_le<uint64_t>(os, static_cast<uint64_t>(d));
  size_t bytes = static_cast<size_t>(t.numel()) * dtype_size(t.dtype());
  const char* payload = nullptr;
  switch (t.dtype()) {
    case Dtype::Byte: payload = reinterpret_cast<const char*>(t.u8().data()); break;
    case Dtype::Float32: payload = reinterpret_cast<const char*>(t.f32().data()); break;
    case Dtype::Float64: payload = reinterpret_cast<const char*>(t.f64().data()); break;
    case Dtype::UInt64: payload = reinterpret_cast<const char*>(t.u64().data()); break;
  }
  os.write(payload, static_cast<std::streamsize>(bytes));
  if (!os) throw IoError("failed to write tensor payload");
}

Tensor read_tensor(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is) throw IoError("tensor file truncated while reading magic");
  if (std::memcmp(magic, kMagic, 4) != 0) throw IoError("bad magic, not a tensor file");
  uint32_t code = read_le<uint32_t>(is);
  if (code > 3) throw IoError("unknown dtype code " + std::to_string(code));
  Dtype dt = static_cast<Dtype>(code);
  uint32_t ndim = read_le<uint32_t>(is);
  if (ndim < 1 || ndim > 32) throw IoError("implausible tensor rank " + std::to_string(ndim));
  std::vector<int64_t> dims(ndim);
  for (uint32_t i = 0; i < ndim; ++i) {
    uint64_t d = read_le<uint64_t>(is);
    if (d < 1) throw IoError("tensor file dims must each be >= 1");
    dims[i] = static_cast<int64_t>(d);
  }
  Tensor t = Tensor::zeros(dims, dt);
  size_t bytes = static_cast<size_t>(t.numel()) * dtype_size(dt);
  char* payload = nullptr;
  switch (dt) {
    case Dtype::Byte: payload = reinterpret_cast<char*>(t.u8().data()); break;
    case Dtype::Float32: payload = reinterpret_cast<char*>(t.f32().data()); break;
    case Dtype::Float64: payload = reinterpret_cast<char*>(t.f64().data()); break;
    case Dtype::UInt64: payload = reinterpret_cast<char*>(t.u64().data()); break;
  }
  is.read(payload, static_cast<std::streamsize>(bytes));
  if (static_cast<size_t>(is.gcount()) != bytes) throw IoError("tensor payload truncated");
  return t;
}

void write_tensor_file(const std::string& path, const Tensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);
  write_tensor(os, t);
  os.flush();
  if (!os) throw IoError("write failed: " + path);
}

Tensor read_tensor_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);
  return read_tensor(is);
}

void write_tensor_records(const std::string& path, const std::vector<Tensor>& ts) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);
  for (const Tensor& t : ts) write_tensor(os, t);
  os.flush();
  if (!os) throw IoError("write failed: " + path);
}

std::vector<Tensor> read_tensor_records(const std::string& path, size_t expect_count) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);
  std::vector<Tensor> out;
  while (true) {
    is.peek();
    if (is.eof()) break;
    out.push_back(read_tensor(is));
  }
  if (expect_count != 0 && out.size() != expect_count)
    throw IoError("expected " + std::to_string(expect_count) + " records in " + path + ", found " +
                  std::to_string(out.size()));
  return out;
}

void TrafficMovie::validate() const {
  if (frames.rank() != 4 || frames.dim(3) != kMovieChannels)
    throw ValidationError("traffic movie must be (T,H,W,9), got " +
                          dims_to_string(frames.dims()));
  if (frames.dtype() != Dtype::Byte) throw ValidationError("traffic movie must be byte-valued");
}

std::vector<SampleWindow> make_windows(const TrafficMovie& movie, int64_t stride) {
  movie.validate();
  if (stride < 1) throw ValidationError("window stride must be positive");
  int64_t t = movie.t();
  if (t < kWindowFrames)
    throw ValidationError("movie has " + std::to_string(t) + " frames; need at least " +
                          std::to_string(kWindowFrames) + " for one window");
  std::vector<SampleWindow> out;
  for (int64_t s = 0; s + kWindowFrames <= t; s += stride)
    out.push_back({s, static_cast<int>(s % kFramesPerDay)});
  return out;
}

TrafficMovie slice_movie(const TrafficMovie& movie, int64_t t0, int64_t t1) {
  movie.validate();
  if (t0 < 0 || t1 > movie.t() || t0 >= t1)
    throw ValidationError("invalid movie slice [" + std::to_string(t0) + "," +
                          std::to_string(t1) + ")");
  int64_t h = movie.height(), w = movie.width();
  Tensor frames = Tensor::zeros({t1 - t0, h, w, kMovieChannels}, Dtype::Byte);
  auto src = movie.frames.u8();
  auto dst = frames.u8();
  int64_t frame_bytes = h * w * kMovieChannels;
  std::copy_n(src.data() + t0 * frame_bytes, (t1 - t0) * frame_bytes, dst.data());
  TrafficMovie out;
  out.frames = std::move(frames);
  return out;
}

void shift_clocks(std::vector<SampleWindow>& windows, int64_t clock_offset) {
  for (SampleWindow& w : windows)
    w.clock = static_cast<int>((w.start + clock_offset) % kFramesPerDay);
}

}  // namespace gridcast
