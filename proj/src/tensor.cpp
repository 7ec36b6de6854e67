#include "gridcast/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <sstream>
#include <thread>

namespace gridcast {

const char* dtype_name(Dtype dt) {
  switch (dt) {
    case Dtype::Byte: return "byte";
    case Dtype::Float32: return "float32";
    case Dtype::Float64: return "float64";
    case Dtype::UInt64: return "uint64";
  }
  return "unknown";
}

size_t dtype_size(Dtype dt) {
  switch (dt) {
    case Dtype::Byte: return 1;
    case Dtype::Float32: return 4;
    case Dtype::Float64: return 8;
    case Dtype::UInt64: return 8;
  }
  throw ValidationError("unknown dtype code");
}

bool is_float_dtype(Dtype dt) {
  return dt == Dtype::Float32 || dt == Dtype::Float64;
}

int64_t dims_product(std::span<const int64_t> dims) {
  int64_t n = 1;
  for (int64_t d : dims) n *= d;
  return n;
}

std::string dims_to_string(std::span<const int64_t> dims) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < dims.size(); ++i) {
    if (i) os << ",";
    os << dims[i];
  }
  os << ")";
  return os.str();
}

void Tensor::check_dims_valid() const {
  for (int64_t d : dims_) {
    if (d < 0) throw ValidationError("negative tensor extent in " + dims_to_string(dims_));
  }
}

int64_t Tensor::numel() const { return dims_product(dims_); }

Tensor Tensor::zeros(std::vector<int64_t> dims, Dtype dt) {
  Tensor t;
  t.dims_ = std::move(dims);
  t.dtype_ = dt;
  t.check_dims_valid();
  size_t n = static_cast<size_t>(t.numel());
  switch (dt) {
    case Dtype::Byte: t.data_ = std::vector<uint8_t>(n, 0); break;
    case Dtype::Float32: t.data_ = std::vector<float>(n, 0.0f); break;
    case Dtype::Float64: t.data_ = std::vector<double>(n, 0.0); break;
    case Dtype::UInt64: t.data_ = std::vector<uint64_t>(n, 0); break;
  }
  return t;
}

Tensor Tensor::full(std::vector<int64_t> dims, double value, Dtype dt) {
  Tensor t = zeros(std::move(dims), dt);
  t.fill(value);
  return t;
}

Tensor Tensor::scalar(double value, Dtype dt) { return full({1}, value, dt); }

Tensor Tensor::from_f32(std::vector<int64_t> dims, std::vector<float> data) {
  Tensor t;
  t.dims_ = std::move(dims);
  t.dtype_ = Dtype::Float32;
  t.check_dims_valid();
  if (static_cast<int64_t>(data.size()) != t.numel())
    throw ValidationError("buffer length does not match dims " + dims_to_string(t.dims_));
  t.data_ = std::move(data);
  return t;
}

Tensor Tensor::from_f64(std::vector<int64_t> dims, std::vector<double> data) {
  Tensor t;
  t.dims_ = std::move(dims);
  t.dtype_ = Dtype::Float64;
  t.check_dims_valid();
  if (static_cast<int64_t>(data.size()) != t.numel())
    throw ValidationError("buffer length does not match dims " + dims_to_string(t.dims_));
  t.data_ = std::move(data);
  return t;
}

Tensor Tensor::from_bytes(std::vector<int64_t> dims, std::vector<uint8_t> data) {
  Tensor t;
  t.dims_ = std::move(dims);
  t.dtype_ = Dtype::Byte;
  t.check_dims_valid();
  if (static_cast<int64_t>(data.size()) != t.numel())
    throw ValidationError("buffer length does not match dims " + dims_to_string(t.dims_));
  t.data_ = std::move(data);
  return t;
}

Tensor Tensor::from_u64(std::vector<int64_t> dims, std::vector<uint64_t> data) {
  Tensor t;
  t.dims_ = std::move(dims);
  t.dtype_ = Dtype::UInt64;
  t.check_dims_valid();
  if (static_cast<int64_t>(data.size()) != t.numel())
    throw ValidationError("buffer length does not match dims " + dims_to_string(t.dims_));
  t.data_ = std::move(data);
  return t;
}

namespace {

template <class T>
std::span<T> typed_span(std::variant<std::vector<uint8_t>, std::vector<float>,
                                     std::vector<double>, std::vector<uint64_t>>& v,
                        Dtype have, Dtype want) {
  if (have != want)
    throw ValidationError(std::string("tensor is ") + dtype_name(have) + ", expected " +
                          dtype_name(want));
  return std::span<T>(std::get<std::vector<T>>(v));
}

template <class T>
std::span<const T> typed_span(const std::variant<std::vector<uint8_t>, std::vector<float>,
                                                 std::vector<double>, std::vector<uint64_t>>& v,
                              Dtype have, Dtype want) {
  if (have != want)
    throw ValidationError(std::string("tensor is ") + dtype_name(have) + ", expected " +
                          dtype_name(want));
  return std::span<const T>(std::get<std::vector<T>>(v));
}

}  // namespace

std::span<uint8_t> Tensor::u8() { return typed_span<uint8_t>(data_, dtype_, Dtype::Byte); }
std::span<const uint8_t> Tensor::u8() const {
  return typed_span<uint8_t>(data_, dtype_, Dtype::Byte);
}
std::span<float> Tensor::f32() { return typed_span<float>(data_, dtype_, Dtype::Float32); }
std::span<const float> Tensor::f32() const {
  return typed_span<float>(data_, dtype_, Dtype::Float32);
}
std::span<double> Tensor::f64() { return typed_span<double>(data_, dtype_, Dtype::Float64); }
std::span<const double> Tensor::f64() const {
  return typed_span<double>(data_, dtype_, Dtype::Float64);
}
std::span<uint64_t> Tensor::u64() { return typed_span<uint64_t>(data_, dtype_, Dtype::UInt64); }
std::span<const uint64_t> Tensor::u64() const {
  return typed_span<uint64_t>(data_, dtype_, Dtype::UInt64);
}

int64_t Tensor::offset(std::initializer_list<int64_t> idx) const {
  if (static_cast<int>(idx.size()) != rank())
    throw ValidationError("index rank mismatch for " + dims_to_string(dims_));
  int64_t off = 0;
  int i = 0;
  for (int64_t v : idx) {
    if (v < 0 || v >= dims_[static_cast<size_t>(i)])
      throw ValidationError("index out of range for " + dims_to_string(dims_));
    off = off * dims_[static_cast<size_t>(i)] + v;
    ++i;
  }
  return off;
}

double Tensor::get(std::initializer_list<int64_t> idx) const {
  int64_t off = offset(idx);
  switch (dtype_) {
    case Dtype::Byte: return static_cast<double>(u8()[static_cast<size_t>(off)]);
    case Dtype::Float32: return static_cast<double>(f32()[static_cast<size_t>(off)]);
    case Dtype::Float64: return f64()[static_cast<size_t>(off)];
    case Dtype::UInt64: return static_cast<double>(u64()[static_cast<size_t>(off)]);
  }
  throw ValidationError("unknown dtype");
}

void Tensor::set(std::initializer_list<int64_t> idx, double value) {
  int64_t off = offset(idx);
  switch (dtype_) {
    case Dtype::Byte:
      u8()[static_cast<size_t>(off)] =
          static_cast<uint8_t>(std::clamp(std::llround(value), 0ll, 255ll));
      break;
    case Dtype::Float32: f32()[static_cast<size_t>(off)] = static_cast<float>(value); break;
    case Dtype::Float64: f64()[static_cast<size_t>(off)] = value; break;
    case Dtype::UInt64:
      u64()[static_cast<size_t>(off)] = static_cast<uint64_t>(std::llround(value));
      break;
  }
}

double Tensor::item() const {
  if (numel() != 1) throw ValidationError("item() on non-scalar tensor " + dims_to_string(dims_));
  switch (dtype_) {
    case Dtype::Byte: return static_cast<double>(u8()[0]);
    case Dtype::Float32: return static_cast<double>(f32()[0]);
    case Dtype::Float64: return f64()[0];
    case Dtype::UInt64: return static_cast<double>(u64()[0]);
  }
  throw ValidationError("unknown dtype");
}

void Tensor::fill(double value) {
  switch (dtype_) {
    case Dtype::Byte: {
      auto s = u8();
      uint8_t b = static_cast<uint8_t>(std::clamp(std::llround(value), 0ll, 255ll));
      std::fill(s.begin(), s.end(), b);
      break;
    }
    case Dtype::Float32: {
      auto s = f32();
      std::fill(s.begin(), s.end(), static_cast<float>(value));
      break;
    }
    case Dtype::Float64: {
      auto s = f64();
      std::fill(s.begin(), s.end(), value);
      break;
    }
    case Dtype::UInt64: {
      auto s = u64();
      std::fill(s.begin(), s.end(), static_cast<uint64_t>(std::llround(value)));
      break;
    }
  }
}

Tensor Tensor::astype(Dtype dt) const {
  if (dt == dtype_) return *this;
  Tensor out = Tensor::zeros(dims_, dt);
  int64_t n = numel();
  auto read = [&](int64_t i) -> double {
    switch (dtype_) {
      case Dtype::Byte: return static_cast<double>(u8()[static_cast<size_t>(i)]);
      case Dtype::Float32: return static_cast<double>(f32()[static_cast<size_t>(i)]);
      case Dtype::Float64: return f64()[static_cast<size_t>(i)];
      case Dtype::UInt64: return static_cast<double>(u64()[static_cast<size_t>(i)]);
    }
    return 0.0;
  };
  switch (dt) {
    case Dtype::Byte: {
      auto s = out.u8();
      for (int64_t i = 0; i < n; ++i)
        s[static_cast<size_t>(i)] =
            static_cast<uint8_t>(std::clamp(std::llround(read(i)), 0ll, 255ll));
      break;
    }
    case Dtype::Float32: {
      auto s = out.f32();
      for (int64_t i = 0; i < n; ++i) s[static_cast<size_t>(i)] = static_cast<float>(read(i));
      break;
    }
    case Dtype::Float64: {
      auto s = out.f64();
      for (int64_t i = 0; i < n; ++i) s[static_cast<size_t>(i)] = read(i);
      break;
    }
    case Dtype::UInt64: {
      auto s = out.u64();
      for (int64_t i = 0; i < n; ++i)
        s[static_cast<size_t>(i)] = static_cast<uint64_t>(std::llround(read(i)));
      break;
    }
  }
  return out;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (!a.same_dims(b))
    throw ValidationError("max_abs_diff dims mismatch " + dims_to_string(a.dims()) + " vs " +
                          dims_to_string(b.dims()));
  double m = 0.0;
  int64_t n = a.numel();
  auto read = [](const Tensor& t, int64_t i) {
    switch (t.dtype()) {
      case Dtype::Byte: return static_cast<double>(t.u8()[static_cast<size_t>(i)]);
      case Dtype::Float32: return static_cast<double>(t.f32()[static_cast<size_t>(i)]);
      case Dtype::Float64: return t.f64()[static_cast<size_t>(i)];
      case Dtype::UInt64: return static_cast<double>(t.u64()[static_cast<size_t>(i)]);
    }
    return 0.0;
  };
  for (int64_t i = 0; i < n; ++i) m = std::max(m, std::abs(read(a, i) - read(b, i)));
  return m;
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

int64_t Rng::uniform_int(int64_t lo, int64_t hi) {
  if (hi < lo) throw ValidationError("uniform_int: empty range");
  uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
  return lo + static_cast<int64_t>(next_u64() % span);
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = 0.0;
  do {
    u1 = uniform();
  } while (u1 <= 1e-300);
  double u2 = uniform();
  double r = std::sqrt(-2.0 * std::log(u1));
  double theta = 2.0 * 3.14159265358979323846 * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

int worker_threads() {
  static int n = [] {
    const char* env = std::getenv("GRIDCAST_THREADS");
    if (env != nullptr) {
      int v = std::atoi(env);
      if (v >= 1) return v;
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
  }();
  return n;
}

void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn) {
  int workers = worker_threads();
  if (workers <= 1 || n < 2) {
    if (n > 0) fn(0, n);
    return;
  }
  int64_t k = std::min<int64_t>(workers, n);
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(k - 1));
  int64_t chunk = (n + k - 1) / k;
  for (int64_t w = 1; w < k; ++w) {
    int64_t lo = w * chunk;
    int64_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&fn, lo, hi] { fn(lo, hi); });
  }
  fn(0, std::min(n, chunk));
  for (auto& t : pool) t.join();
}

}  // namespace gridcast
