#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace gridcast {

// Exit-code classes for the CLI: validation/shape -> 1, I/O -> 2, numeric -> 3.
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Codes double as the on-disk dtype tags of the tensor container.
enum class Dtype : uint32_t { Byte = 0, Float32 = 1, Float64 = 2, UInt64 = 3 };

const char* dtype_name(Dtype dt);
size_t dtype_size(Dtype dt);
bool is_float_dtype(Dtype dt);

// Dense row-major tensor with a runtime dtype. Extents of zero are legal in
// memory (empty graphs produce (0,C) matrices) but rejected by file I/O.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int64_t> dims, Dtype dt);
  static Tensor full(std::vector<int64_t> dims, double value, Dtype dt);
  static Tensor scalar(double value, Dtype dt);
  static Tensor from_f32(std::vector<int64_t> dims, std::vector<float> data);
  static Tensor from_f64(std::vector<int64_t> dims, std::vector<double> data);
  static Tensor from_bytes(std::vector<int64_t> dims, std::vector<uint8_t> data);
  static Tensor from_u64(std::vector<int64_t> dims, std::vector<uint64_t> data);

  const std::vector<int64_t>& dims() const { return dims_; }
  int64_t dim(int i) const { return dims_.at(static_cast<size_t>(i)); }
  int rank() const { return static_cast<int>(dims_.size()); }
  int64_t numel() const;
  Dtype dtype() const { return dtype_; }
  bool same_dims(const Tensor& other) const { return dims_ == other.dims_; }

  std::span<uint8_t> u8();
  std::span<const uint8_t> u8() const;
  std::span<float> f32();
  std::span<const float> f32() const;
  std::span<double> f64();
  std::span<const double> f64() const;
  std::span<uint64_t> u64();
  std::span<const uint64_t> u64() const;

  // Element access through a double lens; cold paths and tests only.
  double get(std::initializer_list<int64_t> idx) const;
  void set(std::initializer_list<int64_t> idx, double value);
  double item() const;  // scalar tensors

  Tensor astype(Dtype dt) const;  // float->byte saturates to [0,255]
  void fill(double value);

  int64_t offset(std::initializer_list<int64_t> idx) const;

 private:
  std::vector<int64_t> dims_;
  Dtype dtype_ = Dtype::Float32;
  std::variant<std::vector<uint8_t>, std::vector<float>, std::vector<double>,
               std::vector<uint64_t>>
      data_;

  void check_dims_valid() const;
};

int64_t dims_product(std::span<const int64_t> dims);
std::string dims_to_string(std::span<const int64_t> dims);

// Max |a-b| over all elements, computed in double. Dims must match.
double max_abs_diff(const Tensor& a, const Tensor& b);

// Deterministic RNG: mt19937_64 engine (bit-stable per the standard) with
// hand-rolled transforms so sequences do not depend on the stdlib vendor.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}
  uint64_t next_u64() { return engine_(); }
  double uniform();                             // [0,1)
  double uniform(double lo, double hi);         // [lo,hi)
  int64_t uniform_int(int64_t lo, int64_t hi);  // inclusive bounds
  double normal();                              // Box-Muller

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Caps worker threads used by the kernels; reads GRIDCAST_THREADS once.
int worker_threads();

// Runs fn over [0,n) in contiguous chunks, one per worker. Writes must be
// disjoint per index; chunking never changes results, only wall time.
void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn);

}  // namespace gridcast
