#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <vector>

#include "stf/errors.hpp"
#include "stf/rng.hpp"

namespace stf {

// Process-wide accounting of live array bytes. Lets benchmarks report a
// resettable allocator-level peak instead of the OS high-water mark.
struct MemStats {
  static std::atomic<long long>& live() {
    static std::atomic<long long> v{0};
    return v;
  }
  static std::atomic<long long>& peak() {
    static std::atomic<long long> v{0};
    return v;
  }
  static void on_alloc(long long bytes) {
    const long long now = live().fetch_add(bytes) + bytes;
    long long prev = peak().load(std::memory_order_relaxed);
    while (prev < now &&
           !peak().compare_exchange_weak(prev, now, std::memory_order_relaxed)) {
    }
  }
  static void on_free(long long bytes) { live().fetch_sub(bytes); }
  static void reset_peak() { peak().store(live().load()); }
};

template <typename T>
struct TrackingAllocator {
  using value_type = T;
  TrackingAllocator() = default;
  template <typename U>
  TrackingAllocator(const TrackingAllocator<U>&) {}
  T* allocate(std::size_t n) {
    MemStats::on_alloc(static_cast<long long>(n * sizeof(T)));
    return static_cast<T*>(::operator new(n * sizeof(T)));
  }
  void deallocate(T* p, std::size_t n) {
    MemStats::on_free(static_cast<long long>(n * sizeof(T)));
    ::operator delete(p);
  }
  bool operator==(const TrackingAllocator&) const { return true; }
  bool operator!=(const TrackingAllocator&) const { return false; }
};

using Shape = std::vector<long>;

inline long shape_numel(const Shape& s) {
  long n = 1;
  for (long d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

// Row-major dense array of 64-bit floats.
class DenseArray {
 public:
  DenseArray() = default;
  explicit DenseArray(Shape shape)
      : shape_(std::move(shape)), data_(shape_numel(shape_), 0.0) {}
  DenseArray(Shape shape, std::initializer_list<double> values)
      : shape_(std::move(shape)), data_(values.begin(), values.end()) {
    if (static_cast<long>(data_.size()) != shape_numel(shape_))
      throw DimensionError("initializer size does not match shape");
  }

  static DenseArray zeros(Shape shape) { return DenseArray(std::move(shape)); }
  static DenseArray full(Shape shape, double v) {
    DenseArray a(std::move(shape));
    std::fill(a.data_.begin(), a.data_.end(), v);
    return a;
  }
  static DenseArray randn(Shape shape, Rng& rng, double stddev = 1.0) {
    DenseArray a(std::move(shape));
    for (auto& x : a.data_) x = stddev * rng.normal();
    return a;
  }
  static DenseArray rand_uniform(Shape shape, Rng& rng, double lo, double hi) {
    DenseArray a(std::move(shape));
    for (auto& x : a.data_) x = rng.uniform(lo, hi);
    return a;
  }

  const Shape& shape() const { return shape_; }
  long ndim() const { return static_cast<long>(shape_.size()); }
  long dim(long i) const { return shape_[static_cast<std::size_t>(i)]; }
  long numel() const { return static_cast<long>(data_.size()); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double& operator[](long i) { return data_[static_cast<std::size_t>(i)]; }
  double operator[](long i) const { return data_[static_cast<std::size_t>(i)]; }

  // 2-D accessors; the caller guarantees ndim()==2.
  double& operator()(long r, long c) {
    return data_[static_cast<std::size_t>(r * shape_[1] + c)];
  }
  double operator()(long r, long c) const {
    return data_[static_cast<std::size_t>(r * shape_[1] + c)];
  }

  void reshape(Shape shape) {
    if (shape_numel(shape) != numel())
      throw DimensionError("reshape changes element count: " + shape_str(shape_) +
                           " -> " + shape_str(shape));
    shape_ = std::move(shape);
  }

  DenseArray reshaped(Shape shape) const {
    DenseArray out = *this;
    out.reshape(std::move(shape));
    return out;
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const {
    for (double x : data_)
      if (!std::isfinite(x)) return false;
    return true;
  }

  double max_abs() const {
    double m = 0.0;
    for (double x : data_) m = std::max(m, std::fabs(x));
    return m;
  }

  double frob_norm() const {
    double s = 0.0;
    for (double x : data_) s += x * x;
    return std::sqrt(s);
  }

 private:
  Shape shape_;
  std::vector<double, TrackingAllocator<double>> data_;
};

// ---------------------------------------------------------------------------
// Raw matmul kernels. C is m x n. `acc` keeps existing C content.

inline void mm_nn(const double* a, const double* b, double* c, long m, long k,
                  long n, bool acc = false) {
  if (!acc) std::memset(c, 0, static_cast<std::size_t>(m * n) * sizeof(double));
  for (long i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (long p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (long j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C = A * B^T, A: m x k, B: n x k.
inline void mm_nt(const double* a, const double* b, double* c, long m, long k,
                  long n, bool acc = false) {
  for (long i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (long j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double s = 0.0;
      for (long p = 0; p < k; ++p) s += arow[p] * brow[p];
      crow[j] = acc ? crow[j] + s : s;
    }
  }
}

// C = A^T * B, A: k x m, B: k x n.
inline void mm_tn(const double* a, const double* b, double* c, long m, long k,
                  long n, bool acc = false) {
  if (!acc) std::memset(c, 0, static_cast<std::size_t>(m * n) * sizeof(double));
  for (long p = 0; p < k; ++p) {
    const double* arow = a + p * m;
    const double* brow = b + p * n;
    for (long i = 0; i < m; ++i) {
      const double av = arow[i];
      if (av == 0.0) continue;
      double* crow = c + i * n;
      for (long j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

inline DenseArray matmul_raw(const DenseArray& a, const DenseArray& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0))
    throw DimensionError("matmul shape mismatch: " + shape_str(a.shape()) + " * " +
                         shape_str(b.shape()));
  DenseArray c({a.dim(0), b.dim(1)});
  mm_nn(a.data(), b.data(), c.data(), a.dim(0), a.dim(1), b.dim(1));
  return c;
}

inline DenseArray transpose_raw(const DenseArray& a) {
  DenseArray t({a.dim(1), a.dim(0)});
  for (long i = 0; i < a.dim(0); ++i)
    for (long j = 0; j < a.dim(1); ++j) t(j, i) = a(i, j);
  return t;
}

}  // namespace stf
