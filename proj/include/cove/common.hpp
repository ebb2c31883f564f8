#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cove {

// Error taxonomy mirrored by the CLI exit codes: config 2, data 3, divergence 4.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using UserIndex = std::uint32_t;
using ItemIndex = std::uint32_t;

// Sentinel for users outside the training catalog (cold-start service path).
inline constexpr UserIndex kColdUser = std::numeric_limits<UserIndex>::max();

/// Deterministic RNG. mt19937_64 with hand-rolled output transforms so that
/// streams are reproducible independent of the standard library's
/// distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next() { return gen_(); }

  // [0, 1)
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // [0, n)
  std::uint64_t below(std::uint64_t n) {
    // rejection sampling to avoid modulo bias
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x = gen_();
    while (x >= limit) x = gen_();
    return x % n;
  }

  bool coin() { return (gen_() >> 63) != 0; }

 private:
  std::mt19937_64 gen_;
};

// ---- small dense kernels (double accumulation over float32 storage) ----

inline double dot(std::span<const float> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * b[i];
  return s;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// y += alpha * x
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline void axpy(double alpha, std::span<const float> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * static_cast<double>(x[i]);
}

// out = W x, W row-major (rows x cols), x of length cols
inline void matvec(std::span<const float> w, std::size_t rows, std::size_t cols,
                   std::span<const double> x, std::span<double> out) {
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    const float* row = w.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) s += static_cast<double>(row[c]) * x[c];
    out[r] = s;
  }
}

// out += W^T y, W row-major (rows x cols), y of length rows, out of length cols
inline void matvec_t_add(std::span<const float> w, std::size_t rows, std::size_t cols,
                         std::span<const double> y, std::span<double> out) {
  for (std::size_t r = 0; r < rows; ++r) {
    const float* row = w.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) out[c] += static_cast<double>(row[c]) * y[r];
  }
}

// grad(W) += y x^T, accumulated into a row-major double buffer
inline void outer_add(std::span<const double> y, std::span<const double> x,
                      std::span<double> gw) {
  const std::size_t cols = x.size();
  for (std::size_t r = 0; r < y.size(); ++r) {
    double* row = gw.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) row[c] += y[r] * x[c];
  }
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// log(1 + exp(x)) without overflow; -log(sigmoid(x)) == softplus(-x)
inline double softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

inline bool all_finite(std::span<const double> v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace cove
