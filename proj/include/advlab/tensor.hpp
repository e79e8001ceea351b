#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <sstream>
#include <string>
#include <vector>

#include "advlab/errors.hpp"
#include "advlab/rng.hpp"

namespace advlab {

// Dense row-major f64 tensor. Images and gradients use NCHW order.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;

  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    data.assign(numel_of(shape), 0.0);
  }

  Tensor(std::vector<int> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    if (data.size() != numel_of(shape))
      throw ConfigError("tensor data length " + std::to_string(data.size()) +
                        " does not match shape " + shape_str());
  }

  static std::size_t numel_of(const std::vector<int>& s) {
    std::size_t n = 1;
    for (int d : s) {
      if (d <= 0) throw ConfigError("tensor dimensions must be positive");
      n *= static_cast<std::size_t>(d);
    }
    return n;
  }

  std::size_t numel() const { return data.size(); }
  int rank() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }

  double* ptr() { return data.data(); }
  const double* ptr() const { return data.data(); }

  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }

  // Flat offset helpers for the common ranks.
  std::size_t off2(int r, int c) const {
    return static_cast<std::size_t>(r) * static_cast<std::size_t>(dim(1)) +
           static_cast<std::size_t>(c);
  }
  std::size_t off3(int c, int h, int w) const {
    return (static_cast<std::size_t>(c) * static_cast<std::size_t>(dim(1)) +
            static_cast<std::size_t>(h)) *
               static_cast<std::size_t>(dim(2)) +
           static_cast<std::size_t>(w);
  }
  std::size_t off4(int n, int c, int h, int w) const {
    return ((static_cast<std::size_t>(n) * static_cast<std::size_t>(dim(1)) +
             static_cast<std::size_t>(c)) *
                static_cast<std::size_t>(dim(2)) +
            static_cast<std::size_t>(h)) *
               static_cast<std::size_t>(dim(3)) +
           static_cast<std::size_t>(w);
  }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }

  void fill(double v) { std::fill(data.begin(), data.end(), v); }

  std::string shape_str() const {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
      if (i) os << 'x';
      os << shape[i];
    }
    os << ']';
    return os.str();
  }

  // One image (C,H,W view copy) out of an NCHW batch.
  Tensor slice_image(int n) const {
    if (rank() != 4) throw ConfigError("slice_image requires an NCHW tensor, got " + shape_str());
    const std::size_t per = numel() / static_cast<std::size_t>(dim(0));
    Tensor out({dim(1), dim(2), dim(3)});
    std::copy(data.begin() + static_cast<std::ptrdiff_t>(per * static_cast<std::size_t>(n)),
              data.begin() + static_cast<std::ptrdiff_t>(per * static_cast<std::size_t>(n + 1)),
              out.data.begin());
    return out;
  }

  void store_image(int n, const Tensor& img) {
    const std::size_t per = numel() / static_cast<std::size_t>(dim(0));
    std::copy(img.data.begin(), img.data.end(),
              data.begin() + static_cast<std::ptrdiff_t>(per * static_cast<std::size_t>(n)));
  }
};

inline void require_finite(const Tensor& t, const char* context) {
  for (double v : t.data)
    if (!std::isfinite(v))
      throw InputError(std::string("non-finite value produced by ") + context);
}

inline double l1_norm(const Tensor& t) {
  double s = 0.0;
  for (double v : t.data) s += std::fabs(v);
  return s;
}

inline double l2_norm(const Tensor& t) {
  double s = 0.0;
  for (double v : t.data) s += v * v;
  return std::sqrt(s);
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i)
    m = std::max(m, std::fabs(a.data[i] - b.data[i]));
  return m;
}

inline void clamp01(Tensor& t) {
  for (double& v : t.data) v = std::min(1.0, std::max(0.0, v));
}

// Order-independent fingerprint over exact bit patterns.
inline std::uint64_t bits_fingerprint(const Tensor& t, std::uint64_t seed = 0x5AD5AD5AD5AD5ADull) {
  std::uint64_t h = rng::mix64(seed ^ static_cast<std::uint64_t>(t.numel()));
  for (int d : t.shape) h = rng::derive(h, static_cast<std::uint64_t>(d));
  for (double v : t.data) {
    std::uint64_t b;
    static_assert(sizeof(b) == sizeof(v));
    std::memcpy(&b, &v, sizeof(b));
    h = rng::mix64(h ^ b);
  }
  return h;
}

}  // namespace advlab
