#pragma once

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <vector>

#include "advlab/tensor.hpp"

namespace advlab::dct {

// Orthonormal DCT-II basis for one dimension: row k holds
// s_k * cos(pi * (2n + 1) * k / (2N)) with s_0 = sqrt(1/N), s_k = sqrt(2/N).
// Orthonormal means the inverse is the transpose and Parseval holds.
struct Basis {
  int n;
  std::vector<double> fwd;  // n x n, row-major; fwd[k*n + j]

  explicit Basis(int size) : n(size), fwd(static_cast<std::size_t>(size) * size) {
    const double pi = 3.14159265358979323846264338328;
    for (int k = 0; k < n; ++k) {
      const double s = (k == 0) ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
      for (int j = 0; j < n; ++j)
        fwd[static_cast<std::size_t>(k) * n + j] =
            s * std::cos(pi * (2.0 * j + 1.0) * k / (2.0 * n));
    }
  }
};

inline const Basis& basis_for(int n) {
  static std::mutex mu;
  static std::map<int, std::unique_ptr<Basis>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, std::make_unique<Basis>(n)).first;
  return *it->second;
}

namespace detail {

// out = B * in for an h x w block, applied along rows (transform=true) or the
// inverse (transpose) direction.
inline void rows_apply(const Basis& b, const double* in, double* out, int rows, int cols,
                       bool inverse) {
  // Transform each row of length cols with basis b (b.n == cols).
  for (int r = 0; r < rows; ++r) {
    const double* src = in + static_cast<std::size_t>(r) * cols;
    double* dst = out + static_cast<std::size_t>(r) * cols;
    for (int k = 0; k < cols; ++k) {
      double acc = 0.0;
      if (!inverse) {
        const double* row = b.fwd.data() + static_cast<std::size_t>(k) * cols;
        for (int j = 0; j < cols; ++j) acc += row[j] * src[j];
      } else {
        for (int j = 0; j < cols; ++j) acc += b.fwd[static_cast<std::size_t>(j) * cols + k] * src[j];
      }
      dst[k] = acc;
    }
  }
}

inline void cols_apply(const Basis& b, const double* in, double* out, int rows, int cols,
                       bool inverse) {
  // Transform each column of length rows with basis b (b.n == rows).
  for (int k = 0; k < rows; ++k) {
    for (int c = 0; c < cols; ++c) {
      double acc = 0.0;
      for (int j = 0; j < rows; ++j) {
        const double coef = inverse ? b.fwd[static_cast<std::size_t>(j) * rows + k]
                                    : b.fwd[static_cast<std::size_t>(k) * rows + j];
        acc += coef * in[static_cast<std::size_t>(j) * cols + c];
      }
      out[static_cast<std::size_t>(k) * cols + c] = acc;
    }
  }
}

inline void transform2(const double* in, double* out, int h, int w, bool inverse) {
  const Basis& bh = basis_for(h);
  const Basis& bw = basis_for(w);
  std::vector<double> tmp(static_cast<std::size_t>(h) * w);
  rows_apply(bw, in, tmp.data(), h, w, inverse);
  cols_apply(bh, tmp.data(), out, h, w, inverse);
}

}  // namespace detail

// 2-D orthonormal type-II DCT over a raw h x w plane.
inline void dct2_plane(const double* in, double* out, int h, int w) {
  detail::transform2(in, out, h, w, /*inverse=*/false);
}

inline void idct2_plane(const double* in, double* out, int h, int w) {
  detail::transform2(in, out, h, w, /*inverse=*/true);
}

inline Tensor dct2(const Tensor& image) {
  if (image.rank() != 2) throw ConfigError("dct2 expects an HxW tensor, got " + image.shape_str());
  Tensor out(image.shape);
  dct2_plane(image.ptr(), out.ptr(), image.dim(0), image.dim(1));
  require_finite(out, "dct2");
  return out;
}

inline Tensor idct2(const Tensor& coeffs) {
  if (coeffs.rank() != 2)
    throw ConfigError("idct2 expects an HxW tensor, got " + coeffs.shape_str());
  Tensor out(coeffs.shape);
  idct2_plane(coeffs.ptr(), out.ptr(), coeffs.dim(0), coeffs.dim(1));
  require_finite(out, "idct2");
  return out;
}

}  // namespace advlab::dct
