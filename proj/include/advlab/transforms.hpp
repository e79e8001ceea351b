#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "advlab/dct.hpp"
#include "advlab/errors.hpp"
#include "advlab/rng.hpp"
#include "advlab/tensor.hpp"

namespace advlab::transforms {

enum class Kind {
  kIdentity,
  kTranslation,
  kBlockShuffle,
  kRotation,
  kNoise,
  kResize,
  kAdmix,
  kSpectrum,
  kBsr,
};

inline const char* kind_name(Kind k) {
  switch (k) {
    case Kind::kIdentity: return "identity";
    case Kind::kTranslation: return "translation";
    case Kind::kBlockShuffle: return "block_shuffle";
    case Kind::kRotation: return "rotation";
    case Kind::kNoise: return "noise";
    case Kind::kResize: return "resize";
    case Kind::kAdmix: return "admix";
    case Kind::kSpectrum: return "spectrum";
    case Kind::kBsr: return "bsr";
  }
  return "?";
}

inline Kind kind_from_name(const std::string& s) {
  for (Kind k : {Kind::kIdentity, Kind::kTranslation, Kind::kBlockShuffle, Kind::kRotation,
                 Kind::kNoise, Kind::kResize, Kind::kAdmix, Kind::kSpectrum, Kind::kBsr})
    if (s == kind_name(k)) return k;
  throw ConfigError("unknown transform kind '" + s + "'");
}

inline int slot_count(Kind k) {
  if (k == Kind::kIdentity) return 0;
  if (k == Kind::kBsr) return 2;
  return 1;
}

// Canonical strength grid for one parameter slot, plus the wider range a
// spec may legally take (the grid extended to its degenerate identity end:
// zero strength for most kinds, factor 1.0 for resize).
struct GridInfo {
  double lo = 0.0, hi = 0.0, step = 0.0;
  bool integral = false;
  double legal_lo = 0.0, legal_hi = 0.0;

  int points() const { return static_cast<int>(std::llround((hi - lo) / step)) + 1; }

  std::vector<double> values() const {
    std::vector<double> v;
    const int m = points();
    v.reserve(m);
    for (int i = 0; i < m; ++i) {
      // Pin the endpoint: accumulated steps can overshoot hi by one ULP,
      // which would put the grid's own top outside its legal range.
      double z = i == m - 1 ? hi : lo + i * step;
      if (integral) z = std::round(z);
      v.push_back(z);
    }
    return v;
  }

  std::string describe() const {
    auto fmt = [](double x) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%g", x);
      return std::string(buf);
    };
    return fmt(lo) + ".." + fmt(hi) + " step " + fmt(step);
  }
};

inline const GridInfo& grid_for(Kind k, int slot = 0) {
  static const GridInfo translation{20, 220, 40, false, 0, 220};
  static const GridInfo cuts{2, 10, 1, true, 0, 10};
  static const GridInfo rotation{10, 160, 30, false, 0, 160};
  static const GridInfo noise{0.02, 0.50, 0.02, false, 0, 0.50};
  static const GridInfo resize{0.1, 0.9, 0.1, false, 0.1, 1.0};
  static const GridInfo admix{0.10, 0.50, 0.02, false, 0, 0.50};
  static const GridInfo spectrum{0.3, 0.9, 0.1, false, 0, 0.9};
  static const GridInfo bsr_b{1, 9, 1, true, 1, 9};
  static const GridInfo bsr_r{20, 160, 20, false, 0, 160};
  if (slot < 0 || slot >= slot_count(k))
    throw ConfigError(std::string("kind ") + kind_name(k) + " has no parameter slot " +
                      std::to_string(slot));
  switch (k) {
    case Kind::kTranslation: return translation;
    case Kind::kBlockShuffle: return cuts;
    case Kind::kRotation: return rotation;
    case Kind::kNoise: return noise;
    case Kind::kResize: return resize;
    case Kind::kAdmix: return admix;
    case Kind::kSpectrum: return spectrum;
    case Kind::kBsr: return slot == 0 ? bsr_b : bsr_r;
    case Kind::kIdentity: break;
  }
  throw ConfigError("identity has no parameter grid");
}

// Reserved grid for a style-mixing strength parameter (1.2..4.0 step 0.4).
// No executable kind backs it here — applying it would need an external
// pretrained style network — so it is recorded as data only.
inline constexpr double kStyleMixLo = 1.2;
inline constexpr double kStyleMixHi = 4.0;
inline constexpr double kStyleMixStep = 0.4;

// A transform family at a chosen strength: the distribution the attack draws
// from. Geometry (c,h,w) fixes the size of sampled fields and permutations.
struct TransformSpec {
  Kind kind = Kind::kIdentity;
  std::vector<double> z;  // one entry; bsr takes [b, r]; identity takes none
  std::shared_ptr<const Tensor> reference_pool;  // admix partners, [M,C,H,W]
  int c = 1, h = 0, w = 0;
  double spectrum_sigma = 16.0 / 255.0;

  void validate() const {
    if (c <= 0 || h <= 0 || w <= 0)
      throw ConfigError(std::string(kind_name(kind)) + " spec needs positive image geometry");
    const int slots = slot_count(kind);
    if (static_cast<int>(z.size()) != slots)
      throw ConfigError(std::string(kind_name(kind)) + " takes " + std::to_string(slots) +
                        " parameter(s), got " + std::to_string(z.size()));
    for (int s = 0; s < slots; ++s) {
      const GridInfo& g = grid_for(kind, s);
      const double v = z[s];
      if (!(v >= g.legal_lo && v <= g.legal_hi))
        throw ConfigError(std::string(kind_name(kind)) + " z[" + std::to_string(s) + "]=" +
                          std::to_string(v) + " outside legal range [" +
                          std::to_string(g.legal_lo) + ", " + std::to_string(g.legal_hi) +
                          "] (canonical grid " + g.describe() + ")");
      if (g.integral && std::abs(v - std::round(v)) > 1e-9)
        throw ConfigError(std::string(kind_name(kind)) + " z[" + std::to_string(s) +
                          "] must be an integer (canonical grid " + g.describe() + "), got " +
                          std::to_string(v));
    }
    if (kind == Kind::kAdmix) {
      if (!reference_pool || reference_pool->numel() == 0)
        throw ConfigError("admix requires a non-empty reference pool");
      const Tensor& p = *reference_pool;
      if (p.rank() != 4 || p.dim(1) != c || p.dim(2) != h || p.dim(3) != w)
        throw ConfigError("admix reference pool shape " + p.shape_str() +
                          " does not match image geometry");
    }
    if (kind == Kind::kSpectrum && spectrum_sigma < 0)
      throw ConfigError("spectrum sigma must be >= 0");
  }
};

// One concrete draw theta: everything apply_transform needs, fully decided.
struct TransformDraw {
  Kind kind = Kind::kIdentity;
  int c = 1, h = 0, w = 0;
  double ty = 0.0, tx = 0.0;                     // translation offsets
  std::vector<int> rowmap, colmap;               // band permutation pixel maps
  double angle_deg = 0.0;                        // rotation
  std::vector<double> field;                     // noise field / spectrum xi
  std::vector<double> mask;                      // spectrum M
  int rh = 0, rw = 0, oy = 0, ox = 0;            // resize geometry
  int partner = -1;                              // admix pool index
  double eta = 0.0;                              // admix ratio
  std::shared_ptr<const Tensor> pool;            // admix partners
  int blocks = 0;                                 // bsr grid size b
  std::vector<int> row_starts, col_starts;       // bsr block bounds after shuffle
  std::vector<double> block_angles;              // bsr per-block angles
};

namespace detail {

// tensor_split boundaries: `parts` contiguous chunks of `total`, the first
// total % parts chunks one element longer. Returns parts+1 start offsets.
inline std::vector<int> split_starts(int total, int parts) {
  std::vector<int> starts(parts + 1, 0);
  const int base = total / parts, extra = total % parts;
  for (int i = 0; i < parts; ++i) starts[i + 1] = starts[i] + base + (i < extra ? 1 : 0);
  return starts;
}

// Pixel index map realizing a band permutation: output row y reads input row
// map[y], where bands are concatenated in permuted order.
inline std::vector<int> band_map(int total, const std::vector<int>& perm) {
  const int parts = static_cast<int>(perm.size());
  const std::vector<int> starts = split_starts(total, parts);
  std::vector<int> map;
  map.reserve(total);
  for (int i = 0; i < parts; ++i) {
    const int src = perm[i];
    for (int r = starts[src]; r < starts[src + 1]; ++r) map.push_back(r);
  }
  return map;
}

// Sizes of the permuted bands in output order, as slot boundaries.
inline std::vector<int> permuted_starts(int total, const std::vector<int>& perm) {
  const int parts = static_cast<int>(perm.size());
  const std::vector<int> starts = split_starts(total, parts);
  std::vector<int> out(parts + 1, 0);
  for (int i = 0; i < parts; ++i) {
    const int src = perm[i];
    out[i + 1] = out[i] + (starts[src + 1] - starts[src]);
  }
  return out;
}

// Bilinear shift by (ty, tx) with zero fill: dest (y,x) reads src (y-ty,
// x-tx). Forward gathers; adjoint scatters the same weights back.
inline void shift_plane(const double* in, double* out, int h, int w, double ty, double tx,
                        bool adjoint) {
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double sy = y - ty, sx = x - tx;
      const int y0 = static_cast<int>(std::floor(sy)), x0 = static_cast<int>(std::floor(sx));
      const double fy = sy - y0, fx = sx - x0;
      const double wgt[4] = {(1 - fy) * (1 - fx), (1 - fy) * fx, fy * (1 - fx), fy * fx};
      const int yy[4] = {y0, y0, y0 + 1, y0 + 1};
      const int xx[4] = {x0, x0 + 1, x0, x0 + 1};
      double acc = 0.0;
      for (int i = 0; i < 4; ++i) {
        if (yy[i] < 0 || yy[i] >= h || xx[i] < 0 || xx[i] >= w) continue;
        if (adjoint)
          out[static_cast<std::size_t>(yy[i]) * w + xx[i]] +=
              wgt[i] * in[static_cast<std::size_t>(y) * w + x];
        else
          acc += wgt[i] * in[static_cast<std::size_t>(yy[i]) * w + xx[i]];
      }
      if (!adjoint) out[static_cast<std::size_t>(y) * w + x] = acc;
    }
}

// Rotate the [r0,r1)x[c0,c1) window of a plane about the window center by
// `deg` degrees (counterclockwise in image coordinates), bilinear, zero fill
// outside the window. Forward gathers; adjoint scatters.
inline void rotate_window(const double* in, double* out, int w_stride, int r0, int r1, int c0,
                          int c1, double deg, bool adjoint) {
  const double rad = deg * 3.14159265358979323846264338328 / 180.0;
  const double cs = std::cos(rad), sn = std::sin(rad);
  const double cy = 0.5 * (r0 + r1 - 1), cx = 0.5 * (c0 + c1 - 1);
  for (int y = r0; y < r1; ++y)
    for (int x = c0; x < c1; ++x) {
      // Inverse-rotate the dest pixel into source coordinates.
      const double dy = y - cy, dx = x - cx;
      const double sy = cy + (cs * dy + sn * dx);
      const double sx = cx + (-sn * dy + cs * dx);
      const int y0 = static_cast<int>(std::floor(sy)), x0 = static_cast<int>(std::floor(sx));
      const double fy = sy - y0, fx = sx - x0;
      const double wgt[4] = {(1 - fy) * (1 - fx), (1 - fy) * fx, fy * (1 - fx), fy * fx};
      const int yy[4] = {y0, y0, y0 + 1, y0 + 1};
      const int xx[4] = {x0, x0 + 1, x0, x0 + 1};
      double acc = 0.0;
      for (int i = 0; i < 4; ++i) {
        if (yy[i] < r0 || yy[i] >= r1 || xx[i] < c0 || xx[i] >= c1) continue;
        if (adjoint)
          out[static_cast<std::size_t>(yy[i]) * w_stride + xx[i]] +=
              wgt[i] * in[static_cast<std::size_t>(y) * w_stride + x];
        else
          acc += wgt[i] * in[static_cast<std::size_t>(yy[i]) * w_stride + xx[i]];
      }
      if (!adjoint) out[static_cast<std::size_t>(y) * w_stride + x] = acc;
    }
}

// Bilinear down-scale of an h x w plane to rh x rw, pasted at (oy, ox) into a
// zeroed h x w output. Half-pixel-center mapping, border-replicated neighbors.
inline void resize_plane(const double* in, double* out, int h, int w, int rh, int rw, int oy,
                         int ox, bool adjoint) {
  const double sy_scale = static_cast<double>(h) / rh, sx_scale = static_cast<double>(w) / rw;
  for (int y = 0; y < rh; ++y)
    for (int x = 0; x < rw; ++x) {
      const double sy = (y + 0.5) * sy_scale - 0.5;
      const double sx = (x + 0.5) * sx_scale - 0.5;
      const int y0 = static_cast<int>(std::floor(sy)), x0 = static_cast<int>(std::floor(sx));
      const double fy = sy - y0, fx = sx - x0;
      const double wgt[4] = {(1 - fy) * (1 - fx), (1 - fy) * fx, fy * (1 - fx), fy * fx};
      const int yy[4] = {std::clamp(y0, 0, h - 1), std::clamp(y0, 0, h - 1),
                         std::clamp(y0 + 1, 0, h - 1), std::clamp(y0 + 1, 0, h - 1)};
      const int xx[4] = {std::clamp(x0, 0, w - 1), std::clamp(x0 + 1, 0, w - 1),
                         std::clamp(x0, 0, w - 1), std::clamp(x0 + 1, 0, w - 1)};
      const std::size_t dst = static_cast<std::size_t>(y + oy) * w + (x + ox);
      if (adjoint) {
        for (int i = 0; i < 4; ++i)
          out[static_cast<std::size_t>(yy[i]) * w + xx[i]] += wgt[i] * in[dst];
      } else {
        double acc = 0.0;
        for (int i = 0; i < 4; ++i) acc += wgt[i] * in[static_cast<std::size_t>(yy[i]) * w + xx[i]];
        out[dst] = acc;
      }
    }
}

inline void check_image(const Tensor& img, const TransformDraw& d, const char* where) {
  if (img.rank() != 3 || img.dim(0) != d.c || img.dim(1) != d.h || img.dim(2) != d.w)
    throw ConsistencyError(std::string(where) + " got image " + img.shape_str() +
                           " but the draw was sampled for [" + std::to_string(d.c) + "," +
                           std::to_string(d.h) + "," + std::to_string(d.w) + "]");
}

// The linear (pre-clamp) part of every kind, and its exact adjoint.
inline Tensor linear_apply(const Tensor& img, const TransformDraw& d) {
  const int c = d.c, h = d.h, w = d.w;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  switch (d.kind) {
    case Kind::kIdentity: return img;
    case Kind::kTranslation: {
      Tensor out(img.shape);
      for (int ch = 0; ch < c; ++ch)
        shift_plane(img.ptr() + ch * plane, out.ptr() + ch * plane, h, w, d.ty, d.tx, false);
      return out;
    }
    case Kind::kBlockShuffle: {
      Tensor out(img.shape);
      for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x)
            out.data[ch * plane + static_cast<std::size_t>(y) * w + x] =
                img.data[ch * plane + static_cast<std::size_t>(d.rowmap[y]) * w + d.colmap[x]];
      return out;
    }
    case Kind::kRotation: {
      Tensor out(img.shape);
      for (int ch = 0; ch < c; ++ch)
        rotate_window(img.ptr() + ch * plane, out.ptr() + ch * plane, w, 0, h, 0, w, d.angle_deg,
                      false);
      return out;
    }
    case Kind::kNoise: {
      Tensor out = img;
      for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += d.field[i];
      return out;
    }
    case Kind::kResize: {
      Tensor out(img.shape);
      for (int ch = 0; ch < c; ++ch)
        resize_plane(img.ptr() + ch * plane, out.ptr() + ch * plane, h, w, d.rh, d.rw, d.oy, d.ox,
                     false);
      return out;
    }
    case Kind::kAdmix: {
      Tensor out = img;
      const double* mix = d.pool->ptr() + static_cast<std::size_t>(d.partner) * c * plane;
      for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += d.eta * mix[i];
      return out;
    }
    case Kind::kSpectrum: {
      Tensor out(img.shape);
      std::vector<double> buf(plane), spec(plane);
      for (int ch = 0; ch < c; ++ch) {
        for (std::size_t i = 0; i < plane; ++i)
          buf[i] = img.data[ch * plane + i] + d.field[ch * plane + i];
        dct::dct2_plane(buf.data(), spec.data(), h, w);
        for (std::size_t i = 0; i < plane; ++i) spec[i] *= d.mask[ch * plane + i];
        dct::idct2_plane(spec.data(), out.ptr() + ch * plane, h, w);
      }
      return out;
    }
    case Kind::kBsr: {
      Tensor out(img.shape);
      Tensor tmp(img.shape);
      for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x)
            tmp.data[ch * plane + static_cast<std::size_t>(y) * w + x] =
                img.data[ch * plane + static_cast<std::size_t>(d.rowmap[y]) * w + d.colmap[x]];
      const int b = d.blocks;
      for (int ch = 0; ch < c; ++ch)
        for (int bi = 0; bi < b; ++bi)
          for (int bj = 0; bj < b; ++bj)
            rotate_window(tmp.ptr() + ch * plane, out.ptr() + ch * plane, w, d.row_starts[bi],
                          d.row_starts[bi + 1], d.col_starts[bj], d.col_starts[bj + 1],
                          d.block_angles[static_cast<std::size_t>(bi) * b + bj], false);
      return out;
    }
  }
  throw ConsistencyError("unreachable transform kind");
}

inline Tensor linear_adjoint(const Tensor& grad, const TransformDraw& d) {
  const int c = d.c, h = d.h, w = d.w;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  switch (d.kind) {
    case Kind::kIdentity:
    case Kind::kNoise:
    case Kind::kAdmix:
      return grad;  // additive kinds: identity linear part
    case Kind::kTranslation: {
      Tensor out(grad.shape);
      for (int ch = 0; ch < c; ++ch)
        shift_plane(grad.ptr() + ch * plane, out.ptr() + ch * plane, h, w, d.ty, d.tx, true);
      return out;
    }
    case Kind::kBlockShuffle: {
      Tensor out(grad.shape);
      for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x)
            out.data[ch * plane + static_cast<std::size_t>(d.rowmap[y]) * w + d.colmap[x]] +=
                grad.data[ch * plane + static_cast<std::size_t>(y) * w + x];
      return out;
    }
    case Kind::kRotation: {
      Tensor out(grad.shape);
      for (int ch = 0; ch < c; ++ch)
        rotate_window(grad.ptr() + ch * plane, out.ptr() + ch * plane, w, 0, h, 0, w, d.angle_deg,
                      true);
      return out;
    }
    case Kind::kResize: {
      Tensor out(grad.shape);
      for (int ch = 0; ch < c; ++ch)
        resize_plane(grad.ptr() + ch * plane, out.ptr() + ch * plane, h, w, d.rh, d.rw, d.oy, d.ox,
                     true);
      return out;
    }
    case Kind::kSpectrum: {
      // Orthonormal DCT makes the spectral map self-adjoint: same mask, same
      // transform pair, additive xi dropped.
      Tensor out(grad.shape);
      std::vector<double> spec(plane);
      for (int ch = 0; ch < c; ++ch) {
        dct::dct2_plane(grad.ptr() + ch * plane, spec.data(), h, w);
        for (std::size_t i = 0; i < plane; ++i) spec[i] *= d.mask[ch * plane + i];
        dct::idct2_plane(spec.data(), out.ptr() + ch * plane, h, w);
      }
      return out;
    }
    case Kind::kBsr: {
      Tensor mid(grad.shape);
      const int b = d.blocks;
      for (int ch = 0; ch < c; ++ch)
        for (int bi = 0; bi < b; ++bi)
          for (int bj = 0; bj < b; ++bj)
            rotate_window(grad.ptr() + ch * plane, mid.ptr() + ch * plane, w, d.row_starts[bi],
                          d.row_starts[bi + 1], d.col_starts[bj], d.col_starts[bj + 1],
                          d.block_angles[static_cast<std::size_t>(bi) * b + bj], true);
      Tensor out(grad.shape);
      for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x)
            out.data[ch * plane + static_cast<std::size_t>(d.rowmap[y]) * w + d.colmap[x]] +=
                mid.data[ch * plane + static_cast<std::size_t>(y) * w + x];
      return out;
    }
  }
  throw ConsistencyError("unreachable transform kind");
}

}  // namespace detail

// Materialize one draw from Theta(z). Pure in (spec, seed, draw_index): the
// same triple always yields the same theta, whatever order copies are
// evaluated in.
inline TransformDraw sample_params(const TransformSpec& spec, std::uint64_t seed,
                                   std::uint64_t draw_index) {
  spec.validate();
  TransformDraw d;
  d.kind = spec.kind;
  d.c = spec.c;
  d.h = spec.h;
  d.w = spec.w;
  const std::uint64_t key =
      rng::derive(seed, 0x74666f726du /*"tform"*/, static_cast<std::uint64_t>(spec.kind),
                  draw_index);
  const std::size_t numel = static_cast<std::size_t>(spec.c) * spec.h * spec.w;
  switch (spec.kind) {
    case Kind::kIdentity: break;
    case Kind::kTranslation: {
      rng::Stream st(key);
      d.ty = st.uniform(0, 0.0, spec.z[0]);
      d.tx = st.uniform(1, 0.0, spec.z[0]);
      break;
    }
    case Kind::kBlockShuffle: {
      const int bands = static_cast<int>(std::llround(spec.z[0])) + 1;
      d.rowmap = detail::band_map(spec.h, rng::permutation(rng::derive(key, 1u), bands));
      d.colmap = detail::band_map(spec.w, rng::permutation(rng::derive(key, 2u), bands));
      break;
    }
    case Kind::kRotation: {
      rng::Stream st(key);
      d.angle_deg = st.uniform(0, 0.0, spec.z[0]);
      break;
    }
    case Kind::kNoise: {
      rng::Stream st(key);
      d.field.resize(numel);
      for (std::size_t i = 0; i < numel; ++i) d.field[i] = st.uniform(i, -spec.z[0], spec.z[0]);
      break;
    }
    case Kind::kResize: {
      rng::Stream st(key);
      const double theta = st.uniform(0, spec.z[0], 1.0);
      d.rh = std::max(1, static_cast<int>(std::llround(theta * spec.h)));
      d.rw = std::max(1, static_cast<int>(std::llround(theta * spec.w)));
      d.oy = static_cast<int>(st.below(1, static_cast<std::uint64_t>(spec.h - d.rh + 1)));
      d.ox = static_cast<int>(st.below(2, static_cast<std::uint64_t>(spec.w - d.rw + 1)));
      break;
    }
    case Kind::kAdmix: {
      rng::Stream st(key);
      d.partner =
          static_cast<int>(st.below(0, static_cast<std::uint64_t>(spec.reference_pool->dim(0))));
      d.eta = spec.z[0];
      d.pool = spec.reference_pool;
      break;
    }
    case Kind::kSpectrum: {
      rng::Stream xi(rng::derive(key, 1u));
      rng::Stream mk(rng::derive(key, 2u));
      d.field.resize(numel);
      d.mask.resize(numel);
      for (std::size_t i = 0; i < numel; ++i) {
        d.field[i] = spec.spectrum_sigma * xi.normal(i);
        d.mask[i] = mk.uniform(i, 1.0 - spec.z[0], 1.0 + spec.z[0]);
      }
      break;
    }
    case Kind::kBsr: {
      const int b = static_cast<int>(std::llround(spec.z[0]));
      const double r = spec.z[1];
      const std::vector<int> rperm = rng::permutation(rng::derive(key, 1u), b);
      const std::vector<int> cperm = rng::permutation(rng::derive(key, 2u), b);
      d.blocks = b;
      d.rowmap = detail::band_map(spec.h, rperm);
      d.colmap = detail::band_map(spec.w, cperm);
      d.row_starts = detail::permuted_starts(spec.h, rperm);
      d.col_starts = detail::permuted_starts(spec.w, cperm);
      rng::Stream st(rng::derive(key, 3u));
      d.block_angles.resize(static_cast<std::size_t>(b) * b);
      for (std::size_t i = 0; i < d.block_angles.size(); ++i)
        d.block_angles[i] = st.uniform(i, -r, r);
      break;
    }
  }
  return d;
}

// Apply a concrete draw: the kind's linear map followed by a [0,1] clamp.
inline Tensor apply_transform(const Tensor& image, const TransformDraw& draw) {
  detail::check_image(image, draw, "apply_transform");
  Tensor out = detail::linear_apply(image, draw);
  clamp01(out);
  return out;
}

// Pull a gradient on the transformed image back to the input: the clamp
// passes gradient where the pre-clamp value stayed in range, then the linear
// part's exact adjoint runs. The image is needed to replay the pre-clamp
// values.
inline Tensor transform_pullback(const Tensor& image, const TransformDraw& draw,
                                 const Tensor& grad_out) {
  detail::check_image(image, draw, "transform_pullback");
  detail::check_image(grad_out, draw, "transform_pullback(grad)");
  Tensor pre = detail::linear_apply(image, draw);
  Tensor masked = grad_out;
  for (std::size_t i = 0; i < masked.data.size(); ++i)
    if (pre.data[i] < 0.0 || pre.data[i] > 1.0) masked.data[i] = 0.0;
  return detail::linear_adjoint(masked, draw);
}

}  // namespace advlab::transforms
