#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "advlab/errors.hpp"
#include "advlab/rng.hpp"
#include "advlab/tensor.hpp"

namespace advlab::data {

// A labeled image set. Images live in [0,1] as [N,1,H,W]; labels are class
// indices.
struct Dataset {
  Tensor images;
  std::vector<int> labels;
  int classes = 0;

  int size() const { return images.numel() == 0 ? 0 : images.dim(0); }
  int height() const { return images.dim(2); }
  int width() const { return images.dim(3); }

  std::uint64_t fingerprint() const {
    std::uint64_t fp = bits_fingerprint(images);
    for (int l : labels) fp = rng::mix64(fp + static_cast<std::uint64_t>(l) + 0x6c61u);
    return rng::mix64(fp + static_cast<std::uint64_t>(classes));
  }

  Dataset take(int n) const {
    if (n < 0 || n > size())
      throw ConfigError("cannot take " + std::to_string(n) + " samples from a dataset of " +
                        std::to_string(size()));
    Dataset out;
    out.classes = classes;
    out.images = Tensor({n, 1, height(), width()});
    std::copy(images.ptr(), images.ptr() + out.images.numel(), out.images.ptr());
    out.labels.assign(labels.begin(), labels.begin() + n);
    return out;
  }
};

namespace detail {

constexpr std::uint32_t kImagesMagic = 0x00000803u;
constexpr std::uint32_t kLabelsMagic = 0x00000801u;

inline std::uint32_t read_u32_be(std::istream& in, const std::string& path) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw ConsistencyError("unexpected end of file in " + path);
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) |
         std::uint32_t(b[3]);
}

inline void write_u32_be(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace detail

// Read an IDX image/label pair. Pixels are scaled from u8 to [0,1].
inline Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  std::ifstream imgs(images_path, std::ios::binary);
  if (!imgs) throw IoError("cannot open " + images_path);
  std::ifstream lbls(labels_path, std::ios::binary);
  if (!lbls) throw IoError("cannot open " + labels_path);

  const std::uint32_t im = detail::read_u32_be(imgs, images_path);
  if (im != detail::kImagesMagic)
    throw FormatError(images_path + ": bad image magic " + std::to_string(im));
  const std::uint32_t n_img = detail::read_u32_be(imgs, images_path);
  const std::uint32_t rows = detail::read_u32_be(imgs, images_path);
  const std::uint32_t cols = detail::read_u32_be(imgs, images_path);
  if (rows == 0 || cols == 0 || rows > 4096 || cols > 4096)
    throw FormatError(images_path + ": unreasonable image size " + std::to_string(rows) + "x" +
                      std::to_string(cols));

  const std::uint32_t lm = detail::read_u32_be(lbls, labels_path);
  if (lm != detail::kLabelsMagic)
    throw FormatError(labels_path + ": bad label magic " + std::to_string(lm));
  const std::uint32_t n_lbl = detail::read_u32_be(lbls, labels_path);
  if (n_img != n_lbl)
    throw ConsistencyError("image/label count mismatch: " + images_path + " has " +
                           std::to_string(n_img) + ", " + labels_path + " has " +
                           std::to_string(n_lbl));

  Dataset d;
  d.images = Tensor({static_cast<int>(n_img), 1, static_cast<int>(rows), static_cast<int>(cols)});
  std::vector<unsigned char> buf(static_cast<std::size_t>(n_img) * rows * cols);
  imgs.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (static_cast<std::size_t>(imgs.gcount()) != buf.size())
    throw ConsistencyError(images_path + ": truncated pixel data");
  for (std::size_t i = 0; i < buf.size(); ++i) d.images.data[i] = buf[i] / 255.0;

  std::vector<unsigned char> lab(n_lbl);
  lbls.read(reinterpret_cast<char*>(lab.data()), static_cast<std::streamsize>(lab.size()));
  if (static_cast<std::size_t>(lbls.gcount()) != lab.size())
    throw ConsistencyError(labels_path + ": truncated label data");
  d.labels.assign(lab.begin(), lab.end());
  int max_label = 0;
  for (int l : d.labels) max_label = std::max(max_label, l);
  d.classes = max_label + 1;
  return d;
}

// Write the dataset as an IDX pair, quantizing pixels to u8.
inline void save_idx(const Dataset& d, const std::string& images_path,
                     const std::string& labels_path) {
  std::ofstream imgs(images_path, std::ios::binary);
  if (!imgs) throw IoError("cannot open " + images_path + " for writing");
  detail::write_u32_be(imgs, detail::kImagesMagic);
  detail::write_u32_be(imgs, static_cast<std::uint32_t>(d.size()));
  detail::write_u32_be(imgs, static_cast<std::uint32_t>(d.height()));
  detail::write_u32_be(imgs, static_cast<std::uint32_t>(d.width()));
  std::vector<unsigned char> buf(d.images.numel());
  for (std::size_t i = 0; i < buf.size(); ++i) {
    const double v = std::clamp(d.images.data[i], 0.0, 1.0);
    buf[i] = static_cast<unsigned char>(std::lround(v * 255.0));
  }
  imgs.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!imgs) throw IoError("failed writing " + images_path);

  std::ofstream lbls(labels_path, std::ios::binary);
  if (!lbls) throw IoError("cannot open " + labels_path + " for writing");
  detail::write_u32_be(lbls, detail::kLabelsMagic);
  detail::write_u32_be(lbls, static_cast<std::uint32_t>(d.labels.size()));
  std::vector<unsigned char> lab(d.labels.begin(), d.labels.end());
  lbls.write(reinterpret_cast<const char*>(lab.data()), static_cast<std::streamsize>(lab.size()));
  if (!lbls) throw IoError("failed writing " + labels_path);
}

// Lossless variant for adversarial batches: rank-3 IDX with float64 payload
// (type byte 0x0E), big-endian like the rest of the format.
inline void save_idx_f64(const Tensor& batch, const std::string& path) {
  if (batch.rank() != 4 || batch.dim(1) != 1)
    throw ConfigError("save_idx_f64 expects an [N,1,H,W] batch, got " + batch.shape_str());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  detail::write_u32_be(out, 0x00000E03u);
  detail::write_u32_be(out, static_cast<std::uint32_t>(batch.dim(0)));
  detail::write_u32_be(out, static_cast<std::uint32_t>(batch.dim(2)));
  detail::write_u32_be(out, static_cast<std::uint32_t>(batch.dim(3)));
  for (double v : batch.data) {
    std::uint64_t u;
    std::memcpy(&u, &v, 8);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(u >> (8 * (7 - i)));
    out.write(reinterpret_cast<const char*>(b), 8);
  }
  if (!out) throw IoError("failed writing " + path);
}

inline Tensor load_idx_f64(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  const std::uint32_t magic = detail::read_u32_be(in, path);
  if (magic != 0x00000E03u)
    throw FormatError(path + ": bad float image magic " + std::to_string(magic));
  const std::uint32_t n = detail::read_u32_be(in, path);
  const std::uint32_t rows = detail::read_u32_be(in, path);
  const std::uint32_t cols = detail::read_u32_be(in, path);
  Tensor t({static_cast<int>(n), 1, static_cast<int>(rows), static_cast<int>(cols)});
  for (double& v : t.data) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    if (!in) throw ConsistencyError(path + ": truncated float pixel data");
    std::uint64_t u = 0;
    for (int i = 0; i < 8; ++i) u = (u << 8) | b[i];
    std::memcpy(&v, &u, 8);
  }
  return t;
}

namespace detail {

// Soft 1-pixel edge: full coverage one pixel inside the boundary, none one
// pixel outside.
inline double edge(double signed_dist) { return std::clamp(0.5 + signed_dist, 0.0, 1.0); }

// Shape coverage in [0,1] for a pixel at (px,py) relative to the shape center.
// `s` is the image side, `j` a size jitter in [-1,1].
inline double shape_coverage(int cls, double px, double py, double s, double j) {
  const double d = std::sqrt(px * px + py * py);
  switch (cls % 6) {
    case 0: {  // filled disc
      const double r = s * 0.28 * (1.0 + 0.15 * j);
      return edge(r - d);
    }
    case 1: {  // ring
      const double ro = s * 0.34 * (1.0 + 0.10 * j);
      const double ri = ro * 0.55;
      return edge(ro - d) * edge(d - ri);
    }
    case 2: {  // two horizontal bars
      const double off = s * 0.18 * (1.0 + 0.15 * j);
      const double t = s * 0.085;
      const double c1 = edge(t - std::abs(py - off));
      const double c2 = edge(t - std::abs(py + off));
      return std::max(c1, c2) * edge(s * 0.42 - std::abs(px));
    }
    case 3: {  // two vertical bars
      const double off = s * 0.18 * (1.0 + 0.15 * j);
      const double t = s * 0.085;
      const double c1 = edge(t - std::abs(px - off));
      const double c2 = edge(t - std::abs(px + off));
      return std::max(c1, c2) * edge(s * 0.42 - std::abs(py));
    }
    case 4: {  // filled diamond
      const double r = s * 0.36 * (1.0 + 0.12 * j);
      return edge(r - (std::abs(px) + std::abs(py)));
    }
    default: {  // diagonal cross
      const double t = s * 0.09;
      const double inv_sqrt2 = 0.70710678118654752440;
      const double d1 = std::abs(px - py) * inv_sqrt2;
      const double d2 = std::abs(px + py) * inv_sqrt2;
      return std::max(edge(t - d1), edge(t - d2)) * edge(s * 0.44 - d);
    }
  }
}

}  // namespace detail

// Procedural shape classifier corpus: one geometric glyph family per class,
// with jittered position/size/intensity over a noisy background. Class labels
// cycle so the set is balanced. Fully determined by (n, h, w, classes, seed).
inline Dataset synth_dataset(int n, int h, int w, int classes, std::uint64_t seed) {
  if (n <= 0) throw ConfigError("synthetic dataset needs n > 0");
  if (classes < 2 || classes > 6)
    throw ConfigError("synthetic dataset supports 2..6 classes, got " + std::to_string(classes));
  if (h < 8 || w < 8) throw ConfigError("synthetic dataset needs at least 8x8 images");
  Dataset d;
  d.classes = classes;
  d.images = Tensor({n, 1, h, w});
  d.labels.resize(n);
  const double s = 0.5 * (h + w);
  for (int i = 0; i < n; ++i) {
    const int cls = i % classes;
    d.labels[i] = cls;
    rng::Stream st(rng::derive(seed, 0x73796e7468u /*"synth"*/, static_cast<std::uint64_t>(i)));
    const double cx = 0.5 * w + st.uniform(0, -2.0, 2.0);
    const double cy = 0.5 * h + st.uniform(1, -2.0, 2.0);
    const double jitter = st.uniform(2, -1.0, 1.0);
    const double base = st.uniform(3, 0.65, 1.0);
    double* img = d.images.ptr() + static_cast<std::size_t>(i) * h * w;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double cov =
            detail::shape_coverage(cls, (x + 0.5) - cx, (y + 0.5) - cy, s, jitter);
        const double bg = st.uniform(16 + static_cast<std::size_t>(y) * w + x, 0.0, 0.30);
        img[static_cast<std::size_t>(y) * w + x] =
            std::clamp(bg * (1.0 - cov) + base * cov, 0.0, 1.0);
      }
  }
  return d;
}

}  // namespace advlab::data
