#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "advlab/errors.hpp"
#include "advlab/model.hpp"
#include "advlab/tensor.hpp"

namespace advlab::io {

// CRC-32 (IEEE 802.3, reflected, polynomial 0xEDB88320): init all-ones,
// final complement. crc32 of "123456789" is 0xCBF43926.
inline std::uint32_t crc32(const unsigned char* data, std::size_t n) {
  static const std::array<std::uint32_t, 256> table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1u) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  std::uint32_t crc = 0xFFFFFFFFu;
  for (std::size_t i = 0; i < n; ++i) crc = table[(crc ^ data[i]) & 0xFFu] ^ (crc >> 8);
  return crc ^ 0xFFFFFFFFu;
}

namespace detail {

struct ByteSink {
  std::vector<unsigned char> bytes;

  void raw(const void* p, std::size_t n) {
    const unsigned char* b = static_cast<const unsigned char*>(p);
    bytes.insert(bytes.end(), b, b + n);
  }
  void u32(std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v >> 16),
                                static_cast<unsigned char>(v >> 24)};
    raw(b, 4);
  }
  void f64(double v) {
    std::uint64_t u;
    std::memcpy(&u, &v, 8);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
    raw(b, 8);
  }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
};

struct ByteSource {
  const std::vector<unsigned char>& bytes;
  std::size_t pos = 0;
  const std::string& path;

  void need(std::size_t n) const {
    if (pos + n > bytes.size()) throw FormatError(path + ": truncated weight file structure");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(bytes[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t u = 0;
    for (int i = 0; i < 8; ++i) u |= std::uint64_t(bytes[pos + i]) << (8 * i);
    pos += 8;
    double v;
    std::memcpy(&v, &u, 8);
    return v;
  }
  std::string str() {
    const std::uint32_t n = u32();
    if (n > (1u << 20)) throw FormatError(path + ": unreasonable string length");
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes.data() + pos), n);
    pos += n;
    return s;
  }
};

constexpr char kMagic[4] = {'D', 'P', 'O', 'W'};
constexpr std::uint32_t kVersion = 1;

inline std::uint64_t split_hi(std::uint64_t v) { return v >> 32; }
inline std::uint64_t split_lo(std::uint64_t v) { return v & 0xFFFFFFFFull; }

}  // namespace detail

// Serialize a model to the DPOW container: magic, version, architecture id,
// then named tensor entries (name, rank, dims, float64 data, all
// little-endian), closed by a CRC-32 of everything before it. Input geometry
// and training provenance ride along as reserved "meta/*" entries.
inline void save_model(const model::Model& m, const std::string& path) {
  detail::ByteSink sink;
  sink.raw(detail::kMagic, 4);
  sink.u32(detail::kVersion);
  sink.str(m.arch);

  const auto params = static_cast<const graph::Network&>(m.net).named_params();
  sink.u32(static_cast<std::uint32_t>(params.size() + 2));

  // meta/input: [C, H, W, classes]
  sink.str("meta/input");
  sink.u32(1);
  sink.u32(4);
  sink.f64(m.net.input_c());
  sink.f64(m.net.input_h());
  sink.f64(m.net.input_w());
  sink.f64(m.classes);

  // meta/info: [seed_hi, seed_lo, epochs, train_acc, data_fp_hi, data_fp_lo]
  sink.str("meta/info");
  sink.u32(1);
  sink.u32(6);
  sink.f64(static_cast<double>(detail::split_hi(m.meta.seed)));
  sink.f64(static_cast<double>(detail::split_lo(m.meta.seed)));
  sink.f64(m.meta.epochs);
  sink.f64(m.meta.train_acc);
  sink.f64(static_cast<double>(detail::split_hi(m.meta.data_fingerprint)));
  sink.f64(static_cast<double>(detail::split_lo(m.meta.data_fingerprint)));

  for (const auto& np : params) {
    sink.str(np.name);
    sink.u32(static_cast<std::uint32_t>(np.tensor->rank()));
    for (int d : np.tensor->shape) sink.u32(static_cast<std::uint32_t>(d));
    for (double v : np.tensor->data) sink.f64(v);
  }

  const std::uint32_t crc = crc32(sink.bytes.data(), sink.bytes.size());
  sink.u32(crc);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(sink.bytes.data()),
            static_cast<std::streamsize>(sink.bytes.size()));
  if (!out) throw IoError("failed writing " + path);
}

inline model::Model load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 16) throw FormatError(path + ": too short to be a weight file");
  if (std::memcmp(bytes.data(), detail::kMagic, 4) != 0)
    throw FormatError(path + ": bad weight file magic");
  // Integrity first: any flipped bit after the magic shows up here.
  std::uint32_t stored = 0;
  for (int i = 0; i < 4; ++i)
    stored |= std::uint32_t(bytes[bytes.size() - 4 + i]) << (8 * i);
  const std::uint32_t computed = crc32(bytes.data(), bytes.size() - 4);
  if (stored != computed)
    throw ConsistencyError(path + ": checksum mismatch (file corrupt)");

  detail::ByteSource src{bytes, 4, path};
  const std::uint32_t version = src.u32();
  if (version != detail::kVersion)
    throw FormatError(path + ": unsupported weight file version " + std::to_string(version));
  const std::string arch = src.str();
  const std::uint32_t entries = src.u32();

  struct RawEntry {
    std::string name;
    std::vector<int> dims;
    std::vector<double> data;
  };
  std::vector<RawEntry> raw;
  raw.reserve(entries);
  for (std::uint32_t e = 0; e < entries; ++e) {
    RawEntry r;
    r.name = src.str();
    const std::uint32_t rank = src.u32();
    if (rank > 8) throw FormatError(path + ": unreasonable tensor rank");
    std::size_t numel = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      const std::uint32_t d = src.u32();
      if (d == 0 || d > (1u << 24)) throw FormatError(path + ": unreasonable dimension");
      r.dims.push_back(static_cast<int>(d));
      numel *= d;
    }
    if (numel > (1u << 26)) throw FormatError(path + ": unreasonable tensor size");
    r.data.resize(numel);
    for (std::size_t i = 0; i < numel; ++i) r.data[i] = src.f64();
    raw.push_back(std::move(r));
  }
  if (src.pos != bytes.size() - 4)
    throw FormatError(path + ": trailing bytes after entry table");

  const RawEntry* meta_input = nullptr;
  const RawEntry* meta_info = nullptr;
  for (const auto& r : raw) {
    if (r.name == "meta/input") meta_input = &r;
    if (r.name == "meta/info") meta_info = &r;
  }
  if (!meta_input || meta_input->data.size() != 4)
    throw FormatError(path + ": missing or malformed meta/input entry");
  if (!meta_info || meta_info->data.size() != 6)
    throw FormatError(path + ": missing or malformed meta/info entry");

  const int c = static_cast<int>(meta_input->data[0]);
  const int h = static_cast<int>(meta_input->data[1]);
  const int w = static_cast<int>(meta_input->data[2]);
  const int classes = static_cast<int>(meta_input->data[3]);
  model::Model m(arch, c, h, w, classes);
  m.meta.seed = (static_cast<std::uint64_t>(meta_info->data[0]) << 32) |
                static_cast<std::uint64_t>(meta_info->data[1]);
  m.meta.epochs = static_cast<int>(meta_info->data[2]);
  m.meta.train_acc = meta_info->data[3];
  m.meta.data_fingerprint = (static_cast<std::uint64_t>(meta_info->data[4]) << 32) |
                            static_cast<std::uint64_t>(meta_info->data[5]);

  auto params = m.net.named_params();
  std::size_t matched = 0;
  for (auto& np : params) {
    const RawEntry* found = nullptr;
    for (const auto& r : raw)
      if (r.name == np.name) {
        found = &r;
        break;
      }
    if (!found) throw ConsistencyError(path + ": missing parameter entry " + np.name);
    if (found->dims != np.tensor->shape)
      throw ConsistencyError(path + ": shape mismatch for " + np.name);
    np.tensor->data = found->data;
    ++matched;
  }
  if (matched + 2 != raw.size())
    throw ConsistencyError(path + ": unexpected extra entries in weight file");
  return m;
}

}  // namespace advlab::io
