#include "advlab/model_io.hpp"

#include <gtest/gtest.h>

#include <unistd.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "advlab/dataset.hpp"
#include "advlab/errors.hpp"
#include "advlab/model.hpp"
#include "advlab/train.hpp"

namespace io = advlab::io;
namespace fs = std::filesystem;
using advlab::Tensor;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("advlab_io_" + std::to_string(::getpid()) + "_" +
            std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

std::vector<unsigned char> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::string& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

// Patch the trailing CRC so structural edits get past the integrity check.
void refresh_crc(std::vector<unsigned char>& bytes) {
  const std::uint32_t crc = io::crc32(bytes.data(), bytes.size() - 4);
  for (int i = 0; i < 4; ++i) bytes[bytes.size() - 4 + i] = static_cast<unsigned char>(crc >> (8 * i));
}

advlab::model::Model small_model() {
  advlab::model::Model m = advlab::model::make_model("mlp2", 1, 8, 8, 3, 5);
  m.meta.epochs = 2;
  m.meta.train_acc = 0.75;
  m.meta.data_fingerprint = 0x1234ABCD5678EF01ull;
  return m;
}

}  // namespace

TEST(ModelIo, Crc32KnownVector) {
  const char* s = "123456789";
  EXPECT_EQ(io::crc32(reinterpret_cast<const unsigned char*>(s), 9), 0xCBF43926u);
  EXPECT_EQ(io::crc32(nullptr, 0), 0u);
}

TEST(ModelIo, RoundTripPreservesEverything) {
  TempDir tmp;
  const advlab::model::Model m = small_model();
  io::save_model(m, tmp.file("m.dpow"));
  const advlab::model::Model back = io::load_model(tmp.file("m.dpow"));
  EXPECT_EQ(back.arch, "mlp2");
  EXPECT_EQ(back.classes, 3);
  EXPECT_EQ(back.meta.seed, m.meta.seed);
  EXPECT_EQ(back.meta.epochs, 2);
  EXPECT_DOUBLE_EQ(back.meta.train_acc, 0.75);
  EXPECT_EQ(back.meta.data_fingerprint, m.meta.data_fingerprint);
  EXPECT_EQ(back.fingerprint(), m.fingerprint());

  // Logits agree bit for bit.
  const advlab::data::Dataset d = advlab::data::synth_dataset(4, 8, 8, 3, 1);
  const Tensor a = m.forward(d.images);
  const Tensor b = back.forward(d.images);
  EXPECT_EQ(advlab::bits_fingerprint(a), advlab::bits_fingerprint(b));
}

TEST(ModelIo, SaveIsByteStable) {
  TempDir tmp;
  const advlab::model::Model m = small_model();
  io::save_model(m, tmp.file("a.dpow"));
  io::save_model(m, tmp.file("b.dpow"));
  EXPECT_EQ(read_bytes(tmp.file("a.dpow")), read_bytes(tmp.file("b.dpow")));
}

TEST(ModelIo, EveryFlippedBitIsCaught) {
  TempDir tmp;
  io::save_model(small_model(), tmp.file("m.dpow"));
  const std::vector<unsigned char> good = read_bytes(tmp.file("m.dpow"));
  // Flip one bit at a sample of offsets past the magic; the checksum must
  // catch every one of them.
  for (std::size_t off = 4; off < good.size(); off += 97) {
    std::vector<unsigned char> bad = good;
    bad[off] ^= 0x10;
    write_bytes(tmp.file("bad.dpow"), bad);
    EXPECT_THROW(io::load_model(tmp.file("bad.dpow")), advlab::ConsistencyError)
        << "offset " << off;
  }
}

TEST(ModelIo, BadMagicBeatsChecksum) {
  TempDir tmp;
  io::save_model(small_model(), tmp.file("m.dpow"));
  std::vector<unsigned char> bad = read_bytes(tmp.file("m.dpow"));
  bad[0] = 'X';
  write_bytes(tmp.file("bad.dpow"), bad);
  EXPECT_THROW(io::load_model(tmp.file("bad.dpow")), advlab::FormatError);
}

TEST(ModelIo, TruncationIsCaught) {
  TempDir tmp;
  io::save_model(small_model(), tmp.file("m.dpow"));
  std::vector<unsigned char> bytes = read_bytes(tmp.file("m.dpow"));
  bytes.resize(bytes.size() - 8);
  write_bytes(tmp.file("bad.dpow"), bytes);
  EXPECT_THROW(io::load_model(tmp.file("bad.dpow")), advlab::ConsistencyError);
  write_bytes(tmp.file("tiny.dpow"), {'D', 'P', 'O', 'W', 1, 0});
  EXPECT_THROW(io::load_model(tmp.file("tiny.dpow")), advlab::FormatError);
  EXPECT_THROW(io::load_model(tmp.file("missing.dpow")), advlab::IoError);
}

TEST(ModelIo, UnsupportedVersionIsRejected) {
  TempDir tmp;
  io::save_model(small_model(), tmp.file("m.dpow"));
  std::vector<unsigned char> bytes = read_bytes(tmp.file("m.dpow"));
  bytes[4] = 9;  // version field, little-endian
  refresh_crc(bytes);
  write_bytes(tmp.file("bad.dpow"), bytes);
  EXPECT_THROW(io::load_model(tmp.file("bad.dpow")), advlab::FormatError);
}

TEST(ModelIo, RenamedParameterEntryIsRejected) {
  TempDir tmp;
  io::save_model(small_model(), tmp.file("m.dpow"));
  std::vector<unsigned char> bytes = read_bytes(tmp.file("m.dpow"));
  // mlp2 parameters are l1.w/l1.b/l3.w/l3.b; renaming one leaves another
  // parameter unmatched.
  bool patched = false;
  for (std::size_t i = 0; i + 4 <= bytes.size() && !patched; ++i)
    if (std::memcmp(bytes.data() + i, "l1.w", 4) == 0) {
      bytes[i + 1] = '9';
      patched = true;
    }
  ASSERT_TRUE(patched);
  refresh_crc(bytes);
  write_bytes(tmp.file("bad.dpow"), bytes);
  EXPECT_THROW(io::load_model(tmp.file("bad.dpow")), advlab::ConsistencyError);
}

TEST(ModelIo, UnknownArchitectureIsRejected) {
  TempDir tmp;
  io::save_model(small_model(), tmp.file("m.dpow"));
  std::vector<unsigned char> bytes = read_bytes(tmp.file("m.dpow"));
  // The arch string "mlp2" sits right after magic+version+length.
  bool patched = false;
  for (std::size_t i = 0; i + 4 <= bytes.size() && !patched; ++i)
    if (std::memcmp(bytes.data() + i, "mlp2", 4) == 0) {
      bytes[i] = 'x';
      patched = true;
    }
  ASSERT_TRUE(patched);
  refresh_crc(bytes);
  write_bytes(tmp.file("bad.dpow"), bytes);
  EXPECT_THROW(io::load_model(tmp.file("bad.dpow")), advlab::ConfigError);
}

TEST(ModelIo, TrainedModelSurvivesRoundTrip) {
  TempDir tmp;
  const advlab::data::Dataset d = advlab::data::synth_dataset(48, 8, 8, 3, 11);
  advlab::model::Model m = advlab::model::make_model("cnn-a", 1, 8, 8, 3, 21);
  advlab::train::train_sgd(m, d, {2, 16, 0.1, 0.9});
  io::save_model(m, tmp.file("t.dpow"));
  const advlab::model::Model back = io::load_model(tmp.file("t.dpow"));
  EXPECT_EQ(back.fingerprint(), m.fingerprint());
  EXPECT_EQ(advlab::bits_fingerprint(back.forward(d.images)),
            advlab::bits_fingerprint(m.forward(d.images)));
}
