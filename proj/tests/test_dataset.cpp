#include "advlab/dataset.hpp"

#include <gtest/gtest.h>

#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "advlab/errors.hpp"
#include "advlab/tensor.hpp"

using advlab::Tensor;
namespace data = advlab::data;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("advlab_ds_" + std::to_string(::getpid()) + "_" +
            std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

}  // namespace

TEST(Dataset, SynthShapesRangeAndDeterminism) {
  const data::Dataset d = data::synth_dataset(64, 16, 16, 6, 7);
  EXPECT_EQ(d.size(), 64);
  EXPECT_EQ(d.height(), 16);
  EXPECT_EQ(d.width(), 16);
  EXPECT_EQ(d.classes, 6);
  ASSERT_EQ(d.labels.size(), 64u);
  for (double v : d.images.data) {
    ASSERT_GE(v, 0.0);
    ASSERT_LE(v, 1.0);
  }
  for (int l : d.labels) {
    ASSERT_GE(l, 0);
    ASSERT_LT(l, 6);
  }
  const data::Dataset d2 = data::synth_dataset(64, 16, 16, 6, 7);
  EXPECT_EQ(d.fingerprint(), d2.fingerprint());
  const data::Dataset d3 = data::synth_dataset(64, 16, 16, 6, 8);
  EXPECT_NE(d.fingerprint(), d3.fingerprint());
}

TEST(Dataset, SynthCoversAllClasses) {
  const data::Dataset d = data::synth_dataset(120, 16, 16, 6, 3);
  std::set<int> seen(d.labels.begin(), d.labels.end());
  EXPECT_EQ(seen.size(), 6u);
}

TEST(Dataset, SynthClassesAreVisuallyDistinct) {
  // Mean images of different classes should differ clearly somewhere.
  const data::Dataset d = data::synth_dataset(240, 16, 16, 6, 5);
  std::vector<Tensor> mean(6, Tensor({16, 16}));
  std::vector<int> count(6, 0);
  for (int i = 0; i < d.size(); ++i) {
    const Tensor img = d.images.slice_image(i);
    Tensor& m = mean[static_cast<std::size_t>(d.labels[static_cast<std::size_t>(i)])];
    for (std::size_t j = 0; j < m.numel(); ++j) m[j] += img[j];
    ++count[static_cast<std::size_t>(d.labels[static_cast<std::size_t>(i)])];
  }
  for (int c = 0; c < 6; ++c) {
    ASSERT_GT(count[static_cast<std::size_t>(c)], 0);
    for (double& v : mean[static_cast<std::size_t>(c)].data)
      v /= count[static_cast<std::size_t>(c)];
  }
  for (int a = 0; a < 6; ++a)
    for (int b = a + 1; b < 6; ++b)
      EXPECT_GT(advlab::max_abs_diff(mean[static_cast<std::size_t>(a)],
                                     mean[static_cast<std::size_t>(b)]),
                0.1)
          << "classes " << a << " and " << b << " look alike";
}

TEST(Dataset, SynthValidatesArguments) {
  EXPECT_THROW(data::synth_dataset(0, 16, 16, 4, 1), advlab::ConfigError);
  EXPECT_THROW(data::synth_dataset(8, 4, 16, 4, 1), advlab::ConfigError);
  EXPECT_THROW(data::synth_dataset(8, 16, 16, 1, 1), advlab::ConfigError);
  EXPECT_THROW(data::synth_dataset(8, 16, 16, 7, 1), advlab::ConfigError);
}

TEST(Dataset, TakePrefixAndBounds) {
  const data::Dataset d = data::synth_dataset(10, 8, 8, 2, 1);
  const data::Dataset head = d.take(4);
  EXPECT_EQ(head.size(), 4);
  EXPECT_EQ(head.classes, d.classes);
  for (int i = 0; i < 4; ++i)
    EXPECT_EQ(head.labels[static_cast<std::size_t>(i)], d.labels[static_cast<std::size_t>(i)]);
  EXPECT_EQ(advlab::max_abs_diff(head.images.slice_image(2), d.images.slice_image(2)), 0.0);
  EXPECT_THROW(d.take(11), advlab::ConfigError);
}

TEST(Dataset, IdxRoundTrip) {
  TempDir tmp;
  const data::Dataset d = data::synth_dataset(12, 9, 11, 3, 9);
  data::save_idx(d, tmp.file("imgs.idx"), tmp.file("lbls.idx"));
  const data::Dataset back = data::load_idx(tmp.file("imgs.idx"), tmp.file("lbls.idx"));
  EXPECT_EQ(back.size(), 12);
  EXPECT_EQ(back.height(), 9);
  EXPECT_EQ(back.width(), 11);
  EXPECT_EQ(back.labels, d.labels);
  // Pixels quantize to u8, so round-tripping is exact to half a step.
  EXPECT_LE(advlab::max_abs_diff(back.images, d.images), 0.5 / 255.0 + 1e-12);
  // A second round trip through u8 is bit-exact.
  data::save_idx(back, tmp.file("imgs2.idx"), tmp.file("lbls2.idx"));
  const data::Dataset twice = data::load_idx(tmp.file("imgs2.idx"), tmp.file("lbls2.idx"));
  EXPECT_EQ(advlab::max_abs_diff(twice.images, back.images), 0.0);
}

TEST(Dataset, IdxF64RoundTripIsBitExact) {
  TempDir tmp;
  Tensor batch({3, 1, 4, 5});
  advlab::rng::Stream s(123);
  for (std::size_t i = 0; i < batch.numel(); ++i) batch[i] = s.uniform(i);
  data::save_idx_f64(batch, tmp.file("adv.idx"));
  const Tensor back = data::load_idx_f64(tmp.file("adv.idx"));
  ASSERT_EQ(back.shape, batch.shape);
  EXPECT_EQ(advlab::bits_fingerprint(back), advlab::bits_fingerprint(batch));
  EXPECT_THROW(data::save_idx_f64(Tensor({2, 2}), tmp.file("bad.idx")), advlab::ConfigError);
}

TEST(Dataset, LoadRejectsBadMagicNamingTheFile) {
  TempDir tmp;
  const data::Dataset d = data::synth_dataset(4, 8, 8, 2, 1);
  data::save_idx(d, tmp.file("imgs.idx"), tmp.file("lbls.idx"));
  {
    std::fstream f(tmp.file("imgs.idx"), std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.put('\xFF');
  }
  try {
    data::load_idx(tmp.file("imgs.idx"), tmp.file("lbls.idx"));
    FAIL() << "expected FormatError";
  } catch (const advlab::FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("imgs.idx"), std::string::npos);
  }
}

TEST(Dataset, LoadRejectsTruncationAndCountMismatch) {
  TempDir tmp;
  const data::Dataset d = data::synth_dataset(4, 8, 8, 2, 1);
  data::save_idx(d, tmp.file("imgs.idx"), tmp.file("lbls.idx"));

  // Truncate the pixel payload.
  fs::resize_file(tmp.file("imgs.idx"), fs::file_size(tmp.file("imgs.idx")) - 5);
  EXPECT_THROW(data::load_idx(tmp.file("imgs.idx"), tmp.file("lbls.idx")),
               advlab::ConsistencyError);

  // Rewrite, then make the label count disagree.
  data::save_idx(d, tmp.file("imgs.idx"), tmp.file("lbls.idx"));
  {
    std::fstream f(tmp.file("lbls.idx"), std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(7);  // low byte of the big-endian count
    f.put('\x09');
  }
  EXPECT_THROW(data::load_idx(tmp.file("imgs.idx"), tmp.file("lbls.idx")),
               advlab::ConsistencyError);
}

TEST(Dataset, LoadRejectsMissingFile) {
  TempDir tmp;
  EXPECT_THROW(data::load_idx(tmp.file("nope.idx"), tmp.file("nope2.idx")), advlab::IoError);
  EXPECT_THROW(data::load_idx_f64(tmp.file("nope.idx")), advlab::IoError);
}
