#include "advlab/dct.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "advlab/rng.hpp"
#include "advlab/tensor.hpp"
#include "oracles.hpp"

using advlab::Tensor;
namespace dct = advlab::dct;

namespace {

Tensor random_plane(int h, int w, std::uint64_t key) {
  advlab::rng::Stream s(key);
  Tensor t({h, w});
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = s.uniform(i, -1.0, 1.0);
  return t;
}

}  // namespace

TEST(Dct, BasisIsOrthonormal) {
  for (int n : {1, 2, 3, 4, 7, 16}) {
    const dct::Basis& b = dct::basis_for(n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        double dot = 0.0;
        for (int k = 0; k < n; ++k)
          dot += b.fwd[static_cast<std::size_t>(i) * n + k] *
                 b.fwd[static_cast<std::size_t>(j) * n + k];
        EXPECT_NEAR(dot, i == j ? 1.0 : 0.0, 1e-12) << "n=" << n << " i=" << i << " j=" << j;
      }
  }
}

TEST(Dct, TwoPointBasisHasKnownValues) {
  const dct::Basis& b = dct::basis_for(2);
  const double r = 1.0 / std::sqrt(2.0);
  EXPECT_NEAR(b.fwd[0], r, 1e-15);
  EXPECT_NEAR(b.fwd[1], r, 1e-15);
  EXPECT_NEAR(b.fwd[2], std::cos(M_PI / 4.0), 1e-15);
  EXPECT_NEAR(b.fwd[3], -std::cos(M_PI / 4.0), 1e-15);
}

TEST(Dct, MatchesNaiveTransform) {
  for (auto [h, w] : {std::pair{4, 4}, {3, 5}, {8, 8}, {1, 6}}) {
    const Tensor x = random_plane(h, w, advlab::rng::derive(99, h, w));
    Tensor got({h, w});
    dct::dct2_plane(x.ptr(), got.ptr(), h, w);
    const std::vector<double> want = oracle::dct2_naive(x.data, h, w);
    for (std::size_t i = 0; i < got.numel(); ++i)
      EXPECT_NEAR(got[i], want[i], 1e-10) << h << "x" << w << " @" << i;
  }
}

TEST(Dct, RoundTripIsIdentity) {
  const Tensor x = random_plane(16, 16, advlab::rng::derive(7, 1));
  const Tensor back = dct::idct2(dct::dct2(x));
  EXPECT_LT(advlab::max_abs_diff(x, back), 1e-12);
}

TEST(Dct, IsLinear) {
  const Tensor a = random_plane(8, 8, 1);
  const Tensor b = random_plane(8, 8, 2);
  Tensor mix({8, 8});
  for (std::size_t i = 0; i < mix.numel(); ++i) mix[i] = 2.0 * a[i] - 0.5 * b[i];
  const Tensor ta = dct::dct2(a), tb = dct::dct2(b), tm = dct::dct2(mix);
  for (std::size_t i = 0; i < tm.numel(); ++i)
    EXPECT_NEAR(tm[i], 2.0 * ta[i] - 0.5 * tb[i], 1e-12);
}

TEST(Dct, PreservesEnergy) {
  const Tensor x = random_plane(12, 10, 42);
  const Tensor y = dct::dct2(x);
  EXPECT_NEAR(advlab::l2_norm(x), advlab::l2_norm(y), 1e-10);
}

TEST(Dct, ConstantImageConcentratesInDC) {
  Tensor x({4, 4});
  x.fill(0.25);
  const Tensor y = dct::dct2(x);
  EXPECT_NEAR(y[0], 0.25 * 4.0, 1e-12);  // sqrt(16) * mean
  for (std::size_t i = 1; i < y.numel(); ++i) EXPECT_NEAR(y[i], 0.0, 1e-12);
}

TEST(Dct, RejectsNonPlane) {
  EXPECT_THROW(dct::dct2(Tensor({2, 2, 2})), advlab::ConfigError);
  EXPECT_THROW(dct::idct2(Tensor({4})), advlab::ConfigError);
}
