#include "dnpi/tensor.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace dnpi;

namespace {

Tensor4<double> random_tensor(int c, const Dims3& d, std::uint64_t seed) {
  CounterRng rng(seed);
  Tensor4<double> t(c, d);
  for (Eigen::Index i = 0; i < t.data.size(); ++i) t.data[i] = rng.uniform(-1.0, 1.0);
  return t;
}

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
  CounterRng rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

}  // namespace

TEST(Conv3d, IdentityKernelReproducesInput) {
  const auto in = random_tensor(1, {4, 5, 3}, 7);
  const std::vector<double> w{1.0}, b{0.0};
  const auto out = conv3d_forward<double>(in, w, b, {1, 1, 1, 1, 0});
  ASSERT_EQ(out.dims, in.dims);
  EXPECT_TRUE((out.data == in.data).all());
}

TEST(Conv3d, ZeroWeightsGiveConstantBias) {
  const auto in = random_tensor(2, {5, 5, 5}, 3);
  const ConvGeom g{2, 3, 3, 1, 1};
  const std::vector<double> w(static_cast<std::size_t>(g.weight_count()), 0.0);
  const std::vector<double> b{0.5, -1.25, 2.0};
  const auto out = conv3d_forward<double>(in, w, b, g);
  for (int o = 0; o < 3; ++o) EXPECT_TRUE((out.channel(o) == b[static_cast<std::size_t>(o)]).all());
}

TEST(Conv3d, MatchesBruteForceReference) {
  struct Case {
    int in_ch, out_ch, k, stride, pad;
    Dims3 dims;
  };
  const std::vector<Case> cases{{1, 1, 3, 1, 1, {4, 4, 4}}, {2, 3, 3, 2, 1, {5, 4, 6}}, {3, 2, 1, 2, 0, {4, 4, 4}},
                                {1, 2, 7, 2, 3, {8, 8, 8}}, {2, 2, 3, 1, 0, {3, 5, 4}}};
  std::uint64_t seed = 11;
  for (const Case& c : cases) {
    const ConvGeom g{c.in_ch, c.out_ch, c.k, c.stride, c.pad};
    const auto in = random_tensor(c.in_ch, c.dims, seed++);
    const auto w = random_vec(static_cast<std::size_t>(g.weight_count()), seed++);
    const auto b = random_vec(static_cast<std::size_t>(c.out_ch), seed++);
    const auto out = conv3d_forward<double>(in, w, b, g);

    int ox, oy, oz;
    const std::vector<double> flat(in.data.data(), in.data.data() + in.data.size());
    const auto ref = oracle::brute_conv3d(flat, c.in_ch, c.dims[0], c.dims[1], c.dims[2], w, b, c.out_ch, c.k,
                                          c.stride, c.pad, ox, oy, oz);
    ASSERT_EQ(out.dims, (Dims3{ox, oy, oz}));
    ASSERT_EQ(static_cast<std::size_t>(out.data.size()), ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(out.data[static_cast<Eigen::Index>(i)], ref[i], 1e-12);
  }
}

TEST(Conv3d, OutputExtentFormula) {
  const ConvGeom g{1, 1, 3, 2, 1};
  EXPECT_EQ(g.out_dims({8, 7, 1}), (Dims3{4, 4, 1}));
  const ConvGeom g7{1, 1, 7, 2, 3};
  EXPECT_EQ(g7.out_dims({16, 16, 16}), (Dims3{8, 8, 8}));
}

TEST(Conv3d, ShapeErrors) {
  const auto in = random_tensor(2, {4, 4, 4}, 1);
  const ConvGeom g{1, 1, 3, 1, 1};
  const std::vector<double> w(27, 0.0), b(1, 0.0);
  EXPECT_THROW(conv3d_forward<double>(in, w, b, g), ShapeError);
  const ConvGeom g2{2, 1, 3, 1, 1};
  EXPECT_THROW(conv3d_forward<double>(in, w, b, g2), ShapeError);  // weight count 54 expected
  const auto small = random_tensor(1, {2, 2, 2}, 1);
  const std::vector<double> w5(125, 0.0);
  EXPECT_THROW(conv3d_forward<double>(small, w5, b, ConvGeom{1, 1, 5, 1, 0}), ShapeError);
}

// The map (input, w, b) -> <r, conv(input)> is bilinear, so central
// differences are exact up to rounding.
TEST(Conv3d, BackwardMatchesFiniteDifferences) {
  const ConvGeom g{2, 3, 3, 2, 1};
  const Dims3 d{5, 4, 6};
  auto in = random_tensor(2, d, 21);
  auto w = random_vec(static_cast<std::size_t>(g.weight_count()), 22);
  auto b = random_vec(3, 23);
  const auto r = random_tensor(3, g.out_dims(d), 24);

  auto objective = [&](const Tensor4<double>& x, const std::vector<double>& ww, const std::vector<double>& bb) {
    return (conv3d_forward<double>(x, ww, bb, g).data * r.data).sum();
  };
  std::vector<double> gw(w.size(), 0.0), gb(b.size(), 0.0);
  const auto gin = conv3d_backward<double>(in, r, w, g, gw, gb);

  const double h = 1e-4;
  for (std::size_t i = 0; i < w.size(); ++i) {
    auto wp = w, wm = w;
    wp[i] += h;
    wm[i] -= h;
    EXPECT_NEAR(gw[i], (objective(in, wp, b) - objective(in, wm, b)) / (2 * h), 1e-8);
  }
  for (std::size_t i = 0; i < b.size(); ++i) {
    auto bp = b, bm = b;
    bp[i] += h;
    bm[i] -= h;
    EXPECT_NEAR(gb[i], (objective(in, w, bp) - objective(in, w, bm)) / (2 * h), 1e-8);
  }
  for (Eigen::Index i = 0; i < in.data.size(); ++i) {
    auto ip = in, im = in;
    ip.data[i] += h;
    im.data[i] -= h;
    EXPECT_NEAR(gin.data[i], (objective(ip, w, b) - objective(im, w, b)) / (2 * h), 1e-8);
  }
}
