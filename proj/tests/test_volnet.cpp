#include "dnpi/checkpoint.hpp"
#include "dnpi/gradcheck.hpp"
#include "dnpi/volnet.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace dnpi;

namespace {

// stem conv (1 -> 2 channels, 3^3, stride 1) + ReLU, no residual stages.
NetSpec stem_only(const Dims3& d) {
  NetSpec s;
  s.name = "stem-only";
  s.input_dims = d;
  s.stem = {2, 3, 1};
  return s;
}

std::vector<Volume> random_batch(const Dims3& d, int n, std::uint64_t seed) {
  std::vector<Volume> b;
  for (int i = 0; i < n; ++i) b.push_back(oracle::random_volume(d, seed + static_cast<std::uint64_t>(i), 0.0, 1.0));
  return b;
}

}  // namespace

TEST(NetSpec, PresetsValidate) {
  EXPECT_NO_THROW(NetSpec::tiny({8, 8, 8}).validate());
  EXPECT_NO_THROW(NetSpec::resnet34_3d({182, 218, 182}).validate());
  EXPECT_NO_THROW(Network(NetSpec::resnet34_3d({32, 32, 32})));
  EXPECT_THROW(NetSpec::preset("vgg", {8, 8, 8}), ConfigError);
  NetSpec bad = NetSpec::tiny({8, 8, 8});
  bad.stages[0].channels = 0;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(NetSpec, LayoutIsContiguous) {
  const Network net(NetSpec::tiny({8, 8, 8}));
  Eigen::Index next = 0;
  for (const auto& b : net.layout()) {
    EXPECT_EQ(b.offset, next) << b.name;
    next += b.size;
  }
  EXPECT_EQ(next, net.param_count());
  EXPECT_EQ(net.layout().back().name, "head.bias");
  EXPECT_EQ(net.layout().back().size, 1);
}

TEST(NetSpec, InitIsBoundedAndDeterministic) {
  const Network net(NetSpec::tiny({8, 8, 8}));
  const auto p1 = net.init_params(5);
  const auto p2 = net.init_params(5);
  EXPECT_TRUE(p1 == p2);
  EXPECT_FALSE(p1 == net.init_params(6));
  for (const auto& b : net.layout()) {
    const auto seg = p1.segment(b.offset, b.size);
    if (b.fan_in == 0) {
      EXPECT_TRUE(seg.isZero(0.0)) << b.name;
    } else {
      EXPECT_LE(seg.cwiseAbs().maxCoeff(), std::sqrt(6.0 / static_cast<double>(b.fan_in))) << b.name;
    }
  }
}

TEST(Forward, ZeroNetworkPredictsZero) {
  ModelState m = make_model(NetSpec::tiny({8, 8, 8}), 1);
  m.params.setZero();
  const auto preds = forward(m, random_batch({8, 8, 8}, 3, 100));
  EXPECT_TRUE(preds.isZero(0.0));
}

TEST(Forward, DuplicatedInputGivesIdenticalPredictions) {
  const ModelState m = make_model(NetSpec::tiny({8, 8, 8}), 2);
  auto batch = random_batch({8, 8, 8}, 3, 200);
  batch.push_back(batch[0]);
  const auto preds = forward(m, batch);
  EXPECT_EQ(preds[0], preds[3]);
  // batch composition does not change per-volume output
  const std::vector<Volume> alone{batch[1]};
  EXPECT_EQ(forward(m, alone)[0], preds[1]);
}

TEST(Forward, MatchesLayerByLayerOracle) {
  const Dims3 d{4, 4, 4};
  const ModelState m = make_model(stem_only(d), 3);
  const Volume v = oracle::random_volume(d, 9);

  // conv -> relu -> global mean -> affine, by hand
  const Network net(m.spec);
  const auto& L = net.layout();
  ASSERT_EQ(L.size(), 4u);
  std::vector<double> in(v.data.data(), v.data.data() + v.data.size());
  std::vector<double> w(m.params.data() + L[0].offset, m.params.data() + L[0].offset + L[0].size);
  std::vector<double> b(m.params.data() + L[1].offset, m.params.data() + L[1].offset + L[1].size);
  int ox, oy, oz;
  auto conv = oracle::brute_conv3d(in, 1, 4, 4, 4, w, b, 2, 3, 1, 1, ox, oy, oz);
  const int n = ox * oy * oz;
  double y = m.params[L[3].offset];
  for (int c = 0; c < 2; ++c) {
    double pooled = 0.0;
    for (int i = 0; i < n; ++i) pooled += std::max(0.0, conv[static_cast<std::size_t>(c * n + i)]);
    y += m.params[L[2].offset + c] * pooled / n;
  }
  const std::vector<Volume> batch{v};
  EXPECT_NEAR(forward(m, batch)[0], y, 1e-12);
}

TEST(Forward, DimsMismatchIsShapeError) {
  const ModelState m = make_model(NetSpec::tiny({8, 8, 8}), 1);
  const std::vector<Volume> batch{Volume({8, 8, 7})};
  EXPECT_THROW(forward(m, batch), ShapeError);
}

TEST(Forward, OverflowNamesTheLayer) {
  ModelState m = make_model(NetSpec::tiny({8, 8, 8}), 1);
  m.params.head(27).setConstant(1e308);
  const std::vector<Volume> batch{Volume({8, 8, 8}, 10.0f)};
  try {
    forward(m, batch);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("stem"), std::string::npos) << e.what();
  }
}

TEST(Backward, ZeroAtTargets) {
  const ModelState m = make_model(NetSpec::tiny({8, 8, 8}), 4);
  const auto batch = random_batch({8, 8, 8}, 2, 300);
  const auto preds = forward(m, batch);
  const std::vector<double> targets{preds[0], preds[1]};
  const auto lg = backward(m, batch, targets);
  EXPECT_EQ(lg.loss, 0.0);
  EXPECT_TRUE(lg.gradient.isZero(0.0));
}

TEST(Backward, HeadGradientIsClosedForm) {
  // y = w . g + b with g the pooled features: dL/dw = 2 (y - t) g, dL/db = 2 (y - t)
  const Dims3 d{4, 4, 4};
  const ModelState m = make_model(stem_only(d), 8);
  const Volume v = oracle::random_volume(d, 10);
  const std::vector<Volume> batch{v};
  const double t = 0.75;
  const std::vector<double> targets{t};
  const double y = forward(m, batch)[0];
  const auto lg = backward(m, batch, targets);
  EXPECT_NEAR(lg.loss, (y - t) * (y - t), 1e-14);

  const Network net(m.spec);
  const auto& L = net.layout();
  // pooled features recovered from a unit head: y(e_c) - y(0)
  for (int c = 0; c < 2; ++c) {
    ModelState probe = m;
    probe.params.segment(L[2].offset, 2).setZero();
    probe.params[L[3].offset] = 0.0;
    probe.params[L[2].offset + c] = 1.0;
    const double g = forward(probe, batch)[0];
    EXPECT_NEAR(lg.gradient[L[2].offset + c], 2.0 * (y - t) * g, 1e-12);
  }
  EXPECT_NEAR(lg.gradient[L[3].offset], 2.0 * (y - t), 1e-12);
}

TEST(Backward, OutputAffineEntersGradient) {
  ModelState m = gradcheck_point(NetSpec::tiny({8, 8, 8}), 12);
  m.output_offset = 3.0;
  m.output_scale = 2.5;
  const auto batch = random_batch({8, 8, 8}, 2, 400);
  const std::vector<double> targets{1.0, 5.0};
  const auto report = gradient_check(m, batch, targets);
  EXPECT_LT(report.max_relative_error, 1e-4);
}

TEST(Backward, MatchesFiniteDifferencesAtTenRandomPoints) {
  for (std::uint64_t point = 0; point < 10; ++point) {
    const ModelState m = gradcheck_point(NetSpec::tiny({8, 8, 8}), 1000 + point);
    const auto batch = random_batch({8, 8, 8}, 2, 500 + 10 * point);
    CounterRng rng(point);
    const std::vector<double> targets{rng.normal(), rng.normal()};
    const auto report = gradient_check(m, batch, targets);
    EXPECT_EQ(report.params_checked, m.params.size());
    EXPECT_EQ(report.kink_unresolved, 0);
    EXPECT_LT(report.max_relative_error, 1e-4) << "point " << point << " worst index " << report.worst_index;
  }
}

TEST(Backward, EveryLayerTypeAgainstTestSideDifferences) {
  // independent of gradient_check: plain central differences over each block
  const ModelState m = gradcheck_point(NetSpec::tiny({8, 8, 8}), 77);
  const auto batch = random_batch({8, 8, 8}, 1, 77);
  const std::vector<double> targets{0.3};
  const auto analytic = backward(m, batch, targets).gradient;
  auto loss = [&](const Eigen::VectorXd& p) {
    ModelState q = m;
    q.params = p;
    return mse(forward(q, batch), targets);
  };
  const Network net(m.spec);
  for (const auto& blk : net.layout()) {
    // first coordinate of each block is enough to cover every layer type
    const double numeric = oracle::central_difference(loss, m.params, blk.offset, 1e-5);
    EXPECT_LT(oracle::relative_error(analytic[blk.offset], numeric), 1e-4) << blk.name;
  }
}

TEST(Loss, MseNonNegativeAndZeroIffEqual) {
  CounterRng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + static_cast<int>(rng.below(10));
    Eigen::VectorXd p(n);
    std::vector<double> t(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      p[i] = rng.normal();
      t[static_cast<std::size_t>(i)] = rng.bernoulli(0.5) ? p[i] : rng.normal();
    }
    const double l = mse(p, t);
    EXPECT_GE(l, 0.0);
    bool equal = true;
    for (int i = 0; i < n; ++i) equal = equal && p[i] == t[static_cast<std::size_t>(i)];
    EXPECT_EQ(l == 0.0, equal);
  }
}

TEST(Checkpoint, RoundTripIsBitIdentical) {
  ModelState m = make_model(NetSpec::tiny({8, 8, 8}), 31);
  m.adam.step_count = 7;
  m.adam.first_moment.setConstant(0.25);
  m.adam.second_moment.setConstant(0.5);
  m.epoch = 3;
  m.best_val_loss = 1.5;
  m.output_offset = 12.0;
  m.output_scale = 3.0;
  m.training_manifest = {"S1/V1", "S2/V1"};
  m.augment_policy_json = R"({"p_rot90":0.5})";

  std::stringstream buf;
  write_checkpoint(buf, m);
  const ModelState r = read_checkpoint(buf);
  EXPECT_EQ(r.spec, m.spec);
  EXPECT_TRUE(r.params == m.params);
  EXPECT_TRUE(r.adam.first_moment == m.adam.first_moment);
  EXPECT_TRUE(r.adam.second_moment == m.adam.second_moment);
  EXPECT_EQ(r.adam.step_count, 7);
  EXPECT_EQ(r.epoch, 3);
  EXPECT_EQ(r.best_val_loss, 1.5);
  EXPECT_EQ(r.training_manifest, m.training_manifest);
  EXPECT_EQ(r.augment_policy_json, m.augment_policy_json);
  EXPECT_EQ(checkpoint_id(r), checkpoint_id(m));

  const auto batch = random_batch({8, 8, 8}, 3, 900);
  const auto a = forward(m, batch);
  const auto b = forward(r, batch);
  for (Eigen::Index i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);
}

TEST(Checkpoint, PayloadIsLittleEndianF64InLayoutOrder) {
  ModelState m = make_model(stem_only({4, 4, 4}), 2);
  std::stringstream buf;
  write_checkpoint(buf, m);
  const std::string bytes = buf.str();
  const auto n = static_cast<std::size_t>(m.params.size());
  ASSERT_GE(bytes.size(), 3 * 8 * n);
  const std::size_t params_at = bytes.size() - 3 * 8 * n;
  for (std::size_t i = 0; i < n; ++i) {
    std::uint64_t bits = 0;
    for (int k = 7; k >= 0; --k) bits = (bits << 8) | static_cast<unsigned char>(bytes[params_at + 8 * i + static_cast<std::size_t>(k)]);
    double x;
    std::memcpy(&x, &bits, 8);
    EXPECT_EQ(x, m.params[static_cast<Eigen::Index>(i)]);
  }
}

TEST(Checkpoint, RejectsGarbage) {
  std::stringstream buf("not a checkpoint at all");
  EXPECT_THROW(read_checkpoint(buf), ValidationError);
}
