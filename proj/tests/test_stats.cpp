#include "dnpi/error.hpp"
#include "dnpi/logit.hpp"
#include "dnpi/roc.hpp"
#include "dnpi/stats.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace dnpi;

namespace {

DesignMatrix two_by_two(int a, int b, int c, int d) {
  // a: x=1,y=1  b: x=1,y=0  c: x=0,y=1  d: x=0,y=0
  const int n = a + b + c + d;
  Eigen::MatrixXd x(n, 1);
  Eigen::VectorXd y(n);
  int i = 0;
  auto put = [&](int k, double xv, double yv) {
    for (int j = 0; j < k; ++j, ++i) {
      x(i, 0) = xv;
      y[i] = yv;
    }
  };
  put(a, 1, 1);
  put(b, 1, 0);
  put(c, 0, 1);
  put(d, 0, 0);
  return DesignMatrix::with_intercept({"x"}, x, y);
}

DesignMatrix random_design(std::uint64_t seed, int n, double slope) {
  CounterRng rng(seed);
  Eigen::MatrixXd x(n, 2);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    x(i, 0) = rng.normal();
    x(i, 1) = rng.normal(3.0, 2.0);
    const double eta = -0.3 + slope * x(i, 0) + 0.2 * x(i, 1);
    y[i] = rng.bernoulli(1.0 / (1.0 + std::exp(-eta))) ? 1.0 : 0.0;
  }
  return DesignMatrix::with_intercept({"a", "b"}, x, y);
}

}  // namespace

TEST(Describe, Moments) {
  const std::vector<double> one{4.5}, three{1, 2, 3};
  EXPECT_EQ(moments(one).mean, 4.5);
  EXPECT_EQ(moments(one).sd, 0.0);
  EXPECT_EQ(moments(three).mean, 2.0);
  EXPECT_EQ(moments(three).sd, 1.0);
  EXPECT_EQ(format_mean_sd(moments({})), "n=0");
  EXPECT_EQ(format_mean_sd(moments(three)), "2.00 \xC2\xB1 1.00");
}

TEST(Describe, GroupsAndEmptyGroup) {
  std::vector<VisitRecord> c(3);
  for (int i = 0; i < 3; ++i) {
    c[static_cast<std::size_t>(i)].age = 70.0 + i;
    c[static_cast<std::size_t>(i)].gender = i == 0 ? Gender::M : Gender::F;
  }
  const auto rows = describe(c);
  for (const auto& r : rows) {
    EXPECT_EQ(r.converter_text, "n=0") << r.variable;
    EXPECT_EQ(r.converter_n, 0u);
    if (r.variable == "age") {
      EXPECT_EQ(r.non_converter.mean, 71.0);
      EXPECT_EQ(r.non_converter_text, "71.00 \xC2\xB1 1.00");
    }
    if (r.variable == "male") EXPECT_EQ(r.non_converter_text, "1 [33.3%]");
    if (r.variable == "abeta42") EXPECT_EQ(r.non_converter_text, "n=0");
    EXPECT_FALSE(std::isnan(r.converter.mean));
  }
}

TEST(StudentT, MatchesClosedFormTails) {
  for (double t : {0.0, 0.3, 1.0, 2.5, -4.0, 12.0}) {
    EXPECT_NEAR(student_t_two_sided_p(t, 1.0), oracle::t_two_sided_df1(t), 1e-12);
    EXPECT_NEAR(student_t_two_sided_p(t, 2.0), oracle::t_two_sided_df2(t), 1e-12);
  }
  EXPECT_NEAR(normal_two_sided_p(1.959963984540054), 0.05, 1e-15);
}

TEST(Welch, IdenticalGroups) {
  const std::vector<double> a{1, 2, 3, 5};
  const auto r = welch_t(a, a);
  EXPECT_EQ(r.t, 0.0);
  EXPECT_EQ(r.p, 1.0);
}

TEST(Welch, ShiftedGroups) {
  const std::vector<double> a{1, 2, 3}, b{11, 12, 13};
  const auto r = welch_t(a, b);
  // equal variances and sizes: t = -10 / sqrt(2/3), df = 4
  EXPECT_NEAR(r.t, -10.0 / std::sqrt(2.0 / 3.0), 1e-12);
  EXPECT_NEAR(r.df, 4.0, 1e-12);
  EXPECT_LT(r.p, 0.01);
}

TEST(Welch, UnequalVarianceDf) {
  const std::vector<double> a{0, 2}, b{0, 0, 6, 6};
  // va = 2/2 = 1, vb = 12/4 = 3; df = 16 / (1/1 + 9/3) = 4
  const auto r = welch_t(a, b);
  EXPECT_NEAR(r.df, 4.0, 1e-12);
  EXPECT_NEAR(r.t, -2.0 / 2.0, 1e-12);
}

TEST(Welch, Errors) {
  const std::vector<double> one{1}, two{1, 2}, z{0, 0};
  EXPECT_THROW(welch_t(one, two), SampleSizeError);
  EXPECT_THROW(welch_t(z, z), NumericError);
}

TEST(MannWhitney, ExactSmallExample) {
  const std::vector<double> a{1, 2}, b{3, 4};
  const auto r = mann_whitney_u(a, b);
  EXPECT_EQ(r.u, 0.0);
  EXPECT_TRUE(r.exact);
  EXPECT_NEAR(r.p, 2.0 / 6.0, 1e-15);
}

TEST(MannWhitney, IdenticalValues) {
  const std::vector<double> a{5, 5, 5}, b{5, 5};
  const auto r = mann_whitney_u(a, b);
  EXPECT_EQ(r.u, 3.0);
  EXPECT_EQ(r.p, 1.0);
}

TEST(MannWhitney, ExactMatchesEnumerationWithTies) {
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    CounterRng rng(seed);
    const int na = 1 + static_cast<int>(rng.below(6)), nb = 1 + static_cast<int>(rng.below(6));
    std::vector<double> a, b;
    for (int i = 0; i < na; ++i) a.push_back(static_cast<double>(rng.below(5)));
    for (int i = 0; i < nb; ++i) b.push_back(static_cast<double>(rng.below(5)));
    const auto r = mann_whitney_u(a, b);
    EXPECT_EQ(r.u, oracle::brute_u(a, b));
    EXPECT_NEAR(r.p, oracle::brute_mwu_p(a, b), 1e-12);
  }
}

TEST(MannWhitney, ApproximationAgreesWithExactOnSubsample) {
  CounterRng rng(3);
  std::vector<double> a, b;
  for (int i = 0; i < 60; ++i) a.push_back(rng.normal(0.0, 1.0));
  for (int i = 0; i < 60; ++i) b.push_back(rng.normal(2.0, 1.0));
  const auto big = mann_whitney_u(a, b);
  EXPECT_FALSE(big.exact);
  EXPECT_LT(big.p, 0.001);
  EXPECT_EQ(big.u, oracle::brute_u(a, b));
  const std::vector<double> a8(a.begin(), a.begin() + 8), b8(b.begin(), b.begin() + 8);
  const std::vector<double> a9(a.begin(), a.begin() + 9), b9(b.begin(), b.begin() + 9);
  const auto exact = mann_whitney_u(a8, b8);
  const auto approx = mann_whitney_u(a9, b9);
  EXPECT_TRUE(exact.exact);
  EXPECT_FALSE(approx.exact);
  EXPECT_LT(exact.p, 0.05);
  EXPECT_LT(approx.p, 0.05);
}

TEST(Logit, SaturatedTwoByTwo) {
  const auto r = logit_fit(two_by_two(6, 2, 2, 6));
  const auto& x = r.at("x");
  EXPECT_NEAR(x.beta, std::log(9.0), 1e-8);
  EXPECT_NEAR(x.odds_ratio, 9.0, 1e-7);
  EXPECT_NEAR(x.std_error, std::sqrt(1.0 / 6 + 0.5 + 0.5 + 1.0 / 6), 1e-6);
  EXPECT_NEAR(r.at("intercept").beta, std::log(2.0 / 6.0), 1e-8);
  EXPECT_TRUE(r.converged);
  EXPECT_EQ(r.n, 16u);
  EXPECT_LE(x.ci_low, x.odds_ratio);
  EXPECT_GE(x.ci_high, x.odds_ratio);
}

TEST(Logit, SaturatedCrossProductRatios) {
  for (auto [a, b, c, d] : {std::array{3, 5, 7, 2}, std::array{10, 1, 4, 9}, std::array{2, 2, 2, 2}}) {
    const auto r = logit_fit(two_by_two(a, b, c, d));
    EXPECT_NEAR(r.at("x").beta, std::log(static_cast<double>(a * d) / (b * c)), 1e-8);
    EXPECT_NEAR(r.at("x").std_error, std::sqrt(1.0 / a + 1.0 / b + 1.0 / c + 1.0 / d), 1e-6);
  }
}

TEST(Logit, DuplicatedRowsShrinkStandardErrors) {
  const DesignMatrix d = random_design(11, 80, 0.8);
  DesignMatrix dd = d;
  dd.x.resize(160, d.x.cols());
  dd.x << d.x, d.x;
  dd.y.resize(160);
  dd.y << d.y, d.y;
  const auto r1 = logit_fit(d), r2 = logit_fit(dd);
  for (std::size_t j = 0; j < r1.coefficients.size(); ++j) {
    EXPECT_NEAR(r2.coefficients[j].beta, r1.coefficients[j].beta, 1e-9);
    EXPECT_NEAR(r2.coefficients[j].std_error, r1.coefficients[j].std_error / std::sqrt(2.0), 1e-9);
  }
}

TEST(Logit, RescalingAColumn) {
  const DesignMatrix d = random_design(12, 120, 0.6);
  DesignMatrix s = d;
  const double c = 7.5;
  s.x.col(1) *= c;
  const auto r1 = logit_fit(d), r2 = logit_fit(s);
  EXPECT_NEAR(r2.at("a").beta, r1.at("a").beta / c, 1e-6);
  const Eigen::VectorXd p1 = predict_probability(d.x, r1.beta()), p2 = predict_probability(s.x, r2.beta());
  EXPECT_LT((p1 - p2).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Logit, ScoreEquationsVanishAtEstimate) {
  const DesignMatrix d = random_design(13, 200, 1.1);
  const auto r = logit_fit(d);
  const Eigen::VectorXd g = d.x.transpose() * (d.y - predict_probability(d.x, r.beta()));
  EXPECT_LT(g.cwiseAbs().maxCoeff(), 1e-7);
}

TEST(Logit, WaldConsistency) {
  for (std::uint64_t seed = 20; seed < 60; ++seed) {
    const auto r = logit_fit(random_design(seed, 60, 0.4));
    for (const auto& c : r.coefficients) {
      EXPECT_LE(c.ci_low, c.odds_ratio);
      EXPECT_GE(c.ci_high, c.odds_ratio);
      EXPECT_GT(c.p_value, 0.0);
      EXPECT_LE(c.p_value, 1.0);
      EXPECT_EQ(c.p_value < 0.05, c.ci_low > 1.0 || c.ci_high < 1.0) << c.name << " p=" << c.p_value;
    }
  }
}

TEST(Logit, Errors) {
  DesignMatrix d = two_by_two(6, 2, 2, 6);
  d.y.setOnes();
  EXPECT_THROW(logit_fit(d), DegenerateOutcomeError);
  // x perfectly predicts y
  EXPECT_THROW(logit_fit(two_by_two(5, 0, 0, 5)), SeparationError);
  DesignMatrix col = random_design(5, 40, 0.5);
  Eigen::MatrixXd x(40, 3);
  x << col.x.col(1), col.x.col(2), 2.0 * col.x.col(1) - col.x.col(2);
  try {
    logit_fit(DesignMatrix::with_intercept({"a", "b", "a_minus_b"}, x, col.y));
    FAIL() << "expected collinearity";
  } catch (const CollinearityError& e) {
    EXPECT_NE(std::string(e.what()).find("a_minus_b"), std::string::npos) << e.what();
  }
}

TEST(Roc, WorkedExamples) {
  const std::vector<double> s1{0.1, 0.2, 0.8, 0.9};
  const std::vector<int> l{0, 0, 1, 1};
  EXPECT_EQ(roc_auc(s1, l).auc, 1.0);
  const std::vector<double> s2{0.5, 0.5, 0.5, 0.5};
  EXPECT_EQ(roc_auc(s2, l).auc, 0.5);
  const std::vector<double> s3{0.4, 0.8, 0.6, 0.9};
  EXPECT_EQ(roc_auc(s3, l).auc, 0.75);
  const std::vector<int> one{1, 1, 1, 1};
  EXPECT_THROW(roc_auc(s1, one), DegenerateOutcomeError);
}

TEST(Roc, ConcordanceTrapezoidAndInvariances) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    CounterRng rng(seed);
    const int n = 2 + static_cast<int>(rng.below(29));
    std::vector<double> s;
    std::vector<int> l;
    for (int i = 0; i < n; ++i) {
      s.push_back(static_cast<double>(rng.below(8)) / 4.0);
      l.push_back(static_cast<int>(rng.below(2)));
    }
    l[0] = 0;
    l[1] = 1;
    const RocResult r = roc_auc(s, l);
    EXPECT_EQ(r.auc, oracle::brute_auc(s, l));
    EXPECT_NEAR(trapezoid_auc(r.points), r.auc, 1e-12);
    for (std::size_t k = 1; k < r.points.size(); ++k) {
      EXPECT_GE(r.points[k].fpr, r.points[k - 1].fpr);
      EXPECT_GE(r.points[k].tpr, r.points[k - 1].tpr);
    }
    EXPECT_EQ(r.points.back().fpr, 1.0);
    EXPECT_EQ(r.points.back().tpr, 1.0);
    std::vector<double> neg, mono;
    for (double v : s) {
      neg.push_back(-v);
      mono.push_back(std::exp(3.0 * v) + 1.0);
    }
    EXPECT_NEAR(roc_auc(neg, l).auc, 1.0 - r.auc, 1e-12);
    EXPECT_EQ(roc_auc(mono, l).auc, r.auc);
  }
}

TEST(Bootstrap, SeparatedDataAndDeterminism) {
  const std::vector<double> s{0.1, 0.2, 0.3, 0.7, 0.8, 0.9};
  const std::vector<int> l{0, 0, 0, 1, 1, 1};
  BootstrapOptions o;
  o.seed = 3;
  const auto r = bootstrap_auc(s, l, o);
  EXPECT_EQ(r.ci95.low, 1.0);
  EXPECT_EQ(r.ci95.high, 1.0);
  EXPECT_GT(r.redraws, 0u);  // 6 rows: one-class resamples happen
  CounterRng rng(8);
  std::vector<double> s2;
  std::vector<int> l2;
  for (int i = 0; i < 80; ++i) {
    l2.push_back(i % 3 == 0);
    s2.push_back(rng.normal(l2.back() ? 1.0 : 0.0, 1.0));
  }
  const auto a = bootstrap_auc(s2, l2, o), b = bootstrap_auc(s2, l2, o);
  EXPECT_EQ(a.ci95.low, b.ci95.low);
  EXPECT_EQ(a.ci95.high, b.ci95.high);
  const double point = roc_auc(s2, l2).auc;
  EXPECT_LE(a.ci95.low, point);
  EXPECT_GE(a.ci95.high, point);
  o.seed = 4;
  EXPECT_NE(bootstrap_auc(s2, l2, o).ci95.low, a.ci95.low);
}

TEST(Bootstrap, ClusterResamplingKeepsSubjectsWhole) {
  const std::vector<int> l{0, 0, 1, 1, 0, 1};
  const std::vector<std::string> ids{"A", "A", "B", "B", "C", "C"};
  BootstrapOptions o;
  o.n_iter = 50;
  o.clusters = ids;
  const auto plan = bootstrap_plan(l, o);
  for (const auto& s : plan.samples) {
    EXPECT_EQ(s.size(), 6u);
    for (std::size_t k = 0; k < s.size(); k += 2) EXPECT_EQ(ids[s[k]], ids[s[k + 1]]);
  }
}

TEST(Percentile, LinearInterpolation) {
  EXPECT_EQ(percentile({4, 1, 3, 2}, 0.5), 2.5);
  EXPECT_EQ(percentile({1, 2, 3, 4, 5}, 0.25), 2.0);
  EXPECT_NEAR(percentile({0, 10}, 0.975), 9.75, 1e-12);
}

TEST(OperatingPoint, WorkedExamples) {
  const std::vector<double> s{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.9};
  const std::vector<int> l{0, 0, 0, 0, 0, 1, 1};
  const auto op = fixed_fpr_operating_point(s, l, 0.20);
  EXPECT_EQ(op.threshold, 0.4);
  EXPECT_EQ(op.achieved_fpr, 0.2);
  EXPECT_EQ(op.fp, 1u);
  EXPECT_EQ(op.tp, 2u);
  const auto zero = fixed_fpr_operating_point(s, l, 0.0);
  EXPECT_EQ(zero.threshold, 0.5);
  EXPECT_EQ(zero.achieved_fpr, 0.0);
  const std::vector<int> all_pos(7, 1);
  EXPECT_THROW(fixed_fpr_operating_point(s, all_pos, 0.2), ValidationError);
}

TEST(OperatingPoint, BalancedAccuracyArithmetic) {
  // 10 positives, 10 negatives: sensitivity 0.7, specificity 0.8
  std::vector<double> s;
  std::vector<int> l;
  for (int i = 0; i < 10; ++i) {
    s.push_back(i < 7 ? 1.0 : 0.0);
    l.push_back(1);
    s.push_back(i < 2 ? 1.0 : 0.0);
    l.push_back(0);
  }
  const auto op = confusion_at(s, l, 0.5);
  EXPECT_EQ(op.sensitivity, 0.7);
  EXPECT_EQ(op.specificity, 0.8);
  EXPECT_EQ(op.balanced_accuracy, 0.75);
  EXPECT_EQ(op.f1, 14.0 / 19.0);
}

TEST(OperatingPoint, MatchesEnumeration) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    CounterRng rng(seed + 1000);
    const int n = 2 + static_cast<int>(rng.below(40));
    std::vector<double> s;
    std::vector<int> l;
    for (int i = 0; i < n; ++i) {
      s.push_back(static_cast<double>(rng.below(12)));
      l.push_back(static_cast<int>(rng.below(2)));
    }
    l[0] = 0;
    l[1] = 1;
    const auto op = fixed_fpr_operating_point(s, l, 0.2);
    const auto best = oracle::brute_operating_point(s, l, 0.2);
    EXPECT_LE(op.achieved_fpr, 0.2);
    EXPECT_EQ(op.achieved_fpr, best.fpr);
    EXPECT_EQ(op.sensitivity, best.tpr);
    const auto d = [](std::size_t k) { return static_cast<double>(k); };
    EXPECT_EQ(op.sensitivity, d(op.tp) / d(op.tp + op.fn));
    EXPECT_EQ(op.specificity, d(op.tn) / d(op.tn + op.fp));
    EXPECT_EQ(op.f1, 2.0 * d(op.tp) / d(2 * op.tp + op.fp + op.fn));
    EXPECT_EQ(op.balanced_accuracy, (op.sensitivity + op.specificity) / 2.0);
  }
}
