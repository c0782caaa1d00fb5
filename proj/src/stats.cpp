#include "dnpi/stats.hpp"

#include "dnpi/error.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <optional>

namespace dnpi {

double normal_two_sided_p(double z) { return std::min(1.0, std::erfc(std::abs(z) / std::sqrt(2.0))); }

double student_t_two_sided_p(double t, double df) {
  if (!std::isfinite(t)) return 0.0;
  const boost::math::students_t dist(df);
  return std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t))));
}

Moments moments(std::span<const double> x) {
  Moments m;
  m.n = x.size();
  if (x.empty()) return m;
  m.mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  if (x.size() > 1) {
    double ss = 0.0;
    for (double v : x) ss += (v - m.mean) * (v - m.mean);
    m.sd = std::sqrt(ss / static_cast<double>(x.size() - 1));
  }
  return m;
}

std::string format_mean_sd(const Moments& m) {
  if (m.n == 0) return "n=0";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f \xC2\xB1 %.2f", m.mean, m.sd);
  return buf;
}

namespace {

std::string format_count(std::size_t k, std::size_t n) {
  if (n == 0) return "n=0";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%zu [%.1f%%]", k, 100.0 * static_cast<double>(k) / static_cast<double>(n));
  return buf;
}

}  // namespace

std::vector<SummaryRow> describe(const std::vector<VisitRecord>& cohort) {
  using Getter = std::optional<double> (*)(const VisitRecord&);
  struct Var {
    const char* name;
    bool categorical;
    Getter get;
  };
  static const Var vars[] = {
      {"age", false, [](const VisitRecord& r) -> std::optional<double> { return r.age; }},
      {"mmse", false, [](const VisitRecord& r) -> std::optional<double> { return r.mmse; }},
      {"cdr", false, [](const VisitRecord& r) -> std::optional<double> { return r.cdr; }},
      {"npiq", false, [](const VisitRecord& r) -> std::optional<double> { return r.npiq; }},
      {"abeta42", false, [](const VisitRecord& r) { return r.abeta42; }},
      {"male", true, [](const VisitRecord& r) -> std::optional<double> { return r.gender == Gender::M ? 1.0 : 0.0; }},
      {"apoe4", true, [](const VisitRecord& r) -> std::optional<double> { return r.apoe4; }},
      {"amyloid_positive", true,
       [](const VisitRecord& r) -> std::optional<double> {
         if (!r.amyloid_status) return std::nullopt;
         return *r.amyloid_status;
       }},
  };
  std::vector<SummaryRow> out;
  for (const Var& v : vars) {
    std::vector<double> g1, g0;
    for (const VisitRecord& r : cohort)
      if (auto x = v.get(r)) (r.converter() ? g1 : g0).push_back(*x);
    SummaryRow row;
    row.variable = v.name;
    row.categorical = v.categorical;
    row.converter_n = g1.size();
    row.non_converter_n = g0.size();
    if (v.categorical) {
      row.converter_count = static_cast<std::size_t>(std::count(g1.begin(), g1.end(), 1.0));
      row.non_converter_count = static_cast<std::size_t>(std::count(g0.begin(), g0.end(), 1.0));
      row.converter_text = format_count(row.converter_count, g1.size());
      row.non_converter_text = format_count(row.non_converter_count, g0.size());
    } else {
      row.converter = moments(g1);
      row.non_converter = moments(g0);
      row.converter_text = format_mean_sd(row.converter);
      row.non_converter_text = format_mean_sd(row.non_converter);
    }
    out.push_back(std::move(row));
  }
  return out;
}

WelchResult welch_t(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) throw SampleSizeError("welch_t needs at least 2 values per group");
  const Moments ma = moments(a), mb = moments(b);
  const double va = ma.sd * ma.sd / static_cast<double>(ma.n);
  const double vb = mb.sd * mb.sd / static_cast<double>(mb.n);
  const double se2 = va + vb;
  if (!(se2 > 0.0)) throw NumericError("welch_t: both groups have zero variance");
  WelchResult r;
  r.t = (ma.mean - mb.mean) / std::sqrt(se2);
  r.df = se2 * se2 /
         (va * va / static_cast<double>(ma.n - 1) + vb * vb / static_cast<double>(mb.n - 1));
  r.p = student_t_two_sided_p(r.t, r.df);
  return r;
}

namespace {

// Midranks (1-based) of the pooled sample and the tie-group sizes.
std::vector<double> midranks(const std::vector<double>& pooled, std::vector<std::size_t>& ties) {
  const std::size_t n = pooled.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return pooled[i] < pooled[j]; });
  std::vector<double> rank(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && pooled[order[j + 1]] == pooled[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = r;
    ties.push_back(j - i + 1);
    i = j + 1;
  }
  return rank;
}

}  // namespace

MannWhitneyResult mann_whitney_u(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw SampleSizeError("mann_whitney_u needs a non-empty group on each side");
  const std::size_t na = a.size(), nb = b.size(), n = na + nb;
  std::vector<double> pooled(a.begin(), a.end());
  pooled.insert(pooled.end(), b.begin(), b.end());
  std::vector<std::size_t> ties;
  const std::vector<double> rank = midranks(pooled, ties);
  const double base = static_cast<double>(na) * static_cast<double>(na + 1) / 2.0;
  double ra = 0.0;
  for (std::size_t i = 0; i < na; ++i) ra += rank[i];

  MannWhitneyResult res;
  res.u = ra - base;
  const double mu = static_cast<double>(na) * static_cast<double>(nb) / 2.0;
  const double dev = std::abs(res.u - mu);

  if (na <= 8 && nb <= 8) {
    // every assignment of na pooled positions to group A is equally likely
    res.exact = true;
    std::size_t hits = 0, total = 0;
    const std::uint32_t limit = 1u << n;
    for (std::uint32_t mask = 0; mask < limit; ++mask) {
      if (static_cast<std::size_t>(std::popcount(mask)) != na) continue;
      double r = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        if (mask >> i & 1u) r += rank[i];
      ++total;
      if (std::abs(r - base - mu) >= dev - 1e-9) ++hits;
    }
    res.p = static_cast<double>(hits) / static_cast<double>(total);
    return res;
  }

  double tie_term = 0.0;
  for (std::size_t t : ties) tie_term += std::pow(static_cast<double>(t), 3) - static_cast<double>(t);
  const double nn = static_cast<double>(n);
  const double var = static_cast<double>(na) * static_cast<double>(nb) / 12.0 * ((nn + 1.0) - tie_term / (nn * (nn - 1.0)));
  if (!(var > 0.0)) return res;  // all values tied
  const double z = std::max(0.0, dev - 0.5) / std::sqrt(var);
  res.p = normal_two_sided_p(z);
  return res;
}

}  // namespace dnpi
