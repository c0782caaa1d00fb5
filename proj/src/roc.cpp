#include "dnpi/roc.hpp"

#include "dnpi/error.hpp"
#include "dnpi/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

namespace dnpi {

namespace {

void check_inputs(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ShapeError("scores and labels differ in length");
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw ValidationError("labels must be 0 or 1");
    if (!std::isfinite(scores[i])) throw ValidationError("non-finite score");
  }
}

double auc_of(std::span<const double> scores, std::span<const int> labels, std::vector<std::size_t>& order,
              std::size_t& pos, std::size_t& neg) {
  order.resize(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return scores[i] < scores[j]; });
  double numer = 0.0;  // concordant pairs counted twice, ties once
  std::size_t neg_below = 0;
  pos = neg = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i, gp = 0, gn = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] ? gp : gn) += 1;
      ++j;
    }
    numer += 2.0 * static_cast<double>(gp) * static_cast<double>(neg_below) +
             static_cast<double>(gp) * static_cast<double>(gn);
    neg_below += gn;
    pos += gp;
    neg += gn;
    i = j;
  }
  if (pos == 0 || neg == 0) return std::numeric_limits<double>::quiet_NaN();
  return (0.5 * numer) / (static_cast<double>(pos) * static_cast<double>(neg));
}

}  // namespace

RocResult roc_auc(std::span<const double> scores, std::span<const int> labels) {
  check_inputs(scores, labels);
  std::vector<std::size_t> order;
  std::size_t pos, neg;
  RocResult r;
  r.auc = auc_of(scores, labels, order, pos, neg);
  if (pos == 0 || neg == 0) throw DegenerateOutcomeError("ROC needs both classes");
  r.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  std::size_t tp = 0, fp = 0;
  for (std::size_t k = order.size(); k > 0;) {
    const double t = scores[order[k - 1]];
    while (k > 0 && scores[order[k - 1]] == t) {
      (labels[order[k - 1]] ? tp : fp) += 1;
      --k;
    }
    r.points.push_back({static_cast<double>(fp) / static_cast<double>(neg),
                        static_cast<double>(tp) / static_cast<double>(pos), t});
  }
  return r;
}

double trapezoid_auc(const std::vector<RocPoint>& points) {
  double a = 0.0;
  for (std::size_t i = 1; i < points.size(); ++i)
    a += (points[i].fpr - points[i - 1].fpr) * 0.5 * (points[i].tpr + points[i - 1].tpr);
  return a;
}

double percentile(std::vector<double> v, double q) {
  if (v.empty()) throw SampleSizeError("percentile of an empty sample");
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

BootstrapPlan bootstrap_plan(std::span<const int> labels, const BootstrapOptions& opt) {
  if (opt.n_iter < 1) throw ConfigError("bootstrap n_iter must be >= 1");
  const std::size_t n = labels.size();
  if (n == 0) throw SampleSizeError("bootstrap of an empty sample");
  if (!opt.clusters.empty() && opt.clusters.size() != n) throw ShapeError("one cluster id per row is required");

  std::vector<std::vector<std::size_t>> groups;  // rows per resampling unit
  if (opt.clusters.empty()) {
    for (std::size_t i = 0; i < n; ++i) groups.push_back({i});
  } else {
    std::map<std::string, std::size_t> id;
    for (std::size_t i = 0; i < n; ++i) {
      auto [it, fresh] = id.emplace(opt.clusters[i], groups.size());
      if (fresh) groups.emplace_back();
      groups[it->second].push_back(i);
    }
  }
  bool has_pos = false, has_neg = false;
  for (int l : labels) (l ? has_pos : has_neg) = true;
  if (!has_pos || !has_neg) throw DegenerateOutcomeError("bootstrap needs both classes");

  BootstrapPlan plan;
  plan.samples.resize(static_cast<std::size_t>(opt.n_iter));
  for (int it = 0; it < opt.n_iter; ++it) {
    CounterRng rng = CounterRng::substream(opt.seed, {0xb007, static_cast<std::uint64_t>(it)});
    std::vector<std::size_t>& s = plan.samples[static_cast<std::size_t>(it)];
    for (int attempt = 0;; ++attempt) {
      if (attempt > 10000) throw SampleSizeError("bootstrap cannot draw resamples containing both classes");
      s.clear();
      for (std::size_t g = 0; g < groups.size(); ++g) {
        const auto& rows = groups[rng.below(groups.size())];
        s.insert(s.end(), rows.begin(), rows.end());
      }
      bool p = false, q = false;
      for (std::size_t i : s) (labels[i] ? p : q) = true;
      if (p && q) break;
      ++plan.redraws;
    }
  }
  plan.redraw_warning = static_cast<double>(plan.redraws) > 0.01 * opt.n_iter;
  return plan;
}

BootstrapAuc bootstrap_auc(std::span<const double> scores, std::span<const int> labels,
                           const BootstrapOptions& opt) {
  check_inputs(scores, labels);
  const BootstrapPlan plan = bootstrap_plan(labels, opt);
  std::vector<double> aucs;
  aucs.reserve(plan.samples.size());
  std::vector<double> s;
  std::vector<int> l;
  std::vector<std::size_t> order;
  for (const auto& idx : plan.samples) {
    s.clear();
    l.clear();
    for (std::size_t i : idx) {
      s.push_back(scores[i]);
      l.push_back(labels[i]);
    }
    std::size_t pos, neg;
    aucs.push_back(auc_of(s, l, order, pos, neg));
  }
  BootstrapAuc r;
  r.ci95 = {percentile(aucs, 0.025), percentile(aucs, 0.975)};
  r.redraws = plan.redraws;
  r.redraw_warning = plan.redraw_warning;
  return r;
}

OperatingPoint confusion_at(std::span<const double> scores, std::span<const int> labels, double threshold) {
  check_inputs(scores, labels);
  OperatingPoint op;
  op.threshold = threshold;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] > threshold;
    if (labels[i])
      (predicted ? op.tp : op.fn) += 1;
    else
      (predicted ? op.fp : op.tn) += 1;
  }
  const auto d = [](std::size_t a) { return static_cast<double>(a); };
  op.sensitivity = op.tp + op.fn ? d(op.tp) / d(op.tp + op.fn) : 0.0;
  op.specificity = op.tn + op.fp ? d(op.tn) / d(op.tn + op.fp) : 0.0;
  op.achieved_fpr = op.tn + op.fp ? d(op.fp) / d(op.tn + op.fp) : 0.0;
  op.balanced_accuracy = (op.sensitivity + op.specificity) / 2.0;
  const std::size_t f1d = 2 * op.tp + op.fp + op.fn;
  op.f1 = f1d ? 2.0 * d(op.tp) / d(f1d) : 0.0;
  return op;
}

OperatingPoint fixed_fpr_operating_point(std::span<const double> scores, std::span<const int> labels,
                                         double fpr_cap) {
  check_inputs(scores, labels);
  if (!(fpr_cap >= 0.0 && fpr_cap <= 1.0)) throw ConfigError("fpr_cap must lie in [0,1]");
  std::vector<double> neg;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i])
      ++pos;
    else
      neg.push_back(scores[i]);
  }
  if (neg.empty()) throw ValidationError("cannot compute FPR: no negatives");
  if (pos == 0) throw DegenerateOutcomeError("operating point needs positives");
  std::sort(neg.begin(), neg.end());
  const double n = static_cast<double>(neg.size());
  // FPR(t) = #{neg > t} / n only changes at negative scores; below them all, FPR = 1.
  double threshold;
  if (fpr_cap >= 1.0) {
    threshold = std::nextafter(*std::min_element(scores.begin(), scores.end()), -std::numeric_limits<double>::infinity());
  } else {
    threshold = neg.back();
    for (std::size_t k = neg.size(); k-- > 0;) {
      if (k + 1 < neg.size() && neg[k] == neg[k + 1]) continue;
      const auto above = static_cast<double>(neg.end() - std::upper_bound(neg.begin(), neg.end(), neg[k]));
      if (above / n <= fpr_cap)
        threshold = neg[k];
      else
        break;
    }
  }
  return confusion_at(scores, labels, threshold);
}

}  // namespace dnpi
