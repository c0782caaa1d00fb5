#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace dnpi {

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;  // score >= threshold counts as positive
};

struct RocResult {
  double auc = 0.5;
  std::vector<RocPoint> points;  // from (0,0) at +inf down to (1,1)
};

/// Concordance AUC, (concordant + ties/2) / (n_pos * n_neg), and the ROC
/// polyline over all distinct thresholds. labels are 0/1. Throws
/// DegenerateOutcomeError when either class is absent.
RocResult roc_auc(std::span<const double> scores, std::span<const int> labels);

/// Area under the ROC polyline by the trapezoid rule.
double trapezoid_auc(const std::vector<RocPoint>& points);

struct Interval {
  double low = 0.0;
  double high = 0.0;
};

/// Linear-interpolation percentile (type 7) of an unsorted sample.
double percentile(std::vector<double> values, double q);

struct BootstrapOptions {
  int n_iter = 1000;
  std::uint64_t seed = 0;
  /// Optional cluster id per row; when given, clusters are resampled and
  /// contribute all their rows.
  std::span<const std::string> clusters;
};

/// Resample index sets: iteration i draws from its own substream, and a
/// draw containing a single class is redrawn (and counted).
struct BootstrapPlan {
  std::vector<std::vector<std::size_t>> samples;
  std::size_t redraws = 0;
  bool redraw_warning = false;  // redraws exceeded 1% of iterations
};
BootstrapPlan bootstrap_plan(std::span<const int> labels, const BootstrapOptions& options);

struct BootstrapAuc {
  Interval ci95;
  std::size_t redraws = 0;
  bool redraw_warning = false;
};
/// Percentile [2.5, 97.5] interval of resampled AUCs.
BootstrapAuc bootstrap_auc(std::span<const double> scores, std::span<const int> labels,
                           const BootstrapOptions& options = {});

struct OperatingPoint {
  double threshold = 0.0;  // positive when score > threshold
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  double achieved_fpr = 0.0;
  double sensitivity = 0.0;
  double specificity = 0.0;
  double balanced_accuracy = 0.0;
  double f1 = 0.0;
};

/// Smallest threshold whose empirical FPR is at most `fpr_cap`, i.e. the
/// most sensitive rule under the cap. Throws ValidationError without
/// negatives and DegenerateOutcomeError without positives.
OperatingPoint fixed_fpr_operating_point(std::span<const double> scores, std::span<const int> labels,
                                         double fpr_cap = 0.20);

/// Confusion counts and derived rates for "score > threshold".
OperatingPoint confusion_at(std::span<const double> scores, std::span<const int> labels, double threshold);

}  // namespace dnpi
