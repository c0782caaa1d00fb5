#pragma once

#include "dnpi/cohort.hpp"

#include <span>
#include <string>
#include <vector>

namespace dnpi {

/// Two-sided standard normal tail, 2 * (1 - Phi(|z|)).
double normal_two_sided_p(double z);

/// Two-sided Student-t tail probability for statistic t with df degrees.
double student_t_two_sided_p(double t, double df);

struct Moments {
  std::size_t n = 0;
  double mean = 0.0;
  double sd = 0.0;  // sample sd (n - 1); 0 when n < 2
};
Moments moments(std::span<const double> x);

/// "mean ± sd" with two decimals, or "n=0" for an empty group.
std::string format_mean_sd(const Moments& m);

struct SummaryRow {
  std::string variable;
  bool categorical = false;
  Moments converter, non_converter;                    // continuous rows
  std::size_t converter_count = 0, non_converter_count = 0;  // categorical rows
  std::size_t converter_n = 0, non_converter_n = 0;    // rows with the variable present
  std::string converter_text, non_converter_text;
};

/// Per-group summaries: age, MMSE, CDR, NPIQ, Abeta42 as mean ± sd; male,
/// APOE4 carrier and amyloid positive as N [%]. Empty groups render as "n=0".
std::vector<SummaryRow> describe(const std::vector<VisitRecord>& cohort);

struct WelchResult {
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;
};
/// Throws SampleSizeError when a group has fewer than 2 values and
/// NumericError when both groups have zero variance.
WelchResult welch_t(std::span<const double> a, std::span<const double> b);

struct MannWhitneyResult {
  double u = 0.0;  // pairs (a, b) with a > b, ties counted one half
  double p = 1.0;
  bool exact = false;
};
/// Exact two-sided permutation p when both groups have at most 8 values,
/// tie-corrected normal approximation with continuity correction otherwise.
/// Throws SampleSizeError on an empty group.
MannWhitneyResult mann_whitney_u(std::span<const double> a, std::span<const double> b);

}  // namespace dnpi
