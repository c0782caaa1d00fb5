#pragma once

#include "dnpi/cohort.hpp"
#include "dnpi/deviation.hpp"
#include "dnpi/logit.hpp"
#include "dnpi/roc.hpp"

#include <optional>
#include <string>
#include <vector>

namespace dnpi {

/// A scored visit joined with its cohort row.
struct AnalysisRow {
  DeviationRecord deviation;
  VisitRecord visit;
};

/// Joins on (subject_id, visit_id). Every deviation record must find its
/// visit; otherwise JoinError lists the unmatched ids.
std::vector<AnalysisRow> join_rows(const std::vector<DeviationRecord>& deviations,
                                   const std::vector<VisitRecord>& cohort);

struct CovariateOptions {
  /// Used to derive amyloid_status from abeta42 when the status is absent.
  /// No default: without it such rows cannot supply amyloid_status.
  std::optional<double> amyloid_cutoff;
};

/// Predictors: dnpi, age, gender (M=1, F=0), apoe4, cdr, mmse, abeta42,
/// amyloid_status. Returns nullopt when the value is absent for this row.
/// Throws ConfigError for an unknown name.
std::optional<double> covariate_value(const AnalysisRow& row, const std::string& name,
                                      const CovariateOptions& options = {});

/// Builds intercept + predictors with the converter indicator as outcome;
/// rows lacking any predictor are dropped and counted.
DesignMatrix build_design(const std::vector<AnalysisRow>& rows, const std::vector<std::string>& predictors,
                          const CovariateOptions& options = {});

struct AdjustmentSet {
  std::string label;
  std::vector<std::string> covariates;
};

/// The Table-1 rows: unadjusted, each single covariate, and the combined set.
std::vector<AdjustmentSet> default_adjustment_sets();

struct AssociationOptions {
  /// Divide dnpi by its sample sd over the analysed rows (OR per SD).
  bool standardize_dnpi = false;
  CovariateOptions covariates;
};

struct AssociationRow {
  AdjustmentSet set;
  AssociationResult fit;
  Coefficient dnpi;  // the dnpi coefficient of `fit`
  double dnpi_scale = 1.0;  // divisor applied to dnpi before fitting
  // set when the fit separates; the row is reported as not estimable
  std::string error;
};

std::vector<AssociationRow> association_suite(const std::vector<AnalysisRow>& rows,
                                              const std::vector<AdjustmentSet>& sets,
                                              const AssociationOptions& options = {});

struct ModelSpec {
  std::string name;
  std::vector<std::string> predictors;
};

/// Univariate DNPI, univariate Abeta42, and each with age + gender + CDR.
std::vector<ModelSpec> default_model_specs();

struct DiscriminationOptions {
  double fpr_cap = 0.20;
  int n_iter = 1000;
  std::uint64_t seed = 0;
  bool cluster_by_subject = false;
  CovariateOptions covariates;
};

/// Band of bootstrap ROC curves: at each FPR grid point, percentile
/// [2.5, 97.5] of the step-interpolated TPR.
struct RocBand {
  std::vector<double> fpr, tpr_low, tpr_high;
};
RocBand roc_band(const std::vector<std::vector<RocPoint>>& curves, int grid = 51);

struct DiscriminationReport {
  std::string name;
  std::vector<std::string> predictors;
  std::vector<double> coefficients;  // intercept first, fitted on the fit set
  std::size_t n_fit = 0, n_eval = 0, dropped_fit = 0, dropped_eval = 0;
  double auc = 0.5;
  Interval auc_ci95;
  Interval balanced_accuracy_ci95;
  Interval f1_ci95;
  OperatingPoint operating_point;  // at fpr_cap on the eval set
  std::vector<RocPoint> roc_points;
  RocBand band;
  std::size_t bootstrap_redraws = 0;
  bool bootstrap_warning = false;
  // set when the fit on the fit set separates; nothing else is filled in
  std::string error;
};

/// Fits each spec on `fit_set`, scores `eval_set` with fitted probabilities
/// and reports AUC, the operating point at the FPR cap, and bootstrap
/// intervals (AUC, BA, F1) over shared resamples of the eval set. A predictor
/// with no value in any row throws ConfigError.
std::vector<DiscriminationReport> discrimination_suite(const std::vector<AnalysisRow>& fit_set,
                                                       const std::vector<AnalysisRow>& eval_set,
                                                       const std::vector<ModelSpec>& specs,
                                                       const DiscriminationOptions& options = {});

}  // namespace dnpi
