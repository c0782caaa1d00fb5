#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace dnpi {

/// Rows are visits; column 0 is the intercept.
struct DesignMatrix {
  std::vector<std::string> columns;
  Eigen::MatrixXd x;
  Eigen::VectorXd y;  // 0/1 outcome
  std::size_t dropped_rows = 0;

  /// Adds the intercept in front of the given predictor columns.
  static DesignMatrix with_intercept(const std::vector<std::string>& names, const Eigen::MatrixXd& predictors,
                                     const Eigen::VectorXd& outcome);
};

struct Coefficient {
  std::string name;
  double beta = 0.0;
  double std_error = 0.0;
  double odds_ratio = 1.0;
  double ci_low = 1.0, ci_high = 1.0;
  double z = 0.0;
  double p_value = 1.0;
};

struct AssociationResult {
  std::vector<Coefficient> coefficients;
  double log_likelihood = 0.0;
  std::size_t n = 0;
  std::size_t dropped_rows = 0;
  bool converged = false;
  int iterations = 0;

  const Coefficient& at(const std::string& name) const;
  Eigen::VectorXd beta() const;
};

/// Two-sided 97.5% standard-normal quantile used for every Wald interval.
inline constexpr double kZ975 = 1.959963984540054;

/// Maximum likelihood by iteratively reweighted least squares; stops when
/// |delta log-likelihood| < 1e-10 or after 100 iterations. Wald standard
/// errors come from the inverse information at the estimate.
/// Throws DegenerateOutcomeError (one class), SeparationError (|beta| > 15
/// while the likelihood still improves) and CollinearityError (rank-deficient
/// design, naming the dependent columns).
AssociationResult logit_fit(const DesignMatrix& design);

/// Fitted probabilities sigmoid(x * beta).
Eigen::VectorXd predict_probability(const Eigen::MatrixXd& x, const Eigen::VectorXd& beta);

}  // namespace dnpi
