#include "dnpi/logit.hpp"

#include "dnpi/error.hpp"
#include "dnpi/stats.hpp"

#include <cmath>
#include <limits>

namespace dnpi {

DesignMatrix DesignMatrix::with_intercept(const std::vector<std::string>& names, const Eigen::MatrixXd& predictors,
                                          const Eigen::VectorXd& outcome) {
  if (static_cast<Eigen::Index>(names.size()) != predictors.cols() || predictors.rows() != outcome.size())
    throw ShapeError("design matrix: names, predictors and outcome disagree in size");
  DesignMatrix d;
  d.columns.push_back("intercept");
  d.columns.insert(d.columns.end(), names.begin(), names.end());
  d.x.resize(predictors.rows(), predictors.cols() + 1);
  d.x.col(0).setOnes();
  d.x.rightCols(predictors.cols()) = predictors;
  d.y = outcome;
  return d;
}

const Coefficient& AssociationResult::at(const std::string& name) const {
  for (const Coefficient& c : coefficients)
    if (c.name == name) return c;
  throw ValidationError("no coefficient named '" + name + "'");
}

Eigen::VectorXd AssociationResult::beta() const {
  Eigen::VectorXd b(static_cast<Eigen::Index>(coefficients.size()));
  for (std::size_t i = 0; i < coefficients.size(); ++i) b[static_cast<Eigen::Index>(i)] = coefficients[i].beta;
  return b;
}

Eigen::VectorXd predict_probability(const Eigen::MatrixXd& x, const Eigen::VectorXd& beta) {
  const Eigen::ArrayXd eta = (x * beta).array();
  // split by sign so neither branch overflows
  return (eta >= 0.0).select(1.0 / (1.0 + (-eta).exp()), eta.exp() / (1.0 + eta.exp())).matrix();
}

namespace {

double log_likelihood(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& beta) {
  const Eigen::ArrayXd eta = (x * beta).array();
  // y*eta - log(1 + e^eta), stable for large |eta|
  const Eigen::ArrayXd softplus = eta.max(0.0) + (-eta.abs()).exp().log1p();
  return (y.array() * eta - softplus).sum();
}

void check_rank(const DesignMatrix& d) {
  const Eigen::Index p = d.x.cols();
  // scale columns so the tolerance is unit-free
  Eigen::MatrixXd xs = d.x;
  for (Eigen::Index j = 0; j < p; ++j) {
    const double n = xs.col(j).norm();
    if (n > 0.0) xs.col(j) /= n;
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(xs);
  qr.setThreshold(1e-10);
  if (qr.rank() == p) return;
  // greedy pass names each column that adds nothing to the ones before it
  std::string bad;
  std::vector<Eigen::Index> kept;
  for (Eigen::Index j = 0; j < p; ++j) {
    Eigen::MatrixXd trial(xs.rows(), static_cast<Eigen::Index>(kept.size()) + 1);
    for (std::size_t k = 0; k < kept.size(); ++k) trial.col(static_cast<Eigen::Index>(k)) = xs.col(kept[k]);
    trial.col(trial.cols() - 1) = xs.col(j);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> q(trial);
    q.setThreshold(1e-10);
    if (q.rank() == trial.cols())
      kept.push_back(j);
    else
      bad += (bad.empty() ? "" : ", ") + d.columns[static_cast<std::size_t>(j)];
  }
  throw CollinearityError("collinear design columns: " + bad);
}

}  // namespace

AssociationResult logit_fit(const DesignMatrix& d) {
  const Eigen::Index n = d.x.rows(), p = d.x.cols();
  if (static_cast<Eigen::Index>(d.columns.size()) != p || d.y.size() != n)
    throw ShapeError("design matrix columns/outcome do not match");
  if (n == 0) throw DegenerateOutcomeError("no rows to fit");
  if (!d.x.allFinite()) throw ValidationError("non-finite value in design matrix");
  const double positives = d.y.sum();
  for (Eigen::Index i = 0; i < n; ++i)
    if (d.y[i] != 0.0 && d.y[i] != 1.0) throw ValidationError("outcome must be 0 or 1");
  if (positives == 0.0 || positives == static_cast<double>(n))
    throw DegenerateOutcomeError("outcome has a single class");
  check_rank(d);

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  double ll = log_likelihood(d.x, d.y, beta);
  AssociationResult res;
  for (int it = 1; it <= 100; ++it) {
    const Eigen::VectorXd mu = predict_probability(d.x, beta);
    const Eigen::VectorXd w = (mu.array() * (1.0 - mu.array())).matrix();
    const Eigen::MatrixXd info = d.x.transpose() * w.asDiagonal() * d.x;
    const Eigen::VectorXd score = d.x.transpose() * (d.y - mu);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
      throw CollinearityError("information matrix is singular");
    const Eigen::VectorXd step = ldlt.solve(score);
    if (!step.allFinite()) throw NumericError("non-finite IRLS step");
    beta += step;
    const double ll_new = log_likelihood(d.x, d.y, beta);
    const double gain = ll_new - ll;
    ll = ll_new;
    res.iterations = it;
    if (std::abs(gain) < 1e-10) {
      res.converged = true;
      break;
    }
    // a fitted probability within ~1e-13 of 0 or 1 only happens under separation
    if ((d.x * beta).cwiseAbs().maxCoeff() > 30.0 && gain > 0.0)
      throw SeparationError("quasi-complete separation: fitted probabilities reach 0 or 1 while the likelihood keeps improving");
  }

  // the likelihood of a separated fit flattens out near |eta| ~ 25
  if ((d.x * beta).cwiseAbs().maxCoeff() > 20.0)
    throw SeparationError("quasi-complete separation: fitted probabilities reach 0 or 1");
  const Eigen::VectorXd mu = predict_probability(d.x, beta);
  const Eigen::VectorXd w = (mu.array() * (1.0 - mu.array())).matrix();
  const Eigen::MatrixXd info = d.x.transpose() * w.asDiagonal() * d.x;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) throw CollinearityError("information matrix is singular");
  const Eigen::MatrixXd cov = ldlt.solve(Eigen::MatrixXd::Identity(p, p));

  res.log_likelihood = ll;
  res.n = static_cast<std::size_t>(n);
  res.dropped_rows = d.dropped_rows;
  for (Eigen::Index j = 0; j < p; ++j) {
    Coefficient c;
    c.name = d.columns[static_cast<std::size_t>(j)];
    c.beta = beta[j];
    c.std_error = std::sqrt(cov(j, j));
    if (!std::isfinite(c.std_error) || !(c.std_error > 0.0)) throw NumericError("invalid standard error for " + c.name);
    c.odds_ratio = std::exp(c.beta);
    c.ci_low = std::exp(c.beta - kZ975 * c.std_error);
    c.ci_high = std::exp(c.beta + kZ975 * c.std_error);
    c.z = c.beta / c.std_error;
    c.p_value = std::max(normal_two_sided_p(c.z), std::numeric_limits<double>::min());
    res.coefficients.push_back(std::move(c));
  }
  return res;
}

}  // namespace dnpi
