#pragma once

#include "dnpi/error.hpp"

#include <Eigen/Core>

#include <cmath>
#include <cstdint>

namespace dnpi {

struct AdamHyper {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// One bias-corrected Adam update. `step` is the 1-based index of this
/// update (the count after incrementing).
template <typename Derived, typename DerivedM, typename DerivedV, typename DerivedG>
void adam_update(Eigen::MatrixBase<Derived>& params, Eigen::MatrixBase<DerivedM>& m,
                 Eigen::MatrixBase<DerivedV>& v, const Eigen::MatrixBase<DerivedG>& grad,
                 std::int64_t step, const AdamHyper& hp) {
  using Scalar = typename Derived::Scalar;
  const Scalar b1 = static_cast<Scalar>(hp.beta1);
  const Scalar b2 = static_cast<Scalar>(hp.beta2);
  m = b1 * m + (Scalar(1) - b1) * grad;
  v = b2 * v + (Scalar(1) - b2) * grad.cwiseAbs2();
  const Scalar m_corr = Scalar(1) - std::pow(b1, static_cast<Scalar>(step));
  const Scalar v_corr = Scalar(1) - std::pow(b2, static_cast<Scalar>(step));
  const Scalar lr = static_cast<Scalar>(hp.learning_rate);
  const Scalar eps = static_cast<Scalar>(hp.epsilon);
  params.array() -= lr * (m.array() / m_corr) / ((v.array() / v_corr).sqrt() + eps);
}

}  // namespace dnpi
