#pragma once

#include "dnpi/volnet.hpp"

#include <span>

namespace dnpi {

struct GradcheckOptions {
  double step = 1e-4;
  // denominator floor of the relative error |a - n| / max(|a|, |n|, floor)
  double floor = 1e-6;
  // smallest step tried when a ReLU changes state inside the stencil
  double min_step = 1e-9;
};

struct GradcheckReport {
  Eigen::Index params_checked = 0;
  double max_relative_error = 0.0;
  Eigen::Index worst_index = -1;
  // coordinates whose stencil straddled a ReLU kink at the nominal step
  Eigen::Index kink_refined = 0;
  // coordinates where no step down to min_step avoided a kink
  Eigen::Index kink_unresolved = 0;
  Eigen::VectorXd analytic;
  Eigen::VectorXd numeric;
};

/// Model at a generic point for gradient checking: initialized weights plus
/// biases drawn from U(-0.1, 0.1), so no pre-activation sits exactly on a
/// ReLU kink (zero biases over zero-padded regions would put many there).
ModelState gradcheck_point(const NetSpec& spec, std::uint64_t seed);

/// Compares backward() against central differences of the batch MSE, one
/// coordinate at a time. The numeric side only ever calls the forward pass.
/// Where the ReLU activation pattern at theta +- step differs from the one at
/// theta, the loss is not differentiable along the stencil; the step is
/// divided by 10 until both probes share the centre pattern.
GradcheckReport gradient_check(const ModelState& model, std::span<const Volume> batch, std::span<const double> targets,
                               const GradcheckOptions& options = {});

}  // namespace dnpi
