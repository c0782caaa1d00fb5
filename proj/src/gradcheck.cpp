#include "dnpi/gradcheck.hpp"

#include "dnpi/rng.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace dnpi {

namespace {

struct Probe {
  double loss = 0.0;
  std::vector<std::uint8_t> pattern;
};

Probe probe(const Network& net, const ModelState& model, const Eigen::VectorXd& params, std::span<const Volume> batch,
            std::span<const double> targets) {
  Probe p;
  std::vector<std::uint8_t> one;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const double y = model.output_offset + model.output_scale * net.forward_with_pattern(params, batch[i], one);
    p.loss += (y - targets[i]) * (y - targets[i]);
    p.pattern.insert(p.pattern.end(), one.begin(), one.end());
  }
  p.loss /= static_cast<double>(batch.size());
  return p;
}

}  // namespace

ModelState gradcheck_point(const NetSpec& spec, std::uint64_t seed) {
  ModelState m = make_model(spec, seed);
  const Network net(spec);
  CounterRng rng = CounterRng::substream(seed, {0xb1a5});
  for (const ParamBlock& b : net.layout())
    if (b.fan_in == 0)
      for (Eigen::Index i = 0; i < b.size; ++i) m.params[b.offset + i] = rng.uniform(-0.1, 0.1);
  return m;
}

GradcheckReport gradient_check(const ModelState& model, std::span<const Volume> batch, std::span<const double> targets,
                               const GradcheckOptions& options) {
  const Network net(model.spec);
  GradcheckReport report;
  report.analytic = backward(model, batch, targets).gradient;
  report.numeric = Eigen::VectorXd::Zero(report.analytic.size());
  const Probe centre = probe(net, model, model.params, batch, targets);

  Eigen::VectorXd params = model.params;
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    const double x0 = params[i];
    double h = options.step;
    bool resolved = false;
    double numeric = 0.0;
    while (h >= options.min_step) {
      params[i] = x0 + h;
      const Probe plus = probe(net, model, params, batch, targets);
      params[i] = x0 - h;
      const Probe minus = probe(net, model, params, batch, targets);
      params[i] = x0;
      numeric = (plus.loss - minus.loss) / (2.0 * h);
      if (plus.pattern == centre.pattern && minus.pattern == centre.pattern) {
        resolved = true;
        break;
      }
      h /= 10.0;
    }
    if (h != options.step) ++report.kink_refined;
    if (!resolved) ++report.kink_unresolved;
    report.numeric[i] = numeric;
    const double a = report.analytic[i];
    const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), options.floor});
    if (report.worst_index < 0 || err > report.max_relative_error) {
      report.max_relative_error = err;
      report.worst_index = i;
    }
    ++report.params_checked;
  }
  return report;
}

}  // namespace dnpi
