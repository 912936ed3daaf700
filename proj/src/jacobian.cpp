#include "gradshield/jacobian.hpp"

#include <cmath>

namespace gradshield::nn {

GradientInputJacobian input_jacobian_dense(const ModelSpec& spec,
                                           const ParameterVector& params,
                                           std::span<const double> x,
                                           std::span<const double> target,
                                           double step) {
  if (!(step > 0.0) || !std::isfinite(step)) {
    throw ConfigError("jacobian step must be positive and finite");
  }
  if (static_cast<int>(x.size()) != spec.input_dim) {
    throw ConfigError("input length does not match model input_dim");
  }
  const int m = spec.input_dim;
  const int d_params = spec.param_count();

  GradientInputJacobian jac;
  jac.rows = d_params;
  jac.cols = m;
  jac.step = step;
  jac.entries.assign(static_cast<std::size_t>(d_params) * m, 0.0);

  std::vector<double> probe(x.begin(), x.end());
  for (int i = 0; i < m; ++i) {
    const double xi = probe[static_cast<std::size_t>(i)];
    const double hi = step * std::max(1.0, std::abs(xi));
    // Round the step through the representable grid so the divisor matches
    // the perturbation that actually happened.
    const double hi_up = (xi + hi) - xi;
    const double hi_dn = xi - (xi - hi);
    probe[static_cast<std::size_t>(i)] = xi + hi_up;
    const std::vector<double> gp = param_gradient_dense(spec, params, probe, target);
    probe[static_cast<std::size_t>(i)] = xi - hi_dn;
    const std::vector<double> gm = param_gradient_dense(spec, params, probe, target);
    probe[static_cast<std::size_t>(i)] = xi;

    const double denom = hi_up + hi_dn;
    for (int j = 0; j < d_params; ++j) {
      const double v = (gp[static_cast<std::size_t>(j)] -
                        gm[static_cast<std::size_t>(j)]) / denom;
      if (!std::isfinite(v)) {
        throw NumericError("non-finite jacobian entry at input coordinate " +
                           std::to_string(i));
      }
      jac.entries[static_cast<std::size_t>(j) * m + i] = v;
    }
  }
  return jac;
}

GradientInputJacobian input_jacobian_of_gradient(const ModelSpec& spec,
                                                 const ParameterVector& params,
                                                 const DataSample& sample,
                                                 double step) {
  return input_jacobian_dense(spec, params, sample.x,
                              dense_target(spec, sample.target), step);
}

}  // namespace gradshield::nn
