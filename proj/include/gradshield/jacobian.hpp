#pragma once

#include <span>

#include "gradshield/model.hpp"

namespace gradshield::nn {

// Jacobian of the per-sample gradient map x -> g(x), shape D x m, row-major.
// Built by central differences; `step` records the base step h that was used
// (per-coordinate steps scale with max(1, |x_i|)).
struct GradientInputJacobian {
  int rows = 0;  // parameter count D
  int cols = 0;  // input dimension m
  double step = 0.0;
  std::vector<double> entries;

  double at(int row, int col) const {
    return entries[static_cast<std::size_t>(row) * cols + col];
  }
};

inline constexpr double kDefaultJacobianStep = 1e-4;

GradientInputJacobian input_jacobian_of_gradient(
    const ModelSpec& spec, const ParameterVector& params,
    const DataSample& sample, double step = kDefaultJacobianStep);

GradientInputJacobian input_jacobian_dense(const ModelSpec& spec,
                                           const ParameterVector& params,
                                           std::span<const double> x,
                                           std::span<const double> target,
                                           double step = kDefaultJacobianStep);

}  // namespace gradshield::nn
