#pragma once

#include <cstdint>

#include "gradshield/jacobian.hpp"
#include "gradshield/mask.hpp"

namespace gradshield::bounds {

// Information the released share y carries about the input x, as an m x m
// matrix: (1/sigma^2) (R J)^T (R J) with J the gradient's input Jacobian and
// R the restriction to unencrypted coordinates.
struct FisherMatrix {
  int dim = 0;  // input dimension m
  double sigma = 0.0;
  std::vector<double> entries;  // row-major dim x dim

  double at(int i, int j) const {
    return entries[static_cast<std::size_t>(i) * dim + j];
  }
  double trace() const;
  double min_eigenvalue() const;
  double max_abs_asymmetry() const;
  double frobenius() const;
};

FisherMatrix fisher_information(const nn::GradientInputJacobian& jac,
                                const defense::EncryptionMask& mask,
                                double sigma);

// Monte-Carlo estimate of the same matrix from sampled scores
// (1/sigma^2) (RJ)^T delta with delta ~ N(0, sigma^2 I); converges to
// fisher_information as trials grow.
FisherMatrix empirical_fisher(const nn::ModelSpec& spec,
                              const nn::ParameterVector& params,
                              const nn::DataSample& sample,
                              const defense::EncryptionMask& mask,
                              double sigma, long long trials,
                              std::uint64_t seed,
                              double fd_step = nn::kDefaultJacobianStep);

// Squared largest-magnitude entry of R J: how exposed the most sensitive
// unencrypted coordinate is. Zero when everything is encrypted.
double gradient_exposure(const nn::GradientInputJacobian& jac,
                         const defense::EncryptionMask& mask);

double relative_frobenius_gap(const FisherMatrix& a, const FisherMatrix& b);

}  // namespace gradshield::bounds
