#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gradshield/dataset.hpp"
#include "gradshield/fisher.hpp"

namespace gradshield::bounds {

// Curvature contributed by the input prior: its information matrix's
// smallest eigenvalue. A Gaussian N(0, tau^2 I) prior contributes 1/tau^2;
// zero means an uninformative prior.
struct PriorInfo {
  double lambda1 = 0.0;

  static PriorInfo gaussian(double tau);
  static PriorInfo flat() { return PriorInfo{0.0}; }
  static PriorInfo user(double lambda1);
};

// How masks are chosen when averaging exposure over a dataset.
struct MaskPolicy {
  enum class Kind { fixed, magnitude_aggregate, magnitude_per_sample, random };
  Kind kind = Kind::magnitude_aggregate;
  double z = 0.0;
  defense::EncryptionMask fixed_mask;  // Kind::fixed only
  std::uint64_t seed = 0;              // Kind::random only

  static MaskPolicy fixed(defense::EncryptionMask mask);
  static MaskPolicy magnitude_aggregate(double z);
  static MaskPolicy magnitude_per_sample(double z);
  static MaskPolicy random(double z, std::uint64_t seed);
};

// Mean over (at most sample_cap) samples of the squared worst-exposed
// unencrypted Jacobian entry.
double expected_exposure(const nn::ModelSpec& spec,
                         const nn::ParameterVector& params,
                         std::span<const nn::DataSample> dataset,
                         const MaskPolicy& policy,
                         double fd_step = nn::kDefaultJacobianStep,
                         int sample_cap = 0, std::uint64_t seed = 0);

struct BoundReport {
  std::string model;
  int input_dim = 0;   // m
  int param_count = 0; // D
  double z_requested = 0.0;
  double z_realized = 0.0;
  double sigma = 0.0;
  double exposure = 0.0;
  double lambda1 = 0.0;
  double bound = 0.0;
  int samples = 0;

  bool unbounded() const;
};

// Mean reconstruction error (summed over input coordinates) any attacker can
// achieve is at least m / (d_kept * exposure / sigma^2 + lambda1), where
// d_kept = D * (1 - z) after rounding. sigma = 0 with any exposed coordinate
// gives 0; a fully-encrypted share under a flat prior gives +inf.
double reconstruction_lower_bound(int input_dim, int param_count,
                                  double z_requested, double sigma,
                                  double exposure, double lambda1);

// One report per z, all stats over the same capped subsample with masks
// drawn from the aggregate-magnitude policy, so the curve is comparable
// point to point.
std::vector<BoundReport> bound_curve(const nn::ModelSpec& spec,
                                     const nn::ParameterVector& params,
                                     std::span<const nn::DataSample> dataset,
                                     std::span<const double> z_grid,
                                     double sigma, const PriorInfo& prior,
                                     int sample_cap = 0,
                                     double fd_step = nn::kDefaultJacobianStep);

std::string bound_reports_csv(std::span<const BoundReport> reports);

}  // namespace gradshield::bounds
