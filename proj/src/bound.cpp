#include "gradshield/bound.hpp"

#include <cmath>
#include <limits>

#include "gradshield/csv.hpp"

namespace gradshield::bounds {

PriorInfo PriorInfo::gaussian(double tau) {
  if (!(tau > 0.0)) throw ConfigError("gaussian prior needs tau > 0");
  return PriorInfo{1.0 / (tau * tau)};
}

PriorInfo PriorInfo::user(double lambda1) {
  if (!(lambda1 >= 0.0)) throw ConfigError("prior lambda1 must be >= 0");
  return PriorInfo{lambda1};
}

MaskPolicy MaskPolicy::fixed(defense::EncryptionMask mask) {
  MaskPolicy p;
  p.kind = Kind::fixed;
  p.fixed_mask = std::move(mask);
  p.z = p.fixed_mask.realized_ratio();
  return p;
}

MaskPolicy MaskPolicy::magnitude_aggregate(double z) {
  MaskPolicy p;
  p.kind = Kind::magnitude_aggregate;
  p.z = z;
  return p;
}

MaskPolicy MaskPolicy::magnitude_per_sample(double z) {
  MaskPolicy p;
  p.kind = Kind::magnitude_per_sample;
  p.z = z;
  return p;
}

MaskPolicy MaskPolicy::random(double z, std::uint64_t seed) {
  MaskPolicy p;
  p.kind = Kind::random;
  p.z = z;
  p.seed = seed;
  return p;
}

namespace {

int capped_count(std::size_t dataset_size, int sample_cap) {
  if (dataset_size == 0) throw ConfigError("exposure needs a non-empty dataset");
  if (sample_cap <= 0) return static_cast<int>(dataset_size);
  return static_cast<int>(std::min<std::size_t>(dataset_size,
                                                static_cast<std::size_t>(sample_cap)));
}

// Coordinate-wise aggregate gradient over the subsample; its magnitudes
// drive the aggregate masking policy.
std::vector<double> mean_gradient(const nn::ModelSpec& spec,
                                  const nn::ParameterVector& params,
                                  std::span<const nn::DataSample> dataset,
                                  int use) {
  std::vector<double> acc(static_cast<std::size_t>(spec.param_count()), 0.0);
  for (int s = 0; s < use; ++s) {
    const nn::GradientVector g =
        nn::param_gradient(spec, params, dataset[static_cast<std::size_t>(s)]);
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g.values[i];
  }
  for (double& v : acc) v /= use;
  return acc;
}

}  // namespace

double expected_exposure(const nn::ModelSpec& spec,
                         const nn::ParameterVector& params,
                         std::span<const nn::DataSample> dataset,
                         const MaskPolicy& policy, double fd_step,
                         int sample_cap, std::uint64_t seed) {
  const int use = capped_count(dataset.size(), sample_cap);
  defense::EncryptionMask shared;
  bool have_shared = false;
  switch (policy.kind) {
    case MaskPolicy::Kind::fixed:
      shared = policy.fixed_mask;
      have_shared = true;
      break;
    case MaskPolicy::Kind::magnitude_aggregate: {
      std::vector<double> agg = mean_gradient(spec, params, dataset, use);
      shared = defense::mask_from_magnitudes(agg, policy.z);
      have_shared = true;
      break;
    }
    case MaskPolicy::Kind::random: {
      nn::GradientVector probe;
      probe.model = spec;
      probe.values.assign(static_cast<std::size_t>(spec.param_count()), 0.0);
      shared = defense::select_mask(probe, policy.z, defense::MaskStrategy::random,
                                    derive_seed(seed, 0xe8b0));
      have_shared = true;
      break;
    }
    case MaskPolicy::Kind::magnitude_per_sample:
      break;
  }

  double acc = 0.0;
  for (int s = 0; s < use; ++s) {
    const nn::DataSample& sample = dataset[static_cast<std::size_t>(s)];
    const nn::GradientInputJacobian jac =
        nn::input_jacobian_of_gradient(spec, params, sample, fd_step);
    if (have_shared) {
      acc += gradient_exposure(jac, shared);
    } else {
      const nn::GradientVector g = nn::param_gradient(spec, params, sample);
      acc += gradient_exposure(jac, defense::mask_from_magnitudes(g.values, policy.z));
    }
  }
  return acc / use;
}

bool BoundReport::unbounded() const { return std::isinf(bound); }

double reconstruction_lower_bound(int input_dim, int param_count,
                                  double z_requested, double sigma,
                                  double exposure, double lambda1) {
  if (input_dim < 1) throw ConfigError("bound needs input_dim >= 1");
  if (param_count < 1) throw ConfigError("bound needs param_count >= 1");
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) {
    throw ConfigError("bound needs finite sigma >= 0");
  }
  if (!(exposure >= 0.0)) throw ConfigError("exposure must be >= 0");
  if (!(lambda1 >= 0.0)) throw ConfigError("lambda1 must be >= 0");
  const int kept = defense::kept_count(param_count, z_requested);

  double info_term;
  if (kept == 0 || exposure == 0.0) {
    info_term = 0.0;  // nothing exposed, regardless of sigma
  } else if (sigma == 0.0) {
    info_term = std::numeric_limits<double>::infinity();
  } else {
    info_term = static_cast<double>(kept) * exposure / (sigma * sigma);
  }
  const double denom = info_term + lambda1;
  if (denom == 0.0) return std::numeric_limits<double>::infinity();
  return static_cast<double>(input_dim) / denom;
}

std::vector<BoundReport> bound_curve(const nn::ModelSpec& spec,
                                     const nn::ParameterVector& params,
                                     std::span<const nn::DataSample> dataset,
                                     std::span<const double> z_grid,
                                     double sigma, const PriorInfo& prior,
                                     int sample_cap, double fd_step) {
  if (z_grid.empty()) throw ConfigError("bound curve needs a non-empty z grid");
  const int use = capped_count(dataset.size(), sample_cap);
  const int d_params = spec.param_count();

  const std::vector<double> agg = mean_gradient(spec, params, dataset, use);
  std::vector<defense::EncryptionMask> masks;
  masks.reserve(z_grid.size());
  for (double z : z_grid) masks.push_back(defense::mask_from_magnitudes(agg, z));

  // One Jacobian per sample, reused across the whole grid so the z points
  // differ only in the mask.
  std::vector<double> exposures(z_grid.size(), 0.0);
  for (int s = 0; s < use; ++s) {
    const nn::GradientInputJacobian jac = nn::input_jacobian_of_gradient(
        spec, params, dataset[static_cast<std::size_t>(s)], fd_step);
    for (std::size_t k = 0; k < masks.size(); ++k) {
      exposures[k] += gradient_exposure(jac, masks[k]);
    }
  }
  for (double& e : exposures) e /= use;

  std::vector<BoundReport> out;
  out.reserve(z_grid.size());
  for (std::size_t k = 0; k < z_grid.size(); ++k) {
    BoundReport r;
    r.model = spec.name;
    r.input_dim = spec.input_dim;
    r.param_count = d_params;
    r.z_requested = z_grid[k];
    r.z_realized = masks[k].realized_ratio();
    r.sigma = sigma;
    r.exposure = exposures[k];
    r.lambda1 = prior.lambda1;
    r.bound = reconstruction_lower_bound(spec.input_dim, d_params, z_grid[k],
                                         sigma, exposures[k], prior.lambda1);
    r.samples = use;
    out.push_back(std::move(r));
  }
  return out;
}

std::string bound_reports_csv(std::span<const BoundReport> reports) {
  CsvBuilder csv("model,m,D,z_requested,z_realized,sigma,exposure,lambda1,bound,samples");
  for (const BoundReport& r : reports) {
    csv.row({r.model, r.input_dim, r.param_count, r.z_requested, r.z_realized,
             r.sigma, r.exposure, r.lambda1, r.bound, r.samples});
  }
  return csv.str();
}

}  // namespace gradshield::bounds
