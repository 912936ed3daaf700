#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gradshield/mask.hpp"

namespace gradshield::utility {

// Per-client, per-round alignment statistics: mu is the batch mean of the
// restricted per-sample gradient R g_i(x), and b_align the batch mean of
// g_i(x)^T G(x) against the caller-supplied per-sample clean aggregate G(x).
struct ClientGradStats {
  int client_id = 0;
  std::vector<double> mu;  // length = mask kept dimension
  double mu_norm = 0.0;
  double b_align = 0.0;
  int batch_size = 0;
};

ClientGradStats client_stats(const nn::ModelSpec& spec,
                             const nn::ParameterVector& params,
                             std::span<const nn::DataSample> batch,
                             const defense::EncryptionMask& mask,
                             std::span<const std::vector<double>> aggregate_grads,
                             int client_id);

// Same computation when the caller already holds the per-sample gradients.
ClientGradStats client_stats_from_grads(
    int client_id, std::span<const std::vector<double>> own_grads,
    std::span<const std::vector<double>> aggregate_grads,
    const defense::EncryptionMask& mask);

struct CriticalNoiseConfig {
  int n_clients = 3;
  int noisy_dims = 0;       // d: coordinates that receive noise
  double delta_prob = 0.05; // failure probability, in (0,1)
  double kappa = 0.9;       // safety factor, in (0,1]
  double eta = 0.1;         // step size of the round update

  void validate() const;
};

// Largest per-client noise scale that still guarantees a first-order descent
// step with probability 1-delta. A non-positive alignment B means even
// noiseless aggregation may ascend; a zero mu_norm means the noise lands on
// coordinates this client's loss does not couple to, so any scale is safe.
struct CriticalNoise {
  enum class Flag { ok, nonpositive_alignment, infinite };
  double value = 0.0;
  Flag flag = Flag::ok;

  bool usable() const { return flag == Flag::ok; }
};

std::string flag_name(CriticalNoise::Flag f);

CriticalNoise critical_noise(double b_align, double mu_norm, int n_clients,
                             int noisy_dims, double delta_prob);

// High-probability norm bound for a sum of n iid N(0, sigma^2 I_d) vectors:
// sigma * sqrt(n) * (sqrt(d) + sqrt(2 ln(1/delta))).
double gaussian_sum_norm_bound(double sigma, int n, int d, double delta_prob);

// Fraction of seeded draws S = sum of n iid N(0, sigma^2 I_d) vectors whose
// norm meets or exceeds the bound above. Should land at or below delta.
double verify_concentration(double sigma, int n, int d, double delta_prob,
                            long long trials, std::uint64_t seed);

// Shares one set of draws across several delta values (same sigma, n, d).
std::vector<double> verify_concentration_multi(double sigma, int n, int d,
                                               std::span<const double> delta_probs,
                                               long long trials,
                                               std::uint64_t seed);

enum class AggregationRule { sum, average };
AggregationRule aggregation_from_name(const std::string& s);
std::string aggregation_name(AggregationRule r);

// Per-client fraction of noise draws for which the first-order predicted
// loss reduction eta * (B + mu^T nu) is >= 0, with nu the summed (or
// averaged) aggregate noise shared across clients within a draw.
std::vector<double> descent_check(std::span<const ClientGradStats> clients,
                                  const defense::EncryptionMask& mask,
                                  double sigma, double eta, double delta_prob,
                                  long long trials, std::uint64_t seed,
                                  AggregationRule rule = AggregationRule::sum);

// Exact-loss variant, valid only where the loss is quadratic in the
// parameters (linear model, squared error): evaluates the true loss change
// of theta -> theta - eta*Q per draw.
std::vector<double> descent_check_exact(
    const nn::ModelSpec& spec, const nn::ParameterVector& params,
    std::span<const std::vector<nn::DataSample>> client_batches,
    const defense::EncryptionMask& mask, double sigma, double eta,
    long long trials, std::uint64_t seed,
    AggregationRule rule = AggregationRule::sum);

}  // namespace gradshield::utility
