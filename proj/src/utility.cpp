#include "gradshield/utility.hpp"

#include <cmath>
#include <limits>

namespace gradshield::utility {

ClientGradStats client_stats_from_grads(
    int client_id, std::span<const std::vector<double>> own_grads,
    std::span<const std::vector<double>> aggregate_grads,
    const defense::EncryptionMask& mask) {
  mask.validate();
  if (own_grads.empty()) {
    throw ConfigError("client stats need a nonempty batch");
  }
  if (own_grads.size() != aggregate_grads.size()) {
    throw ConfigError("per-sample aggregate count does not match batch size");
  }
  const std::size_t d_params = static_cast<std::size_t>(mask.total_dim);
  const int kept = mask.kept_dim();

  std::vector<double> mu(static_cast<std::size_t>(kept), 0.0);
  double b = 0.0;
  for (std::size_t s = 0; s < own_grads.size(); ++s) {
    const std::vector<double>& g = own_grads[s];
    const std::vector<double>& agg = aggregate_grads[s];
    if (g.size() != d_params || agg.size() != d_params) {
      throw ConfigError("gradient length does not match mask dimension");
    }
    for (int k = 0; k < kept; ++k) {
      mu[static_cast<std::size_t>(k)] +=
          g[static_cast<std::size_t>(mask.unencrypted[static_cast<std::size_t>(k)])];
    }
    double dot = 0.0;
    for (std::size_t i = 0; i < d_params; ++i) dot += g[i] * agg[i];
    b += dot;
  }
  const double inv = 1.0 / static_cast<double>(own_grads.size());
  double norm2 = 0.0;
  for (double& v : mu) {
    v *= inv;
    norm2 += v * v;
  }
  b *= inv;
  if (!std::isfinite(b) || !std::isfinite(norm2)) {
    throw NumericError("non-finite client statistics");
  }

  ClientGradStats stats;
  stats.client_id = client_id;
  stats.mu = std::move(mu);
  stats.mu_norm = std::sqrt(norm2);
  stats.b_align = b;
  stats.batch_size = static_cast<int>(own_grads.size());
  return stats;
}

ClientGradStats client_stats(const nn::ModelSpec& spec,
                             const nn::ParameterVector& params,
                             std::span<const nn::DataSample> batch,
                             const defense::EncryptionMask& mask,
                             std::span<const std::vector<double>> aggregate_grads,
                             int client_id) {
  if (batch.empty()) throw ConfigError("client stats need a nonempty batch");
  std::vector<std::vector<double>> own;
  own.reserve(batch.size());
  for (const nn::DataSample& sample : batch) {
    own.push_back(nn::param_gradient(spec, params, sample).values);
  }
  return client_stats_from_grads(client_id, own, aggregate_grads, mask);
}

void CriticalNoiseConfig::validate() const {
  if (n_clients < 1) throw ConfigError("n_clients must be >= 1");
  if (noisy_dims < 0) throw ConfigError("noisy_dims must be >= 0");
  if (!(delta_prob > 0.0 && delta_prob < 1.0)) {
    throw ConfigError("delta_prob must lie in (0,1)");
  }
  if (!(kappa > 0.0 && kappa <= 1.0)) {
    throw ConfigError("kappa must lie in (0,1]");
  }
  if (!(eta > 0.0)) throw ConfigError("eta must be positive");
}

std::string flag_name(CriticalNoise::Flag f) {
  switch (f) {
    case CriticalNoise::Flag::ok: return "ok";
    case CriticalNoise::Flag::nonpositive_alignment: return "nonpositive-alignment";
    case CriticalNoise::Flag::infinite: return "infinite";
  }
  throw ConfigError("unknown critical-noise flag");
}

CriticalNoise critical_noise(double b_align, double mu_norm, int n_clients,
                             int noisy_dims, double delta_prob) {
  if (n_clients < 1) throw ConfigError("critical noise needs n_clients >= 1");
  if (noisy_dims < 0) throw ConfigError("noisy_dims must be >= 0");
  if (!(delta_prob > 0.0 && delta_prob < 1.0)) {
    throw ConfigError("delta_prob must lie in (0,1)");
  }
  if (!(mu_norm >= 0.0) || !std::isfinite(mu_norm)) {
    throw ConfigError("mu_norm must be finite and >= 0");
  }
  CriticalNoise out;
  if (noisy_dims == 0 || mu_norm == 0.0) {
    out.value = std::numeric_limits<double>::infinity();
    out.flag = CriticalNoise::Flag::infinite;
    return out;
  }
  const double spread =
      std::sqrt(static_cast<double>(noisy_dims)) + std::sqrt(2.0 * std::log(1.0 / delta_prob));
  out.value = b_align / (std::sqrt(static_cast<double>(n_clients)) * mu_norm * spread);
  out.flag = b_align > 0.0 ? CriticalNoise::Flag::ok
                           : CriticalNoise::Flag::nonpositive_alignment;
  return out;
}

double gaussian_sum_norm_bound(double sigma, int n, int d, double delta_prob) {
  if (!(sigma >= 0.0)) throw ConfigError("sigma must be >= 0");
  if (n < 1) throw ConfigError("n must be >= 1");
  if (d < 1) throw ConfigError("d must be >= 1");
  if (!(delta_prob > 0.0 && delta_prob < 1.0)) {
    throw ConfigError("delta_prob must lie in (0,1)");
  }
  return sigma * std::sqrt(static_cast<double>(n)) *
         (std::sqrt(static_cast<double>(d)) +
          std::sqrt(2.0 * std::log(1.0 / delta_prob)));
}

std::vector<double> verify_concentration_multi(double sigma, int n, int d,
                                               std::span<const double> delta_probs,
                                               long long trials,
                                               std::uint64_t seed) {
  if (trials < 1) throw ConfigError("concentration check needs trials >= 1");
  if (delta_probs.empty()) {
    throw ConfigError("concentration check needs at least one delta");
  }
  std::vector<double> thresholds;
  thresholds.reserve(delta_probs.size());
  for (double dp : delta_probs) {
    thresholds.push_back(gaussian_sum_norm_bound(sigma, n, d, dp));
  }

  // Chunked so trials can run on several threads while each trial's draws
  // stay a pure function of (seed, trial index).
  const long long chunk = 4096;
  const long long chunks = (trials + chunk - 1) / chunk;
  std::vector<std::vector<long long>> hits(
      static_cast<std::size_t>(chunks),
      std::vector<long long>(delta_probs.size(), 0));
  parallel_for(chunks, [&](std::int64_t c) {
    GaussianSampler noise(derive_seed(seed, 0xc0c0, static_cast<std::uint64_t>(c)));
    std::vector<long long>& local = hits[static_cast<std::size_t>(c)];
    const long long begin = c * chunk;
    const long long end = std::min(trials, begin + chunk);
    std::vector<double> sum(static_cast<std::size_t>(d));
    for (long long t = begin; t < end; ++t) {
      std::fill(sum.begin(), sum.end(), 0.0);
      for (int j = 0; j < n; ++j) {
        for (int i = 0; i < d; ++i) sum[static_cast<std::size_t>(i)] += noise.next(sigma);
      }
      double norm2 = 0.0;
      for (double v : sum) norm2 += v * v;
      const double norm = std::sqrt(norm2);
      for (std::size_t k = 0; k < thresholds.size(); ++k) {
        if (norm >= thresholds[k]) ++local[k];
      }
    }
  });

  std::vector<double> out(delta_probs.size(), 0.0);
  for (const auto& local : hits) {
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += static_cast<double>(local[k]);
  }
  for (double& v : out) v /= static_cast<double>(trials);
  return out;
}

double verify_concentration(double sigma, int n, int d, double delta_prob,
                            long long trials, std::uint64_t seed) {
  const double deltas[1] = {delta_prob};
  return verify_concentration_multi(sigma, n, d, deltas, trials, seed)[0];
}

AggregationRule aggregation_from_name(const std::string& s) {
  if (s == "sum") return AggregationRule::sum;
  if (s == "average" || s == "avg") return AggregationRule::average;
  throw ConfigError("unknown aggregation rule '" + s +
                    "' (expected sum or average)");
}

std::string aggregation_name(AggregationRule r) {
  return r == AggregationRule::sum ? "sum" : "average";
}

std::vector<double> descent_check(std::span<const ClientGradStats> clients,
                                  const defense::EncryptionMask& mask,
                                  double sigma, double eta, double delta_prob,
                                  long long trials, std::uint64_t seed,
                                  AggregationRule rule) {
  if (clients.empty()) throw ConfigError("descent check needs clients");
  if (!(eta > 0.0)) throw ConfigError("descent check needs eta > 0");
  if (!(sigma >= 0.0)) throw ConfigError("sigma must be >= 0");
  if (!(delta_prob > 0.0 && delta_prob < 1.0)) {
    throw ConfigError("delta_prob must lie in (0,1)");
  }
  if (trials < 1) throw ConfigError("descent check needs trials >= 1");
  mask.validate();
  const int d = mask.kept_dim();
  for (const ClientGradStats& c : clients) {
    if (static_cast<int>(c.mu.size()) != d) {
      throw ConfigError("client mu length does not match mask kept dimension");
    }
  }
  const int n = static_cast<int>(clients.size());
  const double noise_scale = rule == AggregationRule::sum
                                 ? 1.0
                                 : 1.0 / static_cast<double>(n);
  const double b_scale = noise_scale;  // average rule divides the whole Q by n

  std::vector<long long> descents(clients.size(), 0);
  GaussianSampler noise(derive_seed(seed, 0xdec0));
  std::vector<double> nu(static_cast<std::size_t>(d));
  for (long long t = 0; t < trials; ++t) {
    // nu = sum of the n per-client draws, shared by every client this trial.
    std::fill(nu.begin(), nu.end(), 0.0);
    for (int j = 0; j < n; ++j) {
      for (int i = 0; i < d; ++i) nu[static_cast<std::size_t>(i)] += noise.next(sigma);
    }
    for (std::size_t c = 0; c < clients.size(); ++c) {
      double coupling = 0.0;
      for (int i = 0; i < d; ++i) {
        coupling += clients[c].mu[static_cast<std::size_t>(i)] * nu[static_cast<std::size_t>(i)];
      }
      const double reduction =
          eta * (b_scale * clients[c].b_align + noise_scale * coupling);
      if (reduction >= 0.0) ++descents[c];
    }
  }
  std::vector<double> fractions(clients.size());
  for (std::size_t c = 0; c < clients.size(); ++c) {
    fractions[c] = static_cast<double>(descents[c]) / static_cast<double>(trials);
  }
  return fractions;
}

std::vector<double> descent_check_exact(
    const nn::ModelSpec& spec, const nn::ParameterVector& params,
    std::span<const std::vector<nn::DataSample>> client_batches,
    const defense::EncryptionMask& mask, double sigma, double eta,
    long long trials, std::uint64_t seed, AggregationRule rule) {
  if (spec.arch != nn::Arch::linear || spec.loss != nn::LossKind::squared_error) {
    throw ConfigError(
        "exact descent check is only valid for the quadratic fixture "
        "(linear model with squared error)");
  }
  if (client_batches.empty()) throw ConfigError("descent check needs clients");
  if (!(eta > 0.0)) throw ConfigError("descent check needs eta > 0");
  if (trials < 1) throw ConfigError("descent check needs trials >= 1");
  mask.validate();
  const int n = static_cast<int>(client_batches.size());
  const int d = mask.kept_dim();
  const std::size_t d_params = static_cast<std::size_t>(spec.param_count());
  if (mask.total_dim != static_cast<int>(d_params)) {
    throw ConfigError("mask dimension does not match model size");
  }

  // Clean aggregate = sum over clients of batch-mean gradients, plus each
  // client's pre-update batch loss.
  std::vector<double> aggregate(d_params, 0.0);
  std::vector<double> before(client_batches.size(), 0.0);
  for (std::size_t c = 0; c < client_batches.size(); ++c) {
    if (client_batches[c].empty()) {
      throw ConfigError("client stats need a nonempty batch");
    }
    std::vector<double> mean(d_params, 0.0);
    for (const nn::DataSample& sample : client_batches[c]) {
      const nn::GradientVector g = nn::param_gradient(spec, params, sample);
      for (std::size_t i = 0; i < d_params; ++i) mean[i] += g.values[i];
      before[c] += nn::forward_loss(spec, params, sample);
    }
    const double inv = 1.0 / static_cast<double>(client_batches[c].size());
    before[c] *= inv;
    for (std::size_t i = 0; i < d_params; ++i) aggregate[i] += mean[i] * inv;
  }

  std::vector<long long> descents(client_batches.size(), 0);
  GaussianSampler noise(derive_seed(seed, 0xeac7));
  nn::ParameterVector updated = params;
  std::vector<double> nu(static_cast<std::size_t>(d));
  for (long long t = 0; t < trials; ++t) {
    std::fill(nu.begin(), nu.end(), 0.0);
    for (int j = 0; j < n; ++j) {
      for (int i = 0; i < d; ++i) nu[static_cast<std::size_t>(i)] += noise.next(sigma);
    }
    const std::vector<double> padded = defense::apply_prolongation(nu, mask);
    const double scale = rule == AggregationRule::sum ? 1.0 : 1.0 / n;
    for (std::size_t i = 0; i < d_params; ++i) {
      updated.values[i] = params.values[i] - eta * scale * (aggregate[i] + padded[i]);
    }
    for (std::size_t c = 0; c < client_batches.size(); ++c) {
      double after = 0.0;
      for (const nn::DataSample& sample : client_batches[c]) {
        after += nn::forward_loss(spec, updated, sample);
      }
      after /= static_cast<double>(client_batches[c].size());
      if (before[c] - after >= 0.0) ++descents[c];
    }
  }
  std::vector<double> fractions(client_batches.size());
  for (std::size_t c = 0; c < fractions.size(); ++c) {
    fractions[c] = static_cast<double>(descents[c]) / static_cast<double>(trials);
  }
  return fractions;
}

}  // namespace gradshield::utility
