#include "gradshield/fedsim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include <json.hpp>

#include "gradshield/csv.hpp"

namespace gradshield::fedsim {

void TrainConfig::validate() const {
  model.validate();
  if (rounds < 1) throw ValidationError("training needs rounds >= 1");
  if (n_clients < 1) throw ValidationError("training needs n_clients >= 1");
  if (!(eta > 0.0) || !std::isfinite(eta)) throw ValidationError("eta must be > 0");
  if (!(z >= 0.0 && z <= 1.0)) throw ValidationError("encryption ratio z must be in [0, 1]");
  if (!(label_skew >= 0.0 && label_skew <= 1.0)) {
    throw ValidationError("label_skew must be in [0, 1]");
  }
  if (!(sigma_fixed >= 0.0) || !std::isfinite(sigma_fixed)) {
    throw ValidationError("sigma_fixed must be finite and >= 0");
  }
  if (!(sigma_max > 0.0) || !std::isfinite(sigma_max)) {
    throw ValidationError("sigma_max must be finite and > 0");
  }
  if (!(kappa > 0.0 && kappa <= 1.0)) throw ValidationError("kappa must be in (0, 1]");
  if (!(delta_prob > 0.0 && delta_prob < 1.0)) {
    throw ValidationError("delta_prob must be in (0, 1)");
  }
  if (descent_trials < 0) throw ValidationError("descent_trials must be >= 0");
  if (strategy == defense::MaskStrategy::fixed_indices && fixed_unencrypted.empty()) {
    throw ValidationError("fixed-indices mask strategy needs fixed_unencrypted");
  }
  if (!init_params.values.empty() &&
      static_cast<int>(init_params.values.size()) != model.param_count()) {
    throw ValidationError("init_params length does not match the model");
  }
}

void RoundRecord::check_schedule_invariant(bool adaptive, double kappa) const {
  if (!adaptive) return;
  if (!std::isfinite(sigma_crit) || !(sigma_crit > 0.0)) return;
  if (sigma_applied > kappa * sigma_crit) {
    throw ValidationError("applied noise exceeds kappa * critical noise in round " +
                          format_int(round));
  }
}

std::vector<std::vector<nn::DataSample>> partition_iid(
    std::span<const nn::DataSample> dataset, int n_clients) {
  if (n_clients < 1) throw ValidationError("partition needs n_clients >= 1");
  if (dataset.size() < static_cast<std::size_t>(n_clients)) {
    throw ValidationError("dataset smaller than the number of clients");
  }
  std::vector<std::vector<nn::DataSample>> shards(
      static_cast<std::size_t>(n_clients));
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    shards[i % static_cast<std::size_t>(n_clients)].push_back(dataset[i]);
  }
  return shards;
}

namespace {

int label_key(const nn::Target& t) {
  return t.kind == nn::Target::Kind::class_index ? t.cls : 0;
}

}  // namespace

std::vector<std::vector<nn::DataSample>> partition_label_skew(
    std::span<const nn::DataSample> dataset, int n_clients, double skew,
    std::uint64_t seed) {
  if (n_clients < 1) throw ValidationError("partition needs n_clients >= 1");
  if (dataset.size() < static_cast<std::size_t>(n_clients)) {
    throw ValidationError("dataset smaller than the number of clients");
  }
  if (!(skew >= 0.0 && skew <= 1.0)) throw ValidationError("label_skew must be in [0, 1]");

  const std::size_t n = dataset.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return label_key(dataset[a].target) < label_key(dataset[b].target);
  });

  // Each position is released from the sorted order with probability
  // 1 - skew; released entries are shuffled among themselves.
  Rng rng(derive_seed(seed, 0x5ce3));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<std::size_t> free_pos;
  for (std::size_t p = 0; p < n; ++p) {
    if (unit(rng) < 1.0 - skew) free_pos.push_back(p);
  }
  std::vector<std::size_t> pool;
  pool.reserve(free_pos.size());
  for (std::size_t p : free_pos) pool.push_back(order[p]);
  for (std::size_t i = pool.size(); i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(pool[i - 1], pool[pick(rng)]);
  }
  for (std::size_t k = 0; k < free_pos.size(); ++k) order[free_pos[k]] = pool[k];

  // Deal contiguous blocks whose sizes differ by at most one.
  std::vector<std::vector<nn::DataSample>> shards(
      static_cast<std::size_t>(n_clients));
  const std::size_t base = n / static_cast<std::size_t>(n_clients);
  const std::size_t extra = n % static_cast<std::size_t>(n_clients);
  std::size_t at = 0;
  for (std::size_t c = 0; c < static_cast<std::size_t>(n_clients); ++c) {
    const std::size_t take = base + (c < extra ? 1 : 0);
    for (std::size_t i = 0; i < take; ++i) shards[c].push_back(dataset[order[at++]]);
  }
  return shards;
}

NoiseDecision adaptive_noise_schedule(
    std::span<const utility::ClientGradStats> stats, int noisy_dims,
    int n_clients, double delta_prob, double kappa, double sigma_max) {
  if (stats.empty()) throw ValidationError("noise schedule needs client statistics");
  NoiseDecision out;
  out.sigma_crit = std::numeric_limits<double>::infinity();
  for (const utility::ClientGradStats& s : stats) {
    const utility::CriticalNoise cn = utility::critical_noise(
        s.b_align, s.mu_norm, n_clients, noisy_dims, delta_prob);
    out.per_client.push_back(cn.value);
    out.flags.push_back(cn.flag);
    if (cn.flag == utility::CriticalNoise::Flag::nonpositive_alignment) {
      out.floored = true;
    }
    out.sigma_crit = std::min(out.sigma_crit, cn.value);
  }
  if (!std::isfinite(out.sigma_crit)) {
    out.sigma_t = sigma_max;  // no client constrains the noise
  } else {
    out.sigma_t = std::min(kappa * out.sigma_crit, sigma_max);
  }
  if (out.floored) out.sigma_t = std::max(out.sigma_t, kSigmaFloor);
  return out;
}

namespace {

double mean_loss_all(const nn::ModelSpec& spec, const nn::ParameterVector& params,
                     const std::vector<ClientState>& clients) {
  double acc = 0.0;
  std::size_t count = 0;
  for (const ClientState& c : clients) {
    for (const nn::DataSample& s : c.data) {
      acc += nn::forward_loss(spec, params, s);
      ++count;
    }
  }
  return acc / static_cast<double>(count);
}

}  // namespace

RoundRecord run_round(ServerState& server, std::vector<ClientState>& clients,
                      const TrainConfig& cfg, int round_index,
                      defense::EncryptionMask& mask) {
  const int n = static_cast<int>(clients.size());
  const int D = cfg.model.param_count();

  // Sync and local gradient computation (parallel across clients).
  std::vector<std::vector<std::vector<double>>> own_grads(
      static_cast<std::size_t>(n));
  std::vector<std::vector<double>> batch_mean(
      static_cast<std::size_t>(n), std::vector<double>(static_cast<std::size_t>(D), 0.0));
  parallel_for(n, [&](std::int64_t ci) {
    ClientState& client = clients[static_cast<std::size_t>(ci)];
    client.params = server.params;
    auto& grads = own_grads[static_cast<std::size_t>(ci)];
    grads.reserve(client.data.size());
    auto& mean = batch_mean[static_cast<std::size_t>(ci)];
    for (const nn::DataSample& s : client.data) {
      nn::GradientVector g = nn::param_gradient(cfg.model, client.params, s);
      for (int i = 0; i < D; ++i) {
        mean[static_cast<std::size_t>(i)] += g.values[static_cast<std::size_t>(i)];
      }
      grads.push_back(std::move(g.values));
    }
    const double inv = 1.0 / static_cast<double>(client.data.size());
    for (double& v : mean) v *= inv;
  });

  std::vector<double> aggregate(static_cast<std::size_t>(D), 0.0);
  for (int c = 0; c < n; ++c) {
    for (int i = 0; i < D; ++i) {
      aggregate[static_cast<std::size_t>(i)] +=
          batch_mean[static_cast<std::size_t>(c)][static_cast<std::size_t>(i)];
    }
  }

  // One shared mask per round so the kept dimension in the noise schedule is
  // well defined.
  if (round_index == 1 || cfg.recompute_mask) {
    nn::GradientVector agg_vec;
    agg_vec.model = cfg.model;
    agg_vec.values = aggregate;
    const std::vector<int>* fixed =
        cfg.strategy == defense::MaskStrategy::fixed_indices ? &cfg.fixed_unencrypted
                                                             : nullptr;
    mask = defense::select_mask(agg_vec, cfg.z, cfg.strategy,
                                derive_seed(cfg.seed, 0x9a5c,
                                            static_cast<std::uint64_t>(round_index)),
                                fixed);
  }
  const int d = mask.kept_dim();

  // Per-client alignment statistics against the per-sample clean aggregate
  // G(x) = g_c(x) + sum of the other clients' batch means.
  std::vector<utility::ClientGradStats> stats;
  stats.reserve(static_cast<std::size_t>(n));
  for (int c = 0; c < n; ++c) {
    const auto& grads = own_grads[static_cast<std::size_t>(c)];
    std::vector<std::vector<double>> agg_grads(grads.size());
    for (std::size_t s = 0; s < grads.size(); ++s) {
      agg_grads[s].resize(static_cast<std::size_t>(D));
      for (int i = 0; i < D; ++i) {
        agg_grads[s][static_cast<std::size_t>(i)] =
            grads[s][static_cast<std::size_t>(i)] +
            (aggregate[static_cast<std::size_t>(i)] -
             batch_mean[static_cast<std::size_t>(c)][static_cast<std::size_t>(i)]);
      }
    }
    stats.push_back(utility::client_stats_from_grads(clients[static_cast<std::size_t>(c)].id,
                                                     grads, agg_grads, mask));
  }

  const NoiseDecision decision = adaptive_noise_schedule(
      stats, d, n, cfg.delta_prob, cfg.kappa, cfg.sigma_max);
  const double sigma = cfg.adaptive ? decision.sigma_t : cfg.sigma_fixed;

  // Aggregate noise on the unencrypted coordinates.
  std::vector<double> nu(static_cast<std::size_t>(d), 0.0);
  if (sigma > 0.0 && d > 0) {
    if (cfg.post_aggregation_noise) {
      GaussianSampler sampler(derive_seed(derive_seed(cfg.seed, 0x4057, 0),
                                          static_cast<std::uint64_t>(round_index)));
      for (double& v : nu) v = sampler.next(sigma);
    } else {
      for (int c = 0; c < n; ++c) {
        GaussianSampler sampler(
            derive_seed(clients[static_cast<std::size_t>(c)].rng_stream,
                        static_cast<std::uint64_t>(round_index)));
        for (double& v : nu) v += sampler.next(sigma);
      }
    }
  }

  std::vector<double> q = aggregate;
  for (int k = 0; k < d; ++k) {
    q[static_cast<std::size_t>(mask.unencrypted[static_cast<std::size_t>(k)])] +=
        nu[static_cast<std::size_t>(k)];
  }
  const double scale =
      server.rule == utility::AggregationRule::average ? 1.0 / static_cast<double>(n) : 1.0;

  RoundRecord rec;
  rec.round = round_index;
  rec.clients = stats;
  rec.client_sigma_crit = decision.per_client;
  rec.client_flags = decision.flags;
  rec.sigma_crit = decision.sigma_crit;
  rec.sigma_applied = sigma;
  rec.z_realized = mask.realized_ratio();
  rec.mask_kept = d;
  rec.delta_prob = cfg.delta_prob;
  rec.floored = decision.floored;

  bool finite = true;
  for (double v : q) {
    if (!std::isfinite(v)) {
      finite = false;
      break;
    }
  }
  if (!finite) {
    rec.aborted = true;
    rec.loss = mean_loss_all(cfg.model, server.params, clients);
    return rec;
  }

  for (int i = 0; i < D; ++i) {
    server.params.values[static_cast<std::size_t>(i)] -=
        server.eta * scale * q[static_cast<std::size_t>(i)];
  }
  server.round = round_index;
  rec.loss = mean_loss_all(cfg.model, server.params, clients);

  if (cfg.descent_trials > 0) {
    rec.descent_fraction = utility::descent_check(
        stats, mask, sigma, server.eta, cfg.delta_prob, cfg.descent_trials,
        derive_seed(cfg.seed, 0xdeca, static_cast<std::uint64_t>(round_index)),
        server.rule);
  }

  rec.check_schedule_invariant(cfg.adaptive, cfg.kappa);
  return rec;
}

RunLog train(const TrainConfig& cfg, std::span<const nn::DataSample> dataset) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();

  RunLog log;
  log.config = cfg;

  std::vector<std::vector<nn::DataSample>> shards =
      cfg.label_skew > 0.0
          ? partition_label_skew(dataset, cfg.n_clients, cfg.label_skew,
                                 derive_seed(cfg.seed, 0x9a77))
          : partition_iid(dataset, cfg.n_clients);

  std::vector<ClientState> clients;
  clients.reserve(shards.size());
  for (int c = 0; c < cfg.n_clients; ++c) {
    ClientState state;
    state.id = c;
    state.data = std::move(shards[static_cast<std::size_t>(c)]);
    state.rng_stream = derive_seed(cfg.seed, 0xc11e, static_cast<std::uint64_t>(c));
    clients.push_back(std::move(state));
  }

  ServerState server;
  server.params = cfg.init_params.values.empty() ? nn::zero_params(cfg.model)
                                                 : cfg.init_params;
  server.rule = cfg.rule;
  server.eta = cfg.eta;

  log.initial_loss = mean_loss_all(cfg.model, server.params, clients);

  defense::EncryptionMask mask;  // filled in by the first round

  for (int r = 1; r <= cfg.rounds; ++r) {
    try {
      RoundRecord rec = run_round(server, clients, cfg, r, mask);
      const bool aborted = rec.aborted;
      log.rounds.push_back(std::move(rec));
      if (aborted) {
        log.completed = false;
        log.error = "non-finite aggregate in round " + format_int(r);
        break;
      }
    } catch (const NumericError& e) {
      log.completed = false;
      log.error = e.what();
      break;
    }
  }

  log.final_params = server.params;
  log.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return log;
}

std::string rounds_csv(const RunLog& log) {
  CsvBuilder csv("round,loss,sigma_applied,sigma_crit,z_realized,aborted");
  for (const RoundRecord& r : log.rounds) {
    csv.row({r.round, r.loss, r.sigma_applied, r.sigma_crit, r.z_realized,
             r.aborted});
  }
  return csv.str();
}

std::string clients_csv(const RunLog& log) {
  CsvBuilder csv("round,client,B,mu_norm,d,n,delta,sigma_crit,sigma_applied,"
                 "descent_fraction");
  const int n = log.config.n_clients;
  for (const RoundRecord& r : log.rounds) {
    for (std::size_t c = 0; c < r.clients.size(); ++c) {
      const utility::ClientGradStats& s = r.clients[c];
      const double fraction =
          c < r.descent_fraction.size() ? r.descent_fraction[c] : -1.0;
      csv.row({r.round, s.client_id, s.b_align, s.mu_norm, r.mask_kept, n,
               r.delta_prob, r.client_sigma_crit[c], r.sigma_applied, fraction});
    }
  }
  return csv.str();
}

void persist_run(const RunLog& log, const std::filesystem::path& dir,
                 const std::string& config_snapshot) {
  std::filesystem::create_directories(dir);
  const std::string rounds = rounds_csv(log);
  const std::string clients = clients_csv(log);
  write_file(dir / "config.txt", config_snapshot);
  write_file(dir / "rounds.csv", rounds);
  write_file(dir / "clients.csv", clients);

  nlohmann::json files;
  const auto describe = [&files](const std::string& name, const std::string& body) {
    files[name] = {{"bytes", body.size()}, {"fnv64", hex64(fnv1a64(body))}};
  };
  describe("config.txt", config_snapshot);
  describe("rounds.csv", rounds);
  describe("clients.csv", clients);

  nlohmann::json manifest;
  manifest["version"] = std::string(kVersion);
  manifest["seed"] = log.config.seed;
  manifest["completed"] = log.completed;
  manifest["error"] = log.error;
  manifest["rounds"] = log.rounds.size();
  manifest["initial_loss"] = log.initial_loss;
  manifest["wall_seconds"] = log.wall_seconds;
  manifest["files"] = files;
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

}  // namespace gradshield::fedsim
