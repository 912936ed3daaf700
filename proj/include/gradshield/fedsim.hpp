#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "gradshield/dataset.hpp"
#include "gradshield/defend.hpp"
#include "gradshield/utility.hpp"

namespace gradshield::fedsim {

struct ClientState {
  int id = 0;
  std::vector<nn::DataSample> data;  // disjoint shard of the training set
  nn::ParameterVector params;       // local copy, synced from the server
  std::uint64_t rng_stream = 0;
};

struct ServerState {
  nn::ParameterVector params;
  int round = 0;
  utility::AggregationRule rule = utility::AggregationRule::sum;
  double eta = 0.1;
};

struct TrainConfig {
  nn::ModelSpec model;
  nn::ParameterVector init_params;  // empty -> zeros
  int rounds = 50;
  int n_clients = 3;
  double eta = 0.1;
  utility::AggregationRule rule = utility::AggregationRule::sum;
  double label_skew = 0.0;  // 0 = IID round-robin shards, 1 = label-sorted shards

  // Defense applied to the shared per-round gradients.
  double z = 0.0;
  defense::MaskStrategy strategy = defense::MaskStrategy::magnitude;
  std::vector<int> fixed_unencrypted;
  bool recompute_mask = true;  // refresh the shared mask from each round's
                               // aggregate clean gradient

  // Noise schedule.
  bool adaptive = true;
  double sigma_fixed = 0.0;  // used when adaptive is off
  double sigma_max = 1e-2;   // adaptive cap (also used when no client yields
                             // a finite critical noise)
  double kappa = 0.9;
  double delta_prob = 0.05;
  bool post_aggregation_noise = false;  // one noise draw after aggregation
                                        // instead of one per client
  int descent_trials = 0;  // >0 adds a per-round first-order descent estimate

  std::uint64_t seed = 0;

  void validate() const;
};

// sigma floor used whenever a client reports nonpositive alignment; also the
// value the schedule starts from conceptually.
inline constexpr double kSigmaFloor = 1e-6;

struct NoiseDecision {
  double sigma_t = 0.0;
  double sigma_crit = 0.0;  // min over clients of the raw critical noise
  bool floored = false;     // some client had nonpositive alignment
  std::vector<double> per_client;
  std::vector<utility::CriticalNoise::Flag> flags;
};

// kappa * min over clients of their critical noise, floored at kSigmaFloor
// when any client's alignment is nonpositive and capped at sigma_max; when
// every client's critical noise is infinite the cap itself is used.
NoiseDecision adaptive_noise_schedule(
    std::span<const utility::ClientGradStats> stats, int noisy_dims,
    int n_clients, double delta_prob, double kappa, double sigma_max);

struct RoundRecord {
  int round = 0;
  std::vector<utility::ClientGradStats> clients;
  std::vector<double> client_sigma_crit;
  std::vector<utility::CriticalNoise::Flag> client_flags;
  std::vector<double> descent_fraction;  // empty when not estimated
  double sigma_crit = 0.0;    // min over clients (raw)
  double sigma_applied = 0.0;
  double loss = 0.0;          // mean training loss after the update
  double z_realized = 0.0;
  int mask_kept = 0;
  double delta_prob = 0.0;
  bool floored = false;
  bool aborted = false;

  // sigma_applied <= kappa * sigma_crit whenever the schedule is adaptive
  // and sigma_crit is finite and positive.
  void check_schedule_invariant(bool adaptive, double kappa) const;
};

struct RunLog {
  TrainConfig config;
  double initial_loss = 0.0;
  std::vector<RoundRecord> rounds;
  nn::ParameterVector final_params;
  bool completed = true;  // false when a round aborted
  std::string error;      // diagnostic when not completed
  double wall_seconds = 0.0;
};

// Equal shards (sizes differ by at most one). Round-robin keeps shards IID.
std::vector<std::vector<nn::DataSample>> partition_iid(
    std::span<const nn::DataSample> dataset, int n_clients);

// skew = 0 reduces to round-robin; skew = 1 deals label-sorted contiguous
// blocks; in between, a random (1-skew) fraction of the sorted order is
// shuffled before dealing.
std::vector<std::vector<nn::DataSample>> partition_label_skew(
    std::span<const nn::DataSample> dataset, int n_clients, double skew,
    std::uint64_t seed);

// One communication round: sync, local batch-mean gradients, shared mask,
// noise decision, defense, aggregation, update, loss. `mask` is read as the
// current shared mask and updated when the config recomputes it.
RoundRecord run_round(ServerState& server, std::vector<ClientState>& clients,
                      const TrainConfig& cfg, int round_index,
                      defense::EncryptionMask& mask);

RunLog train(const TrainConfig& cfg, std::span<const nn::DataSample> dataset);

std::string rounds_csv(const RunLog& log);
std::string clients_csv(const RunLog& log);

// Writes config_snapshot (text), rounds.csv, clients.csv, and manifest.json
// (version, seed, status, per-file checksums) into dir, creating it.
void persist_run(const RunLog& log, const std::filesystem::path& dir,
                 const std::string& config_snapshot);

}  // namespace gradshield::fedsim
