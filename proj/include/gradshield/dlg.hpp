#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gradshield/bound.hpp"
#include "gradshield/defend.hpp"
#include "gradshield/jacobian.hpp"

namespace gradshield::attack {

enum class AttackObjective { l2, cosine };

AttackObjective objective_from_name(const std::string& s);
std::string objective_name(AttackObjective o);

struct AttackConfig {
  AttackObjective objective = AttackObjective::l2;
  int iterations = 2000;
  double step_size = 0.05;
  int restarts = 4;
  double init_scale = 1.0;
  std::uint64_t seed = 0;
  bool known_target = true;  // optimize a dummy target when false
  double fd_step = nn::kDefaultJacobianStep;

  void validate() const;
};

struct AttackResult {
  std::vector<double> best_x;
  double best_objective = 0.0;
  std::vector<double> trace;  // best restart's objective per iteration
  std::optional<double> mse;  // vs ground truth input, when provided
  int best_restart = 0;
  int aborted_restarts = 0;
};

// Reconstructs the input behind a defended gradient share by first-order
// optimization of a dummy input (and dummy target unless ground_truth_target
// is supplied and known_target is set). The objective compares the dummy's
// masked gradient against y on unencrypted coordinates only.
AttackResult dlg_attack(const nn::ModelSpec& spec,
                        const nn::ParameterVector& params,
                        const defense::DefendedGradient& defended,
                        const std::optional<nn::Target>& ground_truth_target,
                        const AttackConfig& cfg,
                        std::span<const double> ground_truth_x = {});

// Mean squared error per coordinate.
double reconstruction_error(std::span<const double> reconstructed,
                            std::span<const double> original);

struct SweepConfig {
  AttackConfig attack;
  int trials = 20;
  bounds::PriorInfo prior;   // enters the reported bound column
  int exposure_sample_cap = 32;
  bool keep_traces = false;
};

struct SweepTrialRow {
  int trial = 0;
  double z = 0.0;
  double sigma = 0.0;
  double mse = 0.0;
  double bound = 0.0;  // coordinate-summed scale
  double objective = 0.0;
  int best_restart = 0;
};

struct SweepTraceRow {
  int trial = 0;
  double z = 0.0;
  double sigma = 0.0;
  int restart = 0;
  int iteration = 0;
  double objective = 0.0;
};

struct SweepSummary {
  double z = 0.0;
  double sigma = 0.0;
  double mean_mse = 0.0;
  double std_mse = 0.0;
  double bound = 0.0;
  int violations = 0;  // trials with m * mse below the summed-scale bound
  int trials = 0;
};

struct SweepResult {
  std::vector<SweepTrialRow> trial_rows;
  std::vector<SweepSummary> summaries;
  std::vector<SweepTraceRow> trace_rows;  // only when keep_traces
};

// For each z: per-trial magnitude mask on the sample's own gradient, defend
// with fresh derived noise, attack, record MSE against the true input.
SweepResult attack_sweep(const nn::ModelSpec& spec,
                         const nn::ParameterVector& params,
                         std::span<const nn::DataSample> dataset,
                         std::span<const double> z_grid, double sigma,
                         const SweepConfig& cfg, std::uint64_t seed);

std::string sweep_trials_csv(std::span<const SweepTrialRow> rows);
std::string sweep_summary_csv(std::span<const SweepSummary> rows);
std::string sweep_trace_csv(std::span<const SweepTraceRow> rows);

}  // namespace gradshield::attack
