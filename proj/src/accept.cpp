#include "gradshield/accept.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <iostream>
#include <limits>
#include <sstream>

#include "gradshield/bound.hpp"
#include "gradshield/config.hpp"
#include "gradshield/dlg.hpp"
#include "gradshield/experiment.hpp"
#include "gradshield/fedsim.hpp"
#include "gradshield/fisher.hpp"
#include "gradshield/utility.hpp"

namespace gradshield::accept {

namespace fs = std::filesystem;

namespace {

struct Fail : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void check(bool ok, const std::string& msg) {
  if (!ok) throw Fail(msg);
}

std::string fmt(double v) { return format_double(v); }

// ---------------------------------------------------------------------------
// Shared fixtures
// ---------------------------------------------------------------------------

std::vector<double> ratio_grid() {
  return {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.99};
}

std::vector<nn::DataSample> synthetic_class_data(const nn::ModelSpec& spec,
                                                 int count, double tau,
                                                 std::uint64_t seed) {
  nn::SyntheticPrior prior;
  prior.tau = tau;
  nn::LabelRule rule;
  rule.kind = nn::LabelRuleKind::teacher_class;
  rule.teacher_seed = 99;
  return nn::generate_synthetic_dataset(spec.input_dim, count, prior, rule,
                                        spec.output_dim, seed);
}

// Small quadratic-loss regression model: deep-leakage recovery and federated
// descent are exactly analyzable on it.
nn::ModelSpec quad_model() {
  nn::ModelSpec spec;
  spec.arch = nn::Arch::linear;
  spec.loss = nn::LossKind::squared_error;
  spec.input_dim = 10;
  spec.output_dim = 1;
  spec.with_bias = true;
  spec.name = "quad";
  return spec;
}

// Federated fixture: linear squared-error classifier, no bias, wide input
// scale so the loss surface is well conditioned and converges quickly.
nn::ModelSpec fl_model() {
  nn::ModelSpec spec;
  spec.arch = nn::Arch::linear;
  spec.loss = nn::LossKind::squared_error;
  spec.input_dim = 16;
  spec.output_dim = 10;
  spec.with_bias = false;
  spec.name = "fl-fixture";
  return spec;
}

constexpr double kFlEta = 2.0e-3;  // calibrated on the fixture above
constexpr std::uint64_t kFlSeed = 4242;

std::vector<nn::DataSample> fl_data() {
  nn::SyntheticPrior prior;
  prior.tau = 7.0;
  nn::LabelRule rule;
  rule.kind = nn::LabelRuleKind::teacher_class;
  rule.flip_prob = 0.3;
  rule.teacher_seed = 99;
  return nn::generate_synthetic_dataset(16, 300, prior, rule, 10, kFlSeed);
}

fedsim::TrainConfig fl_config() {
  fedsim::TrainConfig tc;
  tc.model = fl_model();
  tc.rounds = 50;
  tc.n_clients = 3;
  tc.eta = kFlEta;
  tc.rule = utility::AggregationRule::sum;
  tc.z = 0.0;
  tc.strategy = defense::MaskStrategy::magnitude;
  tc.adaptive = false;
  tc.sigma_fixed = 0.0;
  tc.sigma_max = 1e-2;
  tc.kappa = 0.9;
  tc.delta_prob = 0.05;
  tc.descent_trials = 0;
  tc.seed = kFlSeed;
  return tc;
}

double final_loss(const fedsim::RunLog& log) {
  check(!log.rounds.empty(), "training produced no rounds");
  check(log.completed, "training aborted: " + log.error);
  return log.rounds.back().loss;
}

// ---------------------------------------------------------------------------
// 1. Error lower bound is monotone in the encryption ratio.
// ---------------------------------------------------------------------------

std::string criterion_bound_monotone() {
  const nn::ModelSpec spec = nn::toy_linear();
  const nn::ParameterVector params = nn::random_params(spec, 0.5, 7);
  const std::vector<nn::DataSample> data = synthetic_class_data(spec, 64, 1.0, 42);
  const std::vector<double> grid = ratio_grid();
  const std::vector<bounds::BoundReport> reports = bounds::bound_curve(
      spec, params, data, grid, 1e-2, bounds::PriorInfo::user(1.0), 32);

  check(reports.size() == grid.size(), "unexpected report count");
  for (std::size_t i = 1; i < reports.size(); ++i) {
    const bounds::BoundReport& prev = reports[i - 1];
    const bounds::BoundReport& cur = reports[i];
    check(cur.bound >= prev.bound,
          "bound decreased between z=" + fmt(prev.z_requested) + " (" +
              fmt(prev.bound) + ") and z=" + fmt(cur.z_requested) + " (" +
              fmt(cur.bound) + ")");
    const int d_prev = defense::kept_count(spec.param_count(), prev.z_requested);
    const int d_cur = defense::kept_count(spec.param_count(), cur.z_requested);
    if (d_cur < d_prev) {
      check(cur.bound > prev.bound,
            "bound failed to rise strictly while the kept dimension fell from " +
                format_int(d_prev) + " to " + format_int(d_cur) + " at z=" +
                fmt(cur.z_requested));
    }
  }
  return "bound rises " + fmt(reports.front().bound) + " -> " +
         fmt(reports.back().bound) + " over " + format_int(
             static_cast<long long>(grid.size())) + " ratios";
}

// ---------------------------------------------------------------------------
// 2. Smaller models carry a higher per-input bound at comparable exposure.
// ---------------------------------------------------------------------------

std::string criterion_bound_model_complexity() {
  const std::vector<double> grid = {0.0, 0.3, 0.6, 0.9};
  const double sigma = 1e-2;
  const bounds::PriorInfo prior = bounds::PriorInfo::user(1.0);

  const nn::ModelSpec small = nn::toy_linear();
  const nn::ParameterVector small_params = nn::random_params(small, 0.5, 7);
  const std::vector<nn::DataSample> small_data =
      synthetic_class_data(small, 16, 1.0, 42);
  const std::vector<bounds::BoundReport> small_reports = bounds::bound_curve(
      small, small_params, small_data, grid, sigma, prior, 16);

  const nn::ModelSpec large = nn::toy_conv();
  const nn::ParameterVector large_params = nn::random_params(large, 0.5, 7);
  const std::vector<nn::DataSample> large_data =
      synthetic_class_data(large, 16, 1.0, 43);
  const std::vector<bounds::BoundReport> large_reports = bounds::bound_curve(
      large, large_params, large_data, grid, sigma, prior, 16);

  int comparable = 0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double es = small_reports[i].exposure;
    const double el = large_reports[i].exposure;
    const double rel = std::fabs(es - el) / std::max({es, el, 1e-300});
    if (rel >= 0.10) continue;
    ++comparable;
    check(small_reports[i].bound > large_reports[i].bound,
          "small-model bound " + fmt(small_reports[i].bound) +
              " not above large-model bound " + fmt(large_reports[i].bound) +
              " at z=" + fmt(grid[i]) + " with comparable exposure");
  }
  // The ordering also holds unconditionally on this fixture; report it for
  // context without gating on it.
  int unconditional = 0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (small_reports[i].bound > large_reports[i].bound) ++unconditional;
  }
  return format_int(comparable) + " of " +
         format_int(static_cast<long long>(grid.size())) +
         " ratios had exposures within 10% (ordering held at " +
         format_int(unconditional) + "/" +
         format_int(static_cast<long long>(grid.size())) + " overall); D=" +
         format_int(small.param_count()) + " vs D=" +
         format_int(large.param_count());
}

// ---------------------------------------------------------------------------
// 3. Expected exposure never grows as more coordinates are encrypted.
// ---------------------------------------------------------------------------

std::string criterion_exposure_monotone() {
  const nn::ModelSpec spec = nn::toy_linear();
  const nn::ParameterVector params = nn::random_params(spec, 0.5, 7);
  const std::vector<nn::DataSample> data = synthetic_class_data(spec, 64, 1.0, 42);

  double prev = std::numeric_limits<double>::infinity();
  double first = 0.0, last = 0.0;
  const std::vector<double> grid = ratio_grid();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double e = bounds::expected_exposure(
        spec, params, data, bounds::MaskPolicy::magnitude_aggregate(grid[i]),
        nn::kDefaultJacobianStep, 64);
    if (i == 0) first = e;
    last = e;
    check(e <= prev, "exposure rose from " + fmt(prev) + " to " + fmt(e) +
                         " at z=" + fmt(grid[i]));
    prev = e;
  }
  return "exposure falls " + fmt(first) + " -> " + fmt(last);
}

// ---------------------------------------------------------------------------
// 4. Closed-form information matrix matches its Monte Carlo estimate.
// ---------------------------------------------------------------------------

std::string criterion_fisher_oracle() {
  Rng rng(20240816u);
  std::uniform_int_distribution<int> pick_m(3, 12);
  std::uniform_int_distribution<int> pick_c(2, 5);
  std::uniform_int_distribution<int> pick_h(4, 16);
  std::uniform_int_distribution<int> coin(0, 1);
  std::uniform_int_distribution<int> pick3(0, 2);
  const double z_choices[3] = {0.0, 0.3, 0.7};
  const double sigma_choices[3] = {0.05, 0.2, 1.0};

  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    nn::ModelSpec spec;
    spec.arch = coin(rng) == 0 ? nn::Arch::linear : nn::Arch::mlp;
    spec.loss = coin(rng) == 0 ? nn::LossKind::squared_error
                               : nn::LossKind::cross_entropy;
    spec.input_dim = pick_m(rng);
    spec.output_dim = pick_c(rng);
    spec.hidden_dim = pick_h(rng);
    spec.with_bias = coin(rng) == 1;
    spec.name = "probe";
    spec.validate();

    const std::uint64_t seed = derive_seed(0xf15e5eed, static_cast<std::uint64_t>(trial));
    const nn::ParameterVector params = nn::random_params(spec, 0.5, seed);
    GaussianSampler xs(derive_seed(seed, 1));
    nn::DataSample sample;
    sample.x = xs.vector(static_cast<std::size_t>(spec.input_dim), 1.0);
    sample.target = nn::Target::of_class(
        std::uniform_int_distribution<int>(0, spec.output_dim - 1)(rng));

    const double z = z_choices[pick3(rng)];
    const double sigma = sigma_choices[pick3(rng)];
    const nn::GradientVector g = nn::param_gradient(spec, params, sample);
    const defense::EncryptionMask mask = defense::mask_from_magnitudes(g.values, z);

    const bounds::FisherMatrix exact = bounds::fisher_information(
        nn::input_jacobian_of_gradient(spec, params, sample), mask, sigma);
    const bounds::FisherMatrix estimate = bounds::empirical_fisher(
        spec, params, sample, mask, sigma, 100000, derive_seed(seed, 2));
    const double gap = bounds::relative_frobenius_gap(estimate, exact);
    worst = std::max(worst, gap);
    check(gap <= 0.05, "relative Frobenius gap " + fmt(gap) +
                           " above 5% on probe model " + format_int(trial) +
                           " (m=" + format_int(spec.input_dim) +
                           ", z=" + fmt(z) + ", sigma=" + fmt(sigma) + ")");
  }
  return "worst relative Frobenius gap " + fmt(worst) + " over 20 probes";
}

// ---------------------------------------------------------------------------
// 5. Gradient-inversion error stays above the theoretical floor.
// ---------------------------------------------------------------------------

std::string criterion_attack_above_bound() {
  const nn::ModelSpec spec = quad_model();
  const nn::ParameterVector params = nn::random_params(spec, 1.0, 5);

  nn::SyntheticPrior prior;
  prior.tau = 1.0;
  nn::LabelRule rule;
  rule.kind = nn::LabelRuleKind::teacher_regression;
  rule.teacher_seed = 17;
  const std::vector<nn::DataSample> data =
      nn::generate_synthetic_dataset(spec.input_dim, 50, prior, rule, 1, 606);

  attack::SweepConfig cfg;
  cfg.attack.objective = attack::AttackObjective::l2;
  cfg.attack.iterations = 2000;
  cfg.attack.restarts = 4;
  cfg.attack.step_size = 0.05;
  cfg.attack.init_scale = 1.0;
  cfg.attack.known_target = true;
  cfg.trials = 50;
  cfg.prior = bounds::PriorInfo::user(1.0);
  cfg.exposure_sample_cap = 32;

  const std::vector<double> z_grid = {0.0, 0.5, 0.9};
  int worst_violations = 0;
  std::string worst_at = "-";
  for (double sigma : {1e-3, 1e-2}) {
    const attack::SweepResult result =
        attack::attack_sweep(spec, params, data, z_grid, sigma, cfg, 909);
    for (const attack::SweepSummary& s : result.summaries) {
      if (s.violations > worst_violations) {
        worst_violations = s.violations;
        worst_at = "z=" + fmt(s.z) + ", sigma=" + fmt(s.sigma);
      }
      check(s.violations <= 2,
            format_int(s.violations) + "/50 reconstructions beat the bound at z=" +
                fmt(s.z) + ", sigma=" + fmt(s.sigma) +
                " (tolerance 2 of 50 for 95%)");
    }
  }
  return "worst case " + format_int(worst_violations) +
         "/50 sub-bound reconstructions (" + worst_at + ")";
}

// ---------------------------------------------------------------------------
// 6. Gaussian-sum norm tail: measured exceedance within binomial slack.
// ---------------------------------------------------------------------------

std::string criterion_gaussian_sum_tail() {
  const long long trials = 100000;
  const std::vector<double> deltas = {0.01, 0.05, 0.5};
  double worst_margin = std::numeric_limits<double>::infinity();
  for (int n : {1, 3, 10}) {
    for (int d : {4, 64, 1024}) {
      const std::vector<double> exceed = utility::verify_concentration_multi(
          1.0, n, d, deltas, trials,
          derive_seed(0xacce, static_cast<std::uint64_t>(n),
                      static_cast<std::uint64_t>(d)));
      for (std::size_t k = 0; k < deltas.size(); ++k) {
        const double delta = deltas[k];
        const double slack =
            3.0 * std::sqrt(delta * (1.0 - delta) / static_cast<double>(trials));
        worst_margin = std::min(worst_margin, delta + slack - exceed[k]);
        check(exceed[k] <= delta + slack,
              "exceedance " + fmt(exceed[k]) + " above delta " + fmt(delta) +
                  " + slack " + fmt(slack) + " at n=" + format_int(n) +
                  ", d=" + format_int(d));
      }
    }
  }
  return "all 27 (n,d,delta) cells inside the tail budget (tightest margin " +
         fmt(worst_margin) + ")";
}

// ---------------------------------------------------------------------------
// 7. Noise at 0.9x the critical scale keeps descent likely; 10x does not.
// ---------------------------------------------------------------------------

std::string criterion_descent_probability() {
  const int d = 4, n = 3;
  const double delta = 0.05, eta = 0.01;
  const long long trials = 10000;
  const double b[3] = {1.0, 2.0, 0.5};
  const double mu_norm[3] = {1.0, 0.8, 1.2};

  std::vector<utility::ClientGradStats> clients;
  double min_crit = std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) {
    utility::ClientGradStats s;
    s.client_id = i;
    s.mu.assign(d, 0.0);
    s.mu[0] = mu_norm[i];
    s.mu_norm = mu_norm[i];
    s.b_align = b[i];
    s.batch_size = 1;
    clients.push_back(std::move(s));
    const utility::CriticalNoise cn =
        utility::critical_noise(b[i], mu_norm[i], n, d, delta);
    check(cn.usable() && std::isfinite(cn.value), "fixture critical noise unusable");
    min_crit = std::min(min_crit, cn.value);
  }
  std::vector<int> all(d);
  for (int i = 0; i < d; ++i) all[static_cast<std::size_t>(i)] = i;
  const defense::EncryptionMask mask = defense::mask_from_indices(d, all);

  const std::vector<double> safe = utility::descent_check(
      clients, mask, 0.9 * min_crit, eta, delta, trials, 0x0907);
  for (int i = 0; i < n; ++i) {
    check(safe[static_cast<std::size_t>(i)] >= 1.0 - delta,
          "client " + format_int(i) + " descent fraction " +
              fmt(safe[static_cast<std::size_t>(i)]) +
              " below 0.95 at 0.9x critical noise");
  }
  const std::vector<double> unsafe = utility::descent_check(
      clients, mask, 10.0 * min_crit, eta, delta, trials, 0x0908);
  const double worst = *std::min_element(unsafe.begin(), unsafe.end());
  check(worst < 1.0 - delta,
        "descent fraction " + fmt(worst) +
            " still above 0.95 for every client at 10x critical noise");
  return "0.9x critical: fractions >= " +
         fmt(*std::min_element(safe.begin(), safe.end())) +
         "; 10x critical: worst fraction " + fmt(worst);
}

// ---------------------------------------------------------------------------
// 8. Fixed-noise training shows the three utility regimes.
// ---------------------------------------------------------------------------

std::string criterion_noise_utility_regimes() {
  const std::vector<nn::DataSample> data = fl_data();
  fedsim::TrainConfig tc = fl_config();

  tc.sigma_fixed = 0.0;
  const double base = final_loss(fedsim::train(tc, data));
  tc.sigma_fixed = 1e-6;
  const double low = final_loss(fedsim::train(tc, data));
  tc.sigma_fixed = 1e-3;
  const double moderate = final_loss(fedsim::train(tc, data));
  tc.sigma_fixed = 1.0;
  const fedsim::RunLog high_log = fedsim::train(tc, data);
  const double high = final_loss(high_log);
  const double initial = high_log.initial_loss;

  const double low_gap = std::fabs(low - base) / base;
  check(low_gap <= 0.01, "sigma=1e-6 final loss " + fmt(low) + " deviates " +
                             fmt(low_gap) + " (>1%) from baseline " + fmt(base));
  check(moderate > base, "sigma=1e-3 final loss " + fmt(moderate) +
                             " not strictly above baseline " + fmt(base));
  const double high_gap = std::fabs(high - initial) / initial;
  check(high_gap <= 0.05, "sigma=1 final loss " + fmt(high) + " deviates " +
                              fmt(high_gap) + " (>5%) from initial " +
                              fmt(initial));
  return "baseline " + fmt(base) + "; low-noise gap " + fmt(low_gap) +
         "; moderate excess " + fmt(moderate - base) + "; high-noise final " +
         fmt(high) + " vs initial " + fmt(initial);
}

// ---------------------------------------------------------------------------
// 9. Adaptive noise keeps utility flat across encryption ratios.
// ---------------------------------------------------------------------------

std::string criterion_adaptive_noise_utility() {
  const std::vector<nn::DataSample> data = fl_data();
  fedsim::TrainConfig tc = fl_config();
  tc.sigma_fixed = 0.0;
  const double base = final_loss(fedsim::train(tc, data));

  double worst_gap = 0.0;
  for (double z : {0.0, 0.25, 0.5, 0.75, 0.9}) {
    fedsim::TrainConfig ta = fl_config();
    ta.adaptive = true;
    ta.z = z;
    const double loss = final_loss(fedsim::train(ta, data));
    const double gap = std::fabs(loss - base) / base;
    worst_gap = std::max(worst_gap, gap);
    check(gap <= 0.02, "adaptive run at z=" + fmt(z) + " final loss " +
                           fmt(loss) + " deviates " + fmt(gap) +
                           " (>2%) from noise-free " + fmt(base));
  }
  return "worst relative gap to the noise-free baseline " + fmt(worst_gap);
}

// ---------------------------------------------------------------------------
// 10. Scheduler's critical noise grows with the encryption ratio.
// ---------------------------------------------------------------------------

std::string criterion_critical_noise_vs_ratio() {
  const int total = 64;
  GaussianSampler gs(777);
  const std::vector<double> aggregate = gs.vector(total, 1.0);
  const double b[3] = {0.8, 1.0, 1.3};

  double prev = -std::numeric_limits<double>::infinity();
  int strict = 0;
  double first = 0.0, last = 0.0;
  const std::vector<double> grid = ratio_grid();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const defense::EncryptionMask mask =
        defense::mask_from_magnitudes(aggregate, grid[i]);
    std::vector<utility::ClientGradStats> stats;
    for (int c = 0; c < 3; ++c) {
      utility::ClientGradStats s;
      s.client_id = c;
      s.mu = defense::apply_restriction(aggregate, mask);
      double norm = 0.0;
      for (double v : s.mu) norm += v * v;
      s.mu_norm = std::sqrt(norm);
      s.b_align = b[c];
      s.batch_size = 1;
      stats.push_back(std::move(s));
    }
    const fedsim::NoiseDecision decision = fedsim::adaptive_noise_schedule(
        stats, mask.kept_dim(), 3, 0.05, 0.9, 1e30);
    if (i == 0) {
      first = decision.sigma_crit;
    } else {
      check(decision.sigma_crit >= prev,
            "critical noise fell from " + fmt(prev) + " to " +
                fmt(decision.sigma_crit) + " at z=" + fmt(grid[i]));
      if (decision.sigma_crit > prev) ++strict;
    }
    last = decision.sigma_crit;
    prev = decision.sigma_crit;
  }
  check(strict > 0, "critical noise never increased across the ratio grid");
  return "critical noise rises " + fmt(first) + " -> " + fmt(last) + " with " +
         format_int(strict) + " strict increases";
}

// ---------------------------------------------------------------------------
// 11. Selection operators obey their exact algebra.
// ---------------------------------------------------------------------------

std::string criterion_mask_operator_algebra() {
  int checked = 0;
  for (int total : {1, 2, 7, 64}) {
    std::vector<defense::EncryptionMask> masks;
    masks.push_back(defense::mask_from_indices(total, {}));
    std::vector<int> every;
    for (int i = 0; i < total; ++i) every.push_back(i);
    masks.push_back(defense::mask_from_indices(total, every));
    std::vector<int> alternate;
    for (int i = 0; i < total; i += 2) alternate.push_back(i);
    masks.push_back(defense::mask_from_indices(total, alternate));
    GaussianSampler gs(derive_seed(0xa19e, static_cast<std::uint64_t>(total)));
    masks.push_back(defense::mask_from_magnitudes(gs.vector(
        static_cast<std::size_t>(total), 1.0), 0.5));

    for (const defense::EncryptionMask& mask : masks) {
      const auto r = defense::restriction_matrix(mask);
      const auto p = defense::prolongation_matrix(mask);
      const int d = mask.kept_dim();

      // P equals R transposed, entry for entry.
      for (int i = 0; i < total; ++i) {
        for (int j = 0; j < d; ++j) {
          check(p[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] ==
                    r[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)],
                "P != R^T at D=" + format_int(total));
        }
      }
      // R R^T = I_d and R P = I_d.
      for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) {
          double rrt = 0.0, rp = 0.0;
          for (int k = 0; k < total; ++k) {
            rrt += r[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] *
                   r[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)];
            rp += r[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] *
                  p[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)];
          }
          const double want = i == j ? 1.0 : 0.0;
          check(rrt == want, "R R^T != I at D=" + format_int(total));
          check(rp == want, "R P != I at D=" + format_int(total));
        }
      }
      // P P^T is the 0/1 diagonal indicator of unencrypted coordinates.
      for (int i = 0; i < total; ++i) {
        for (int j = 0; j < total; ++j) {
          double ppt = 0.0;
          for (int k = 0; k < d; ++k) {
            ppt += p[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] *
                   p[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)];
          }
          const double want =
              i == j && mask.is_unencrypted(i) ? 1.0 : 0.0;
          check(ppt == want, "P P^T not the kept-coordinate indicator at D=" +
                                 format_int(total));
        }
      }
      ++checked;
    }
  }
  return format_int(checked) + " masks across D in {1,2,7,64}, exact equality";
}

// ---------------------------------------------------------------------------
// 12. Reruns are byte-identical.
// ---------------------------------------------------------------------------

std::string smoke_config_text(const fs::path& out_dir) {
  std::string text;
  text += "kind = noise-utility\n";
  text += "name = smoke\n";
  text += "seed = 42\n";
  text += "out = " + out_dir.string() + "\n";
  text += "[model]\n";
  text += "arch = linear\n";
  text += "loss = squared-error\n";
  text += "input_dim = 8\n";
  text += "output_dim = 4\n";
  text += "[data]\n";
  text += "count = 60\n";
  text += "[defense]\n";
  text += "z = 0\n";
  text += "sigma_grid = 0,0.001\n";
  text += "[train]\n";
  text += "rounds = 10\n";
  text += "eta = 0.05\n";
  text += "adaptive = false\n";
  text += "descent_trials = 16\n";
  return text;
}

std::vector<std::string> comparable_files(const fs::path& root) {
  std::vector<std::string> rel;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    const std::string ext = entry.path().extension().string();
    if (ext != ".csv" && ext != ".dat" && ext != ".txt") continue;
    rel.push_back(fs::relative(entry.path(), root).string());
  }
  std::sort(rel.begin(), rel.end());
  return rel;
}

std::string criterion_deterministic_outputs(const fs::path& work) {
  const fs::path out = work / "smoke";
  const fs::path a = work / "smoke_a";
  const fs::path b = work / "smoke_b";
  fs::remove_all(out);
  fs::remove_all(a);
  fs::remove_all(b);

  const harness::ExperimentConfig cfg =
      harness::parse_config_text(smoke_config_text(out), "<smoke>");
  harness::run_experiment(cfg);
  fs::rename(out, a);
  harness::run_experiment(cfg);
  fs::rename(out, b);

  const std::vector<std::string> files_a = comparable_files(a);
  const std::vector<std::string> files_b = comparable_files(b);
  check(files_a == files_b, "the two smoke runs produced different file sets");
  check(!files_a.empty(), "smoke run produced no comparable files");
  for (const std::string& rel : files_a) {
    check(read_file(a / rel) == read_file(b / rel),
          "file " + rel + " differs between identical smoke runs");
  }

  // The analytical pipeline is deterministic as well.
  const auto bound_csv = [] {
    const nn::ModelSpec spec = nn::toy_linear();
    const nn::ParameterVector params = nn::random_params(spec, 0.5, 7);
    const std::vector<nn::DataSample> data = synthetic_class_data(spec, 32, 1.0, 42);
    const std::vector<double> grid = {0.0, 0.5, 0.9};
    return bounds::bound_reports_csv(bounds::bound_curve(
        spec, params, data, grid, 1e-2, bounds::PriorInfo::user(1.0), 16));
  };
  check(bound_csv() == bound_csv(), "bound reports differ across recomputation");

  return format_int(static_cast<long long>(files_a.size())) +
         " files byte-identical across reruns";
}

}  // namespace

std::vector<CriterionResult> run_acceptance(const fs::path& work_dir,
                                            std::ostream& out) {
  fs::create_directories(work_dir);

  struct Entry {
    const char* name;
    std::function<std::string()> body;
  };
  const Entry entries[] = {
      {"bound-monotone-in-ratio", criterion_bound_monotone},
      {"bound-model-complexity", criterion_bound_model_complexity},
      {"exposure-monotone-in-ratio", criterion_exposure_monotone},
      {"fisher-oracle-agreement", criterion_fisher_oracle},
      {"attack-above-bound", criterion_attack_above_bound},
      {"gaussian-sum-tail", criterion_gaussian_sum_tail},
      {"descent-probability-threshold", criterion_descent_probability},
      {"noise-utility-regimes", criterion_noise_utility_regimes},
      {"adaptive-noise-utility", criterion_adaptive_noise_utility},
      {"critical-noise-vs-ratio", criterion_critical_noise_vs_ratio},
      {"mask-operator-algebra", criterion_mask_operator_algebra},
      {"byte-deterministic-outputs",
       [&work_dir] { return criterion_deterministic_outputs(work_dir); }},
  };

  std::vector<CriterionResult> results;
  int index = 0;
  for (const Entry& entry : entries) {
    ++index;
    CriterionResult res;
    res.index = index;
    res.name = entry.name;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      res.detail = entry.body();
      res.passed = true;
    } catch (const std::exception& e) {
      res.passed = false;
      res.detail = e.what();
    }
    res.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    std::ostringstream line;
    line << (res.passed ? "[PASS]" : "[FAIL]") << " " << std::setw(2)
         << std::setfill('0') << res.index << " " << res.name << " ("
         << std::fixed << std::setprecision(1) << res.seconds
         << "s): " << res.detail;
    out << line.str() << "\n" << std::flush;
    results.push_back(std::move(res));
  }

  int failures = 0;
  for (const CriterionResult& r : results) {
    if (!r.passed) ++failures;
  }
  out << (failures == 0 ? "all " : "")
      << results.size() - static_cast<std::size_t>(failures) << "/"
      << results.size() << " criteria passed" << std::endl;
  return results;
}

int run_acceptance_cli(const fs::path& work_dir) {
  std::vector<CriterionResult> results = run_acceptance(work_dir, std::cout);
  int failures = 0;
  for (const CriterionResult& r : results) {
    if (!r.passed) ++failures;
  }
  return failures;
}

}  // namespace gradshield::accept
