#include "gradshield/dlg.hpp"

#include <cmath>
#include <limits>

#include "gradshield/csv.hpp"

namespace gradshield::attack {

AttackObjective objective_from_name(const std::string& s) {
  if (s == "l2") return AttackObjective::l2;
  if (s == "cosine") return AttackObjective::cosine;
  throw ConfigError("unknown attack objective '" + s + "' (expected l2 or cosine)");
}

std::string objective_name(AttackObjective o) {
  return o == AttackObjective::l2 ? "l2" : "cosine";
}

void AttackConfig::validate() const {
  if (iterations < 1) throw ConfigError("attack iterations must be >= 1");
  if (restarts < 1) throw ConfigError("attack restarts must be >= 1");
  if (!(step_size > 0.0)) throw ConfigError("attack step_size must be > 0");
  if (!(init_scale >= 0.0)) throw ConfigError("attack init_scale must be >= 0");
  if (!(fd_step > 0.0)) throw ConfigError("attack fd_step must be > 0");
}

double reconstruction_error(std::span<const double> reconstructed,
                            std::span<const double> original) {
  if (reconstructed.size() != original.size()) {
    throw ConfigError("reconstruction error needs equal-length vectors");
  }
  if (reconstructed.empty()) {
    throw ConfigError("reconstruction error needs nonempty vectors");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < reconstructed.size(); ++i) {
    const double d = reconstructed[i] - original[i];
    acc += d * d;
  }
  return acc / static_cast<double>(reconstructed.size());
}

namespace {

constexpr double kCosineGuard = 1e-12;

double objective_value(AttackObjective kind, std::span<const double> v,
                       std::span<const double> u) {
  if (kind == AttackObjective::l2) {
    double acc = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double r = v[i] - u[i];
      acc += r * r;
    }
    return acc;
  }
  double dot = 0.0, nv = 0.0, nu = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    dot += v[i] * u[i];
    nv += v[i] * v[i];
    nu += u[i] * u[i];
  }
  const double denom = std::sqrt(nv) * std::sqrt(nu);
  if (denom < kCosineGuard) return 1.0;
  return 1.0 - dot / denom;
}

// dObjective/dv.
void objective_grad_v(AttackObjective kind, std::span<const double> v,
                      std::span<const double> u, std::vector<double>* out) {
  out->assign(v.size(), 0.0);
  if (kind == AttackObjective::l2) {
    for (std::size_t i = 0; i < v.size(); ++i) (*out)[i] = 2.0 * (v[i] - u[i]);
    return;
  }
  double dot = 0.0, nv2 = 0.0, nu2 = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    dot += v[i] * u[i];
    nv2 += v[i] * v[i];
    nu2 += u[i] * u[i];
  }
  const double denom = std::sqrt(nv2) * std::sqrt(nu2);
  if (denom < kCosineGuard) return;  // flat region
  const double s = dot / denom;
  for (std::size_t i = 0; i < v.size(); ++i) {
    (*out)[i] = v[i] * s / nv2 - u[i] / denom;
  }
}

struct AdamState {
  std::vector<double> m1, m2;
  int t = 0;

  explicit AdamState(std::size_t n) : m1(n, 0.0), m2(n, 0.0) {}

  void step(std::span<double> vars, std::span<const double> grad, double lr) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    ++t;
    const double c1 = 1.0 - std::pow(b1, t);
    const double c2 = 1.0 - std::pow(b2, t);
    for (std::size_t i = 0; i < vars.size(); ++i) {
      m1[i] = b1 * m1[i] + (1.0 - b1) * grad[i];
      m2[i] = b2 * m2[i] + (1.0 - b2) * grad[i] * grad[i];
      vars[i] -= lr * (m1[i] / c1) / (std::sqrt(m2[i] / c2) + eps);
    }
  }
};

std::vector<double> softmax(std::span<const double> logits) {
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  double sum = 0.0;
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

struct RestartOutcome {
  std::vector<double> best_x;
  double best_objective = std::numeric_limits<double>::infinity();
  std::vector<double> trace;
  bool aborted = false;
};

}  // namespace

AttackResult dlg_attack(const nn::ModelSpec& spec,
                        const nn::ParameterVector& params,
                        const defense::DefendedGradient& defended,
                        const std::optional<nn::Target>& ground_truth_target,
                        const AttackConfig& cfg,
                        std::span<const double> ground_truth_x) {
  cfg.validate();
  defended.mask.validate();
  if (defended.mask.total_dim != spec.param_count()) {
    throw ConfigError("defended gradient does not match the model size");
  }
  if (cfg.known_target && !ground_truth_target.has_value()) {
    throw ConfigError("known-target attack needs the ground-truth target");
  }
  const int m = spec.input_dim;
  const int classes = spec.output_dim;
  const std::vector<double> u = defense::apply_restriction(defended.y, defended.mask);
  const bool optimize_target = !cfg.known_target;
  const bool soft_labels = optimize_target && spec.loss == nn::LossKind::cross_entropy;
  std::vector<double> fixed_target;
  if (!optimize_target) {
    fixed_target = nn::dense_target(spec, *ground_truth_target);
  }

  std::vector<RestartOutcome> outcomes;
  outcomes.reserve(static_cast<std::size_t>(cfg.restarts));

  for (int restart = 0; restart < cfg.restarts; ++restart) {
    GaussianSampler init(derive_seed(cfg.seed, 0xa77c, static_cast<std::uint64_t>(restart)));
    std::vector<double> x = init.vector(static_cast<std::size_t>(m), cfg.init_scale);
    std::vector<double> label_vars;  // logits (cross-entropy) or raw targets
    if (optimize_target) {
      label_vars = init.vector(static_cast<std::size_t>(classes), 1.0);
    }
    AdamState adam_x(static_cast<std::size_t>(m));
    AdamState adam_t(label_vars.size());

    RestartOutcome out;
    out.trace.reserve(static_cast<std::size_t>(cfg.iterations));

    std::vector<double> dv, grad_x(static_cast<std::size_t>(m));
    std::vector<double> grad_t(label_vars.size());
    for (int it = 0; it < cfg.iterations; ++it) {
      const std::vector<double> target =
          optimize_target ? (soft_labels ? softmax(label_vars) : label_vars)
                          : fixed_target;
      std::vector<double> g;
      double value = std::numeric_limits<double>::quiet_NaN();
      try {
        g = nn::param_gradient_dense(spec, params, x, target);
        const std::vector<double> v = defense::apply_restriction(g, defended.mask);
        value = objective_value(cfg.objective, v, u);

        if (!std::isfinite(value)) throw NumericError("non-finite objective");
        out.trace.push_back(value);
        if (value < out.best_objective) {
          out.best_objective = value;
          out.best_x = x;
        }

        objective_grad_v(cfg.objective, v, u, &dv);
        const nn::GradientInputJacobian jac =
            nn::input_jacobian_dense(spec, params, x, target, cfg.fd_step);
        std::fill(grad_x.begin(), grad_x.end(), 0.0);
        for (int k = 0; k < defended.mask.kept_dim(); ++k) {
          const double w = dv[static_cast<std::size_t>(k)];
          if (w == 0.0) continue;
          const double* row =
              jac.entries.data() +
              static_cast<std::size_t>(
                  defended.mask.unencrypted[static_cast<std::size_t>(k)]) * m;
          for (int i = 0; i < m; ++i) grad_x[static_cast<std::size_t>(i)] += w * row[i];
        }

        if (optimize_target) {
          // Central differences of the objective through the dummy target.
          std::vector<double> grad_dense(static_cast<std::size_t>(classes), 0.0);
          std::vector<double> probe = target;
          const double h = cfg.fd_step;
          for (int c = 0; c < classes; ++c) {
            const double base = probe[static_cast<std::size_t>(c)];
            probe[static_cast<std::size_t>(c)] = base + h;
            const std::vector<double> gp = nn::param_gradient_dense(spec, params, x, probe);
            const double fp = objective_value(
                cfg.objective, defense::apply_restriction(gp, defended.mask), u);
            probe[static_cast<std::size_t>(c)] = base - h;
            const std::vector<double> gm = nn::param_gradient_dense(spec, params, x, probe);
            const double fm = objective_value(
                cfg.objective, defense::apply_restriction(gm, defended.mask), u);
            probe[static_cast<std::size_t>(c)] = base;
            grad_dense[static_cast<std::size_t>(c)] = (fp - fm) / (2.0 * h);
          }
          if (soft_labels) {
            // Chain through softmax: dL/dlogit_i = t_i (g_i - sum_j t_j g_j).
            double mix = 0.0;
            for (int c = 0; c < classes; ++c) {
              mix += target[static_cast<std::size_t>(c)] *
                     grad_dense[static_cast<std::size_t>(c)];
            }
            for (int c = 0; c < classes; ++c) {
              grad_t[static_cast<std::size_t>(c)] =
                  target[static_cast<std::size_t>(c)] *
                  (grad_dense[static_cast<std::size_t>(c)] - mix);
            }
          } else {
            grad_t = grad_dense;
          }
        }
      } catch (const NumericError&) {
        // Restart went numerically bad: freeze it, keep what it found.
        out.aborted = true;
        break;
      }

      adam_x.step(x, grad_x, cfg.step_size);
      if (optimize_target) adam_t.step(label_vars, grad_t, cfg.step_size);
    }
    // Keep the trace length contract even for aborted restarts.
    out.trace.resize(static_cast<std::size_t>(cfg.iterations),
                     std::numeric_limits<double>::infinity());
    if (out.best_x.empty()) {
      // Nothing evaluated cleanly; fall back to the initial draw.
      out.best_x = x;
    }
    outcomes.push_back(std::move(out));
  }

  AttackResult result;
  result.best_objective = std::numeric_limits<double>::infinity();
  result.best_restart = 0;
  for (int r = 0; r < cfg.restarts; ++r) {
    const RestartOutcome& o = outcomes[static_cast<std::size_t>(r)];
    if (o.aborted) ++result.aborted_restarts;
    if (o.best_objective < result.best_objective) {
      result.best_objective = o.best_objective;
      result.best_restart = r;
    }
  }
  const RestartOutcome& best = outcomes[static_cast<std::size_t>(result.best_restart)];
  result.best_x = best.best_x;
  result.best_objective = best.best_objective;
  result.trace = best.trace;
  if (!ground_truth_x.empty()) {
    result.mse = reconstruction_error(result.best_x, ground_truth_x);
  }
  return result;
}

SweepResult attack_sweep(const nn::ModelSpec& spec,
                         const nn::ParameterVector& params,
                         std::span<const nn::DataSample> dataset,
                         std::span<const double> z_grid, double sigma,
                         const SweepConfig& cfg, std::uint64_t seed) {
  if (z_grid.empty()) throw ConfigError("attack sweep needs a nonempty z grid");
  if (dataset.empty()) throw ConfigError("attack sweep needs a dataset");
  if (cfg.trials < 1) throw ConfigError("attack sweep needs trials >= 1");
  cfg.attack.validate();
  const int m = spec.input_dim;
  const int d_params = spec.param_count();

  SweepResult result;
  for (std::size_t zi = 0; zi < z_grid.size(); ++zi) {
    const double z = z_grid[zi];
    const double exposure = bounds::expected_exposure(
        spec, params, dataset, bounds::MaskPolicy::magnitude_per_sample(z),
        cfg.attack.fd_step, cfg.exposure_sample_cap);
    const double bound = bounds::reconstruction_lower_bound(
        m, d_params, z, sigma, exposure, cfg.prior.lambda1);

    SweepSummary summary;
    summary.z = z;
    summary.sigma = sigma;
    summary.bound = bound;
    summary.trials = cfg.trials;
    std::vector<double> mses;
    mses.reserve(static_cast<std::size_t>(cfg.trials));

    for (int trial = 0; trial < cfg.trials; ++trial) {
      const nn::DataSample& sample =
          dataset[static_cast<std::size_t>(trial) % dataset.size()];
      const nn::GradientVector g = nn::param_gradient(spec, params, sample);
      const defense::EncryptionMask mask = defense::mask_from_magnitudes(g.values, z);
      const defense::DefendedGradient defended = defense::apply_defense(
          g, mask, sigma,
          derive_seed(derive_seed(seed, 0xdef0, zi),
                      static_cast<std::uint64_t>(trial)));

      AttackConfig attack_cfg = cfg.attack;
      attack_cfg.seed = derive_seed(derive_seed(seed, 0x5eed, zi),
                                    static_cast<std::uint64_t>(trial));
      const AttackResult att = dlg_attack(spec, params, defended, sample.target,
                                          attack_cfg, sample.x);
      const double mse = att.mse.value();
      mses.push_back(mse);

      SweepTrialRow row;
      row.trial = trial;
      row.z = z;
      row.sigma = sigma;
      row.mse = mse;
      row.bound = bound;
      row.objective = att.best_objective;
      row.best_restart = att.best_restart;
      result.trial_rows.push_back(row);
      if (static_cast<double>(m) * mse < bound) ++summary.violations;

      if (cfg.keep_traces) {
        for (int it = 0; it < cfg.attack.iterations; ++it) {
          result.trace_rows.push_back(
              {trial, z, sigma, att.best_restart, it,
               att.trace[static_cast<std::size_t>(it)]});
        }
      }
    }

    double mean = 0.0;
    for (double v : mses) mean += v;
    mean /= static_cast<double>(mses.size());
    double var = 0.0;
    for (double v : mses) var += (v - mean) * (v - mean);
    summary.mean_mse = mean;
    summary.std_mse = mses.size() > 1
                          ? std::sqrt(var / static_cast<double>(mses.size() - 1))
                          : 0.0;
    result.summaries.push_back(summary);
  }
  return result;
}

std::string sweep_trials_csv(std::span<const SweepTrialRow> rows) {
  CsvBuilder csv("trial,z,sigma,mse,bound,objective,best_restart");
  for (const SweepTrialRow& r : rows) {
    csv.row({r.trial, r.z, r.sigma, r.mse, r.bound, r.objective, r.best_restart});
  }
  return csv.str();
}

std::string sweep_summary_csv(std::span<const SweepSummary> rows) {
  CsvBuilder csv("z,sigma,mean_mse,std_mse,bound,violations");
  for (const SweepSummary& r : rows) {
    csv.row({r.z, r.sigma, r.mean_mse, r.std_mse, r.bound, r.violations});
  }
  return csv.str();
}

std::string sweep_trace_csv(std::span<const SweepTraceRow> rows) {
  CsvBuilder csv("trial,z,sigma,restart,iteration,objective");
  for (const SweepTraceRow& r : rows) {
    csv.row({r.trial, r.z, r.sigma, r.restart, r.iteration, r.objective});
  }
  return csv.str();
}

}  // namespace gradshield::attack
