#include "gradshield/experiment.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstring>
#include <iostream>
#include <limits>

#include <json.hpp>

#include "gradshield/bound.hpp"
#include "gradshield/csv.hpp"
#include "gradshield/dlg.hpp"
#include "gradshield/fedsim.hpp"

namespace gradshield::harness {

namespace fs = std::filesystem;

void PlotSeries::validate() const {
  if (name.empty()) throw ValidationError("plot series needs a name");
  for (std::size_t i = 1; i < points.size(); ++i) {
    if (!(points[i].x > points[i - 1].x)) {
      throw ValidationError("plot series '" + name +
                            "': x values must be strictly increasing");
    }
  }
}

std::string slugify(const std::string& name) {
  std::string out;
  bool pending = false;
  for (char c : name) {
    const bool keep = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') ||
                      c == '-' || c == '_';
    const bool upper = c >= 'A' && c <= 'Z';
    if (keep || upper) {
      if (pending && !out.empty()) out += '_';
      pending = false;
      out += upper ? static_cast<char>(c - 'A' + 'a') : c;
    } else {
      pending = true;
    }
  }
  return out.empty() ? "series" : out;
}

namespace {

std::string render_plot(const PlotSeries& series) {
  series.validate();
  std::string out;
  out += "# name: " + series.name + "\n";
  out += "# xlabel: " + series.xlabel + "\n";
  out += "# ylabel: " + series.ylabel + "\n";
  for (const PlotPoint& p : series.points) {
    out += format_double(p.x) + " " + format_double(p.y) + "\n";
  }
  return out;
}

std::string series_file(const PlotSeries& series) {
  return (series.slug.empty() ? slugify(series.name) : series.slug) + ".dat";
}

// Numbers inside file names: '.' -> 'p', '-' -> 'm' (e.g. 0.001 -> 0p001).
std::string num_slug(double v) {
  std::string s = format_double(v);
  std::string out;
  for (char c : s) {
    if (c == '.') out += 'p';
    else if (c == '-') out += 'm';
    else if (c == '+') continue;
    else out += c;
  }
  return out;
}

}  // namespace

std::vector<fs::path> emit_plot_data(std::span<const PlotSeries> series,
                                     const fs::path& dir) {
  std::vector<fs::path> written;
  if (series.empty()) {
    std::cerr << "warning: no plot series to emit into " << dir << "\n";
    return written;
  }
  fs::create_directories(dir);
  for (const PlotSeries& s : series) {
    const fs::path path = dir / series_file(s);
    write_file(path, render_plot(s));
    written.push_back(path);
  }
  return written;
}

PlotSeries parse_plot_file(const fs::path& path) {
  const std::string text = read_file(path);
  PlotSeries series;
  series.slug = path.stem().string();

  int line_no = 0;
  std::size_t at = 0;
  const auto next_line = [&](std::string& line) {
    if (at >= text.size()) return false;
    const std::size_t nl = text.find('\n', at);
    line = text.substr(at, nl == std::string::npos ? std::string::npos : nl - at);
    at = nl == std::string::npos ? text.size() : nl + 1;
    ++line_no;
    return true;
  };
  const auto header = [&](const std::string& prefix) {
    std::string line;
    if (!next_line(line) || line.rfind(prefix, 0) != 0) {
      throw ParseError(path.string() + ":" + format_int(line_no) +
                       ": expected header '" + prefix + "...'");
    }
    return line.substr(prefix.size());
  };
  series.name = header("# name: ");
  series.xlabel = header("# xlabel: ");
  series.ylabel = header("# ylabel: ");

  std::string line;
  while (next_line(line)) {
    if (line.empty()) continue;
    const std::size_t space = line.find(' ');
    if (space == std::string::npos) {
      throw ParseError(path.string() + ":" + format_int(line_no) +
                       ": expected 'x y' data line");
    }
    PlotPoint p;
    const auto parse = [&](const std::string& tok, double* out) {
      const char* first = tok.data();
      const char* last = tok.data() + tok.size();
      const auto [ptr, ec] = std::from_chars(first, last, *out);
      if (ec != std::errc() || ptr != last) {
        throw ParseError(path.string() + ":" + format_int(line_no) +
                         ": bad number '" + tok + "'");
      }
    };
    parse(line.substr(0, space), &p.x);
    parse(line.substr(space + 1), &p.y);
    series.points.push_back(p);
  }
  series.validate();
  return series;
}

namespace {

class LockFile {
 public:
  explicit LockFile(const fs::path& path) : path_(path) {
    const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0) {
      if (errno == EEXIST) {
        throw ValidationError("another run holds the lock on " +
                              path_.parent_path().string() +
                              " (remove " + path_.string() + " if stale)");
      }
      throw IngestError("cannot create lock file " + path_.string() + ": " +
                        std::strerror(errno));
    }
    ::close(fd);
    held_ = true;
  }
  LockFile(const LockFile&) = delete;
  LockFile& operator=(const LockFile&) = delete;
  ~LockFile() {
    if (held_) {
      std::error_code ec;
      fs::remove(path_, ec);
    }
  }

 private:
  fs::path path_;
  bool held_ = false;
};

struct Emitter {
  fs::path root;
  std::vector<std::string> names;
  nlohmann::json files = nlohmann::json::object();

  void record(const std::string& rel, std::string_view content) {
    files[rel] = {{"bytes", content.size()}, {"fnv64", hex64(fnv1a64(content))}};
    names.push_back(rel);
  }
  void write(const std::string& rel, std::string_view content) {
    const fs::path path = root / rel;
    fs::create_directories(path.parent_path());
    write_file(path, content);
    record(rel, content);
  }
  void record_existing(const std::string& rel) {
    record(rel, read_file(root / rel));
  }
};

void emit_plots(Emitter& em, const ExperimentConfig& cfg,
                std::vector<PlotSeries> series) {
  if (series.empty()) {
    std::cerr << "warning: no plot series to emit into "
              << (em.root / "plots") << "\n";
    return;
  }
  for (PlotSeries& s : series) {
    s.name += " [config " + cfg.hash_hex() + "]";
    em.write("plots/" + series_file(s), render_plot(s));
  }
}

// Sorted by x with exact-duplicate x collapsed (first point wins), so the
// series satisfies the strictly-increasing invariant.
std::vector<PlotPoint> sorted_points(std::vector<PlotPoint> pts) {
  std::stable_sort(pts.begin(), pts.end(),
                   [](const PlotPoint& a, const PlotPoint& b) { return a.x < b.x; });
  std::vector<PlotPoint> out;
  for (const PlotPoint& p : pts) {
    if (out.empty() || p.x > out.back().x) out.push_back(p);
  }
  return out;
}

fedsim::TrainConfig train_config_base(const ExperimentConfig& cfg,
                                      const nn::ModelSpec& spec) {
  fedsim::TrainConfig tc;
  tc.model = spec;
  tc.init_params = initial_params(cfg, spec);
  tc.rounds = static_cast<int>(cfg.integer("train.rounds"));
  tc.n_clients = static_cast<int>(cfg.integer("train.clients"));
  tc.eta = cfg.num("train.eta");
  tc.rule = utility::aggregation_from_name(cfg.str("train.aggregation"));
  tc.label_skew = cfg.num("train.label_skew");
  tc.z = cfg.num("defense.z");
  tc.strategy = defense::strategy_from_name(cfg.str("defense.strategy"));
  for (long long idx : cfg.int_list("defense.fixed_indices")) {
    tc.fixed_unencrypted.push_back(static_cast<int>(idx));
  }
  tc.recompute_mask = cfg.flag("train.recompute_mask");
  tc.adaptive = cfg.flag("train.adaptive");
  tc.sigma_fixed = cfg.num("defense.sigma");
  tc.sigma_max = cfg.num("train.sigma_max");
  tc.kappa = cfg.num("train.kappa");
  tc.delta_prob = cfg.num("train.delta");
  tc.post_aggregation_noise = cfg.flag("train.post_aggregation_noise");
  tc.descent_trials = static_cast<int>(cfg.integer("train.descent_trials"));
  tc.seed = cfg.seed();
  return tc;
}

void record_run_dir(Emitter& em, const std::string& rel) {
  for (const char* f : {"config.txt", "rounds.csv", "clients.csv", "manifest.json"}) {
    em.record_existing(rel + "/" + std::string(f));
  }
}

double final_loss_of(const fedsim::RunLog& log) {
  return log.rounds.empty() ? log.initial_loss : log.rounds.back().loss;
}

double relative_gap(double value, double baseline) {
  if (baseline != 0.0) return (value - baseline) / std::fabs(baseline);
  return value == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
}

void run_bound_curve(const ExperimentConfig& cfg, Emitter& em) {
  const std::vector<double> z_grid = cfg.num_list("defense.z_grid");
  const double sigma = cfg.num("defense.sigma");
  const bounds::PriorInfo prior =
      bounds::PriorInfo::user(cfg.lambda1(cfg.num("data.tau")));
  const int cap = static_cast<int>(cfg.integer("bound.sample_cap"));
  const double fd_step = cfg.num("bound.fd_step");

  std::vector<bounds::BoundReport> all;
  std::vector<PlotSeries> plots;
  for (const nn::ModelSpec& spec : models_from_config(cfg)) {
    const nn::ParameterVector params = initial_params(cfg, spec);
    const std::vector<nn::DataSample> data = dataset_from_config(cfg, spec);
    const std::vector<bounds::BoundReport> reports =
        bounds::bound_curve(spec, params, data, z_grid, sigma, prior, cap, fd_step);

    PlotSeries series;
    series.name = "reconstruction bound vs encryption ratio (" + spec.name + ")";
    series.xlabel = "encryption ratio z";
    series.ylabel = "error lower bound";
    series.slug = "bound_" + slugify(spec.name);
    std::vector<PlotPoint> pts;
    for (const bounds::BoundReport& r : reports) pts.push_back({r.z_requested, r.bound});
    series.points = sorted_points(std::move(pts));
    plots.push_back(std::move(series));

    all.insert(all.end(), reports.begin(), reports.end());
  }
  em.write("bounds.csv", bounds::bound_reports_csv(all));
  emit_plots(em, cfg, std::move(plots));
}

void run_attack_sweep(const ExperimentConfig& cfg, Emitter& em) {
  const nn::ModelSpec spec = model_from_config(cfg);
  const nn::ParameterVector params = initial_params(cfg, spec);
  const std::vector<nn::DataSample> data = dataset_from_config(cfg, spec);
  const std::vector<double> z_grid = cfg.num_list("defense.z_grid");
  const double sigma = cfg.num("defense.sigma");

  attack::SweepConfig scfg;
  scfg.attack.objective = attack::objective_from_name(cfg.str("attack.objective"));
  scfg.attack.iterations = static_cast<int>(cfg.integer("attack.iterations"));
  scfg.attack.restarts = static_cast<int>(cfg.integer("attack.restarts"));
  scfg.attack.step_size = cfg.num("attack.step_size");
  scfg.attack.init_scale = cfg.num("attack.init_scale");
  scfg.attack.fd_step = cfg.num("attack.fd_step");
  scfg.attack.known_target = cfg.flag("attack.known_target");
  scfg.trials = static_cast<int>(cfg.integer("attack.trials"));
  scfg.prior = bounds::PriorInfo::user(cfg.lambda1(cfg.num("data.tau")));
  scfg.exposure_sample_cap = static_cast<int>(cfg.integer("bound.sample_cap"));
  scfg.keep_traces = cfg.flag("attack.write_trace");

  const attack::SweepResult result =
      attack::attack_sweep(spec, params, data, z_grid, sigma, scfg, cfg.seed());

  em.write("attack_trials.csv", attack::sweep_trials_csv(result.trial_rows));
  em.write("attack_summary.csv", attack::sweep_summary_csv(result.summaries));
  if (scfg.keep_traces) {
    em.write("attack_trace.csv", attack::sweep_trace_csv(result.trace_rows));
  }

  std::vector<PlotPoint> mse_pts, bound_pts;
  for (const attack::SweepSummary& s : result.summaries) {
    mse_pts.push_back({s.z, s.mean_mse});
    bound_pts.push_back({s.z, s.bound});
  }
  PlotSeries mse;
  mse.name = "mean reconstruction error vs encryption ratio";
  mse.xlabel = "encryption ratio z";
  mse.ylabel = "mean per-coordinate MSE";
  mse.slug = "mse_vs_z";
  mse.points = sorted_points(std::move(mse_pts));
  PlotSeries bnd;
  bnd.name = "error lower bound vs encryption ratio";
  bnd.xlabel = "encryption ratio z";
  bnd.ylabel = "error lower bound";
  bnd.slug = "bound_vs_z";
  bnd.points = sorted_points(std::move(bound_pts));
  std::vector<PlotSeries> plots;
  plots.push_back(std::move(mse));
  plots.push_back(std::move(bnd));
  emit_plots(em, cfg, std::move(plots));
}

void run_noise_utility(const ExperimentConfig& cfg, Emitter& em) {
  const nn::ModelSpec spec = model_from_config(cfg);
  const std::vector<nn::DataSample> data = dataset_from_config(cfg, spec);
  const std::vector<double> sigma_grid = cfg.num_list("defense.sigma_grid");

  fedsim::TrainConfig tc = train_config_base(cfg, spec);
  tc.adaptive = false;

  CsvBuilder csv("sigma,initial_loss,final_loss,rel_gap");
  std::vector<PlotSeries> plots;
  std::vector<PlotPoint> final_pts;
  double baseline_final = 0.0;
  std::vector<std::pair<double, double>> rows;  // sigma -> final loss
  std::vector<double> initials;

  for (double sigma : sigma_grid) {
    tc.sigma_fixed = sigma;
    const fedsim::RunLog log = fedsim::train(tc, data);
    const std::string rel = "runs/sigma_" + num_slug(sigma);
    fedsim::persist_run(log, em.root / rel, cfg.canonical());
    record_run_dir(em, rel);

    const double final_loss = final_loss_of(log);
    if (sigma == 0.0) baseline_final = final_loss;
    rows.emplace_back(sigma, final_loss);
    initials.push_back(log.initial_loss);
    final_pts.push_back({sigma, final_loss});

    PlotSeries series;
    series.name = "training loss vs round (sigma = " + format_double(sigma) + ")";
    series.xlabel = "round";
    series.ylabel = "training loss";
    series.slug = "loss_vs_round_sigma_" + num_slug(sigma);
    for (const fedsim::RoundRecord& r : log.rounds) {
      series.points.push_back({static_cast<double>(r.round), r.loss});
    }
    plots.push_back(std::move(series));
  }

  for (std::size_t i = 0; i < rows.size(); ++i) {
    csv.row({rows[i].first, initials[i], rows[i].second,
             relative_gap(rows[i].second, baseline_final)});
  }
  em.write("noise_utility.csv", csv.str());

  PlotSeries final_series;
  final_series.name = "final training loss vs noise scale";
  final_series.xlabel = "noise scale sigma";
  final_series.ylabel = "final training loss";
  final_series.slug = "final_loss_vs_sigma";
  final_series.points = sorted_points(std::move(final_pts));
  plots.push_back(std::move(final_series));
  emit_plots(em, cfg, std::move(plots));
}

void run_adaptive_train(const ExperimentConfig& cfg, Emitter& em) {
  const nn::ModelSpec spec = model_from_config(cfg);
  const std::vector<nn::DataSample> data = dataset_from_config(cfg, spec);
  const std::vector<double> z_grid = cfg.num_list("defense.z_grid");

  fedsim::TrainConfig base = train_config_base(cfg, spec);

  // Noise-free reference trajectory.
  fedsim::TrainConfig clean = base;
  clean.adaptive = false;
  clean.sigma_fixed = 0.0;
  clean.z = 0.0;
  const fedsim::RunLog baseline = fedsim::train(clean, data);
  fedsim::persist_run(baseline, em.root / "runs/baseline", cfg.canonical());
  record_run_dir(em, "runs/baseline");
  const double baseline_final = final_loss_of(baseline);

  CsvBuilder csv("z,initial_loss,final_loss,rel_gap,mean_sigma_applied,"
                 "floored_rounds,completed");
  std::vector<PlotSeries> plots;
  std::vector<PlotPoint> final_pts;
  for (double z : z_grid) {
    fedsim::TrainConfig tc = base;
    tc.adaptive = true;
    tc.z = z;
    const fedsim::RunLog log = fedsim::train(tc, data);
    const std::string rel = "runs/z_" + num_slug(z);
    fedsim::persist_run(log, em.root / rel, cfg.canonical());
    record_run_dir(em, rel);

    double sigma_sum = 0.0;
    long long floored = 0;
    for (const fedsim::RoundRecord& r : log.rounds) {
      sigma_sum += r.sigma_applied;
      if (r.floored) ++floored;
    }
    const double mean_sigma =
        log.rounds.empty() ? 0.0 : sigma_sum / static_cast<double>(log.rounds.size());
    const double final_loss = final_loss_of(log);
    csv.row({z, log.initial_loss, final_loss,
             relative_gap(final_loss, baseline_final), mean_sigma, floored,
             log.completed});
    final_pts.push_back({z, final_loss});

    PlotSeries series;
    series.name = "applied noise vs round (z = " + format_double(z) + ")";
    series.xlabel = "round";
    series.ylabel = "sigma applied";
    series.slug = "sigma_vs_round_z_" + num_slug(z);
    for (const fedsim::RoundRecord& r : log.rounds) {
      series.points.push_back({static_cast<double>(r.round), r.sigma_applied});
    }
    plots.push_back(std::move(series));
  }
  em.write("adaptive.csv", csv.str());

  PlotSeries final_series;
  final_series.name = "final training loss vs encryption ratio (adaptive noise)";
  final_series.xlabel = "encryption ratio z";
  final_series.ylabel = "final training loss";
  final_series.slug = "final_loss_vs_z";
  final_series.points = sorted_points(std::move(final_pts));
  plots.push_back(std::move(final_series));
  emit_plots(em, cfg, std::move(plots));
}

void run_concentration(const ExperimentConfig& cfg, Emitter& em) {
  const double sigma = cfg.num("defense.sigma");
  const std::vector<long long> n_grid = cfg.int_list("concentration.n_grid");
  const std::vector<long long> d_grid = cfg.int_list("concentration.d_grid");
  const std::vector<double> delta_grid = cfg.num_list("concentration.delta_grid");
  const long long trials = cfg.integer("concentration.trials");

  CsvBuilder csv("sigma,n,d,delta,threshold,exceedance,binomial_se,ok");
  std::vector<PlotSeries> plots;
  for (std::size_t ni = 0; ni < n_grid.size(); ++ni) {
    for (std::size_t di = 0; di < d_grid.size(); ++di) {
      const int n = static_cast<int>(n_grid[ni]);
      const int d = static_cast<int>(d_grid[di]);
      const std::vector<double> exceed = utility::verify_concentration_multi(
          sigma, n, d, delta_grid, trials,
          derive_seed(cfg.seed(), static_cast<std::uint64_t>(ni),
                      static_cast<std::uint64_t>(di)));

      std::vector<PlotPoint> pts;
      for (std::size_t k = 0; k < delta_grid.size(); ++k) {
        const double delta = delta_grid[k];
        const double threshold = utility::gaussian_sum_norm_bound(sigma, n, d, delta);
        const double se =
            std::sqrt(delta * (1.0 - delta) / static_cast<double>(trials));
        const bool ok = exceed[k] <= delta + 3.0 * se;
        csv.row({sigma, n, d, delta, threshold, exceed[k], se, ok});
        pts.push_back({delta, exceed[k]});
      }

      PlotSeries series;
      series.name = "tail exceedance vs delta (n = " + format_int(n) +
                    ", d = " + format_int(d) + ")";
      series.xlabel = "delta";
      series.ylabel = "measured exceedance";
      series.slug = "exceedance_n" + format_int(n) + "_d" + format_int(d);
      series.points = sorted_points(std::move(pts));
      plots.push_back(std::move(series));
    }
  }
  em.write("concentration.csv", csv.str());
  emit_plots(em, cfg, std::move(plots));
}

void run_descent(const ExperimentConfig& cfg, Emitter& em) {
  const std::vector<double> b_list = cfg.num_list("descent.b_list");
  const std::vector<double> mu_list = cfg.num_list("descent.mu_norm_list");
  const int d = static_cast<int>(cfg.integer("descent.d"));
  const double delta = cfg.num("descent.delta");
  const double eta = cfg.num("descent.eta");
  const long long trials = cfg.integer("descent.trials");
  const std::vector<double> factors = cfg.num_list("descent.sigma_factors");
  const utility::AggregationRule rule =
      utility::aggregation_from_name(cfg.str("train.aggregation"));
  const int n = static_cast<int>(b_list.size());

  std::vector<utility::ClientGradStats> clients;
  std::vector<double> sigma_crit(b_list.size());
  double base = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < b_list.size(); ++i) {
    utility::ClientGradStats s;
    s.client_id = static_cast<int>(i);
    s.mu.assign(static_cast<std::size_t>(d), 0.0);
    if (d > 0) s.mu[0] = mu_list[i];
    s.mu_norm = mu_list[i];
    s.b_align = b_list[i];
    s.batch_size = 1;
    clients.push_back(std::move(s));

    const utility::CriticalNoise cn =
        utility::critical_noise(b_list[i], mu_list[i], n, d, delta);
    sigma_crit[i] = cn.value;
    if (cn.usable() && std::isfinite(cn.value)) base = std::min(base, cn.value);
  }
  if (!std::isfinite(base) || !(base > 0.0)) {
    base = cfg.num("defense.sigma");
    if (!(base > 0.0)) {
      throw ValidationError(
          "no client has a finite positive critical noise and defense.sigma "
          "is 0; nothing to scale the noise factors by");
    }
  }

  std::vector<int> unencrypted(static_cast<std::size_t>(d));
  for (int i = 0; i < d; ++i) unencrypted[static_cast<std::size_t>(i)] = i;
  const defense::EncryptionMask mask =
      defense::mask_from_indices(d, std::move(unencrypted));

  CsvBuilder csv("round,client,B,mu_norm,d,n,delta,sigma_crit,sigma_applied,"
                 "descent_fraction");
  std::vector<std::vector<PlotPoint>> client_pts(b_list.size());
  for (std::size_t fi = 0; fi < factors.size(); ++fi) {
    const double sigma = factors[fi] * base;
    const std::vector<double> fractions = utility::descent_check(
        clients, mask, sigma, eta, delta, trials,
        derive_seed(cfg.seed(), 0xd35c, static_cast<std::uint64_t>(fi)), rule);
    for (std::size_t c = 0; c < clients.size(); ++c) {
      csv.row({static_cast<long long>(fi), clients[c].client_id,
               clients[c].b_align, clients[c].mu_norm, d, n, delta,
               sigma_crit[c], sigma, fractions[c]});
      client_pts[c].push_back({factors[fi], fractions[c]});
    }
  }
  em.write("descent.csv", csv.str());

  std::vector<PlotSeries> plots;
  for (std::size_t c = 0; c < client_pts.size(); ++c) {
    PlotSeries series;
    series.name = "descent fraction vs noise factor (client " +
                  format_int(static_cast<long long>(c)) + ")";
    series.xlabel = "noise scale / smallest critical noise";
    series.ylabel = "fraction of descending draws";
    series.slug = "descent_fraction_client" + format_int(static_cast<long long>(c));
    series.points = sorted_points(std::move(client_pts[c]));
    plots.push_back(std::move(series));
  }
  emit_plots(em, cfg, std::move(plots));
}

void write_manifest(const Emitter& em, const ExperimentConfig& cfg,
                    const std::string& status, const std::string& error,
                    double wall_seconds) {
  nlohmann::json manifest;
  manifest["version"] = std::string(kVersion);
  manifest["kind"] = cfg.str("kind");
  manifest["name"] = cfg.str("name");
  manifest["seed"] = cfg.seed();
  manifest["config_hash"] = cfg.hash_hex();
  manifest["status"] = status;
  manifest["error"] = error;
  manifest["wall_seconds"] = wall_seconds;
  manifest["files"] = em.files;
  write_file(em.root / "manifest.json", manifest.dump(2) + "\n");
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& cfg, bool force) {
  const auto t0 = std::chrono::steady_clock::now();
  const ExperimentKind kind = cfg.kind();  // throws when unset
  validate_config(cfg);

  const fs::path out(cfg.str("out"));
  fs::create_directories(out);
  LockFile lock(out / ".lock");

  const fs::path manifest_path = out / "manifest.json";
  if (fs::exists(manifest_path) && !force) {
    std::string prev_hash;
    try {
      prev_hash = nlohmann::json::parse(read_file(manifest_path))
                      .value("config_hash", std::string());
    } catch (...) {
      // Unreadable manifest: treat as a foreign directory below.
    }
    if (prev_hash == cfg.hash_hex()) {
      throw ValidationError("output directory " + out.string() +
                            " already holds results for this config (hash " +
                            cfg.hash_hex() + "); pass --force to overwrite");
    }
    throw ValidationError("output directory " + out.string() +
                          " holds results for a different config; pass "
                          "--force to overwrite or choose a fresh out dir");
  }

  Emitter em;
  em.root = out;
  em.write("config.txt", cfg.canonical());

  const auto wall = [&t0]() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
        .count();
  };

  try {
    switch (kind) {
      case ExperimentKind::bound_curve: run_bound_curve(cfg, em); break;
      case ExperimentKind::attack_sweep: run_attack_sweep(cfg, em); break;
      case ExperimentKind::noise_utility: run_noise_utility(cfg, em); break;
      case ExperimentKind::adaptive_train: run_adaptive_train(cfg, em); break;
      case ExperimentKind::concentration: run_concentration(cfg, em); break;
      case ExperimentKind::descent: run_descent(cfg, em); break;
    }
  } catch (const std::exception& e) {
    write_manifest(em, cfg, "error", e.what(), wall());
    throw;
  }
  write_manifest(em, cfg, "ok", "", wall());

  RunResult result;
  result.out_dir = out;
  result.files = em.names;
  result.config_hash = cfg.hash_hex();
  return result;
}

}  // namespace gradshield::harness
