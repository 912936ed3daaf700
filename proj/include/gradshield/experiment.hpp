#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "gradshield/config.hpp"

namespace gradshield::harness {

struct PlotPoint {
  double x = 0.0;
  double y = 0.0;
};

// Two-column gnuplot data plus a fixed three-line comment header. The name
// carries run provenance (config hash) appended by the experiment runner.
struct PlotSeries {
  std::string name;
  std::string xlabel;
  std::string ylabel;
  std::string slug;  // output file stem; derived from name when empty
  std::vector<PlotPoint> points;

  void validate() const;  // nonempty name, x strictly increasing
};

std::string slugify(const std::string& name);

// One "<slug>.dat" per series inside dir; an empty list writes nothing and
// logs a warning. Returns the written paths.
std::vector<std::filesystem::path> emit_plot_data(
    std::span<const PlotSeries> series, const std::filesystem::path& dir);

PlotSeries parse_plot_file(const std::filesystem::path& path);

struct RunResult {
  std::filesystem::path out_dir;
  std::vector<std::string> files;  // relative to out_dir, manifest excluded
  std::string config_hash;
};

// Dispatches the configured experiment kind, writing CSVs, plot data, and a
// manifest into the config's output directory. A lock file serializes access
// to the directory; rerunning over existing results requires force. On a
// module error the manifest records the failure and the error is rethrown.
RunResult run_experiment(const ExperimentConfig& cfg, bool force = false);

}  // namespace gradshield::harness
