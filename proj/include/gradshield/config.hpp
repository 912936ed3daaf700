#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "gradshield/model.hpp"

namespace gradshield::harness {

enum class ExperimentKind {
  bound_curve,
  attack_sweep,
  noise_utility,
  adaptive_train,
  concentration,
  descent,
};

ExperimentKind kind_from_name(const std::string& name);
std::string kind_name(ExperimentKind kind);

// Line-oriented "key = value" configuration with bracketed sections. Every
// known key always carries an effective value (defaults filled in), stored
// under its qualified "section.key" name; unknown keys and sections are
// rejected with a nearest-name suggestion.
struct ExperimentConfig {
  std::map<std::string, std::string> values;

  const std::string& str(const std::string& key) const;
  long long integer(const std::string& key) const;
  double num(const std::string& key) const;
  bool flag(const std::string& key) const;
  std::uint64_t seed() const;
  std::vector<double> num_list(const std::string& key) const;
  std::vector<long long> int_list(const std::string& key) const;
  std::vector<std::string> str_list(const std::string& key) const;

  bool has_kind() const;
  ExperimentKind kind() const;
  void set_kind(ExperimentKind kind);

  // Prior curvature: the literal number, or 1/tau^2 when set to "auto".
  double lambda1(double tau) const;

  // Deterministic full rendering (all keys, sorted) and its 64-bit hash;
  // permuting the key order of the source file cannot change either.
  std::string canonical() const;
  std::uint64_t hash() const;
  std::string hash_hex() const;
};

ExperimentConfig default_config();
ExperimentConfig parse_config(const std::filesystem::path& path);
ExperimentConfig parse_config_text(std::string_view text, const std::string& origin);

// Range and consistency checks over the full effective config; rerun after
// any post-parse mutation (e.g. the CLI filling in the kind).
void validate_config(const ExperimentConfig& cfg);

// The model named by the [model] section (or a preset when `models` is set,
// taking the first entry).
nn::ModelSpec model_from_config(const ExperimentConfig& cfg);
// All models referenced by a multi-model experiment (the `models` preset
// list when nonempty, else the single [model] section).
std::vector<nn::ModelSpec> models_from_config(const ExperimentConfig& cfg);

nn::ParameterVector initial_params(const ExperimentConfig& cfg,
                                   const nn::ModelSpec& spec);

// Builds the training set the config describes (synthetic generator, image
// directory, or a serialized dataset file).
std::vector<nn::DataSample> dataset_from_config(const ExperimentConfig& cfg,
                                                const nn::ModelSpec& spec);

}  // namespace gradshield::harness
