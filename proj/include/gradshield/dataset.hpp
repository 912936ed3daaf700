#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "gradshield/model.hpp"

namespace gradshield::nn {

// Inputs are drawn iid N(0, tau^2) per coordinate; tau also fixes the prior
// curvature used by the reconstruction bound (smallest eigenvalue 1/tau^2).
struct SyntheticPrior {
  double tau = 1.0;
};

enum class LabelRuleKind {
  constant_zero,       // class 0, or target 0.0 when num_outputs == 1
  uniform_class,       // uniform over classes
  teacher_class,       // argmax of a fixed random linear map, optional flips
  teacher_regression   // fixed random linear map + optional Gaussian noise
};

struct LabelRule {
  LabelRuleKind kind = LabelRuleKind::teacher_class;
  double flip_prob = 0.0;        // teacher_class: resample label uniformly
  double noise_std = 0.0;        // teacher_regression: additive noise
  std::uint64_t teacher_seed = 1234;
};

LabelRuleKind label_rule_from_name(const std::string& s);
std::string label_rule_name(LabelRuleKind k);

// Row-major num_outputs x input_dim teacher map with N(0, 1/input_dim)
// entries, a fixed function of teacher_seed only.
std::vector<double> teacher_matrix(int input_dim, int num_outputs,
                                   std::uint64_t teacher_seed);

std::vector<DataSample> generate_synthetic_dataset(int input_dim, int count,
                                                   const SyntheticPrior& prior,
                                                   const LabelRule& rule,
                                                   int num_outputs,
                                                   std::uint64_t seed);

// Applies a label rule to existing input rows (same label/noise stream
// discipline as the synthetic generator).
std::vector<DataSample> label_rows(std::vector<std::vector<double>> rows,
                                   const LabelRule& rule, int num_outputs,
                                   std::uint64_t seed);

// Reads every .pgm/.ppm (binary, 8-bit) in the directory in sorted filename
// order, scaled to [0,1] and flattened row-major; labels come one-per-line
// from labels.txt. An empty directory yields an empty dataset.
std::vector<DataSample> load_image_dataset(const std::filesystem::path& dir);

// Flat binary export: magic "GSDS1", then input_dim and count as int64
// little-endian, then count*input_dim float64 little-endian, sample-major.
void save_dataset(const std::filesystem::path& path,
                  std::span<const DataSample> samples);

struct RawDataset {
  std::int64_t input_dim = 0;
  std::vector<std::vector<double>> rows;
};

RawDataset load_dataset(const std::filesystem::path& path);

}  // namespace gradshield::nn
