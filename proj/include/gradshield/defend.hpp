#pragma once

#include <cstdint>
#include <filesystem>

#include "gradshield/mask.hpp"

namespace gradshield::defense {

struct DefenseConfig {
  double z = 0.0;
  double sigma = 0.0;
  MaskStrategy strategy = MaskStrategy::magnitude;
  std::vector<int> fixed_unencrypted;  // only read under fixed-indices
};

// The attacker-visible share: y = P(Rg + noise), i.e. the unencrypted
// coordinates carry their noisy values and every encrypted coordinate reads
// exactly zero.
struct DefendedGradient {
  std::vector<double> y;  // length mask.total_dim
  EncryptionMask mask;
  double sigma = 0.0;
  std::uint64_t noise_seed = 0;
};

DefendedGradient apply_defense(const nn::GradientVector& g,
                               const EncryptionMask& mask, double sigma,
                               std::uint64_t noise_seed);

// Binary format: magic "GSDG1", int64 D, int64 d, float64 sigma,
// int64 noise_seed, d int64 unencrypted indices, D float64 values of y;
// all integers and doubles little-endian.
void save_defended(const std::filesystem::path& path,
                   const DefendedGradient& dg);
DefendedGradient load_defended(const std::filesystem::path& path);

}  // namespace gradshield::defense
