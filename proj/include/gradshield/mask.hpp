#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "gradshield/model.hpp"

namespace gradshield::defense {

enum class MaskStrategy { magnitude, random, fixed_indices };

MaskStrategy strategy_from_name(const std::string& s);
std::string strategy_name(MaskStrategy s);

// Which gradient coordinates stay in the clear. Encrypted coordinates are the
// complement; the restriction operator R keeps exactly `unencrypted`, and the
// prolongation P = R^T pads them back with zeros.
struct EncryptionMask {
  int total_dim = 0;             // D
  double requested_ratio = 0.0;  // z as requested
  std::vector<int> unencrypted;  // strictly increasing, size d

  int kept_dim() const { return static_cast<int>(unencrypted.size()); }
  double realized_ratio() const;
  bool is_unencrypted(int index) const;
  void validate() const;
};

// Number of coordinates kept in the clear for a requested ratio: the
// encrypted count is round-half-away-from-zero of z*D.
int kept_count(int total_dim, double z);

EncryptionMask select_mask(const nn::GradientVector& g, double z,
                           MaskStrategy strategy, std::uint64_t seed,
                           const std::vector<int>* fixed_unencrypted = nullptr);

// Magnitude policy on an arbitrary score vector (e.g. |aggregate gradient|):
// the top round(z*D) scores get encrypted, ties broken toward lower index.
EncryptionMask mask_from_magnitudes(std::span<const double> magnitudes,
                                    double z);

EncryptionMask mask_from_indices(int total_dim, std::vector<int> unencrypted);

// R: length-D vector -> length-d vector of the unencrypted coordinates.
std::vector<double> apply_restriction(std::span<const double> full,
                                      const EncryptionMask& mask);
// P = R^T: length-d vector -> length-D vector, zeros elsewhere.
std::vector<double> apply_prolongation(std::span<const double> kept,
                                       const EncryptionMask& mask);

// Dense 0/1 forms of R (d x D) and P (D x d); test and inspection use only.
std::vector<std::vector<double>> restriction_matrix(const EncryptionMask& mask);
std::vector<std::vector<double>> prolongation_matrix(const EncryptionMask& mask);

// Text format: first line "D d", second line the d unencrypted indices.
void save_mask(const std::filesystem::path& path, const EncryptionMask& mask);
EncryptionMask load_mask(const std::filesystem::path& path);

}  // namespace gradshield::defense
