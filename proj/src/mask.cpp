#include "gradshield/mask.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace gradshield::defense {

MaskStrategy strategy_from_name(const std::string& s) {
  if (s == "magnitude") return MaskStrategy::magnitude;
  if (s == "random") return MaskStrategy::random;
  if (s == "fixed-indices" || s == "fixed") return MaskStrategy::fixed_indices;
  throw ConfigError("unknown mask strategy '" + s +
                    "' (expected magnitude, random, or fixed-indices)");
}

std::string strategy_name(MaskStrategy s) {
  switch (s) {
    case MaskStrategy::magnitude: return "magnitude";
    case MaskStrategy::random: return "random";
    case MaskStrategy::fixed_indices: return "fixed-indices";
  }
  throw ConfigError("unknown mask strategy enum value");
}

double EncryptionMask::realized_ratio() const {
  if (total_dim <= 0) throw ValidationError("mask total_dim must be positive");
  return static_cast<double>(total_dim - kept_dim()) / total_dim;
}

bool EncryptionMask::is_unencrypted(int index) const {
  return std::binary_search(unencrypted.begin(), unencrypted.end(), index);
}

void EncryptionMask::validate() const {
  if (total_dim <= 0) throw ValidationError("mask total_dim must be positive");
  if (requested_ratio < 0.0 || requested_ratio > 1.0) {
    throw ValidationError("mask requested_ratio must lie in [0,1]");
  }
  int prev = -1;
  for (int idx : unencrypted) {
    if (idx < 0 || idx >= total_dim) {
      throw ValidationError("mask index " + std::to_string(idx) +
                            " out of range [0," + std::to_string(total_dim) + ")");
    }
    if (idx <= prev) {
      throw ValidationError("mask indices must be strictly increasing");
    }
    prev = idx;
  }
}

int kept_count(int total_dim, double z) {
  if (total_dim <= 0) throw ConfigError("mask needs a positive dimension");
  if (!(z >= 0.0 && z <= 1.0)) {
    throw ConfigError("encryption ratio z must lie in [0,1]");
  }
  const long long encrypted = std::llround(z * total_dim);
  return total_dim - static_cast<int>(encrypted);
}

EncryptionMask mask_from_magnitudes(std::span<const double> magnitudes,
                                    double z) {
  const int total = static_cast<int>(magnitudes.size());
  const int keep = kept_count(total, z);
  std::vector<int> order(static_cast<std::size_t>(total));
  std::iota(order.begin(), order.end(), 0);
  // Largest magnitude first; equal magnitudes encrypt the lower index first,
  // which keeps masks nested as z grows.
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return std::abs(magnitudes[static_cast<std::size_t>(a)]) >
           std::abs(magnitudes[static_cast<std::size_t>(b)]);
  });
  EncryptionMask mask;
  mask.total_dim = total;
  mask.requested_ratio = z;
  mask.unencrypted.assign(order.begin() + (total - keep), order.end());
  std::sort(mask.unencrypted.begin(), mask.unencrypted.end());
  mask.validate();
  return mask;
}

EncryptionMask mask_from_indices(int total_dim, std::vector<int> unencrypted) {
  std::sort(unencrypted.begin(), unencrypted.end());
  for (std::size_t i = 1; i < unencrypted.size(); ++i) {
    if (unencrypted[i] == unencrypted[i - 1]) {
      throw ConfigError("fixed mask contains duplicate index " +
                        std::to_string(unencrypted[i]));
    }
  }
  EncryptionMask mask;
  mask.total_dim = total_dim;
  mask.unencrypted = std::move(unencrypted);
  if (!mask.unencrypted.empty()) {
    const int lo = mask.unencrypted.front();
    const int hi = mask.unencrypted.back();
    if (lo < 0 || hi >= total_dim) {
      throw ConfigError("fixed mask index out of range [0," +
                        std::to_string(total_dim) + ")");
    }
  }
  mask.requested_ratio = mask.realized_ratio();
  mask.validate();
  return mask;
}

EncryptionMask select_mask(const nn::GradientVector& g, double z,
                           MaskStrategy strategy, std::uint64_t seed,
                           const std::vector<int>* fixed_unencrypted) {
  const int total = static_cast<int>(g.values.size());
  if (total <= 0) throw ConfigError("cannot mask an empty gradient");
  switch (strategy) {
    case MaskStrategy::magnitude: {
      EncryptionMask m = mask_from_magnitudes(g.values, z);
      return m;
    }
    case MaskStrategy::random: {
      const int keep = kept_count(total, z);
      std::vector<int> pool(static_cast<std::size_t>(total));
      std::iota(pool.begin(), pool.end(), 0);
      Rng rng(derive_seed(seed, 0x6d61736b));
      // Partial Fisher-Yates: the first `keep` entries are a uniform draw
      // without replacement.
      for (int i = 0; i < keep; ++i) {
        std::uniform_int_distribution<int> pick(i, total - 1);
        std::swap(pool[static_cast<std::size_t>(i)],
                  pool[static_cast<std::size_t>(pick(rng))]);
      }
      EncryptionMask mask;
      mask.total_dim = total;
      mask.requested_ratio = z;
      mask.unencrypted.assign(pool.begin(), pool.begin() + keep);
      std::sort(mask.unencrypted.begin(), mask.unencrypted.end());
      mask.validate();
      return mask;
    }
    case MaskStrategy::fixed_indices: {
      if (fixed_unencrypted == nullptr) {
        throw ConfigError("fixed-indices strategy needs an index list");
      }
      EncryptionMask m = mask_from_indices(total, *fixed_unencrypted);
      return m;
    }
  }
  throw ConfigError("unknown mask strategy enum value");
}

std::vector<double> apply_restriction(std::span<const double> full,
                                      const EncryptionMask& mask) {
  mask.validate();
  if (static_cast<int>(full.size()) != mask.total_dim) {
    throw ConfigError("restriction input length " + std::to_string(full.size()) +
                      " does not match mask dimension " +
                      std::to_string(mask.total_dim));
  }
  std::vector<double> kept;
  kept.reserve(mask.unencrypted.size());
  for (int idx : mask.unencrypted) kept.push_back(full[static_cast<std::size_t>(idx)]);
  return kept;
}

std::vector<double> apply_prolongation(std::span<const double> kept,
                                       const EncryptionMask& mask) {
  mask.validate();
  if (static_cast<int>(kept.size()) != mask.kept_dim()) {
    throw ConfigError("prolongation input length " + std::to_string(kept.size()) +
                      " does not match mask kept dimension " +
                      std::to_string(mask.kept_dim()));
  }
  std::vector<double> full(static_cast<std::size_t>(mask.total_dim), 0.0);
  for (std::size_t k = 0; k < mask.unencrypted.size(); ++k) {
    full[static_cast<std::size_t>(mask.unencrypted[k])] = kept[k];
  }
  return full;
}

std::vector<std::vector<double>> restriction_matrix(const EncryptionMask& mask) {
  mask.validate();
  std::vector<std::vector<double>> r(
      mask.unencrypted.size(),
      std::vector<double>(static_cast<std::size_t>(mask.total_dim), 0.0));
  for (std::size_t k = 0; k < mask.unencrypted.size(); ++k) {
    r[k][static_cast<std::size_t>(mask.unencrypted[k])] = 1.0;
  }
  return r;
}

std::vector<std::vector<double>> prolongation_matrix(const EncryptionMask& mask) {
  mask.validate();
  std::vector<std::vector<double>> p(
      static_cast<std::size_t>(mask.total_dim),
      std::vector<double>(mask.unencrypted.size(), 0.0));
  for (std::size_t k = 0; k < mask.unencrypted.size(); ++k) {
    p[static_cast<std::size_t>(mask.unencrypted[k])][k] = 1.0;
  }
  return p;
}

void save_mask(const std::filesystem::path& path, const EncryptionMask& mask) {
  mask.validate();
  std::string out = std::to_string(mask.total_dim) + " " +
                    std::to_string(mask.kept_dim()) + "\n";
  for (std::size_t k = 0; k < mask.unencrypted.size(); ++k) {
    if (k > 0) out.push_back(' ');
    out += std::to_string(mask.unencrypted[k]);
  }
  out.push_back('\n');
  write_file(path, out);
}

EncryptionMask load_mask(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) {
    throw ParseError(path.string() + " line 1: missing mask header");
  }
  std::istringstream head(line);
  int total = 0, keep = 0;
  if (!(head >> total >> keep)) {
    throw ParseError(path.string() + " line 1: expected 'D d'");
  }
  std::string extra;
  if (head >> extra) {
    throw ParseError(path.string() + " line 1: trailing tokens after 'D d'");
  }
  std::vector<int> indices;
  if (!std::getline(in, line)) line.clear();
  std::istringstream body(line);
  int idx = 0;
  while (body >> idx) indices.push_back(idx);
  if (!body.eof()) {
    throw ParseError(path.string() + " line 2: malformed index token");
  }
  if (static_cast<int>(indices.size()) != keep) {
    throw ParseError(path.string() + " line 2: expected " +
                     std::to_string(keep) + " indices, found " +
                     std::to_string(indices.size()));
  }
  EncryptionMask mask;
  mask.total_dim = total;
  mask.unencrypted = std::move(indices);
  try {
    mask.requested_ratio = mask.realized_ratio();
    mask.validate();
  } catch (const ValidationError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return mask;
}

}  // namespace gradshield::defense
