#include "gradshield/defend.hpp"

#include <cmath>

#include "gradshield/binio.hpp"

namespace gradshield::defense {

using binio::append_f64;
using binio::append_i64;
using binio::read_f64;
using binio::read_i64;

DefendedGradient apply_defense(const nn::GradientVector& g,
                               const EncryptionMask& mask, double sigma,
                               std::uint64_t noise_seed) {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) {
    throw ConfigError("noise level sigma must be finite and >= 0");
  }
  mask.validate();
  if (static_cast<int>(g.values.size()) != mask.total_dim) {
    throw ConfigError("gradient length does not match mask dimension");
  }
  std::vector<double> kept = apply_restriction(g.values, mask);
  if (sigma > 0.0) {
    GaussianSampler noise(noise_seed);
    for (double& v : kept) v += noise.next(sigma);
  }
  DefendedGradient dg;
  dg.y = apply_prolongation(kept, mask);
  dg.mask = mask;
  dg.sigma = sigma;
  dg.noise_seed = noise_seed;
  return dg;
}

void save_defended(const std::filesystem::path& path,
                   const DefendedGradient& dg) {
  dg.mask.validate();
  if (static_cast<int>(dg.y.size()) != dg.mask.total_dim) {
    throw ValidationError("defended gradient length does not match its mask");
  }
  std::string buf;
  buf.append("GSDG1");
  append_i64(buf, dg.mask.total_dim);
  append_i64(buf, dg.mask.kept_dim());
  append_f64(buf, dg.sigma);
  append_i64(buf, static_cast<std::int64_t>(dg.noise_seed));
  for (int idx : dg.mask.unencrypted) append_i64(buf, idx);
  for (double v : dg.y) append_f64(buf, v);
  write_file(path, buf);
}

DefendedGradient load_defended(const std::filesystem::path& path) {
  const std::string buf = read_file(path);
  if (buf.size() < 37 || buf.compare(0, 5, "GSDG1") != 0) {
    throw IngestError("not a GSDG1 gradient file: " + path.string());
  }
  const std::int64_t total = read_i64(buf, 5);
  const std::int64_t keep = read_i64(buf, 13);
  if (total < 1 || keep < 0 || keep > total) {
    throw IngestError("corrupt GSDG1 header in " + path.string());
  }
  const std::size_t need = 37 + static_cast<std::size_t>(keep) * 8 +
                           static_cast<std::size_t>(total) * 8;
  if (buf.size() != need) {
    throw IngestError("GSDG1 payload size mismatch in " + path.string());
  }
  DefendedGradient dg;
  dg.sigma = read_f64(buf, 21);
  dg.noise_seed = static_cast<std::uint64_t>(read_i64(buf, 29));
  std::size_t at = 37;
  std::vector<int> indices(static_cast<std::size_t>(keep));
  for (auto& idx : indices) {
    idx = static_cast<int>(read_i64(buf, at));
    at += 8;
  }
  dg.mask = mask_from_indices(static_cast<int>(total), std::move(indices));
  dg.y.resize(static_cast<std::size_t>(total));
  for (auto& v : dg.y) {
    v = read_f64(buf, at);
    at += 8;
  }
  return dg;
}

}  // namespace gradshield::defense
