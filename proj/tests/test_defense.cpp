#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <random>
#include <vector>

#include "gradshield/common.hpp"
#include "gradshield/defend.hpp"
#include "gradshield/mask.hpp"

using namespace gradshield;
namespace fs = std::filesystem;

namespace {

nn::GradientVector grad_of(std::vector<double> values) {
  nn::GradientVector g;
  g.values = std::move(values);
  return g;
}

fs::path scratch(const char* leaf) {
  const fs::path dir = fs::temp_directory_path() / "gradshield-tests" / leaf;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("magnitude masking encrypts the largest entries") {
  const defense::EncryptionMask mask =
      defense::mask_from_magnitudes(std::vector<double>{3.0, -1.0, 2.0, 0.0}, 0.5);
  CHECK(mask.unencrypted == std::vector<int>{1, 3});
  CHECK(mask.kept_dim() == 2);
  CHECK(mask.realized_ratio() == doctest::Approx(0.5));
}

TEST_CASE("ratio boundaries keep everything or nothing") {
  const std::vector<double> g = {3.0, -1.0, 2.0, 0.0};
  CHECK(defense::mask_from_magnitudes(g, 0.0).unencrypted ==
        std::vector<int>{0, 1, 2, 3});
  CHECK(defense::mask_from_magnitudes(g, 1.0).unencrypted.empty());
}

TEST_CASE("magnitude ties break toward the lower index") {
  const defense::EncryptionMask mask =
      defense::mask_from_magnitudes(std::vector<double>{1.0, -1.0}, 0.5);
  CHECK(mask.unencrypted == std::vector<int>{1});
}

TEST_CASE("random masks are uniform draws without replacement, seeded") {
  const nn::GradientVector g = grad_of(std::vector<double>(20, 1.0));
  const defense::EncryptionMask a =
      defense::select_mask(g, 0.4, defense::MaskStrategy::random, 5);
  const defense::EncryptionMask b =
      defense::select_mask(g, 0.4, defense::MaskStrategy::random, 5);
  CHECK(a.unencrypted == b.unencrypted);
  CHECK(a.kept_dim() == 12);
  for (std::size_t i = 1; i < a.unencrypted.size(); ++i) {
    CHECK(a.unencrypted[i] > a.unencrypted[i - 1]);
  }
  const defense::EncryptionMask c =
      defense::select_mask(g, 0.4, defense::MaskStrategy::random, 6);
  CHECK(c.unencrypted != a.unencrypted);  // different seed, different draw
}

TEST_CASE("fixed index lists are validated") {
  CHECK_THROWS_AS(defense::mask_from_indices(4, {0, 0}), ConfigError);
  CHECK_THROWS_AS(defense::mask_from_indices(4, {4}), ConfigError);
  CHECK_THROWS_AS(defense::mask_from_indices(4, {-1}), ConfigError);
  const defense::EncryptionMask ok = defense::mask_from_indices(4, {2, 0});
  CHECK(ok.unencrypted == std::vector<int>{0, 2});  // stored sorted
}

TEST_CASE("restriction picks unencrypted coordinates in mask order") {
  const defense::EncryptionMask mask = defense::mask_from_indices(4, {1, 3});
  CHECK(defense::apply_restriction(std::vector<double>{3.0, -1.0, 2.0, 0.0}, mask) ==
        std::vector<double>{-1.0, 0.0});

  const defense::EncryptionMask all = defense::mask_from_indices(4, {0, 1, 2, 3});
  const std::vector<double> g = {3.0, -1.0, 2.0, 0.0};
  CHECK(defense::apply_restriction(g, all) == g);

  const defense::EncryptionMask none = defense::mask_from_indices(4, {});
  CHECK(defense::apply_restriction(g, none).empty());
}

TEST_CASE("prolongation reinserts zeros at encrypted indices") {
  const defense::EncryptionMask mask = defense::mask_from_indices(4, {1, 3});
  CHECK(defense::apply_prolongation(std::vector<double>{-1.0, 0.0}, mask) ==
        std::vector<double>{0.0, -1.0, 0.0, 0.0});
  const defense::EncryptionMask none = defense::mask_from_indices(4, {});
  CHECK(defense::apply_prolongation(std::vector<double>{}, none) ==
        std::vector<double>(4, 0.0));
}

TEST_CASE("restrict after prolong is the identity on 100 random cases") {
  Rng rng(314u);
  std::uniform_int_distribution<int> pick_d(1, 40);
  std::uniform_real_distribution<double> pick_z(0.0, 1.0);
  GaussianSampler gs(315);
  for (int trial = 0; trial < 100; ++trial) {
    const int total = pick_d(rng);
    const std::vector<double> g = gs.vector(static_cast<std::size_t>(total), 1.0);
    const defense::EncryptionMask mask = defense::mask_from_magnitudes(g, pick_z(rng));
    const std::vector<double> u = gs.vector(static_cast<std::size_t>(mask.kept_dim()), 1.0);
    CHECK(defense::apply_restriction(defense::apply_prolongation(u, mask), mask) == u);
  }
}

TEST_CASE("realized ratio deviates from the request by at most 1/D") {
  Rng rng(2718u);
  std::uniform_int_distribution<int> pick_d(1, 200);
  std::uniform_real_distribution<double> pick_z(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const int total = pick_d(rng);
    const double z = pick_z(rng);
    const defense::EncryptionMask mask =
        defense::mask_from_magnitudes(std::vector<double>(static_cast<std::size_t>(total), 1.0), z);
    CHECK(std::fabs(mask.realized_ratio() - z) <=
          1.0 / static_cast<double>(total) + 1e-12);
  }
}

TEST_CASE("zero noise reduces the defense to pure masking") {
  const nn::GradientVector g = grad_of({3.0, -1.0, 2.0, 0.0});
  const defense::EncryptionMask mask = defense::mask_from_indices(4, {1, 3});
  const defense::DefendedGradient dg = defense::apply_defense(g, mask, 0.0, 77);
  CHECK(dg.y == defense::apply_prolongation(
                    defense::apply_restriction(g.values, mask), mask));
}

TEST_CASE("defended shares have the advertised first and second moments") {
  const nn::GradientVector g = grad_of({0.7, -2.0, 0.1, 1.5, -0.3, 0.9});
  const defense::EncryptionMask mask = defense::mask_from_indices(6, {0, 2, 5});
  const double sigma = 1.0;
  const int draws = 100000;

  std::vector<std::vector<double>> ys;
  ys.reserve(static_cast<std::size_t>(draws));
  for (int k = 0; k < draws; ++k) {
    const defense::DefendedGradient dg = defense::apply_defense(
        g, mask, sigma, derive_seed(0xd0e5, static_cast<std::uint64_t>(k)));
    for (int j = 0; j < 6; ++j) {
      if (!mask.is_unencrypted(j)) {
        CHECK(dg.y[static_cast<std::size_t>(j)] == 0.0);
      }
    }
    ys.push_back(dg.y);
  }

  std::vector<double> mean(6, 0.0);
  for (const auto& y : ys) {
    for (int j = 0; j < 6; ++j) mean[static_cast<std::size_t>(j)] += y[static_cast<std::size_t>(j)];
  }
  for (double& v : mean) v /= static_cast<double>(draws);

  // Mean tracks the clean gradient on unencrypted coordinates.
  for (int j : {0, 2, 5}) {
    CHECK(std::fabs(mean[static_cast<std::size_t>(j)] - g.values[static_cast<std::size_t>(j)]) < 0.01);
  }

  // Covariance is sigma^2 on the kept diagonal, zero elsewhere.
  for (int a = 0; a < 6; ++a) {
    for (int b = a; b < 6; ++b) {
      double cov = 0.0;
      for (const auto& y : ys) {
        cov += (y[static_cast<std::size_t>(a)] - mean[static_cast<std::size_t>(a)]) *
               (y[static_cast<std::size_t>(b)] - mean[static_cast<std::size_t>(b)]);
      }
      cov /= static_cast<double>(draws - 1);
      const bool kept_diag = a == b && mask.is_unencrypted(a);
      if (kept_diag) {
        CHECK(cov >= 0.95 * sigma * sigma);
        CHECK(cov <= 1.05 * sigma * sigma);
      } else {
        CHECK(std::fabs(cov) <= 0.05 * sigma * sigma);
      }
    }
  }
}

TEST_CASE("the defense is deterministic in its seed") {
  const nn::GradientVector g = grad_of({0.7, -2.0, 0.1, 1.5});
  const defense::EncryptionMask mask = defense::mask_from_indices(4, {0, 3});
  const defense::DefendedGradient a = defense::apply_defense(g, mask, 0.5, 123);
  const defense::DefendedGradient b = defense::apply_defense(g, mask, 0.5, 123);
  CHECK(a.y == b.y);
  const defense::DefendedGradient c = defense::apply_defense(g, mask, 0.5, 124);
  CHECK(a.y != c.y);
}

TEST_CASE("encrypted coordinates never influence the share") {
  // Two gradients agreeing on unencrypted coordinates produce bit-identical
  // shares: the channel is blind to everything under encryption.
  nn::GradientVector g1 = grad_of({0.7, -2.0, 0.1, 1.5});
  nn::GradientVector g2 = g1;
  g2.values[1] = 99.0;
  g2.values[2] = -42.0;
  const defense::EncryptionMask mask = defense::mask_from_indices(4, {0, 3});
  const defense::DefendedGradient a = defense::apply_defense(g1, mask, 0.3, 7);
  const defense::DefendedGradient b = defense::apply_defense(g2, mask, 0.3, 7);
  CHECK(a.y == b.y);
}

TEST_CASE("mask text format round-trips") {
  const fs::path dir = scratch("mask");
  const defense::EncryptionMask mask = defense::mask_from_indices(7, {0, 2, 6});
  defense::save_mask(dir / "m.txt", mask);
  const std::string text = read_file(dir / "m.txt");
  CHECK(text.substr(0, 3) == "7 3");  // first line: "D d"
  const defense::EncryptionMask back = defense::load_mask(dir / "m.txt");
  CHECK(back.total_dim == mask.total_dim);
  CHECK(back.unencrypted == mask.unencrypted);
}

TEST_CASE("defended gradient binary format round-trips") {
  const fs::path dir = scratch("defended");
  const nn::GradientVector g = grad_of({0.7, -2.0, 0.1, 1.5, 0.25});
  const defense::EncryptionMask mask = defense::mask_from_indices(5, {1, 4});
  const defense::DefendedGradient dg = defense::apply_defense(g, mask, 0.25, 99);

  defense::save_defended(dir / "share.bin", dg);
  CHECK(read_file(dir / "share.bin").substr(0, 5) == "GSDG1");

  const defense::DefendedGradient back = defense::load_defended(dir / "share.bin");
  CHECK(back.y == dg.y);
  CHECK(back.sigma == dg.sigma);
  CHECK(back.noise_seed == dg.noise_seed);
  CHECK(back.mask.total_dim == dg.mask.total_dim);
  CHECK(back.mask.unencrypted == dg.mask.unencrypted);
}
