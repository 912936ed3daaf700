#include "doctest.h"

#include <cmath>
#include <vector>

#include "gradshield/common.hpp"
#include "gradshield/utility.hpp"

using namespace gradshield;

namespace {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

constexpr double kDeltaHalfLog = 0.60653065971263342;  // e^{-1/2}

}  // namespace

TEST_CASE("alignment statistic on hand-computed fixtures") {
  const defense::EncryptionMask full = defense::mask_from_indices(2, {0, 1});

  SUBCASE("a single client self-correlates nonnegatively") {
    const std::vector<std::vector<double>> own = {{1.0, -2.0}, {0.5, 0.25}};
    const utility::ClientGradStats s =
        utility::client_stats_from_grads(0, own, own, full);
    CHECK(s.b_align >= 0.0);
    CHECK(s.batch_size == 2);
  }

  SUBCASE("perfectly opposed clients cancel to zero alignment") {
    const std::vector<std::vector<double>> own = {{1.0, -2.0}, {3.0, 0.5}};
    // Per-sample aggregate g1 + g2 with g2 = -g1 is identically zero.
    const std::vector<std::vector<double>> aggregate = {{0.0, 0.0}, {0.0, 0.0}};
    const utility::ClientGradStats s =
        utility::client_stats_from_grads(0, own, aggregate, full);
    CHECK(s.b_align == 0.0);
  }

  SUBCASE("batch means match per-sample hand arithmetic") {
    const std::vector<std::vector<double>> own = {{1.0, 2.0}, {3.0, -1.0}, {0.0, 1.0}};
    const std::vector<std::vector<double>> aggregate = {{2.0, 0.0}, {1.0, 1.0}, {-1.0, 4.0}};
    const utility::ClientGradStats s =
        utility::client_stats_from_grads(7, own, aggregate, full);
    CHECK(s.client_id == 7);
    // Dot products per sample: 2, 2, 4 -> mean 8/3.
    CHECK(s.b_align == doctest::Approx(8.0 / 3.0).epsilon(1e-12));
    REQUIRE(s.mu.size() == 2);
    CHECK(s.mu[0] == doctest::Approx(4.0 / 3.0).epsilon(1e-12));
    CHECK(s.mu[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(s.mu_norm == doctest::Approx(2.0 * std::sqrt(5.0) / 3.0).epsilon(1e-12));
  }

  SUBCASE("masking restricts the mean gradient") {
    const std::vector<std::vector<double>> own = {{1.0, 2.0}};
    const defense::EncryptionMask second_only = defense::mask_from_indices(2, {1});
    const utility::ClientGradStats s =
        utility::client_stats_from_grads(0, own, own, second_only);
    REQUIRE(s.mu.size() == 1);
    CHECK(s.mu[0] == doctest::Approx(2.0));
  }
}

TEST_CASE("critical noise formula on pinned inputs") {
  // sqrt(2 ln(1/delta)) = 1 at delta = e^{-1/2}, so the scale is
  // B / (sqrt(n) * |mu| * (sqrt(d) + 1)) = 1 / 2.
  const utility::CriticalNoise cn =
      utility::critical_noise(1.0, 1.0, 1, 1, kDeltaHalfLog);
  CHECK(cn.usable());
  CHECK(cn.value == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("critical noise scales as one over the root client count") {
  const double one = utility::critical_noise(1.0, 1.0, 1, 4, 0.05).value;
  const double four = utility::critical_noise(1.0, 1.0, 4, 4, 0.05).value;
  CHECK(four == doctest::Approx(one / 2.0).epsilon(1e-12));
}

TEST_CASE("degenerate round statistics are flagged, not computed") {
  const utility::CriticalNoise neg = utility::critical_noise(-0.3, 1.0, 3, 4, 0.05);
  CHECK(neg.flag == utility::CriticalNoise::Flag::nonpositive_alignment);
  CHECK_FALSE(neg.usable());

  const utility::CriticalNoise inf = utility::critical_noise(1.0, 0.0, 3, 4, 0.05);
  CHECK(inf.flag == utility::CriticalNoise::Flag::infinite);
  CHECK_FALSE(inf.usable());

  CHECK(utility::flag_name(utility::CriticalNoise::Flag::ok) == "ok");
}

TEST_CASE("gaussian sum norm bound on pinned inputs") {
  // sigma * sqrt(n) * (sqrt(d) + sqrt(2 ln(1/delta))) = 1 * (2 + 2) = 4.
  CHECK(utility::gaussian_sum_norm_bound(1.0, 1, 4, std::exp(-2.0)) ==
        doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("measured tail mass stays under the advertised bound") {
  const double exceed = utility::verify_concentration(1.0, 3, 16, 0.05, 100000, 808);
  CHECK(exceed <= 0.05 + 3.0 * std::sqrt(0.05 * 0.95 / 100000.0));

  const std::vector<double> deltas = {0.01, 0.1, 0.5};
  const std::vector<double> multi =
      utility::verify_concentration_multi(1.0, 3, 16, deltas, 100000, 808);
  REQUIRE(multi.size() == 3);
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    CHECK(multi[i] <= deltas[i]);
  }
}

TEST_CASE("noiseless rounds always descend when alignment is positive") {
  utility::ClientGradStats s;
  s.client_id = 0;
  s.mu = {0.5, -0.25};
  s.mu_norm = std::sqrt(0.3125);
  s.b_align = 0.7;
  s.batch_size = 4;
  const defense::EncryptionMask full = defense::mask_from_indices(2, {0, 1});
  const std::vector<double> fractions = utility::descent_check(
      std::vector<utility::ClientGradStats>{s}, full, 0.0, 0.1, 0.05, 500, 11);
  REQUIRE(fractions.size() == 1);
  CHECK(fractions[0] == 1.0);
}

TEST_CASE("first-order and exact descent fractions agree with the normal law") {
  // One client, scalar quadratic loss: theta = 0, one sample (x=1, t=-1)
  // gives per-sample gradient 1, so mu = [1], B = 1, and the aggregate update
  // descends iff 1 + nu >= 0 (up to an O(eta) clip far in the tail). The
  // descent probability is Phi(1/sigma) exactly.
  const double sigma = 1.1883;
  const double expect = normal_cdf(1.0 / sigma);

  utility::ClientGradStats s;
  s.client_id = 0;
  s.mu = {1.0};
  s.mu_norm = 1.0;
  s.b_align = 1.0;
  s.batch_size = 1;
  const defense::EncryptionMask full = defense::mask_from_indices(1, {0});
  const std::vector<double> first_order = utility::descent_check(
      std::vector<utility::ClientGradStats>{s}, full, sigma, 1e-5, 0.05, 10000, 21);
  CHECK(std::fabs(first_order[0] - expect) < 0.015);

  nn::ModelSpec spec;
  spec.arch = nn::Arch::linear;
  spec.loss = nn::LossKind::squared_error;
  spec.input_dim = 1;
  spec.output_dim = 1;
  spec.with_bias = false;
  nn::DataSample sample;
  sample.x = {1.0};
  sample.target = nn::Target::of_value(-1.0);
  const std::vector<std::vector<nn::DataSample>> batches = {{sample}};
  const std::vector<double> exact = utility::descent_check_exact(
      spec, nn::zero_params(spec), batches, full, sigma, 1e-5, 10000, 22);
  CHECK(std::fabs(exact[0] - expect) < 0.015);
}

TEST_CASE("exact descent check rejects non-quadratic fixtures") {
  nn::ModelSpec spec;
  spec.arch = nn::Arch::mlp;
  spec.loss = nn::LossKind::squared_error;
  spec.input_dim = 2;
  spec.hidden_dim = 3;
  spec.output_dim = 1;
  nn::DataSample sample;
  sample.x = {1.0, 0.0};
  sample.target = nn::Target::of_value(0.0);
  const defense::EncryptionMask full =
      defense::mask_from_indices(spec.param_count(), [&] {
        std::vector<int> idx(static_cast<std::size_t>(spec.param_count()));
        for (int i = 0; i < spec.param_count(); ++i) idx[static_cast<std::size_t>(i)] = i;
        return idx;
      }());
  const std::vector<std::vector<nn::DataSample>> batches = {{sample}};
  CHECK_THROWS_AS(utility::descent_check_exact(spec, nn::zero_params(spec),
                                               batches, full, 0.1, 0.1, 10, 1),
                  ConfigError);
}

TEST_CASE("aggregation rule names round-trip") {
  CHECK(utility::aggregation_from_name("sum") == utility::AggregationRule::sum);
  CHECK(utility::aggregation_from_name("average") == utility::AggregationRule::average);
  CHECK(utility::aggregation_name(utility::AggregationRule::average) == "average");
  CHECK_THROWS_AS(utility::aggregation_from_name("median"), ConfigError);
}
