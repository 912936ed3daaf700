#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <vector>

#include "gradshield/common.hpp"
#include "gradshield/fedsim.hpp"

using namespace gradshield;
namespace fs = std::filesystem;

namespace {

nn::ModelSpec tiny_model() {
  nn::ModelSpec spec;
  spec.arch = nn::Arch::linear;
  spec.loss = nn::LossKind::squared_error;
  spec.input_dim = 2;
  spec.output_dim = 1;
  spec.with_bias = false;
  spec.name = "tiny";
  return spec;
}

std::vector<nn::DataSample> tiny_data(int count, std::uint64_t seed) {
  nn::SyntheticPrior prior;
  prior.tau = 1.0;
  nn::LabelRule rule;
  rule.kind = nn::LabelRuleKind::teacher_regression;
  rule.teacher_seed = 31;
  return nn::generate_synthetic_dataset(2, count, prior, rule, 1, seed);
}

fedsim::TrainConfig base_config(const nn::ModelSpec& spec) {
  fedsim::TrainConfig tc;
  tc.model = spec;
  tc.rounds = 5;
  tc.n_clients = 3;
  tc.eta = 0.05;
  tc.adaptive = false;
  tc.sigma_fixed = 0.0;
  tc.descent_trials = 0;
  tc.seed = 2024;
  return tc;
}

utility::ClientGradStats stats_of(int id, std::vector<double> mu, double b) {
  utility::ClientGradStats s;
  s.client_id = id;
  s.mu = std::move(mu);
  double norm = 0.0;
  for (double v : s.mu) norm += v * v;
  s.mu_norm = std::sqrt(norm);
  s.b_align = b;
  s.batch_size = 1;
  return s;
}

}  // namespace

TEST_CASE("a noiseless sum round applies exactly the aggregate gradient") {
  const nn::ModelSpec spec = tiny_model();
  const std::vector<nn::DataSample> data = tiny_data(6, 41);
  fedsim::TrainConfig tc = base_config(spec);

  const auto shards = fedsim::partition_iid(data, tc.n_clients);
  std::vector<fedsim::ClientState> clients;
  for (int c = 0; c < tc.n_clients; ++c) {
    fedsim::ClientState st;
    st.id = c;
    st.data = shards[static_cast<std::size_t>(c)];
    st.rng_stream = derive_seed(tc.seed, 0xc11e, static_cast<std::uint64_t>(c));
    clients.push_back(std::move(st));
  }
  fedsim::ServerState server;
  server.params = nn::random_params(spec, 0.5, 7);
  server.rule = tc.rule;
  server.eta = tc.eta;
  const nn::ParameterVector before = server.params;

  // Expected aggregate: sum over clients of their batch-mean gradient.
  std::vector<double> aggregate(static_cast<std::size_t>(spec.param_count()), 0.0);
  for (const auto& shard : shards) {
    std::vector<double> mean(aggregate.size(), 0.0);
    for (const nn::DataSample& s : shard) {
      const nn::GradientVector g = nn::param_gradient(spec, before, s);
      for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += g.values[i];
    }
    for (std::size_t i = 0; i < mean.size(); ++i) {
      aggregate[i] += mean[i] / static_cast<double>(shard.size());
    }
  }

  defense::EncryptionMask mask = defense::mask_from_indices(spec.param_count(), {0});
  const fedsim::RoundRecord rec = fedsim::run_round(server, clients, tc, 1, mask);
  CHECK_FALSE(rec.aborted);
  CHECK(rec.sigma_applied == 0.0);
  CHECK(rec.mask_kept == spec.param_count());  // z = 0 keeps everything
  for (std::size_t i = 0; i < aggregate.size(); ++i) {
    CHECK(server.params.values[i] ==
          doctest::Approx(before.values[i] - tc.eta * aggregate[i]).epsilon(1e-12));
  }
}

TEST_CASE("aggregate noise variance is sigma^2 n under sum, sigma^2/n under average") {
  // Zero inputs kill every gradient, so the parameter increment per round is
  // exactly -eta * scale * (summed noise); its variance is measurable.
  nn::ModelSpec spec;
  spec.arch = nn::Arch::linear;
  spec.loss = nn::LossKind::squared_error;
  spec.input_dim = 1;
  spec.output_dim = 1;
  spec.with_bias = false;

  nn::DataSample zero;
  zero.x = {0.0};
  zero.target = nn::Target::of_value(0.0);

  for (const utility::AggregationRule rule :
       {utility::AggregationRule::sum, utility::AggregationRule::average}) {
    fedsim::TrainConfig tc = base_config(spec);
    tc.rule = rule;
    tc.eta = 0.1;
    tc.sigma_fixed = 1.0;
    tc.seed = 99;

    std::vector<fedsim::ClientState> clients;
    for (int c = 0; c < 3; ++c) {
      fedsim::ClientState st;
      st.id = c;
      st.data = {zero};
      st.rng_stream = derive_seed(tc.seed, 0xc11e, static_cast<std::uint64_t>(c));
      clients.push_back(std::move(st));
    }
    fedsim::ServerState server;
    server.params = nn::zero_params(spec);
    server.rule = rule;
    server.eta = tc.eta;

    defense::EncryptionMask mask = defense::mask_from_indices(1, {0});
    const int rounds = 10000;
    std::vector<double> increments;
    increments.reserve(static_cast<std::size_t>(rounds));
    double prev = server.params.values[0];
    for (int r = 1; r <= rounds; ++r) {
      const fedsim::RoundRecord rec = fedsim::run_round(server, clients, tc, r, mask);
      REQUIRE_FALSE(rec.aborted);
      increments.push_back((prev - server.params.values[0]) / tc.eta);
      prev = server.params.values[0];
    }
    double mean = 0.0;
    for (double v : increments) mean += v;
    mean /= static_cast<double>(rounds);
    double var = 0.0;
    for (double v : increments) var += (v - mean) * (v - mean);
    var /= static_cast<double>(rounds - 1);

    const double want = rule == utility::AggregationRule::sum ? 3.0 : 1.0 / 3.0;
    CHECK(var > 0.95 * want);
    CHECK(var < 1.05 * want);
  }
}

TEST_CASE("adaptive schedule follows the most fragile client") {
  SUBCASE("identical clients yield exactly kappa times their critical noise") {
    const auto s = stats_of(0, {1.0, 0.0, 0.0}, 1.0);
    const std::vector<utility::ClientGradStats> stats = {s, s, s};
    const fedsim::NoiseDecision d =
        fedsim::adaptive_noise_schedule(stats, 3, 3, 0.05, 0.9, 1e9);
    const double crit = utility::critical_noise(1.0, 1.0, 3, 3, 0.05).value;
    CHECK(d.sigma_crit == doctest::Approx(crit).epsilon(1e-12));
    CHECK(d.sigma_t == doctest::Approx(0.9 * crit).epsilon(1e-12));
    CHECK_FALSE(d.floored);
  }

  SUBCASE("any nonpositive alignment floors the noise at 1e-6") {
    const std::vector<utility::ClientGradStats> stats = {
        stats_of(0, {1.0}, 1.0), stats_of(1, {1.0}, -0.2)};
    const fedsim::NoiseDecision d =
        fedsim::adaptive_noise_schedule(stats, 1, 2, 0.05, 0.9, 1e-2);
    CHECK(d.floored);
    CHECK(d.sigma_t == fedsim::kSigmaFloor);
    CHECK(d.flags[1] == utility::CriticalNoise::Flag::nonpositive_alignment);
  }

  SUBCASE("all-infinite critical noise falls back to the cap") {
    const std::vector<utility::ClientGradStats> stats = {
        stats_of(0, {0.0}, 1.0), stats_of(1, {0.0}, 2.0)};
    const fedsim::NoiseDecision d =
        fedsim::adaptive_noise_schedule(stats, 1, 2, 0.05, 0.9, 1e-2);
    CHECK(d.sigma_t == 1e-2);
  }

  SUBCASE("the cap binds when critical noise is large") {
    const std::vector<utility::ClientGradStats> stats = {stats_of(0, {1e-9}, 10.0)};
    const fedsim::NoiseDecision d =
        fedsim::adaptive_noise_schedule(stats, 1, 1, 0.05, 0.9, 1e-2);
    CHECK(d.sigma_t == 1e-2);
  }
}

TEST_CASE("the schedule invariant rejects over-noised records") {
  fedsim::RoundRecord rec;
  rec.round = 1;
  rec.sigma_crit = 1.0;
  rec.sigma_applied = 0.95;  // above kappa * sigma_crit = 0.9
  CHECK_THROWS_AS(rec.check_schedule_invariant(true, 0.9), ValidationError);
  rec.sigma_applied = 0.9;
  CHECK_NOTHROW(rec.check_schedule_invariant(true, 0.9));
  rec.sigma_applied = 5.0;  // fixed-noise mode is exempt
  CHECK_NOTHROW(rec.check_schedule_invariant(false, 0.9));
}

TEST_CASE("partitions cover the dataset with balanced shards") {
  const std::vector<nn::DataSample> data = tiny_data(11, 90);

  SUBCASE("round-robin shards differ in size by at most one") {
    const auto shards = fedsim::partition_iid(data, 3);
    REQUIRE(shards.size() == 3);
    std::size_t total = 0;
    for (const auto& s : shards) {
      total += s.size();
      CHECK(s.size() >= 3);
      CHECK(s.size() <= 4);
    }
    CHECK(total == data.size());
  }

  SUBCASE("full skew deals label-contiguous blocks") {
    nn::SyntheticPrior prior;
    prior.tau = 1.0;
    nn::LabelRule rule;
    rule.kind = nn::LabelRuleKind::teacher_class;
    rule.teacher_seed = 31;
    const auto classy = nn::generate_synthetic_dataset(4, 30, prior, rule, 3, 91);
    const auto shards = fedsim::partition_label_skew(classy, 3, 1.0, 7);
    int prev_max = -1;
    for (const auto& shard : shards) {
      int lo = 1000, hi = -1;
      for (const nn::DataSample& s : shard) {
        lo = std::min(lo, s.target.cls);
        hi = std::max(hi, s.target.cls);
      }
      CHECK(lo >= prev_max - 0);  // blocks arrive in sorted label order
      prev_max = std::max(prev_max, hi);
    }
    std::size_t total = 0;
    for (const auto& s : shards) total += s.size();
    CHECK(total == classy.size());
  }

  SUBCASE("zero skew matches the seeded shuffle deterministically") {
    const auto a = fedsim::partition_label_skew(data, 3, 0.0, 7);
    const auto b = fedsim::partition_label_skew(data, 3, 0.0, 7);
    REQUIRE(a.size() == b.size());
    for (std::size_t c = 0; c < a.size(); ++c) {
      REQUIRE(a[c].size() == b[c].size());
      for (std::size_t i = 0; i < a[c].size(); ++i) {
        CHECK(a[c][i].x == b[c][i].x);
      }
    }
  }

  SUBCASE("more clients than samples is rejected") {
    const std::vector<nn::DataSample> two = tiny_data(2, 92);
    CHECK_THROWS_AS(fedsim::partition_iid(two, 3), ValidationError);
  }
}

TEST_CASE("training descends and persists a checksummed log") {
  const nn::ModelSpec spec = tiny_model();
  const std::vector<nn::DataSample> data = tiny_data(30, 93);
  fedsim::TrainConfig tc = base_config(spec);
  tc.rounds = 10;

  const fedsim::RunLog log = fedsim::train(tc, data);
  CHECK(log.completed);
  CHECK(log.error.empty());
  REQUIRE(log.rounds.size() == 10);
  CHECK(log.rounds.back().loss < log.initial_loss);
  CHECK(log.wall_seconds >= 0.0);

  const std::string rounds = fedsim::rounds_csv(log);
  CHECK(rounds.rfind("round,loss,sigma_applied,sigma_crit,z_realized,aborted\n", 0) == 0);
  const std::string clients = fedsim::clients_csv(log);
  CHECK(clients.rfind(
            "round,client,B,mu_norm,d,n,delta,sigma_crit,sigma_applied,descent_fraction\n",
            0) == 0);

  const fs::path dir = fs::temp_directory_path() / "gradshield-tests" / "run";
  fs::remove_all(dir);
  fedsim::persist_run(log, dir, "fixture config\n");
  CHECK(fs::exists(dir / "config.txt"));
  CHECK(fs::exists(dir / "rounds.csv"));
  CHECK(fs::exists(dir / "clients.csv"));
  CHECK(fs::exists(dir / "manifest.json"));

  const std::string manifest = read_file(dir / "manifest.json");
  const std::string rounds_bytes = read_file(dir / "rounds.csv");
  CHECK(manifest.find("\"rounds.csv\"") != std::string::npos);
  CHECK(manifest.find(hex64(fnv1a64(rounds_bytes))) != std::string::npos);
}

TEST_CASE("deterministic reruns and seed sensitivity") {
  const nn::ModelSpec spec = tiny_model();
  const std::vector<nn::DataSample> data = tiny_data(30, 94);
  fedsim::TrainConfig tc = base_config(spec);
  tc.sigma_fixed = 1e-3;

  const fedsim::RunLog a = fedsim::train(tc, data);
  const fedsim::RunLog b = fedsim::train(tc, data);
  CHECK(a.final_params.values == b.final_params.values);
  CHECK(fedsim::rounds_csv(a) == fedsim::rounds_csv(b));

  tc.seed = 2025;
  const fedsim::RunLog c = fedsim::train(tc, data);
  CHECK(a.final_params.values != c.final_params.values);
}

TEST_CASE("divergent training aborts with a diagnostic, keeping partial logs") {
  const nn::ModelSpec spec = tiny_model();
  const std::vector<nn::DataSample> data = tiny_data(12, 95);
  fedsim::TrainConfig tc = base_config(spec);
  tc.rounds = 10;
  tc.eta = 1e150;  // guaranteed blow-up

  const fedsim::RunLog log = fedsim::train(tc, data);
  CHECK_FALSE(log.completed);
  CHECK_FALSE(log.error.empty());
  CHECK(log.rounds.size() < 10);

  const fs::path dir = fs::temp_directory_path() / "gradshield-tests" / "aborted-run";
  fs::remove_all(dir);
  fedsim::persist_run(log, dir, "fixture config\n");
  CHECK(read_file(dir / "manifest.json").find("\"completed\": false") != std::string::npos);
}

TEST_CASE("train config validation names the offending field") {
  const nn::ModelSpec spec = tiny_model();
  fedsim::TrainConfig tc = base_config(spec);
  tc.rounds = 0;
  CHECK_THROWS_AS(tc.validate(), ValidationError);
  tc = base_config(spec);
  tc.z = 1.5;
  CHECK_THROWS_AS(tc.validate(), ValidationError);
  tc = base_config(spec);
  tc.kappa = 0.0;
  CHECK_THROWS_AS(tc.validate(), ValidationError);
  tc = base_config(spec);
  tc.strategy = defense::MaskStrategy::fixed_indices;
  CHECK_THROWS_AS(tc.validate(), ValidationError);  // needs an index list
}
