#include "doctest.h"

#include <functional>
#include <string>

#include "gradshield/common.hpp"
#include "gradshield/config.hpp"

using namespace gradshield;

namespace {

std::string thrown_message(const std::function<void()>& body) {
  try {
    body();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("a minimal config is echoed back fully defaulted") {
  const harness::ExperimentConfig cfg = harness::parse_config_text(
      "kind = bound-curve\n[model]\narch = linear\n", "<test>");
  CHECK(cfg.has_kind());
  CHECK(cfg.kind() == harness::ExperimentKind::bound_curve);
  CHECK(cfg.integer("train.rounds") == 50);
  CHECK(cfg.integer("train.clients") == 3);
  CHECK(cfg.num("defense.sigma") == 0.01);
  CHECK(cfg.str("data.source") == "synthetic");
  CHECK(cfg.flag("train.adaptive"));
  // The canonical rendering lists every key, defaults included.
  const std::string canon = cfg.canonical();
  CHECK(canon.find("attack.iterations = 2000\n") != std::string::npos);
  CHECK(canon.find("concentration.trials = 20000\n") != std::string::npos);
}

TEST_CASE("unknown keys are rejected with a suggestion") {
  const std::string msg = thrown_message([] {
    harness::parse_config_text("kind = bound-curve\n[defense]\nsigm = 0.1\n", "<test>");
  });
  CHECK(msg.find("sigm") != std::string::npos);
  CHECK(msg.find("did you mean 'sigma'") != std::string::npos);

  CHECK_THROWS_AS(
      harness::parse_config_text("kind = bound-curve\n[defens]\nz = 0.1\n", "<test>"),
      ConfigError);
}

TEST_CASE("out-of-range ratios name the violated interval") {
  const std::string msg = thrown_message([] {
    harness::parse_config_text(
        "kind = bound-curve\n[defense]\nz_grid = 0,1.5\n", "<test>");
  });
  CHECK(msg.find("z out of [0,1]") != std::string::npos);

  CHECK_THROWS_AS(
      harness::parse_config_text("kind = bound-curve\n[defense]\nz = -0.2\n", "<test>"),
      ValidationError);
}

TEST_CASE("malformed lines and duplicates carry line numbers") {
  CHECK_THROWS_AS(harness::parse_config_text("= 5\n", "<test>"), ParseError);
  const std::string msg = thrown_message([] {
    harness::parse_config_text("kind = bound-curve\nkind = descent\n", "<test>");
  });
  CHECK(msg.find("<test>") != std::string::npos);
  CHECK(msg.find("2") != std::string::npos);  // duplicate reported on line 2
}

TEST_CASE("config hashing ignores key order and value spelling") {
  const harness::ExperimentConfig a = harness::parse_config_text(
      "kind = noise-utility\nseed = 7\n[model]\narch = linear\nloss = squared-error\n"
      "[defense]\nz = 0.5\nsigma_grid = 0,0.001\n",
      "<a>");
  const harness::ExperimentConfig b = harness::parse_config_text(
      "seed = 7\nkind = noise-utility\n"
      "[defense]\nsigma_grid = 0,0.001\nz = 0.50\n[model]\nloss = se\narch = linear\n",
      "<b>");
  CHECK(a.hash() == b.hash());
  CHECK(a.canonical() == b.canonical());

  const harness::ExperimentConfig c = harness::parse_config_text(
      "kind = noise-utility\nseed = 8\n[model]\narch = linear\nloss = se\n"
      "[defense]\nz = 0.5\nsigma_grid = 0,0.001\n",
      "<c>");
  CHECK(a.hash() != c.hash());
  CHECK(a.hash_hex().size() == 16);
}

TEST_CASE("comments and blank lines are ignored") {
  const harness::ExperimentConfig cfg = harness::parse_config_text(
      "# leading comment\nkind = descent  # trailing comment\n\n[descent]\nd = 6\n",
      "<test>");
  CHECK(cfg.kind() == harness::ExperimentKind::descent);
  CHECK(cfg.integer("descent.d") == 6);
}

TEST_CASE("experiment kind names round-trip") {
  for (const char* name : {"bound-curve", "attack-sweep", "noise-utility",
                           "adaptive-train", "concentration", "descent"}) {
    CHECK(harness::kind_name(harness::kind_from_name(name)) == name);
  }
  CHECK_THROWS_AS(harness::kind_from_name("heatmap"), ConfigError);

  harness::ExperimentConfig cfg = harness::default_config();
  CHECK_FALSE(cfg.has_kind());
  cfg.set_kind(harness::ExperimentKind::concentration);
  CHECK(cfg.kind() == harness::ExperimentKind::concentration);
}

TEST_CASE("kind-specific validation catches unusable grids") {
  // The fixed-noise utility scan needs the clean baseline in its grid.
  CHECK_THROWS_AS(harness::parse_config_text(
                      "kind = noise-utility\n[defense]\nsigma_grid = 0.001,0.01\n",
                      "<test>"),
                  ValidationError);
  // Tail-mass measurement is meaningless without noise.
  CHECK_THROWS_AS(harness::parse_config_text(
                      "kind = concentration\n[defense]\nsigma = 0\n", "<test>"),
                  ValidationError);
  // Mismatched per-client lists.
  CHECK_THROWS_AS(harness::parse_config_text(
                      "kind = descent\n[descent]\nb_list = 1,2\nmu_norm_list = 1\n",
                      "<test>"),
                  ValidationError);
}

TEST_CASE("prior curvature resolves auto against the data scale") {
  harness::ExperimentConfig cfg = harness::parse_config_text(
      "kind = bound-curve\n[data]\ntau = 2\n", "<test>");
  CHECK(cfg.lambda1(2.0) == doctest::Approx(0.25));
  cfg = harness::parse_config_text(
      "kind = bound-curve\n[bound]\nlambda1 = 3.5\n", "<test>");
  CHECK(cfg.lambda1(2.0) == doctest::Approx(3.5));
}

TEST_CASE("model and dataset builders honor the config") {
  const harness::ExperimentConfig cfg = harness::parse_config_text(
      "kind = bound-curve\n[model]\narch = mlp\nloss = squared-error\n"
      "input_dim = 6\noutput_dim = 3\nhidden_dim = 8\nbias = false\n"
      "init_scale = 0\n[data]\ncount = 17\n",
      "<test>");
  const nn::ModelSpec spec = harness::model_from_config(cfg);
  CHECK(spec.arch == nn::Arch::mlp);
  CHECK(spec.loss == nn::LossKind::squared_error);
  CHECK(spec.input_dim == 6);
  CHECK(spec.output_dim == 3);
  CHECK(spec.hidden_dim == 8);
  CHECK_FALSE(spec.with_bias);

  const nn::ParameterVector init = harness::initial_params(cfg, spec);
  for (double v : init.values) CHECK(v == 0.0);

  const auto data = harness::dataset_from_config(cfg, spec);
  CHECK(data.size() == 17);
  for (const nn::DataSample& s : data) {
    CHECK(s.x.size() == 6);
  }

  const harness::ExperimentConfig presets = harness::parse_config_text(
      "kind = bound-curve\nmodels = toy-linear,toy-conv\n", "<test>");
  const auto specs = harness::models_from_config(presets);
  REQUIRE(specs.size() == 2);
  CHECK(specs[0].name == "toy-linear");
  CHECK(specs[1].name == "toy-conv");
}
