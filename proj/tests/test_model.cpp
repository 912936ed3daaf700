#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <random>
#include <vector>

#include "gradshield/common.hpp"
#include "gradshield/dataset.hpp"
#include "gradshield/jacobian.hpp"
#include "gradshield/model.hpp"

using namespace gradshield;
namespace fs = std::filesystem;

namespace {

nn::ModelSpec scalar_linear() {
  nn::ModelSpec spec;
  spec.arch = nn::Arch::linear;
  spec.loss = nn::LossKind::squared_error;
  spec.input_dim = 1;
  spec.output_dim = 1;
  spec.with_bias = false;
  spec.name = "scalar";
  return spec;
}

fs::path scratch_dir(const char* leaf) {
  const fs::path dir = fs::temp_directory_path() / "gradshield-tests" / leaf;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Naive scalar-by-scalar forward pass for the two-layer tanh network,
// written independently of the library's vectorized path.
double naive_mlp_loss(const nn::ModelSpec& spec, const std::vector<double>& p,
                      const std::vector<double>& x,
                      const std::vector<double>& target) {
  const int m = spec.input_dim, h = spec.hidden_dim, c = spec.output_dim;
  int at = 0;
  std::vector<double> hidden(h);
  for (int j = 0; j < h; ++j) {
    double acc = 0.0;
    for (int i = 0; i < m; ++i) acc += p[static_cast<std::size_t>(j * m + i)] * x[static_cast<std::size_t>(i)];
    hidden[static_cast<std::size_t>(j)] = acc;
  }
  at = h * m;
  if (spec.with_bias) {
    for (int j = 0; j < h; ++j) hidden[static_cast<std::size_t>(j)] += p[static_cast<std::size_t>(at + j)];
    at += h;
  }
  for (int j = 0; j < h; ++j) hidden[static_cast<std::size_t>(j)] = std::tanh(hidden[static_cast<std::size_t>(j)]);
  std::vector<double> logits(c);
  for (int j = 0; j < c; ++j) {
    double acc = 0.0;
    for (int i = 0; i < h; ++i) acc += p[static_cast<std::size_t>(at + j * h + i)] * hidden[static_cast<std::size_t>(i)];
    logits[static_cast<std::size_t>(j)] = acc;
  }
  at += c * h;
  if (spec.with_bias) {
    for (int j = 0; j < c; ++j) logits[static_cast<std::size_t>(j)] += p[static_cast<std::size_t>(at + j)];
  }
  if (spec.loss == nn::LossKind::squared_error) {
    double loss = 0.0;
    for (int j = 0; j < c; ++j) {
      const double r = logits[static_cast<std::size_t>(j)] - target[static_cast<std::size_t>(j)];
      loss += 0.5 * r * r;
    }
    return loss;
  }
  double mx = logits[0];
  for (int j = 1; j < c; ++j) mx = std::max(mx, logits[static_cast<std::size_t>(j)]);
  double sum = 0.0;
  for (int j = 0; j < c; ++j) sum += std::exp(logits[static_cast<std::size_t>(j)] - mx);
  double loss = mx + std::log(sum);
  for (int j = 0; j < c; ++j) loss -= target[static_cast<std::size_t>(j)] * logits[static_cast<std::size_t>(j)];
  return loss;
}

}  // namespace

TEST_CASE("forward loss matches hand arithmetic on the scalar model") {
  const nn::ModelSpec spec = scalar_linear();
  nn::ParameterVector theta;
  theta.values = {1.0};
  nn::DataSample s;
  s.x = {2.0};
  s.target = nn::Target::of_value(0.0);
  CHECK(nn::forward_loss(spec, theta, s) == doctest::Approx(2.0).epsilon(1e-12));

  const nn::GradientVector g = nn::param_gradient(spec, theta, s);
  REQUIRE(g.values.size() == 1);
  CHECK(g.values[0] == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("zero parameters, zero input, zero target give zero loss") {
  nn::ModelSpec spec;
  spec.arch = nn::Arch::mlp;
  spec.loss = nn::LossKind::squared_error;
  spec.input_dim = 3;
  spec.hidden_dim = 5;
  spec.output_dim = 1;
  nn::DataSample s;
  s.x.assign(3, 0.0);
  s.target = nn::Target::of_value(0.0);
  CHECK(nn::forward_loss(spec, nn::zero_params(spec), s) == 0.0);
}

TEST_CASE("library forward pass matches an independent naive oracle") {
  for (nn::LossKind loss : {nn::LossKind::squared_error, nn::LossKind::cross_entropy}) {
    nn::ModelSpec spec = nn::toy_mlp();
    spec.loss = loss;
    const nn::ParameterVector params = nn::random_params(spec, 0.5, 7);
    GaussianSampler xs(derive_seed(7, 99));
    for (int rep = 0; rep < 5; ++rep) {
      const std::vector<double> x = xs.vector(static_cast<std::size_t>(spec.input_dim), 1.0);
      std::vector<double> target(static_cast<std::size_t>(spec.output_dim), 0.0);
      target[static_cast<std::size_t>(rep % spec.output_dim)] = 1.0;
      const double got = nn::forward_loss_dense(spec, params, x, target);
      const double want = naive_mlp_loss(spec, params.values, x, target);
      CHECK(got == doctest::Approx(want).epsilon(1e-12));
    }
  }
}

TEST_CASE("analytic gradients match central finite differences") {
  Rng rng(20240401u);
  std::uniform_int_distribution<int> pick_arch(0, 2);
  std::uniform_int_distribution<int> pick_dim(2, 6);
  std::uniform_int_distribution<int> coin(0, 1);
  const double h = 1e-5;

  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    nn::ModelSpec spec;
    const int a = pick_arch(rng);
    spec.arch = a == 0 ? nn::Arch::linear : a == 1 ? nn::Arch::mlp : nn::Arch::conv;
    spec.loss = coin(rng) == 0 ? nn::LossKind::squared_error : nn::LossKind::cross_entropy;
    spec.output_dim = pick_dim(rng);
    spec.with_bias = coin(rng) == 1;
    if (spec.arch == nn::Arch::conv) {
      spec.image_side = 4;
      spec.conv_kernel = 2;
      spec.conv_channels = 2;
      spec.input_dim = 16;
    } else {
      spec.input_dim = pick_dim(rng);
      spec.hidden_dim = pick_dim(rng) + 2;
    }

    nn::ParameterVector params = nn::random_params(
        spec, 0.5, derive_seed(11, static_cast<std::uint64_t>(trial)));
    GaussianSampler xs(derive_seed(12, static_cast<std::uint64_t>(trial)));
    nn::DataSample s;
    s.x = xs.vector(static_cast<std::size_t>(spec.input_dim), 1.0);
    if (spec.loss == nn::LossKind::cross_entropy || coin(rng) == 0) {
      s.target = nn::Target::of_class(
          std::uniform_int_distribution<int>(0, spec.output_dim - 1)(rng));
    } else if (spec.output_dim == 1) {
      s.target = nn::Target::of_value(xs.next());
    } else {
      s.target = nn::Target::of_class(0);
    }

    const nn::GradientVector g = nn::param_gradient(spec, params, s);
    for (std::size_t k = 0; k < g.values.size(); ++k) {
      const double saved = params.values[k];
      params.values[k] = saved + h;
      const double up = nn::forward_loss(spec, params, s);
      params.values[k] = saved - h;
      const double dn = nn::forward_loss(spec, params, s);
      params.values[k] = saved;
      const double fd = (up - dn) / (2.0 * h);
      const double rel = std::fabs(g.values[k] - fd) / std::max(1.0, std::fabs(g.values[k]));
      worst = std::max(worst, rel);
    }
  }
  CHECK(worst <= 1e-5);
}

TEST_CASE("gradient-input jacobian matches the symbolic derivative") {
  const nn::ModelSpec spec = scalar_linear();
  nn::ParameterVector theta;
  theta.values = {1.0};
  nn::DataSample s;
  s.x = {3.0};
  s.target = nn::Target::of_value(0.0);
  // g(theta, x) = (theta x - t) x = theta x^2; dg/dx = 2 theta x = 6 at x = 3.
  const nn::GradientInputJacobian jac = nn::input_jacobian_of_gradient(spec, theta, s);
  REQUIRE(jac.rows == 1);
  REQUIRE(jac.cols == 1);
  CHECK(jac.at(0, 0) == doctest::Approx(6.0).epsilon(1e-6));

  // With theta = 0 and t = 0 the per-sample gradient is identically zero,
  // so its input derivative vanishes exactly.
  theta.values = {0.0};
  const nn::GradientInputJacobian zero_jac = nn::input_jacobian_of_gradient(spec, theta, s);
  CHECK(zero_jac.at(0, 0) == 0.0);
}

TEST_CASE("jacobian columns equal an externally recomputed central difference") {
  const nn::ModelSpec spec = nn::toy_linear();
  const nn::ParameterVector params = nn::random_params(spec, 0.5, 21);
  GaussianSampler xs(22);
  std::vector<double> x = xs.vector(static_cast<std::size_t>(spec.input_dim), 1.0);
  std::vector<double> target(static_cast<std::size_t>(spec.output_dim), 0.0);
  target[3] = 1.0;

  const double step = nn::kDefaultJacobianStep;
  const nn::GradientInputJacobian jac =
      nn::input_jacobian_dense(spec, params, x, target, step);
  for (int i = 0; i < spec.input_dim; ++i) {
    const double xi = x[static_cast<std::size_t>(i)];
    const double hi = step * std::max(1.0, std::abs(xi));
    const double hi_up = (xi + hi) - xi;
    const double hi_dn = xi - (xi - hi);
    std::vector<double> probe = x;
    probe[static_cast<std::size_t>(i)] = xi + hi_up;
    const std::vector<double> gp = nn::param_gradient_dense(spec, params, probe, target);
    probe[static_cast<std::size_t>(i)] = xi - hi_dn;
    const std::vector<double> gm = nn::param_gradient_dense(spec, params, probe, target);
    for (int j = 0; j < jac.rows; ++j) {
      const double want = (gp[static_cast<std::size_t>(j)] -
                           gm[static_cast<std::size_t>(j)]) / (hi_up + hi_dn);
      CHECK(jac.at(j, i) == want);  // same arithmetic, bit-exact
    }
  }
}

TEST_CASE("parameter counts match gradient lengths on the model zoo") {
  GaussianSampler xs(31);
  for (const char* name : {"toy-linear", "toy-mlp", "toy-conv"}) {
    const nn::ModelSpec spec = nn::model_by_name(name);
    const nn::ParameterVector params = nn::random_params(spec, 0.3, 32);
    nn::DataSample s;
    s.x = xs.vector(static_cast<std::size_t>(spec.input_dim), 1.0);
    s.target = nn::Target::of_class(1);
    const nn::GradientVector g = nn::param_gradient(spec, params, s);
    CHECK(static_cast<int>(g.values.size()) == spec.param_count());
    CHECK(static_cast<int>(params.values.size()) == spec.param_count());
  }
  // The zoo spans roughly 1e2, 1e3, 1e4 parameters.
  CHECK(nn::toy_linear().param_count() == 110);
  CHECK(nn::toy_mlp().param_count() == 874);
  CHECK(nn::toy_conv().param_count() == 9766);
}

TEST_CASE("synthetic data is deterministic and matches its prior variance") {
  nn::SyntheticPrior prior;
  prior.tau = 1.0;
  nn::LabelRule rule;
  rule.kind = nn::LabelRuleKind::teacher_class;

  const auto a = nn::generate_synthetic_dataset(4, 100, prior, rule, 3, 99);
  const auto b = nn::generate_synthetic_dataset(4, 100, prior, rule, 3, 99);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].x == b[i].x);
    CHECK(a[i].target.cls == b[i].target.cls);
  }

  const auto big = nn::generate_synthetic_dataset(4, 100000, prior, rule, 3, 7);
  for (int coord = 0; coord < 4; ++coord) {
    double mean = 0.0;
    for (const nn::DataSample& s : big) mean += s.x[static_cast<std::size_t>(coord)];
    mean /= static_cast<double>(big.size());
    double var = 0.0;
    for (const nn::DataSample& s : big) {
      const double dlt = s.x[static_cast<std::size_t>(coord)] - mean;
      var += dlt * dlt;
    }
    var /= static_cast<double>(big.size() - 1);
    CHECK(var >= 0.99);
    CHECK(var <= 1.01);
  }

  prior.tau = 0.0;
  CHECK_THROWS_AS(nn::generate_synthetic_dataset(4, 10, prior, rule, 3, 7),
                  ConfigError);
}

TEST_CASE("relabeling raw rows reproduces the generator's label stream") {
  nn::SyntheticPrior prior;
  prior.tau = 2.0;
  for (nn::LabelRuleKind kind : {nn::LabelRuleKind::uniform_class,
                                 nn::LabelRuleKind::teacher_class}) {
    nn::LabelRule rule;
    rule.kind = kind;
    rule.flip_prob = kind == nn::LabelRuleKind::teacher_class ? 0.25 : 0.0;
    const auto generated = nn::generate_synthetic_dataset(5, 40, prior, rule, 4, 1717);
    std::vector<std::vector<double>> rows;
    for (const nn::DataSample& s : generated) rows.push_back(s.x);
    const auto relabeled = nn::label_rows(rows, rule, 4, 1717);
    REQUIRE(relabeled.size() == generated.size());
    for (std::size_t i = 0; i < generated.size(); ++i) {
      CHECK(relabeled[i].target.cls == generated[i].target.cls);
      CHECK(relabeled[i].x == generated[i].x);
    }
  }
}

TEST_CASE("image ingestion scales pixels and validates labels") {
  const fs::path dir = scratch_dir("images");

  SUBCASE("2x2 grayscale image maps {0,255} to {0,1}") {
    std::string pgm = "P5\n2 2\n255\n";
    pgm.push_back(static_cast<char>(0));
    pgm.push_back(static_cast<char>(255));
    pgm.push_back(static_cast<char>(0));
    pgm.push_back(static_cast<char>(255));
    write_file(dir / "a.pgm", pgm);
    write_file(dir / "labels.txt", "1\n");
    const auto data = nn::load_image_dataset(dir);
    REQUIRE(data.size() == 1);
    CHECK(data[0].x == std::vector<double>{0.0, 1.0, 0.0, 1.0});
    CHECK(data[0].target.cls == 1);
  }

  SUBCASE("empty directory yields an empty dataset without error") {
    CHECK(nn::load_image_dataset(dir).empty());
  }

  SUBCASE("label count mismatch is an ingestion error") {
    std::string pgm = "P5\n1 1\n255\n";
    pgm.push_back(static_cast<char>(128));
    write_file(dir / "a.pgm", pgm);
    write_file(dir / "labels.txt", "1\n2\n");
    CHECK_THROWS_AS(nn::load_image_dataset(dir), IngestError);
  }
}

TEST_CASE("dataset binary format round-trips") {
  nn::SyntheticPrior prior;
  prior.tau = 1.5;
  nn::LabelRule rule;
  rule.kind = nn::LabelRuleKind::teacher_class;
  const auto data = nn::generate_synthetic_dataset(6, 9, prior, rule, 3, 55);

  const fs::path path = scratch_dir("dataset") / "rows.bin";
  nn::save_dataset(path, data);
  CHECK(read_file(path).substr(0, 5) == "GSDS1");

  const nn::RawDataset raw = nn::load_dataset(path);
  CHECK(raw.input_dim == 6);
  REQUIRE(raw.rows.size() == data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    CHECK(raw.rows[i] == data[i].x);  // bit-exact float64 round-trip
  }
}
