#include "gradshield/fisher.hpp"

#include <Eigen/Dense>
#include <cmath>

namespace gradshield::bounds {

double FisherMatrix::trace() const {
  double t = 0.0;
  for (int i = 0; i < dim; ++i) t += at(i, i);
  return t;
}

double FisherMatrix::min_eigenvalue() const {
  if (dim == 0) return 0.0;
  Eigen::Map<const Eigen::MatrixXd> m(entries.data(), dim, dim);
  // Row-major storage of a (numerically) symmetric matrix; the transpose
  // wrinkle washes out after symmetrization.
  Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym);
  if (solver.info() != Eigen::Success) {
    throw NumericError("eigen decomposition of information matrix failed");
  }
  return solver.eigenvalues().minCoeff();
}

double FisherMatrix::max_abs_asymmetry() const {
  double worst = 0.0;
  for (int i = 0; i < dim; ++i) {
    for (int j = i + 1; j < dim; ++j) {
      worst = std::max(worst, std::abs(at(i, j) - at(j, i)));
    }
  }
  return worst;
}

double FisherMatrix::frobenius() const {
  double acc = 0.0;
  for (double v : entries) acc += v * v;
  return std::sqrt(acc);
}

namespace {

void check_mask_against(const nn::GradientInputJacobian& jac,
                        const defense::EncryptionMask& mask) {
  mask.validate();
  if (mask.total_dim != jac.rows) {
    throw ConfigError("mask dimension " + std::to_string(mask.total_dim) +
                      " does not match jacobian rows " +
                      std::to_string(jac.rows));
  }
}

}  // namespace

FisherMatrix fisher_information(const nn::GradientInputJacobian& jac,
                                const defense::EncryptionMask& mask,
                                double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw ConfigError("information matrix needs sigma > 0");
  }
  check_mask_against(jac, mask);
  const int m = jac.cols;
  FisherMatrix f;
  f.dim = m;
  f.sigma = sigma;
  f.entries.assign(static_cast<std::size_t>(m) * m, 0.0);
  const double inv_var = 1.0 / (sigma * sigma);
  // Sum of outer products of the kept Jacobian rows.
  for (int row : mask.unencrypted) {
    const double* a = jac.entries.data() + static_cast<std::size_t>(row) * m;
    for (int i = 0; i < m; ++i) {
      const double ai = a[i];
      if (ai == 0.0) continue;
      double* out = f.entries.data() + static_cast<std::size_t>(i) * m;
      for (int j = 0; j < m; ++j) out[j] += ai * a[j];
    }
  }
  for (double& v : f.entries) v *= inv_var;
  return f;
}

FisherMatrix empirical_fisher(const nn::ModelSpec& spec,
                              const nn::ParameterVector& params,
                              const nn::DataSample& sample,
                              const defense::EncryptionMask& mask,
                              double sigma, long long trials,
                              std::uint64_t seed, double fd_step) {
  if (trials < 1) throw ConfigError("empirical information needs trials >= 1");
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw ConfigError("information matrix needs sigma > 0");
  }
  const nn::GradientInputJacobian jac =
      nn::input_jacobian_of_gradient(spec, params, sample, fd_step);
  check_mask_against(jac, mask);

  const int m = jac.cols;
  const int kept = mask.kept_dim();
  // Contiguous copy of the kept rows (the matrix R J).
  std::vector<double> a(static_cast<std::size_t>(kept) * m);
  for (int k = 0; k < kept; ++k) {
    const double* row =
        jac.entries.data() +
        static_cast<std::size_t>(mask.unencrypted[static_cast<std::size_t>(k)]) * m;
    std::copy(row, row + m, a.data() + static_cast<std::size_t>(k) * m);
  }

  FisherMatrix f;
  f.dim = m;
  f.sigma = sigma;
  f.entries.assign(static_cast<std::size_t>(m) * m, 0.0);

  GaussianSampler noise(derive_seed(seed, 0xf15e));
  std::vector<double> delta(static_cast<std::size_t>(kept));
  std::vector<double> score(static_cast<std::size_t>(m));
  const double inv_var = 1.0 / (sigma * sigma);
  for (long long t = 0; t < trials; ++t) {
    noise.fill(delta, sigma);
    std::fill(score.begin(), score.end(), 0.0);
    for (int k = 0; k < kept; ++k) {
      const double d = delta[static_cast<std::size_t>(k)];
      const double* row = a.data() + static_cast<std::size_t>(k) * m;
      for (int i = 0; i < m; ++i) score[static_cast<std::size_t>(i)] += row[i] * d;
    }
    for (int i = 0; i < m; ++i) {
      const double si = score[static_cast<std::size_t>(i)] * inv_var;
      double* out = f.entries.data() + static_cast<std::size_t>(i) * m;
      for (int j = 0; j < m; ++j) {
        out[j] += si * score[static_cast<std::size_t>(j)] * inv_var;
      }
    }
  }
  const double scale = 1.0 / static_cast<double>(trials);
  for (double& v : f.entries) v *= scale;
  return f;
}

double gradient_exposure(const nn::GradientInputJacobian& jac,
                         const defense::EncryptionMask& mask) {
  check_mask_against(jac, mask);
  double worst = 0.0;
  const int m = jac.cols;
  for (int row : mask.unencrypted) {
    const double* a = jac.entries.data() + static_cast<std::size_t>(row) * m;
    for (int i = 0; i < m; ++i) worst = std::max(worst, std::abs(a[i]));
  }
  return worst * worst;
}

double relative_frobenius_gap(const FisherMatrix& a, const FisherMatrix& b) {
  if (a.dim != b.dim) throw ConfigError("information matrices differ in size");
  double diff = 0.0;
  for (std::size_t i = 0; i < a.entries.size(); ++i) {
    const double d = a.entries[i] - b.entries[i];
    diff += d * d;
  }
  const double ref = b.frobenius();
  if (ref == 0.0) {
    return diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  }
  return std::sqrt(diff) / ref;
}

}  // namespace gradshield::bounds
