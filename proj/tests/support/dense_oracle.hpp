#pragma once

// Test-only reference implementations. These form the d x d covariance
// explicitly and share no code path with the capacitance-form library.

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/LU>
#include <Eigen/QR>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "mfa/mixture.hpp"

namespace mfa::testing {

inline Eigen::MatrixXd dense_covariance(const Eigen::MatrixXd& w, const Eigen::VectorXd& psi) {
  Eigen::MatrixXd c = w * w.transpose();
  for (Eigen::Index i = 0; i < psi.size(); ++i) c(i, i) += psi(i);
  return c;
}

// Full multivariate-normal log-pdf through an explicit covariance.
inline double dense_log_density(const Eigen::VectorXd& x, const Eigen::VectorXd& mu, const Eigen::MatrixXd& w,
                                const Eigen::VectorXd& psi) {
  const Eigen::MatrixXd c = dense_covariance(w, psi);
  const Eigen::VectorXd r = x - mu;
  // Determinant and inverse through a full-pivot LU, independent of any
  // Cholesky.
  Eigen::FullPivLU<Eigen::MatrixXd> lu(c);
  const double log_det = std::log(lu.determinant());
  const double quad = r.dot(lu.solve(r));
  const double d = static_cast<double>(x.size());
  return -0.5 * (d * std::log(2.0 * std::numbers::pi) + log_det + quad);
}

// Posterior mean as W^T C^-1 (x - mu), the push-through form of the
// capacitance expression.
inline Eigen::VectorXd dense_posterior_mean(const Eigen::VectorXd& x, const Eigen::VectorXd& mu,
                                            const Eigen::MatrixXd& w, const Eigen::VectorXd& psi) {
  const Eigen::MatrixXd c = dense_covariance(w, psi);
  return w.transpose() * Eigen::FullPivLU<Eigen::MatrixXd>(c).solve(x - mu);
}

// log sum_k pi_k N(x | k), summing densities directly (no log-sum-exp).
inline double dense_mixture_log_likelihood(const MfaModel& m, const Eigen::VectorXd& x) {
  double p = 0.0;
  for (std::size_t k = 0; k < m.num_components(); ++k) {
    p += m.weights()(static_cast<Eigen::Index>(k)) *
         std::exp(dense_log_density(x, m.mean(k), m.loadings(k), m.psi()));
  }
  return std::log(p);
}

inline Eigen::VectorXd dense_responsibilities(const MfaModel& m, const Eigen::VectorXd& x) {
  Eigen::VectorXd p(static_cast<Eigen::Index>(m.num_components()));
  for (std::size_t k = 0; k < m.num_components(); ++k) {
    p(static_cast<Eigen::Index>(k)) = m.weights()(static_cast<Eigen::Index>(k)) *
                                      std::exp(dense_log_density(x, m.mean(k), m.loadings(k), m.psi()));
  }
  return p / p.sum();
}

inline double dense_nll(const MfaModel& m, const std::vector<Eigen::VectorXd>& xs) {
  double s = 0.0;
  for (const auto& x : xs) s += dense_mixture_log_likelihood(m, x);
  return -s / static_cast<double>(xs.size());
}

inline double relative_error(double a, double b) {
  const double scale = std::max({std::abs(a), std::abs(b), 1e-300});
  return std::abs(a - b) / scale;
}

inline Eigen::MatrixXd random_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = n(rng);
  return m;
}

inline Eigen::VectorXd random_vector(std::mt19937_64& rng, Eigen::Index n, double scale = 1.0) {
  return random_matrix(rng, n, 1, scale);
}

// Haar-ish random orthogonal matrix via QR.
inline Eigen::MatrixXd random_orthogonal(std::mt19937_64& rng, Eigen::Index n) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(random_matrix(rng, n, n));
  return qr.householderQ() * Eigen::MatrixXd::Identity(n, n);
}

// A random well-conditioned model with noise variances in [0.3, 2].
inline MfaModel random_model(std::mt19937_64& rng, std::size_t k, std::size_t d, std::size_t r,
                             double mean_scale = 1.5) {
  std::uniform_real_distribution<double> u(0.3, 2.0);
  MfaParameters p;
  p.means = random_matrix(rng, static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(d), mean_scale);
  for (std::size_t i = 0; i < k; ++i) {
    p.loadings.push_back(random_matrix(rng, static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(r), 0.8));
  }
  p.psi_raw.resize(static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < p.psi_raw.size(); ++i) p.psi_raw(i) = std::log(u(rng));
  p.pi_logits = random_vector(rng, static_cast<Eigen::Index>(k), 0.5);
  return MfaModel(std::move(p));
}

}  // namespace mfa::testing
