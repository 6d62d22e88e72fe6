#pragma once

#include <random>

#include "mfa/mixture.hpp"

namespace mfa::bench {

inline Eigen::MatrixXd gaussian(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = n(rng);
  return m;
}

inline MfaModel make_model(std::size_t k, std::size_t d, std::size_t r, std::uint64_t seed = 1) {
  std::mt19937_64 rng(seed);
  MfaParameters p;
  p.means = gaussian(rng, static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(d), 3.0);
  for (std::size_t i = 0; i < k; ++i) {
    p.loadings.push_back(gaussian(rng, static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(r), 0.3));
  }
  p.psi_raw = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
  p.pi_logits = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(k));
  return MfaModel(std::move(p));
}

}  // namespace mfa::bench
