#include "mfa/lowrank_gaussian.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "mfa/error.hpp"

namespace mfa {
namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

bool all_finite(const Eigen::MatrixXd& m) { return m.allFinite(); }

}  // namespace

Eigen::VectorXd floor_psi(const Eigen::VectorXd& psi, double floor) {
  if (!psi.allFinite()) throw InvalidInputError("noise diagonal contains non-finite entries");
  return psi.cwiseMax(floor);
}

CapacitanceFactor::CapacitanceFactor(const Eigen::VectorXd& mean, const Eigen::MatrixXd& loadings,
                                     const Eigen::VectorXd& psi, std::optional<std::size_t> component)
    : mean_(mean), component_(component) {
  const auto d = mean.size();
  if (d < 1) throw InvalidInputError("component dimension must be at least 1");
  if (loadings.rows() != d || psi.size() != d) {
    throw InvalidInputError("component shape mismatch: mean has " + std::to_string(d) + " rows, loadings " +
                            std::to_string(loadings.rows()) + ", psi " + std::to_string(psi.size()));
  }
  if (loadings.cols() < 1 || loadings.cols() > d) {
    throw InvalidInputError("loading rank must satisfy 1 <= R <= d");
  }
  if (!all_finite(mean) || !all_finite(loadings)) {
    throw InvalidInputError("component parameters contain non-finite values" +
                            (component ? " (component " + std::to_string(*component) + ")" : std::string()));
  }
  if (!psi.allFinite() || (psi.array() <= 0.0).any()) {
    throw InvalidInputError("noise diagonal must be finite and positive");
  }

  psi_inv_ = psi.cwiseInverse();
  psi_inv_loadings_ = psi_inv_.asDiagonal() * loadings;

  const auto rank = loadings.cols();
  Eigen::MatrixXd cap = Eigen::MatrixXd::Identity(rank, rank);
  cap.noalias() += loadings.transpose() * psi_inv_loadings_;
  cap = 0.5 * (cap + cap.transpose()).eval();
  capacitance_.compute(cap);
  if (capacitance_.info() != Eigen::Success) {
    throw NumericalError("capacitance matrix is not positive definite", component_);
  }
  const Eigen::MatrixXd& l = capacitance_.matrixLLT();
  double log_det_cap = 0.0;
  for (Eigen::Index i = 0; i < rank; ++i) log_det_cap += std::log(l(i, i));
  log_det_cap *= 2.0;
  double log_det_psi = 0.0;
  for (Eigen::Index i = 0; i < d; ++i) log_det_psi += std::log(psi(i));
  log_det_ = log_det_psi + log_det_cap;
  if (!std::isfinite(log_det_)) {
    throw NumericalError("covariance log-determinant is not finite", component_);
  }
}

void CapacitanceFactor::check_input(const Eigen::VectorXd& x) const {
  if (x.size() != mean_.size()) {
    throw InvalidInputError("input has dimension " + std::to_string(x.size()) + ", expected " +
                            std::to_string(mean_.size()));
  }
  if (!x.allFinite()) throw InvalidInputError("input vector contains non-finite values");
}

CapacitanceFactor::Evaluation CapacitanceFactor::evaluate(const Eigen::VectorXd& x) const {
  check_input(x);
  const Eigen::VectorXd r = x - mean_;
  const Eigen::VectorXd b = psi_inv_loadings_.transpose() * r;
  Eigen::VectorXd z = capacitance_.solve(b);
  const double quad = r.dot(psi_inv_.cwiseProduct(r)) - b.dot(z);
  const double d = static_cast<double>(mean_.size());
  Evaluation out;
  out.log_density = -0.5 * (d * kLog2Pi + log_det_ + quad);
  out.whitened = psi_inv_.cwiseProduct(r) - psi_inv_loadings_ * z;
  out.z = std::move(z);
  return out;
}

double CapacitanceFactor::log_density(const Eigen::VectorXd& x) const {
  check_input(x);
  const Eigen::VectorXd r = x - mean_;
  const Eigen::VectorXd b = psi_inv_loadings_.transpose() * r;
  const double quad = r.dot(psi_inv_.cwiseProduct(r)) - b.dot(capacitance_.solve(b));
  const double d = static_cast<double>(mean_.size());
  return -0.5 * (d * kLog2Pi + log_det_ + quad);
}

LatentCoordinates CapacitanceFactor::posterior_mean(const Eigen::VectorXd& x) const {
  check_input(x);
  return {capacitance_.solve(psi_inv_loadings_.transpose() * (x - mean_))};
}

Eigen::MatrixXd CapacitanceFactor::precision_times_loadings() const {
  // M^-1 is symmetric, so (M^-1 (Psi^-1 W)^T)^T = Psi^-1 W M^-1.
  return capacitance_.solve(psi_inv_loadings_.transpose()).transpose();
}

Eigen::VectorXd CapacitanceFactor::precision_diagonal() const {
  const Eigen::MatrixXd pw_minv = precision_times_loadings();
  return psi_inv_ - pw_minv.cwiseProduct(psi_inv_loadings_).rowwise().sum();
}

double log_density(const Eigen::VectorXd& x, const FactorComponent& comp, const Eigen::VectorXd& psi) {
  return CapacitanceFactor(comp.mean, comp.loadings, floor_psi(psi)).log_density(x);
}

LatentCoordinates posterior_mean(const Eigen::VectorXd& x, const FactorComponent& comp,
                                 const Eigen::VectorXd& psi) {
  return CapacitanceFactor(comp.mean, comp.loadings, floor_psi(psi)).posterior_mean(x);
}

Eigen::VectorXd local_reconstruction(const FactorComponent& comp, const LatentCoordinates& z) {
  if (z.z.size() != comp.loadings.cols() || comp.mean.size() != comp.loadings.rows()) {
    throw InvalidInputError("latent length " + std::to_string(z.z.size()) + " does not match rank " +
                            std::to_string(comp.loadings.cols()));
  }
  return comp.mean + comp.loadings * z.z;
}

}  // namespace mfa
