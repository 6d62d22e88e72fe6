#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <cstddef>
#include <optional>

namespace mfa {

// Lower bound applied to every entry of the noise diagonal when it is read.
inline constexpr double kPsiFloor = 1e-6;

// One factor analyzer: x = mean + loadings * z + eps, z ~ N(0, I_R),
// eps ~ N(0, Psi). The noise diagonal Psi is shared across components and
// passed separately.
struct FactorComponent {
  Eigen::VectorXd mean;      // d
  Eigen::MatrixXd loadings;  // d x R
};

// Posterior-mean latent factors of one observation under one component.
struct LatentCoordinates {
  Eigen::VectorXd z;  // R
};

// Precomputed capacitance-form factorization of C = W W^T + Psi.
//
// With M = I_R + W^T Psi^-1 W (symmetrized, Cholesky-factored):
//   log|C|  = log|Psi| + log|M|
//   C^-1    = Psi^-1 - Psi^-1 W M^-1 W^T Psi^-1
// so a density evaluation costs O(dR + R^2) once this is built in
// O(dR^2 + R^3). The d x d covariance is never formed.
class CapacitanceFactor {
 public:
  // `psi` must already be floored. `component` is only used to label errors.
  CapacitanceFactor(const Eigen::VectorXd& mean, const Eigen::MatrixXd& loadings,
                    const Eigen::VectorXd& psi, std::optional<std::size_t> component = std::nullopt);

  std::size_t dim() const { return static_cast<std::size_t>(mean_.size()); }
  std::size_t rank() const { return static_cast<std::size_t>(psi_inv_loadings_.cols()); }

  double log_density(const Eigen::VectorXd& x) const;
  LatentCoordinates posterior_mean(const Eigen::VectorXd& x) const;

  // Evaluates the log-density and the posterior mean together, plus the
  // whitened residual a = C^-1 (x - mean) = Psi^-1 (x - mean - W z).
  struct Evaluation {
    double log_density;
    Eigen::VectorXd z;
    Eigen::VectorXd whitened;
  };
  Evaluation evaluate(const Eigen::VectorXd& x) const;

  // C^-1 W = Psi^-1 W M^-1 (d x R).
  Eigen::MatrixXd precision_times_loadings() const;
  // diag(C^-1), length d.
  Eigen::VectorXd precision_diagonal() const;

  const Eigen::VectorXd& mean() const { return mean_; }
  double log_det_covariance() const { return log_det_; }

 private:
  void check_input(const Eigen::VectorXd& x) const;

  Eigen::VectorXd mean_;
  Eigen::VectorXd psi_inv_;
  Eigen::MatrixXd psi_inv_loadings_;  // Psi^-1 W
  Eigen::LLT<Eigen::MatrixXd> capacitance_;
  double log_det_ = 0.0;
  std::optional<std::size_t> component_;
};

// Applies kPsiFloor (or `floor`) elementwise and rejects non-finite entries.
Eigen::VectorXd floor_psi(const Eigen::VectorXd& psi, double floor = kPsiFloor);

// log N(x | mean, W W^T + Psi).
double log_density(const Eigen::VectorXd& x, const FactorComponent& comp, const Eigen::VectorXd& psi);

// (I_R + W^T Psi^-1 W)^-1 W^T Psi^-1 (x - mean).
LatentCoordinates posterior_mean(const Eigen::VectorXd& x, const FactorComponent& comp,
                                 const Eigen::VectorXd& psi);

// mean + W z.
Eigen::VectorXd local_reconstruction(const FactorComponent& comp, const LatentCoordinates& z);

}  // namespace mfa
