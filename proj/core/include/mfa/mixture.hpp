#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <vector>

#include "mfa/lowrank_gaussian.hpp"

namespace mfa {

// Unconstrained parameters of a mixture of factor analyzers. Mixture
// weights are softmax(pi_logits); the shared noise diagonal is
// max(exp(psi_raw), psi_floor).
struct MfaParameters {
  Eigen::MatrixXd means;                  // K x d, row k is mu_k
  std::vector<Eigen::MatrixXd> loadings;  // K entries, each d x R
  Eigen::VectorXd psi_raw;                // d
  Eigen::VectorXd pi_logits;              // K
};

// An immutable, validated MFA model.
class MfaModel {
 public:
  explicit MfaModel(MfaParameters params, double psi_floor = kPsiFloor);

  std::size_t num_components() const { return static_cast<std::size_t>(params_.means.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(params_.means.cols()); }
  std::size_t rank() const { return static_cast<std::size_t>(params_.loadings.front().cols()); }
  double psi_floor() const { return psi_floor_; }

  const MfaParameters& parameters() const { return params_; }
  Eigen::VectorXd mean(std::size_t k) const { return params_.means.row(static_cast<Eigen::Index>(k)).transpose(); }
  const Eigen::MatrixXd& loadings(std::size_t k) const { return params_.loadings.at(k); }
  FactorComponent component(std::size_t k) const { return {mean(k), loadings(k)}; }

  // Shared noise diagonal after the positive transform and floor.
  const Eigen::VectorXd& psi() const { return psi_; }
  // softmax(pi_logits).
  const Eigen::VectorXd& weights() const { return weights_; }
  const Eigen::VectorXd& log_weights() const { return log_weights_; }

 private:
  MfaParameters params_;
  double psi_floor_;
  Eigen::VectorXd psi_;
  Eigen::VectorXd weights_;
  Eigen::VectorXd log_weights_;
};

// The positive transform used for the noise diagonal.
Eigen::VectorXd psi_from_raw(const Eigen::VectorXd& psi_raw, double psi_floor = kPsiFloor);
// Inverse of psi_from_raw for values at or above the floor.
Eigen::VectorXd raw_from_psi(const Eigen::VectorXd& psi);
// Input-order independent log-softmax.
Eigen::VectorXd log_softmax(const Eigen::VectorXd& logits);

// Holds one CapacitanceFactor per component so repeated evaluations over a
// batch pay the O(dR^2 + R^3) setup once. References the model, which must
// outlive it.
class MixtureEvaluator {
 public:
  explicit MixtureEvaluator(const MfaModel& model);

  const MfaModel& model() const { return *model_; }
  const CapacitanceFactor& factor(std::size_t k) const { return factors_.at(k); }

  Eigen::VectorXd component_log_densities(const Eigen::VectorXd& x) const;
  double log_likelihood(const Eigen::VectorXd& x) const;
  Eigen::VectorXd responsibilities(const Eigen::VectorXd& x) const;
  std::size_t assign(const Eigen::VectorXd& x) const;

  // Joint log-probabilities log pi_k + log N(x | k).
  Eigen::VectorXd joint_log_probs(const Eigen::VectorXd& x) const;

 private:
  const MfaModel* model_;
  std::vector<CapacitanceFactor> factors_;
};

// Normalizes joint log-probabilities into responsibilities in log space.
Eigen::VectorXd normalize_log_probs(const Eigen::VectorXd& joint);

double log_likelihood(const MfaModel& model, const Eigen::VectorXd& x);
Eigen::VectorXd responsibilities(const MfaModel& model, const Eigen::VectorXd& x);
// argmax of the responsibilities; ties go to the lowest index.
std::size_t assign(const MfaModel& model, const Eigen::VectorXd& x);
Eigen::VectorXd per_component_log_density(const MfaModel& model, const Eigen::VectorXd& x);

}  // namespace mfa
