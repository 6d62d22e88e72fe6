#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <string>
#include <vector>

#include "mfa/io.hpp"
#include "mfa/mixture.hpp"

namespace mfa {

// Responsibilities at or below this value are flushed to zero after
// normalization and their components dropped from the active set.
inline constexpr double kResponsibilityFlush = 1e-12;

// b(x) in factored form: responsibilities plus the posterior-mean latents
// of every active component.
struct Decomposition {
  Eigen::VectorXd responsibilities;    // K
  Eigen::MatrixXd latents;             // K x R, zero rows outside the active set
  std::vector<std::size_t> active_set;  // ascending
};

enum class ReconstructionMode { kSoft, kHard };

Decomposition decompose(const MfaModel& model, const Eigen::VectorXd& x);
Decomposition decompose(const MixtureEvaluator& eval, const Eigen::VectorXd& x);

// sum_{k in active} R_k (mu_k + W_k z_k).
Eigen::VectorXd reconstruct(const MfaModel& model, const Decomposition& dec);

// mu_a + W_a z_a for the hard-assigned component a.
Eigen::VectorXd reconstruct_hard(const MixtureEvaluator& eval, const Eigen::VectorXd& x);

// Dictionary A = [mu_1 .. mu_K | W_1 .. W_K], d x K(1+R).
Eigen::MatrixXd dictionary_matrix(const MfaModel& model);
// Code b = [R_1 .. R_K | R_1 z_1 .. R_K z_K], length K(1+R), so A b is the
// soft reconstruction.
Eigen::VectorXd dictionary_code(const Decomposition& dec);

struct FeatureContribution {
  enum class Label { kCentroid, kLocalOffset };
  Eigen::VectorXd vector;
  Label label;
  std::size_t component;
  double magnitude;  // Euclidean norm of `vector`
};

std::string to_string(FeatureContribution::Label label);

// Hard-assignment view: centroid mu_k then local offset W_k z_k of the
// assigned component.
std::vector<FeatureContribution> feature_contributions(const MfaModel& model, const Eigen::VectorXd& x);

// Soft view: R_k mu_k and R_k W_k z_k for every active component, sorted by
// descending magnitude (ties by component, centroid first).
std::vector<FeatureContribution> soft_feature_contributions(const MfaModel& model, const Decomposition& dec);

// Magnitude-weighted share of contributions flagged interpretable.
double interpretability_fraction(const std::vector<FeatureContribution>& contribs,
                                 const std::vector<bool>& interpretable);

struct MseEstimate {
  double mse = 0.0;             // (1 / (N d)) sum ||x - x_hat||^2
  double standard_error = 0.0;  // of the mean of per-sample ||x - x_hat||^2 / d
  std::uint64_t count = 0;
};

// Streams one full pass over `source` (after rewind(0)).
MseEstimate dataset_mse(const MfaModel& model, ActivationSource& source,
                        ReconstructionMode mode = ReconstructionMode::kSoft);

// Nearest-centroid reconstruction error with the same normalization.
MseEstimate kmeans_baseline_mse(const Eigen::MatrixXd& centroids, ActivationSource& source);

}  // namespace mfa
