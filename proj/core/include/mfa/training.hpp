#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "mfa/io.hpp"
#include "mfa/mixture.hpp"

namespace mfa {

enum class Optimizer { kPlainGradient, kAdaptiveMoment };

std::string to_string(Optimizer opt);
Optimizer optimizer_from_string(const std::string& name);

struct TrainConfig {
  std::size_t batch_size = 256;
  double learning_rate = 1e-3;
  std::size_t max_epochs = 100;
  double convergence_delta = 1e-3;
  Optimizer optimizer = Optimizer::kAdaptiveMoment;
  std::uint64_t seed = 0;
  double psi_floor = kPsiFloor;
  std::size_t eval_interval = 200;  // batches between held-out evaluations
  std::size_t heldout_size = 10'000;
  // Held-out NLL is smoothed over this many evaluations before the
  // convergence test.
  std::size_t nll_window = 3;

  // Adam moments.
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

struct TrainReport {
  std::uint64_t steps_run = 0;
  std::uint64_t epochs_run = 0;
  double final_nll = 0.0;
  std::vector<std::pair<std::uint64_t, double>> nll_trace;  // (step, held-out NLL)
  bool converged = false;
  double wall_time = 0.0;  // seconds

  // Evaluation intervals after the initial evaluation.
  std::size_t evaluations() const { return nll_trace.empty() ? 0 : nll_trace.size() - 1; }
};

struct TrainProgress {
  std::uint64_t step;
  double nll;
  double wall_time;
};

// Gradient with respect to the unconstrained parameters (same layout as
// MfaParameters).
struct ParameterGradient {
  Eigen::MatrixXd means;
  std::vector<Eigen::MatrixXd> loadings;
  Eigen::VectorXd psi_raw;
  Eigen::VectorXd pi_logits;
};

struct NllAndGradient {
  double nll;
  ParameterGradient gradient;
};

// -(1/B) sum_i log p(x_i).
double nll_batch(const MfaModel& model, const ActivationBatch& batch);

// nll_batch together with its exact gradient. Per component, with
// a = C^-1 (x - mu) and responsibilities g:
//   dlog p / dmu_k    = g a
//   dlog p / dW_k     = g (a a^T W_k - C_k^-1 W_k)
//   dlog p / dPsi_jj  = sum_k g (a_j^2 - (C_k^-1)_jj) / 2
//   dlog p / dlogit_k = g_k - pi_k
NllAndGradient nll_and_gradient(const MfaModel& model, const ActivationBatch& batch);

// Rows held out by fit: min(heldout_size, source_size / 2).
std::size_t heldout_rows(const TrainConfig& cfg, std::uint64_t source_size);

// Minibatch maximum-likelihood fit. The first heldout_size rows of the
// source (storage order) form the held-out slice and are excluded from
// training passes.
std::pair<MfaModel, TrainReport> fit(const MfaModel& init, ActivationSource& source, const TrainConfig& cfg,
                                     const std::function<void(const TrainProgress&)>& on_eval = {});

// Draws n samples: k ~ Categorical(pi), z ~ N(0, I_R), eps ~ N(0, Psi),
// x = mu_k + W_k z + eps. Optionally reports the drawn component of each row.
ActivationBatch sample_synthetic(const MfaModel& truth, std::size_t n, std::uint64_t seed,
                                 std::vector<std::size_t>* components = nullptr);

// Ground-truth generator for synthetic experiments: centroids with pairwise
// separation >= `separation`, isotropic noise variance noise_scale^2,
// loadings with N(0, loading_scale^2) entries, uniform weights.
struct SyntheticModelConfig {
  std::size_t components = 4;
  std::size_t dim = 16;
  std::size_t rank = 2;
  double separation = 20.0;
  double noise_scale = 1.0;
  double loading_scale = 1.0;
  std::uint64_t seed = 0;
};
MfaModel make_synthetic_model(const SyntheticModelConfig& cfg);

}  // namespace mfa
