#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "mfa/io.hpp"
#include "mfa/mixture.hpp"

namespace mfa {

enum class InitStrategy { kKMeans, kRandom, kRandomPoint };

std::string to_string(InitStrategy s);
InitStrategy init_strategy_from_string(const std::string& name);

struct InitConfig {
  InitStrategy strategy = InitStrategy::kKMeans;
  std::size_t components = 1;
  std::size_t sample_size = 4'000'000;  // vectors drawn for k-means
  double sigma = 1.0;                   // centroid scale for the random strategy
  std::size_t kmeans_iters = 50;        // full-pass equivalents
  std::size_t kmeans_batch = 8192;
  std::uint64_t seed = 0;

  void validate() const;
};

// Centroids from the chosen strategy, loadings i.i.d. N(0, 1), uniform
// weights and Psi = I.
MfaModel init_model(const InitConfig& cfg, const ActivationBatch& sample, std::size_t rank);

struct KMeansResult {
  Eigen::MatrixXd centroids;  // K x d
  double inertia = 0.0;       // sum of squared distances to the nearest centroid
  // Inertia after seeding and after each full-batch iteration (full-batch
  // mode only; empty for minibatch runs).
  std::vector<double> inertia_trace;
};

// k-means++ seeding followed by Lloyd iterations when batch_size covers the
// sample, or Sculley-style minibatch updates otherwise. `iters` counts
// full-pass equivalents. Empty clusters are reseeded from the point of the
// largest cluster farthest from its centroid. Nearest-centroid ties go to
// the lowest index.
KMeansResult minibatch_kmeans(const ActivationBatch& sample, std::size_t k, std::size_t iters, std::uint64_t seed,
                              std::size_t batch_size = 8192);

// Index of the nearest centroid (lowest index on ties) and its squared distance.
std::pair<std::size_t, double> nearest_centroid(const Eigen::MatrixXd& centroids, const Eigen::VectorXd& x);

// Sum of squared distances from every sample row to its nearest centroid.
double kmeans_inertia(const Eigen::MatrixXd& centroids, const ActivationBatch& sample);

struct PairwiseDistanceStats {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
};

PairwiseDistanceStats pairwise_centroid_stats(const Eigen::MatrixXd& centroids);
PairwiseDistanceStats pairwise_centroid_stats(const MfaModel& model);

}  // namespace mfa
