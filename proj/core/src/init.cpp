#include "mfa/init.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "mfa/error.hpp"
#include "mfa/parallel.hpp"
#include "mfa/random.hpp"

namespace mfa {
namespace {

constexpr std::size_t kChunk = 1024;

Eigen::MatrixXd sample_matrix(const ActivationBatch& sample) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(sample.size()), static_cast<Eigen::Index>(sample.dim()));
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const auto row = sample.row_span(i);
    for (std::size_t j = 0; j < row.size(); ++j) {
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = static_cast<double>(row[j]);
    }
  }
  return x;
}

// Squared distance between row i of a and row j of b, summed in coordinate
// order.
double squared_distance(const Eigen::MatrixXd& a, Eigen::Index i, const Eigen::MatrixXd& b, Eigen::Index j) {
  double s = 0.0;
  for (Eigen::Index t = 0; t < a.cols(); ++t) {
    const double diff = a(i, t) - b(j, t);
    s += diff * diff;
  }
  return s;
}

// Bound on |(|x|^2 + |c|^2 - 2 x.c) - squared_distance(x, c)| per unit of
// |x|^2 + |c|^2, covering the rounding of both forms.
double shortlist_slack(Eigen::Index d) {
  return 16.0 * static_cast<double>(d + 4) * std::numeric_limits<double>::epsilon();
}

// Nearest centroid (ties to the lowest index) for every row of `points`
// restricted to `rows`. A GEMM ranks all centroids; only those within the
// rounding bound of the best are compared by exact distance.
void assign_rows(const Eigen::MatrixXd& points, std::span<const std::size_t> rows, const Eigen::MatrixXd& centroids,
                 std::vector<std::size_t>& label, std::vector<double>& dist) {
  label.resize(rows.size());
  dist.resize(rows.size());
  const Eigen::VectorXd csq = centroids.rowwise().squaredNorm();
  const double max_csq = csq.maxCoeff();
  const double slack = shortlist_slack(points.cols());
  const Eigen::Index K = centroids.rows();
  const double work = static_cast<double>(centroids.rows() * centroids.cols());
  parallel_chunks(rows.size(), kChunk, work, [&](std::size_t, std::size_t begin, std::size_t end) {
    const auto n = static_cast<Eigen::Index>(end - begin);
    Eigen::MatrixXd block(n, points.cols());
    for (Eigen::Index r = 0; r < n; ++r) block.row(r) = points.row(static_cast<Eigen::Index>(rows[begin + static_cast<std::size_t>(r)]));
    const Eigen::VectorXd xsq = block.rowwise().squaredNorm();
    const Eigen::MatrixXd gram = block * centroids.transpose();
    for (Eigen::Index r = 0; r < n; ++r) {
      const std::size_t i = begin + static_cast<std::size_t>(r);
      double lowest = std::numeric_limits<double>::infinity();
      for (Eigen::Index c = 0; c < K; ++c) lowest = std::min(lowest, xsq(r) + csq(c) - 2.0 * gram(r, c));
      const double limit = lowest + 2.0 * slack * (xsq(r) + max_csq);
      const auto row = static_cast<Eigen::Index>(rows[i]);
      std::size_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (Eigen::Index c = 0; c < K; ++c) {
        if (xsq(r) + csq(c) - 2.0 * gram(r, c) > limit) continue;
        const double dd = squared_distance(points, row, centroids, c);
        if (dd < best_d) {
          best_d = dd;
          best = static_cast<std::size_t>(c);
        }
      }
      label[i] = best;
      dist[i] = best_d;
    }
  });
}

Eigen::MatrixXd kmeans_plus_plus(const Eigen::MatrixXd& points, std::size_t k, Rng& rng) {
  const auto n = static_cast<std::size_t>(points.rows());
  Eigen::MatrixXd centroids(static_cast<Eigen::Index>(k), points.cols());
  std::uniform_int_distribution<std::size_t> first(0, n - 1);
  centroids.row(0) = points.row(static_cast<Eigen::Index>(first(rng)));
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = squared_distance(points, static_cast<Eigen::Index>(i), centroids, 0);
  const Eigen::VectorXd xsq = points.rowwise().squaredNorm();
  const double slack = 2.0 * shortlist_slack(points.cols());

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (double v : d2) total += v;
    if (!(total > 0.0)) {
      throw DegenerateInputError("sample has fewer than " + std::to_string(k) + " distinct points");
    }
    const double target = unit(rng) * total;
    double acc = 0.0;
    std::size_t chosen = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (d2[i] <= 0.0) continue;
      acc += d2[i];
      chosen = i;
      if (acc > target) break;
    }
    centroids.row(static_cast<Eigen::Index>(c)) = points.row(static_cast<Eigen::Index>(chosen));
    const auto ci = static_cast<Eigen::Index>(c);
    const Eigen::VectorXd center = centroids.row(ci).transpose();
    const double csq = center.squaredNorm();
    parallel_chunks(n, kChunk, static_cast<double>(points.cols()), [&](std::size_t, std::size_t b, std::size_t e) {
      const auto len = static_cast<Eigen::Index>(e - b);
      const Eigen::VectorXd dots = points.middleRows(static_cast<Eigen::Index>(b), len) * center;
      for (std::size_t i = b; i < e; ++i) {
        const double approx = xsq(static_cast<Eigen::Index>(i)) + csq - 2.0 * dots(static_cast<Eigen::Index>(i - b));
        // Only rows that might move closer need the exact distance.
        if (approx - slack * (xsq(static_cast<Eigen::Index>(i)) + csq) < d2[i]) {
          d2[i] = std::min(d2[i], squared_distance(points, static_cast<Eigen::Index>(i), centroids, ci));
        }
      }
    });
  }
  return centroids;
}

// Moves each empty cluster onto the member of the largest cluster farthest
// from that cluster's centroid.
bool reseed_empty(const Eigen::MatrixXd& points, Eigen::MatrixXd& centroids, std::vector<std::size_t>& label,
                  std::vector<double>& dist, std::vector<std::size_t>& counts) {
  bool changed = false;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] != 0) continue;
    const auto largest = static_cast<std::size_t>(
        std::distance(counts.begin(), std::max_element(counts.begin(), counts.end())));
    if (counts[largest] < 2) continue;
    std::size_t far = label.size();
    for (std::size_t i = 0; i < label.size(); ++i) {
      if (label[i] == largest && (far == label.size() || dist[i] > dist[far])) far = i;
    }
    centroids.row(static_cast<Eigen::Index>(c)) = points.row(static_cast<Eigen::Index>(far));
    label[far] = c;
    dist[far] = 0.0;
    --counts[largest];
    counts[c] = 1;
    changed = true;
  }
  return changed;
}

void lloyd_update(const Eigen::MatrixXd& points, const std::vector<std::size_t>& label, Eigen::MatrixXd& centroids) {
  Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(centroids.rows(), centroids.cols());
  std::vector<std::size_t> counts(static_cast<std::size_t>(centroids.rows()), 0);
  for (std::size_t i = 0; i < label.size(); ++i) {
    sums.row(static_cast<Eigen::Index>(label[i])) += points.row(static_cast<Eigen::Index>(i));
    ++counts[label[i]];
  }
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] > 0) {
      centroids.row(static_cast<Eigen::Index>(c)) =
          sums.row(static_cast<Eigen::Index>(c)) / static_cast<double>(counts[c]);
    }
  }
}

}  // namespace

std::string to_string(InitStrategy s) {
  switch (s) {
    case InitStrategy::kKMeans:
      return "kmeans";
    case InitStrategy::kRandom:
      return "random";
    case InitStrategy::kRandomPoint:
      return "random-point";
  }
  return "?";
}

InitStrategy init_strategy_from_string(const std::string& name) {
  if (name == "kmeans") return InitStrategy::kKMeans;
  if (name == "random") return InitStrategy::kRandom;
  if (name == "random-point") return InitStrategy::kRandomPoint;
  throw InvalidInputError("unknown init strategy '" + name + "'");
}

void InitConfig::validate() const {
  if (components < 1) throw InvalidInputError("K must be >= 1");
  if (sample_size < 1) throw InvalidInputError("sample_size must be >= 1");
  if (sample_size < components && strategy != InitStrategy::kRandom) {
    throw InvalidInputError("sample_size must be >= K for centroid-sourcing strategies");
  }
  if (!(sigma >= 0.0)) throw InvalidInputError("sigma must be non-negative");
  if (kmeans_iters < 1 || kmeans_batch < 1) throw InvalidInputError("k-means iterations and batch must be >= 1");
}

std::pair<std::size_t, double> nearest_centroid(const Eigen::MatrixXd& centroids, const Eigen::VectorXd& x) {
  if (centroids.rows() < 1 || centroids.cols() != x.size()) throw InvalidInputError("centroid shape mismatch");
  std::size_t best = 0;
  double best_d = (centroids.row(0).transpose() - x).squaredNorm();
  for (Eigen::Index c = 1; c < centroids.rows(); ++c) {
    const double dd = (centroids.row(c).transpose() - x).squaredNorm();
    if (dd < best_d) {
      best_d = dd;
      best = static_cast<std::size_t>(c);
    }
  }
  return {best, best_d};
}

double kmeans_inertia(const Eigen::MatrixXd& centroids, const ActivationBatch& sample) {
  if (centroids.cols() != static_cast<Eigen::Index>(sample.dim())) throw InvalidInputError("centroid shape mismatch");
  Eigen::MatrixXd points = sample_matrix(sample);
  const Eigen::RowVectorXd origin = points.colwise().mean();
  points.rowwise() -= origin;
  const Eigen::MatrixXd shifted = centroids.rowwise() - origin;
  std::vector<std::size_t> rows(sample.size());
  std::iota(rows.begin(), rows.end(), 0);
  std::vector<std::size_t> label;
  std::vector<double> dist;
  assign_rows(points, rows, shifted, label, dist);
  double s = 0.0;
  for (double v : dist) s += v;
  return s;
}

KMeansResult minibatch_kmeans(const ActivationBatch& sample, std::size_t k, std::size_t iters, std::uint64_t seed,
                              std::size_t batch_size) {
  if (k < 1) throw InvalidInputError("K must be >= 1");
  if (sample.size() < k) {
    throw InvalidInputError("sample has " + std::to_string(sample.size()) + " rows, fewer than K=" + std::to_string(k));
  }
  if (iters < 1 || batch_size < 1) throw InvalidInputError("iterations and batch size must be >= 1");

  // K-means is translation-equivariant; centering keeps the distance
  // shortlist bound tight for data far from the origin.
  Eigen::MatrixXd points = sample_matrix(sample);
  const Eigen::RowVectorXd origin = points.colwise().mean();
  points.rowwise() -= origin;
  const std::size_t n = sample.size();
  Rng rng(seed);
  KMeansResult result;
  result.centroids = kmeans_plus_plus(points, k, rng);

  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), 0);
  std::vector<std::size_t> label;
  std::vector<double> dist;

  auto total = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  };

  if (batch_size >= n) {
    assign_rows(points, all, result.centroids, label, dist);
    result.inertia_trace.push_back(total(dist));
    for (std::size_t it = 0; it < iters; ++it) {
      std::vector<std::size_t> counts(k, 0);
      for (auto l : label) ++counts[l];
      reseed_empty(points, result.centroids, label, dist, counts);
      lloyd_update(points, label, result.centroids);
      const std::vector<std::size_t> previous = label;
      assign_rows(points, all, result.centroids, label, dist);
      result.inertia_trace.push_back(total(dist));
      if (label == previous) break;
    }
  } else {
    // Sculley minibatch updates with per-centroid learning rate 1/count.
    std::vector<double> seen(k, 0.0);
    const std::size_t steps = std::max<std::size_t>(1, (iters * n + batch_size - 1) / batch_size);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    std::vector<std::size_t> rows(batch_size);
    for (std::size_t s = 0; s < steps; ++s) {
      for (auto& r : rows) r = pick(rng);
      assign_rows(points, rows, result.centroids, label, dist);
      for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto c = static_cast<Eigen::Index>(label[i]);
        seen[label[i]] += 1.0;
        const double eta = 1.0 / seen[label[i]];
        result.centroids.row(c) =
            (1.0 - eta) * result.centroids.row(c) + eta * points.row(static_cast<Eigen::Index>(rows[i]));
      }
      // Reseed clusters that no longer win any point once per pass.
      if ((s + 1) % std::max<std::size_t>(1, n / batch_size) == 0) {
        assign_rows(points, all, result.centroids, label, dist);
        std::vector<std::size_t> counts(k, 0);
        for (auto l : label) ++counts[l];
        if (reseed_empty(points, result.centroids, label, dist, counts)) {
          for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] == 1) seen[c] = 1.0;
          }
        }
      }
    }
    assign_rows(points, all, result.centroids, label, dist);
  }
  result.inertia = total(dist);
  result.centroids.rowwise() += origin;
  return result;
}

MfaModel init_model(const InitConfig& cfg, const ActivationBatch& sample, std::size_t rank) {
  cfg.validate();
  if (sample.dim() == 0) throw InvalidInputError("sample has no dimension");
  const std::size_t d = sample.dim();
  if (rank < 1 || rank > d) throw InvalidInputError("rank must satisfy 1 <= R <= d");
  const std::size_t K = cfg.components;
  const auto Ki = static_cast<Eigen::Index>(K), di = static_cast<Eigen::Index>(d);

  MfaParameters p;
  switch (cfg.strategy) {
    case InitStrategy::kKMeans: {
      if (sample.size() < K) throw InvalidInputError("k-means init needs at least K sample rows");
      p.means = minibatch_kmeans(sample, K, cfg.kmeans_iters, derive_seed(cfg.seed, "kmeans"), cfg.kmeans_batch)
                    .centroids;
      break;
    }
    case InitStrategy::kRandomPoint: {
      if (sample.size() < K) throw InvalidInputError("random-point init needs at least K sample rows");
      // Selection sampling keeps the chosen rows in sample order.
      Rng rng(derive_seed(cfg.seed, "random-point"));
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      p.means.resize(Ki, di);
      std::size_t needed = K;
      Eigen::Index filled = 0;
      for (std::size_t i = 0; i < sample.size() && needed > 0; ++i) {
        const std::size_t remaining = sample.size() - i;
        if (unit(rng) * static_cast<double>(remaining) < static_cast<double>(needed)) {
          p.means.row(filled++) = sample.row(i).transpose();
          --needed;
        }
      }
      break;
    }
    case InitStrategy::kRandom: {
      Rng rng(derive_seed(cfg.seed, "random"));
      std::normal_distribution<double> normal(0.0, 1.0);
      p.means.resize(Ki, di);
      for (Eigen::Index k = 0; k < Ki; ++k)
        for (Eigen::Index j = 0; j < di; ++j) p.means(k, j) = cfg.sigma * normal(rng);
      break;
    }
  }

  Rng wrng(derive_seed(cfg.seed, "loadings"));
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto Ri = static_cast<Eigen::Index>(rank);
  for (std::size_t k = 0; k < K; ++k) {
    Eigen::MatrixXd w(di, Ri);
    for (Eigen::Index i = 0; i < di; ++i)
      for (Eigen::Index j = 0; j < Ri; ++j) w(i, j) = normal(wrng);
    p.loadings.push_back(std::move(w));
  }
  p.psi_raw = Eigen::VectorXd::Zero(di);  // exp(0) = 1, i.e. Psi = I
  p.pi_logits = Eigen::VectorXd::Zero(Ki);
  return MfaModel(std::move(p));
}

PairwiseDistanceStats pairwise_centroid_stats(const Eigen::MatrixXd& centroids) {
  const auto k = centroids.rows();
  if (k < 2) throw InvalidInputError("pairwise statistics need at least two centroids");
  std::vector<double> dists;
  dists.reserve(static_cast<std::size_t>(k * (k - 1) / 2));
  for (Eigen::Index i = 0; i < k; ++i)
    for (Eigen::Index j = i + 1; j < k; ++j) dists.push_back((centroids.row(i) - centroids.row(j)).norm());
  double mean = 0.0;
  for (double v : dists) mean += v;
  mean /= static_cast<double>(dists.size());
  double var = 0.0;
  for (double v : dists) var += (v - mean) * (v - mean);
  var /= static_cast<double>(dists.size());
  return {mean, std::sqrt(var)};
}

PairwiseDistanceStats pairwise_centroid_stats(const MfaModel& model) {
  return pairwise_centroid_stats(model.parameters().means);
}

}  // namespace mfa
