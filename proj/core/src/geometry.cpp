#include "mfa/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <iomanip>
#include <limits>
#include <queue>

#include "mfa/error.hpp"
#include "mfa/parallel.hpp"

namespace mfa {
namespace {

constexpr std::size_t kRowsPerRead = 4096;

// Keeps the best n items under `better`, which must be a strict total order.
template <typename Better>
class BoundedSelection {
 public:
  BoundedSelection(std::size_t n, Better better) : n_(n), better_(better), heap_(better) {}

  void offer(const ScoredItem& item) {
    if (heap_.size() < n_) {
      heap_.push(item);
    } else if (better_(item, heap_.top())) {
      heap_.pop();
      heap_.push(item);
    }
  }

  std::vector<ScoredItem> sorted() {
    std::vector<ScoredItem> out;
    out.reserve(heap_.size());
    while (!heap_.empty()) {
      out.push_back(heap_.top());
      heap_.pop();
    }
    std::reverse(out.begin(), out.end());
    return out;
  }

 private:
  std::size_t n_;
  Better better_;
  // Max-heap under better_ puts the worst kept item on top.
  std::priority_queue<ScoredItem, std::vector<ScoredItem>, Better> heap_;
};

struct HigherFirst {
  bool operator()(const ScoredItem& a, const ScoredItem& b) const {
    if (a.score != b.score) return a.score > b.score;
    return a.position < b.position;
  }
};

struct LowerFirst {
  bool operator()(const ScoredItem& a, const ScoredItem& b) const {
    if (a.score != b.score) return a.score < b.score;
    return a.position < b.position;
  }
};

void check_component(const MfaModel& model, std::size_t component) {
  if (component >= model.num_components()) {
    throw InvalidInputError("component " + std::to_string(component) + " out of range (K=" +
                            std::to_string(model.num_components()) + ")");
  }
}

void check_source(const MfaModel& model, const ActivationSource& source) {
  if (source.dim() != model.dim()) throw InvalidInputError("stream dimension does not match the model");
}

// Euclidean distance between columns i and j, summed in coordinate order.
double centroid_distance(const Eigen::MatrixXd& cols, std::size_t i, std::size_t j) {
  const double* a = cols.col(static_cast<Eigen::Index>(i)).data();
  const double* b = cols.col(static_cast<Eigen::Index>(j)).data();
  double s = 0.0;
  for (Eigen::Index t = 0; t < cols.rows(); ++t) {
    const double diff = a[t] - b[t];
    s += diff * diff;
  }
  return std::sqrt(s);
}

}  // namespace

NeighborhoodGraph build_knn_graph(const Eigen::MatrixXd& centroids, std::size_t k) {
  const auto K = static_cast<std::size_t>(centroids.rows());
  if (k < 1 || k >= K) {
    throw InvalidInputError("neighbor count k=" + std::to_string(k) + " must satisfy 1 <= k < K=" + std::to_string(K));
  }
  const Eigen::Index d = centroids.cols();
  // Column-major copies: each centroid contiguous. `centered` feeds the
  // GEMM that shortlists candidates; exact distances use `cols`.
  const Eigen::MatrixXd cols = centroids.transpose();
  const Eigen::MatrixXd centered = cols.colwise() - cols.rowwise().mean();
  const Eigen::VectorXd sq = centered.colwise().squaredNorm().transpose();
  const double max_sq = sq.maxCoeff();
  // Bounds |shortlist d^2 - exact d^2| for both roundings involved.
  const double slack = 16.0 * static_cast<double>(d + 4) * std::numeric_limits<double>::epsilon();

  NeighborhoodGraph g;
  g.k = k;
  g.edges.assign(K, {});
  constexpr std::size_t kBlock = 64;
  parallel_chunks(K, kBlock, static_cast<double>(K * static_cast<std::size_t>(d)),
                  [&](std::size_t, std::size_t begin, std::size_t end) {
                    const auto b = static_cast<Eigen::Index>(begin);
                    const auto n = static_cast<Eigen::Index>(end - begin);
                    const Eigen::MatrixXd gram = centered.middleCols(b, n).transpose() * centered;
                    std::vector<double> approx(K), kth;
                    std::vector<Neighbor> row;
                    for (Eigen::Index r = 0; r < n; ++r) {
                      const auto i = static_cast<std::size_t>(b + r);
                      kth.clear();
                      for (std::size_t j = 0; j < K; ++j) {
                        approx[j] = sq(b + r) + sq(static_cast<Eigen::Index>(j)) - 2.0 * gram(r, static_cast<Eigen::Index>(j));
                        if (j != i) kth.push_back(approx[j]);
                      }
                      std::nth_element(kth.begin(), kth.begin() + static_cast<std::ptrdiff_t>(k - 1), kth.end());
                      const double limit = kth[k - 1] + 2.0 * slack * (sq(b + r) + max_sq);
                      row.clear();
                      for (std::size_t j = 0; j < K; ++j) {
                        if (j != i && approx[j] <= limit) row.push_back({j, centroid_distance(cols, i, j)});
                      }
                      auto closer = [](const Neighbor& x, const Neighbor& y) {
                        return x.distance != y.distance ? x.distance < y.distance : x.index < y.index;
                      };
                      std::partial_sort(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(k), row.end(), closer);
                      g.edges[i].assign(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(k));
                    }
                  });
  return g;
}

NeighborhoodGraph build_knn_graph(const MfaModel& model, std::size_t k) {
  return build_knn_graph(model.parameters().means, k);
}

std::vector<std::size_t> bfs_neighborhood(const NeighborhoodGraph& graph, std::size_t seed, std::size_t max_nodes) {
  if (seed >= graph.edges.size()) throw InvalidInputError("BFS seed " + std::to_string(seed) + " out of range");
  std::vector<std::size_t> order;
  if (max_nodes == 0) return order;
  std::vector<bool> seen(graph.edges.size(), false);
  std::deque<std::size_t> frontier{seed};
  seen[seed] = true;
  while (!frontier.empty() && order.size() < max_nodes) {
    const std::size_t node = frontier.front();
    frontier.pop_front();
    order.push_back(node);
    for (const Neighbor& nb : graph.edges[node]) {
      if (!seen[nb.index]) {
        seen[nb.index] = true;
        frontier.push_back(nb.index);
      }
    }
  }
  return order;
}

RankedItems top_contexts(const MfaModel& model, ActivationSource& source, std::size_t component, std::size_t n) {
  check_component(model, component);
  check_source(model, source);
  if (n < 1) throw InvalidInputError("n must be >= 1");
  const CapacitanceFactor factor(model.mean(component), model.loadings(component), model.psi(), component);
  BoundedSelection<HigherFirst> best(n, HigherFirst{});
  std::uint64_t position = 0;
  source.rewind(0);
  ActivationBatch batch;
  while (source.next_batch(kRowsPerRead, batch)) {
    for (std::size_t i = 0; i < batch.size(); ++i) {
      best.offer({batch.id(i), factor.log_density(batch.row(i)), position++});
    }
  }
  RankedItems out{best.sorted(), false};
  out.truncated = out.items.size() < n;
  return out;
}

LoadingExtremes loading_extremes(const MfaModel& model, ActivationSource& source, std::size_t component,
                                 std::size_t loading, std::size_t n) {
  check_component(model, component);
  check_source(model, source);
  if (loading >= model.rank()) throw InvalidInputError("loading index must satisfy 0 <= j < R");
  if (n < 1) throw InvalidInputError("n must be >= 1");
  const MixtureEvaluator eval(model);
  BoundedSelection<HigherFirst> top(n, HigherFirst{});
  BoundedSelection<LowerFirst> bottom(n, LowerFirst{});
  std::uint64_t position = 0;
  source.rewind(0);
  ActivationBatch batch;
  while (source.next_batch(kRowsPerRead, batch)) {
    for (std::size_t i = 0; i < batch.size(); ++i, ++position) {
      const Eigen::VectorXd x = batch.row(i);
      if (eval.assign(x) != component) continue;
      const double z = eval.factor(component).posterior_mean(x).z(static_cast<Eigen::Index>(loading));
      const ScoredItem item{batch.id(i), z, position};
      top.offer(item);
      bottom.offer(item);
    }
  }
  LoadingExtremes out{{top.sorted(), false}, {bottom.sorted(), false}};
  out.top.truncated = out.top.items.size() < n;
  out.bottom.truncated = out.bottom.items.size() < n;
  return out;
}

void write_graph_tsv(std::ostream& os, const NeighborhoodGraph& graph) {
  os << "node\tneighbor\tdistance\n";
  const auto old = os.precision(17);
  for (std::size_t i = 0; i < graph.edges.size(); ++i) {
    for (const Neighbor& nb : graph.edges[i]) os << i << '\t' << nb.index << '\t' << nb.distance << '\n';
  }
  os.precision(old);
}

}  // namespace mfa
