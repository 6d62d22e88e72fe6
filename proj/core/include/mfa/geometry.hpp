#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <ostream>
#include <vector>

#include "mfa/io.hpp"
#include "mfa/mixture.hpp"

namespace mfa {

struct Neighbor {
  std::size_t index;
  double distance;

  bool operator==(const Neighbor&) const = default;
};

// Directed kNN graph over component centroids. Each adjacency list holds
// exactly k entries sorted by ascending distance (ties by lower index),
// self excluded.
struct NeighborhoodGraph {
  std::size_t k = 0;
  std::vector<std::vector<Neighbor>> edges;
};

// Exact construction: a GEMM shortlist widened by a rounding-error bound,
// then distances summed in coordinate order for the shortlisted pairs.
// Requires 1 <= k < K.
NeighborhoodGraph build_knn_graph(const Eigen::MatrixXd& centroids, std::size_t k);
NeighborhoodGraph build_knn_graph(const MfaModel& model, std::size_t k);

// Breadth-first order over directed edges from `seed`, truncated at max_nodes.
std::vector<std::size_t> bfs_neighborhood(const NeighborhoodGraph& graph, std::size_t seed, std::size_t max_nodes);

struct ScoredItem {
  std::uint64_t id;
  double score;
  std::uint64_t position;  // order in which the stream produced the item
};

struct RankedItems {
  std::vector<ScoredItem> items;
  bool truncated = false;  // fewer than n candidates were available
};

// The n stream items with the highest log-density under `component`,
// descending, ties by earlier stream position. Streams one pass.
RankedItems top_contexts(const MfaModel& model, ActivationSource& source, std::size_t component, std::size_t n);

struct LoadingExtremes {
  RankedItems top;     // largest z[j], descending
  RankedItems bottom;  // smallest z[j], ascending
};

// Among items hard-assigned to `component`, those with the largest and the
// smallest posterior latent coordinate `loading`.
LoadingExtremes loading_extremes(const MfaModel& model, ActivationSource& source, std::size_t component,
                                 std::size_t loading, std::size_t n);

// "node<TAB>neighbor<TAB>distance" lines.
void write_graph_tsv(std::ostream& os, const NeighborhoodGraph& graph);

}  // namespace mfa
