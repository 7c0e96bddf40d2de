#pragma once

#include <vector>

#include "ipccf/core.hpp"
#include "ipccf/dataset.hpp"

namespace ipccf {

/// Thresholds for high-order relation extraction: keep a similarity entry
/// when it reaches eta or ranks among a node's top q values.
struct ExtractionConfig {
  Real eta = 0.8;
  Index q = 5;
};

/// Edge list view of a sparse operator, used where per-edge weights enter
/// the differentiable path.
struct EdgePattern {
  std::vector<Index> src;
  std::vector<Index> dst;
  Vec weight;
  Index rows = 0;

  Index size() const { return static_cast<Index>(src.size()); }
};

EdgePattern edge_pattern_from(const SpMat& m);

/// Bipartite 0/1 operator over user+item nodes: [[0, A], [A^T, 0]].
/// Users occupy rows 0..num_users, items the rest.
SpMat build_direct_adjacency(const InteractionDataset& dataset);

/// Symmetric degree normalization: entry (u,i) becomes 1/sqrt(deg(u)*deg(i)).
SpMat normalize_direct(const SpMat& adjacency);

/// Jaccard-similarity relations between homogeneous nodes, filtered by the
/// eta-or-top-q rule, assembled block-diagonally (user-user, item-item).
/// Candidates are restricted to nodes sharing at least one neighbor.
SpMat extract_high_order(const InteractionDataset& dataset, const ExtractionConfig& config);

/// Row-stochastic normalization: each non-empty row divided by its sum.
SpMat normalize_high_order(const SpMat& highorder);

/// Everything the forward pass needs, built once from the train split.
struct GraphOperators {
  SpMat direct;            // unweighted bipartite pattern
  SpMat direct_norm;       // symmetric degree normalization of direct
  SpMat high_order;        // similarity-weighted homogeneous pattern
  SpMat high_order_norm;   // row-stochastic normalization of high_order
  EdgePattern direct_edges;      // edge view of `direct`
  EdgePattern high_order_edges;  // edge view of `high_order`

  Index num_nodes() const { return direct.rows(); }
};

GraphOperators build_graph_operators(const InteractionDataset& dataset,
                                     const ExtractionConfig& config);

}  // namespace ipccf
