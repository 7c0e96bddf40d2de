#include "ipccf/graph.hpp"

#include <algorithm>
#include <cmath>

namespace ipccf {

namespace {

using Triplet = Eigen::Triplet<Real>;

void require_split(const InteractionDataset& dataset) {
  if (!dataset.split_done) {
    throw DataError("graph operators require a split dataset (train portion)");
  }
}

// Similarity rows for one homogeneous side. `adjacency` maps each source
// node to its sorted neighbor list in the opposite partition; `reverse`
// is the transposed adjacency. Emits (src, dst, sim) triplets with the
// eta-or-top-q filter applied per source row; ties at the q-th value are
// all kept.
void homogeneous_similarities(const std::vector<std::vector<Index>>& adjacency,
                              const std::vector<std::vector<Index>>& reverse,
                              const ExtractionConfig& config, Index block_offset,
                              std::vector<Triplet>& out) {
  const auto n = static_cast<Index>(adjacency.size());
  std::vector<Index> overlap(static_cast<std::size_t>(n), 0);
  std::vector<Index> touched;
  std::vector<std::pair<Index, Real>> candidates;
  for (Index u = 0; u < n; ++u) {
    const auto& neighbors = adjacency[static_cast<std::size_t>(u)];
    if (neighbors.empty()) continue;
    touched.clear();
    for (Index i : neighbors) {
      for (Index v : reverse[static_cast<std::size_t>(i)]) {
        if (v == u) continue;
        if (overlap[static_cast<std::size_t>(v)] == 0) touched.push_back(v);
        ++overlap[static_cast<std::size_t>(v)];
      }
    }
    candidates.clear();
    const auto deg_u = static_cast<Real>(neighbors.size());
    for (Index v : touched) {
      const auto common = static_cast<Real>(overlap[static_cast<std::size_t>(v)]);
      const auto deg_v =
          static_cast<Real>(adjacency[static_cast<std::size_t>(v)].size());
      candidates.emplace_back(v, common / (deg_u + deg_v - common));
      overlap[static_cast<std::size_t>(v)] = 0;
    }

    Real rank_floor = std::numeric_limits<Real>::infinity();
    if (config.q > 0) {
      if (static_cast<Index>(candidates.size()) <= config.q) {
        rank_floor = -std::numeric_limits<Real>::infinity();
      } else {
        std::vector<Real> sims;
        sims.reserve(candidates.size());
        for (const auto& [v, sim] : candidates) sims.push_back(sim);
        std::nth_element(sims.begin(), sims.begin() + (config.q - 1), sims.end(),
                         std::greater<Real>());
        rank_floor = sims[static_cast<std::size_t>(config.q - 1)];
      }
    }
    std::sort(candidates.begin(), candidates.end());
    for (const auto& [v, sim] : candidates) {
      if (sim >= config.eta || sim >= rank_floor) {
        out.emplace_back(static_cast<int>(block_offset + u),
                         static_cast<int>(block_offset + v), sim);
      }
    }
  }
}

std::vector<std::vector<Index>> transpose_adjacency(
    const std::vector<std::vector<Index>>& adjacency, Index num_cols) {
  std::vector<std::vector<Index>> reverse(static_cast<std::size_t>(num_cols));
  for (std::size_t u = 0; u < adjacency.size(); ++u) {
    for (Index i : adjacency[u]) {
      reverse[static_cast<std::size_t>(i)].push_back(static_cast<Index>(u));
    }
  }
  return reverse;
}

}  // namespace

EdgePattern edge_pattern_from(const SpMat& m) {
  EdgePattern edges;
  edges.rows = m.rows();
  edges.src.reserve(static_cast<std::size_t>(m.nonZeros()));
  edges.dst.reserve(static_cast<std::size_t>(m.nonZeros()));
  edges.weight.resize(m.nonZeros());
  Index e = 0;
  for (Index row = 0; row < m.outerSize(); ++row) {
    for (SpMat::InnerIterator it(m, row); it; ++it, ++e) {
      edges.src.push_back(it.row());
      edges.dst.push_back(it.col());
      edges.weight[e] = it.value();
    }
  }
  return edges;
}

SpMat build_direct_adjacency(const InteractionDataset& dataset) {
  require_split(dataset);
  const Index n = dataset.num_users + dataset.num_items;
  std::vector<Triplet> triplets;
  triplets.reserve(static_cast<std::size_t>(2 * dataset.train_size()));
  for (Index u = 0; u < dataset.num_users; ++u) {
    for (Index i : dataset.train_adjacency[static_cast<std::size_t>(u)]) {
      const Index item_node = dataset.num_users + i;
      triplets.emplace_back(static_cast<int>(u), static_cast<int>(item_node), 1.0);
      triplets.emplace_back(static_cast<int>(item_node), static_cast<int>(u), 1.0);
    }
  }
  SpMat adj(n, n);
  adj.setFromTriplets(triplets.begin(), triplets.end());
  adj.makeCompressed();
  return adj;
}

SpMat normalize_direct(const SpMat& adjacency) {
  Vec degree = Vec::Zero(adjacency.rows());
  for (Index row = 0; row < adjacency.outerSize(); ++row) {
    for (SpMat::InnerIterator it(adjacency, row); it; ++it) {
      degree[row] += 1.0;
    }
  }
  SpMat normalized = adjacency;
  for (Index row = 0; row < normalized.outerSize(); ++row) {
    for (SpMat::InnerIterator it(normalized, row); it; ++it) {
      it.valueRef() = 1.0 / std::sqrt(degree[it.row()] * degree[it.col()]);
    }
  }
  return normalized;
}

SpMat extract_high_order(const InteractionDataset& dataset,
                         const ExtractionConfig& config) {
  require_split(dataset);
  if (config.eta < 0.0 || config.eta > 1.0) {
    throw ConfigError("eta must lie in [0, 1]");
  }
  if (config.q < 0) throw ConfigError("q must be non-negative");

  const auto item_adjacency =
      transpose_adjacency(dataset.train_adjacency, dataset.num_items);

  std::vector<Triplet> triplets;
  homogeneous_similarities(dataset.train_adjacency, item_adjacency, config,
                           /*block_offset=*/0, triplets);
  homogeneous_similarities(item_adjacency, dataset.train_adjacency, config,
                           /*block_offset=*/dataset.num_users, triplets);

  const Index n = dataset.num_users + dataset.num_items;
  SpMat high(n, n);
  high.setFromTriplets(triplets.begin(), triplets.end());
  high.makeCompressed();
  return high;
}

SpMat normalize_high_order(const SpMat& highorder) {
  SpMat normalized = highorder;
  for (Index row = 0; row < normalized.outerSize(); ++row) {
    Real row_sum = 0.0;
    for (SpMat::InnerIterator it(normalized, row); it; ++it) row_sum += it.value();
    if (row_sum <= 0.0) continue;
    for (SpMat::InnerIterator it(normalized, row); it; ++it) {
      it.valueRef() /= row_sum;
    }
  }
  return normalized;
}

GraphOperators build_graph_operators(const InteractionDataset& dataset,
                                     const ExtractionConfig& config) {
  GraphOperators ops;
  ops.direct = build_direct_adjacency(dataset);
  ops.direct_norm = normalize_direct(ops.direct);
  ops.high_order = extract_high_order(dataset, config);
  ops.high_order_norm = normalize_high_order(ops.high_order);
  ops.direct_edges = edge_pattern_from(ops.direct);
  ops.high_order_edges = edge_pattern_from(ops.high_order);
  return ops;
}

}  // namespace ipccf
