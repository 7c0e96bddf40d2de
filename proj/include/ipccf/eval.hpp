#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ipccf/core.hpp"
#include "ipccf/dataset.hpp"

namespace ipccf {

struct RankingMetrics {
  Real precision = 0;
  Real recall = 0;
  Real ndcg = 0;
  Index users_counted = 0;

  bool operator==(const RankingMetrics&) const = default;
};

struct GroupMetrics {
  Index lo = 0;  // inclusive train-count bound
  Index hi = 0;  // exclusive; 0 means unbounded
  RankingMetrics metrics;

  bool operator==(const GroupMetrics&) const = default;
};

struct EvalReport {
  std::map<Index, RankingMetrics> by_k;
  Real mad_users = 0;
  Real mad_items = 0;
  std::vector<GroupMetrics> groups;  // at the smallest requested K

  std::string to_tsv() const;
  std::string to_key_values() const;
  bool operator==(const EvalReport& other) const = default;
};

/// Top-K item indices per test user under the full-rank protocol: all items
/// scored, train items masked, ties broken by ascending item index. Users
/// without test items get empty lists.
std::vector<std::vector<Index>> full_rank_topk(const Mat& e_prime,
                                               const InteractionDataset& dataset,
                                               Index k);

/// Macro-averaged Precision/Recall/NDCG@K over users with test items.
RankingMetrics ranking_metrics(const std::vector<std::vector<Index>>& ranked,
                               const std::vector<std::vector<Index>>& test_adjacency,
                               Index k);

/// Mean pairwise cosine distance of L2-normalized rows in [begin, end).
/// Exact over all pairs up to `exact_limit` nodes, seeded pair sampling above.
Real mad_metric(const Mat& e_prime, Index begin, Index end, Index sample,
                std::uint64_t seed, Index exact_limit = 2000);

/// Per-bucket metrics with users grouped by train-interaction count; empty
/// buckets are omitted.
std::vector<GroupMetrics> sparsity_report(
    const InteractionDataset& dataset,
    const std::vector<std::vector<Index>>& ranked,
    const std::vector<Index>& bucket_edges, Index k);

/// Full evaluation pipeline over the requested K values.
EvalReport evaluate(const Mat& e_prime, const InteractionDataset& dataset,
                    const std::vector<Index>& k_values,
                    const std::vector<Index>& bucket_edges = {},
                    std::uint64_t mad_seed = 0, Index mad_sample = 200000);

}  // namespace ipccf
