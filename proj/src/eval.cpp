#include "ipccf/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace ipccf {

std::vector<std::vector<Index>> full_rank_topk(const Mat& e_prime,
                                               const InteractionDataset& dataset,
                                               Index k) {
  const Index num_users = dataset.num_users;
  const Index num_items = dataset.num_items;
  std::vector<std::vector<Index>> ranked(static_cast<std::size_t>(num_users));
  const auto items_block = e_prime.bottomRows(num_items);
  Vec scores(num_items);
  std::vector<Index> order;
  for (Index u = 0; u < num_users; ++u) {
    if (dataset.test_adjacency[static_cast<std::size_t>(u)].empty()) continue;
    scores.noalias() = items_block * e_prime.row(u).transpose();
    for (Index i : dataset.train_adjacency[static_cast<std::size_t>(u)]) {
      scores[i] = -std::numeric_limits<Real>::infinity();
    }
    order.resize(static_cast<std::size_t>(num_items));
    std::iota(order.begin(), order.end(), Index{0});
    const auto take = std::min<Index>(k, num_items);
    auto by_score = [&](Index a, Index b) {
      if (scores[a] != scores[b]) return scores[a] > scores[b];
      return a < b;
    };
    std::partial_sort(order.begin(), order.begin() + take, order.end(), by_score);
    auto& list = ranked[static_cast<std::size_t>(u)];
    for (Index r = 0; r < take; ++r) {
      if (std::isinf(scores[order[static_cast<std::size_t>(r)]])) break;  // masked
      list.push_back(order[static_cast<std::size_t>(r)]);
    }
  }
  return ranked;
}

RankingMetrics ranking_metrics(const std::vector<std::vector<Index>>& ranked,
                               const std::vector<std::vector<Index>>& test_adjacency,
                               Index k) {
  if (k < 1) throw ConfigError("K must be >= 1");
  RankingMetrics out;
  Real precision_sum = 0, recall_sum = 0, ndcg_sum = 0;
  for (std::size_t u = 0; u < test_adjacency.size(); ++u) {
    const auto& test = test_adjacency[u];
    if (test.empty()) continue;
    const auto& list = ranked[u];
    Index hits = 0;
    Real dcg = 0;
    const Index depth = std::min<Index>(k, static_cast<Index>(list.size()));
    for (Index r = 0; r < depth; ++r) {
      if (std::binary_search(test.begin(), test.end(),
                             list[static_cast<std::size_t>(r)])) {
        ++hits;
        dcg += 1.0 / std::log2(static_cast<Real>(r) + 2.0);
      }
    }
    Real idcg = 0;
    const Index ideal = std::min<Index>(k, static_cast<Index>(test.size()));
    for (Index r = 0; r < ideal; ++r) {
      idcg += 1.0 / std::log2(static_cast<Real>(r) + 2.0);
    }
    precision_sum += static_cast<Real>(hits) / static_cast<Real>(k);
    recall_sum += static_cast<Real>(hits) / static_cast<Real>(test.size());
    ndcg_sum += idcg > 0 ? dcg / idcg : 0.0;
    ++out.users_counted;
  }
  if (out.users_counted > 0) {
    const Real n = static_cast<Real>(out.users_counted);
    out.precision = precision_sum / n;
    out.recall = recall_sum / n;
    out.ndcg = ndcg_sum / n;
  }
  return out;
}

Real mad_metric(const Mat& e_prime, Index begin, Index end, Index sample,
                std::uint64_t seed, Index exact_limit) {
  const Index span = end - begin;
  if (span <= 0) throw DataError("mad_metric on empty node range");
  if (span == 1) return 0.0;
  Mat normalized = Mat::Zero(span, e_prime.cols());
  for (Index i = 0; i < span; ++i) {
    const Real n = e_prime.row(begin + i).norm();
    if (n > 1e-12) normalized.row(i) = e_prime.row(begin + i) / n;
  }
  // Cosine distance clamped to the metric's [0, 2] domain; dot products of
  // identical unit rows land within rounding noise of 1, which must read as
  // distance zero.
  auto distance = [&](Index i, Index j) {
    const Real d =
        std::clamp(1.0 - normalized.row(i).dot(normalized.row(j)), 0.0, 2.0);
    return d < 1e-12 ? 0.0 : d;
  };
  Real total = 0;
  if (span <= exact_limit) {
    // All unordered pairs.
    Index pairs = 0;
    for (Index i = 0; i < span; ++i) {
      for (Index j = i + 1; j < span; ++j) {
        total += distance(i, j);
        ++pairs;
      }
    }
    return total / static_cast<Real>(pairs);
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<Index> pick(0, span - 1);
  Index drawn = 0;
  while (drawn < sample) {
    const Index i = pick(rng);
    const Index j = pick(rng);
    if (i == j) continue;
    total += distance(i, j);
    ++drawn;
  }
  return total / static_cast<Real>(sample);
}

std::vector<GroupMetrics> sparsity_report(
    const InteractionDataset& dataset,
    const std::vector<std::vector<Index>>& ranked,
    const std::vector<Index>& bucket_edges, Index k) {
  for (std::size_t i = 1; i < bucket_edges.size(); ++i) {
    if (bucket_edges[i] <= bucket_edges[i - 1]) {
      throw ConfigError("bucket edges must be strictly ascending");
    }
  }
  std::vector<std::pair<Index, Index>> bounds;  // [lo, hi), hi 0 = open
  Index lo = 0;
  for (Index edge : bucket_edges) {
    bounds.emplace_back(lo, edge);
    lo = edge;
  }
  bounds.emplace_back(lo, 0);

  std::vector<GroupMetrics> out;
  for (const auto& [b_lo, b_hi] : bounds) {
    std::vector<std::vector<Index>> masked_test(dataset.test_adjacency.size());
    bool any = false;
    for (std::size_t u = 0; u < dataset.test_adjacency.size(); ++u) {
      const auto count =
          static_cast<Index>(dataset.train_adjacency[u].size());
      if (count < b_lo || (b_hi != 0 && count >= b_hi)) continue;
      if (dataset.test_adjacency[u].empty()) continue;
      masked_test[u] = dataset.test_adjacency[u];
      any = true;
    }
    if (!any) continue;
    GroupMetrics gm;
    gm.lo = b_lo;
    gm.hi = b_hi;
    gm.metrics = ranking_metrics(ranked, masked_test, k);
    out.push_back(std::move(gm));
  }
  return out;
}

EvalReport evaluate(const Mat& e_prime, const InteractionDataset& dataset,
                    const std::vector<Index>& k_values,
                    const std::vector<Index>& bucket_edges, std::uint64_t mad_seed,
                    Index mad_sample) {
  if (k_values.empty()) throw ConfigError("at least one K value required");
  EvalReport report;
  const Index max_k = *std::max_element(k_values.begin(), k_values.end());
  const auto ranked = full_rank_topk(e_prime, dataset, max_k);
  for (Index k : k_values) {
    report.by_k[k] = ranking_metrics(ranked, dataset.test_adjacency, k);
  }
  report.mad_users = mad_metric(e_prime, 0, dataset.num_users, mad_sample, mad_seed);
  report.mad_items = mad_metric(e_prime, dataset.num_users,
                                dataset.num_users + dataset.num_items, mad_sample,
                                mix_seed(mad_seed, 1));
  if (!bucket_edges.empty()) {
    const Index k0 = *std::min_element(k_values.begin(), k_values.end());
    report.groups = sparsity_report(dataset, ranked, bucket_edges, k0);
  }
  return report;
}

namespace {

std::string fmt(Real v) {
  std::ostringstream os;
  os.precision(6);
  os << std::fixed << v;
  return os.str();
}

}  // namespace

std::string EvalReport::to_tsv() const {
  std::ostringstream os;
  os << "metric";
  for (const auto& [k, m] : by_k) os << "\t@" << k;
  os << "\n";
  const char* names[3] = {"precision", "recall", "ndcg"};
  for (int row = 0; row < 3; ++row) {
    os << names[row];
    for (const auto& [k, m] : by_k) {
      const Real v = row == 0 ? m.precision : row == 1 ? m.recall : m.ndcg;
      os << "\t" << fmt(v);
    }
    os << "\n";
  }
  os << "mad_users\t" << fmt(mad_users) << "\n";
  os << "mad_items\t" << fmt(mad_items) << "\n";
  for (const auto& g : groups) {
    os << "group[" << g.lo << ",";
    if (g.hi == 0) {
      os << "inf";
    } else {
      os << g.hi;
    }
    os << ")\tusers=" << g.metrics.users_counted << "\tprecision="
       << fmt(g.metrics.precision) << "\trecall=" << fmt(g.metrics.recall)
       << "\tndcg=" << fmt(g.metrics.ndcg) << "\n";
  }
  return os.str();
}

std::string EvalReport::to_key_values() const {
  std::ostringstream os;
  for (const auto& [k, m] : by_k) {
    os << "precision@" << k << "=" << fmt(m.precision) << "\n";
    os << "recall@" << k << "=" << fmt(m.recall) << "\n";
    os << "ndcg@" << k << "=" << fmt(m.ndcg) << "\n";
  }
  os << "mad_users=" << fmt(mad_users) << "\n";
  os << "mad_items=" << fmt(mad_items) << "\n";
  for (const auto& g : groups) {
    os << "group." << g.lo << "." << (g.hi == 0 ? std::string("inf") : std::to_string(g.hi))
       << ".recall=" << fmt(g.metrics.recall) << "\n";
  }
  return os.str();
}

}  // namespace ipccf
