// Acceptance suite: one line per criterion, nonzero exit on any failure.
//
// Criterion 5 runs the overfit configuration exactly as specified and is
// expected to stay red: with 50x50 blocks at within-block probability 0.3
// and an 80/20 split, the ~38 unobserved same-block items per user are
// statistically exchangeable, so no ranker can exceed E[Recall@20] ~ 20/38
// ~ 0.53 (NDCG ~ 0.29). The suite prints the planted-structure oracle next
// to the measured values so the gap to the fixed thresholds is visible.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "ipccf/checkpoint.hpp"
#include "ipccf/train.hpp"
#include "support/oracles.hpp"
#include "support/synthetic.hpp"

using namespace ipccf;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Mat random_matrix(Index rows, Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<Real> dist(-1.0, 1.0);
  Mat m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) m(i, j) = dist(rng);
  }
  return m;
}

std::string fmt(const char* pattern, auto... args) {
  char buffer[512];
  std::snprintf(buffer, sizeof(buffer), pattern, args...);
  return buffer;
}

// 1. Gradient correctness on the 10x10 toy with every loss term active.
Outcome criterion_gradcheck() {
  const auto t0 = std::chrono::steady_clock::now();
  auto ds = synth::random_bipartite(10, 10, 0.3, 12);
  split_train_test(ds, 0.8, 3);
  RunConfig config;
  config.embed_dim = 4;
  config.num_intents = 2;
  config.num_layers = 2;
  config.batch_size = 64;
  const auto report = run_gradcheck(config, ds);
  Real worst = 0;
  for (const auto& g : report.groups) worst = std::max(worst, g.max_rel_error);
  const double secs = seconds_since(t0);
  return {report.pass && secs < 60.0,
          fmt("max_rel_error=%.2e over %zu groups, %.1fs (budget 60s)", worst,
              report.groups.size(), secs)};
}

// 2. Row-normalization invariants plus exact symmetric weights.
Outcome criterion_normalization() {
  std::mt19937_64 rng(100);
  Index checked_rows = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::uniform_int_distribution<Index> users_dist(10, 100);
    std::uniform_int_distribution<Index> items_dist(10, 100);
    const Index num_users = users_dist(rng);
    const Index num_items = items_dist(rng);
    std::uniform_real_distribution<Real> density_dist(0.05, 0.25);
    auto ds = synth::random_bipartite(num_users, num_items, density_dist(rng),
                                      1000 + trial);
    split_train_test(ds, 0.8, trial);
    const auto ops = build_graph_operators(ds, {0.3, 4});

    for (Index row = 0; row < ops.high_order_norm.outerSize(); ++row) {
      Real total = 0;
      Index entries = 0;
      for (SpMat::InnerIterator it(ops.high_order_norm, row); it; ++it) {
        total += it.value();
        ++entries;
      }
      if (entries > 0 && std::abs(total - 1.0) > 1e-6) {
        return {false, fmt("high-order row %lld sums to %.8f (trial %d)",
                           static_cast<long long>(row), total, trial)};
      }
    }

    for (Index row = 0; row < ops.direct_norm.outerSize(); ++row) {
      for (SpMat::InnerIterator it(ops.direct_norm, row); it; ++it) {
        const Index user = std::min(it.row(), it.col());
        const Index item = std::max(it.row(), it.col()) - ds.num_users;
        if (it.value() != oracle::direct_norm_weight(ds, user, item)) {
          return {false, fmt("direct weight mismatch at (%lld,%lld), trial %d",
                             static_cast<long long>(it.row()),
                             static_cast<long long>(it.col()), trial)};
        }
      }
    }

    const Index n = ds.num_users + ds.num_items;
    Tape tape;
    Var w = tape.leaf(random_matrix(n, 6, 2000 + trial), false);
    Var c = tape.leaf(random_matrix(3, 6, 3000 + trial), false);
    Var m = tape.leaf(random_matrix(n, 6, 4000 + trial), false);
    for (const EdgePattern* pattern : {&ops.direct_edges, &ops.high_order_edges}) {
      if (pattern->size() == 0) continue;
      IntentInputs inputs{w, pattern, m};
      const auto result = intent_propagate(tape, inputs, c);
      const Mat weights = tape.value(result.edge_weights);
      Vec totals = Vec::Zero(n);
      for (Index e = 0; e < pattern->size(); ++e) {
        totals[pattern->src[static_cast<std::size_t>(e)]] += weights(e, 0);
      }
      for (Index node = 0; node < n; ++node) {
        if (totals[node] != 0.0 && std::abs(totals[node] - 1.0) > 1e-6) {
          return {false, fmt("intent operator row %lld sums to %.8f (trial %d)",
                             static_cast<long long>(node), totals[node], trial)};
        }
        if (totals[node] != 0.0) ++checked_rows;
      }
    }
  }
  return {true, fmt("100 graphs, %lld stochastic rows verified",
                    static_cast<long long>(checked_rows))};
}

// 3. High-order extraction equals all-pairs Jaccard filtering.
Outcome criterion_high_order_oracle() {
  std::mt19937_64 rng(200);
  Index compared = 0;
  for (int trial = 0; trial < 50; ++trial) {
    std::uniform_int_distribution<Index> size_dist(20, 60);
    auto ds = synth::random_bipartite(size_dist(rng), size_dist(rng), 0.12,
                                      5000 + trial);
    split_train_test(ds, 0.8, trial);
    for (const Real eta : {0.1, 0.5, 0.8}) {
      for (const Index q : {Index{0}, Index{3}, Index{5}}) {
        const auto expected = oracle::high_order_full(ds, eta, q);
        const auto got = extract_high_order(ds, {eta, q});
        if (static_cast<std::size_t>(got.nonZeros()) != expected.size()) {
          return {false,
                  fmt("entry count %lld vs oracle %zu (trial %d, eta=%.1f, q=%lld)",
                      static_cast<long long>(got.nonZeros()), expected.size(),
                      trial, eta, static_cast<long long>(q))};
        }
        for (Index row = 0; row < got.outerSize(); ++row) {
          for (SpMat::InnerIterator it(got, row); it; ++it) {
            const auto found = expected.find({it.row(), it.col()});
            if (found == expected.end() ||
                std::abs(found->second - it.value()) > 1e-12) {
              return {false, fmt("entry (%lld,%lld) disagrees with oracle",
                                 static_cast<long long>(it.row()),
                                 static_cast<long long>(it.col()))};
            }
            ++compared;
          }
        }
      }
    }
  }
  return {true, fmt("50 graphs x 9 threshold combinations, %lld entries",
                    static_cast<long long>(compared))};
}

// 4. Degenerate mode equals the independent dense propagation loop.
Outcome criterion_lightgcn_equivalence() {
  Real worst = 0;
  for (int trial = 0; trial < 10; ++trial) {
    auto ds = synth::random_bipartite(40, 50, 0.08, 6000 + trial);
    split_train_test(ds, 0.8, trial);
    RunConfig config;
    config.toggles = AblationToggles{false, false, false, false, false,
                                     false, false, false, false};
    const auto ops = build_operators(ds, config);
    const Index n = ds.num_users + ds.num_items;
    for (const Index layers : {Index{1}, Index{2}, Index{3}}) {
      const auto params = init_model_params(n, 8, 2, 7000 + trial);
      const Mat ours = final_embedding(params, ops, layers, config.toggles);
      const Mat reference = oracle::lightgcn_reference(
          Mat(ops.direct_norm), params.node_embeddings, layers);
      worst = std::max(worst, (ours - reference).cwiseAbs().maxCoeff());
    }
  }
  return {worst < 1e-6, fmt("max |difference| = %.2e over 10 graphs x 3 depths "
                            "(tolerance 1e-6)",
                            worst)};
}

// 5. Overfit thresholds on the planted 2-block set, exactly as specified.
Outcome criterion_overfit() {
  const auto t0 = std::chrono::steady_clock::now();
  auto ds = synth::two_block(50, 50, 0.3, 42);
  split_train_test(ds, 0.8, 1);
  RunConfig config;
  config.embed_dim = 16;
  config.batch_size = 512;
  config.epochs = 200;
  config.eval_k = {20};
  const auto ops = build_operators(ds, config);
  const auto outcome = train_model(config, ds, ops);
  const auto& metrics = outcome.report.by_k.at(20);
  const double secs = seconds_since(t0);

  // Planted-structure oracle: a ranker that knows the blocks exactly and
  // orders the exchangeable candidates arbitrarily.
  std::mt19937_64 rng(9);
  std::vector<std::vector<Index>> ranked(static_cast<std::size_t>(ds.num_users));
  for (Index u = 0; u < ds.num_users; ++u) {
    if (ds.test_adjacency[static_cast<std::size_t>(u)].empty()) continue;
    const Index block = u < 50 ? 0 : 1;
    std::vector<Index> candidates;
    for (Index i = block * 50; i < (block + 1) * 50; ++i) {
      if (!ds.user_has_train(u, i)) candidates.push_back(i);
    }
    std::shuffle(candidates.begin(), candidates.end(), rng);
    candidates.resize(std::min<std::size_t>(20, candidates.size()));
    ranked[static_cast<std::size_t>(u)] = candidates;
  }
  const auto ceiling = ranking_metrics(ranked, ds.test_adjacency, 20);

  const bool pass = metrics.recall >= 0.60 && metrics.ndcg >= 0.40 && secs < 600.0;
  return {pass,
          fmt("recall@20=%.4f (>=0.60), ndcg@20=%.4f (>=0.40), %.0fs (budget 600s); "
              "exchangeability ceiling on this data: recall=%.4f ndcg=%.4f",
              metrics.recall, metrics.ndcg, secs, ceiling.recall, ceiling.ndcg)};
}

InteractionDataset ablation_dataset(std::string* source) {
  if (const char* path = std::getenv("IPCCF_GOWALLA")) {
    auto full = load_interactions(path, InputFormat::AdjacencyList);
    // Keep the 5,000 most-active users and re-index.
    std::vector<std::pair<Index, Index>> by_degree;
    for (Index u = 0; u < full.num_users; ++u) {
      by_degree.emplace_back(
          static_cast<Index>(full.train_adjacency[static_cast<std::size_t>(u)].size()),
          u);
    }
    std::sort(by_degree.rbegin(), by_degree.rend());
    std::vector<std::pair<std::string, std::string>> pairs;
    const Index take = std::min<Index>(5000, full.num_users);
    for (Index rank = 0; rank < take; ++rank) {
      const Index u = by_degree[static_cast<std::size_t>(rank)].second;
      for (Index i : full.train_adjacency[static_cast<std::size_t>(u)]) {
        pairs.emplace_back(full.user_ids[static_cast<std::size_t>(u)],
                           full.item_ids[static_cast<std::size_t>(i)]);
      }
    }
    *source = "gowalla subsample";
    auto ds = dataset_from_pairs(pairs);
    split_train_test(ds, 0.8, 5);
    return ds;
  }
  *source = "clustered synthetic stand-in";
  auto ds = synth::clustered(1200, 800, 8, 8, 40, 0.1, 77);
  split_train_test(ds, 0.8, 5);
  return ds;
}

// 6. Full model vs the intent-propagation ablation, equal epochs and seeds.
Outcome criterion_ablation_direction() {
  std::string source;
  const auto ds = ablation_dataset(&source);
  auto run_variant = [&](bool ip_on) {
    RunConfig config;
    config.embed_dim = 32;
    config.num_intents = 8;
    config.num_layers = 2;
    config.batch_size = 10240;
    config.epochs = 15;
    config.eval_k = {20};
    config.seed_init = 11;
    config.seed_sampling = 12;
    if (!ip_on) {
      config.toggles.ip = false;
      config.toggles = config.toggles.normalized();
    }
    const auto ops = build_operators(ds, config);
    return train_model(config, ds, ops).report.by_k.at(20).recall;
  };
  const Real full = run_variant(true);
  const Real without_ip = run_variant(false);
  return {full > without_ip,
          fmt("%s: recall@20 full=%.4f vs w/o ip=%.4f (strictly higher required)",
              source.c_str(), full, without_ip)};
}

// 7. Ranking metrics equal the brute-force sort oracle.
Outcome criterion_metric_oracle() {
  {  // Worked example first: one relevant item at rank 1, K=2.
    const std::vector<std::vector<Index>> ranked = {{4, 7}};
    const std::vector<std::vector<Index>> test = {{4}};
    const auto m = ranking_metrics(ranked, test, 2);
    if (m.precision != 0.5 || m.recall != 1.0 || m.ndcg != 1.0) {
      return {false, fmt("worked example gave P=%.3f R=%.3f N=%.3f", m.precision,
                         m.recall, m.ndcg)};
    }
  }
  std::mt19937_64 rng(300);
  for (int trial = 0; trial < 1000; ++trial) {
    std::uniform_int_distribution<Index> users_dist(1, 12);
    std::uniform_int_distribution<Index> items_dist(2, 15);
    const Index num_users = users_dist(rng);
    const Index num_items = items_dist(rng);
    std::uniform_int_distribution<Index> k_dist(1, num_items + 2);
    const Index k = k_dist(rng);
    InteractionDataset ds;
    ds.num_users = num_users;
    ds.num_items = num_items;
    ds.split_done = true;
    ds.train_adjacency.resize(static_cast<std::size_t>(num_users));
    ds.test_adjacency.resize(static_cast<std::size_t>(num_users));
    std::uniform_real_distribution<Real> coin(0.0, 1.0);
    for (Index u = 0; u < num_users; ++u) {
      for (Index i = 0; i < num_items; ++i) {
        const Real r = coin(rng);
        if (r < 0.2) ds.train_adjacency[static_cast<std::size_t>(u)].push_back(i);
        else if (r < 0.45) ds.test_adjacency[static_cast<std::size_t>(u)].push_back(i);
      }
    }
    const Mat e = random_matrix(num_users + num_items, 5, 8000 + trial);
    const auto ranked = full_rank_topk(e, ds, k);
    const auto got = ranking_metrics(ranked, ds.test_adjacency, k);
    Real precision = 0, recall = 0, ndcg = 0;
    Index counted = 0;
    for (Index u = 0; u < num_users; ++u) {
      const auto su = static_cast<std::size_t>(u);
      if (ds.test_adjacency[su].empty()) continue;
      const Vec scores = e.bottomRows(num_items) * e.row(u).transpose();
      const auto m = oracle::metrics_from_scores(scores, ds.train_adjacency[su],
                                                 ds.test_adjacency[su], k);
      precision += m.precision;
      recall += m.recall;
      ndcg += m.ndcg;
      ++counted;
    }
    if (counted == 0) continue;
    const Real n = static_cast<Real>(counted);
    if (std::abs(got.precision - precision / n) > 1e-12 ||
        std::abs(got.recall - recall / n) > 1e-12 ||
        std::abs(got.ndcg - ndcg / n) > 1e-12 || got.users_counted != counted) {
      return {false, fmt("mismatch vs sort oracle at trial %d", trial)};
    }
  }
  return {true, "1000 random instances plus the worked example"};
}

// 8. MAD sanity values and mode agreement.
Outcome criterion_mad() {
  const Mat same = Mat::Ones(40, 8);
  if (mad_metric(same, 0, 40, 100, 1) != 0.0) {
    return {false, "identical embeddings should give exactly 0"};
  }
  std::mt19937_64 rng(400);
  std::normal_distribution<Real> gauss(0.0, 1.0);
  Mat random_embeddings(500, 32);
  for (Index i = 0; i < 500; ++i) {
    for (Index j = 0; j < 32; ++j) random_embeddings(i, j) = gauss(rng);
  }
  const Real gaussian_mad = mad_metric(random_embeddings, 0, 500, 0, 1);
  if (gaussian_mad < 0.8 || gaussian_mad > 1.2) {
    return {false, fmt("gaussian MAD %.4f outside [0.8, 1.2]", gaussian_mad)};
  }
  const Real exact = mad_metric(random_embeddings, 0, 400, 0, 1);
  const Real sampled =
      mad_metric(random_embeddings, 0, 400, 4000, 3, /*exact_limit=*/10);
  if (std::abs(exact - sampled) > 0.02) {
    return {false, fmt("exact %.4f vs sampled %.4f differ by more than 0.02",
                       exact, sampled)};
  }
  return {true, fmt("gaussian MAD %.3f, |exact-sampled| = %.4f", gaussian_mad,
                    std::abs(exact - sampled))};
}

// 9. Bitwise-level determinism of training, checkpoints, and reports.
Outcome criterion_determinism() {
  namespace fs = std::filesystem;
  auto run_once = [&](const std::string& tag) {
    auto ds = synth::random_bipartite(50, 60, 0.12, 99);
    split_train_test(ds, 0.8, 7);
    RunConfig config;
    config.embed_dim = 8;
    config.num_intents = 4;
    config.num_layers = 2;
    config.batch_size = 256;
    config.epochs = 10;
    config.eval_k = {10, 20};
    const auto ops = build_operators(ds, config);
    const auto outcome = train_model(config, ds, ops);
    const auto path = (fs::temp_directory_path() / ("ipccf_det_" + tag)).string();
    CheckpointHeader header{static_cast<std::uint64_t>(ds.num_users),
                            static_cast<std::uint64_t>(ds.num_items), 8, 4, 2};
    save_checkpoint(path, header, outcome.params);
    const Checkpoint cp = load_checkpoint(path);
    fs::remove(path);
    const Mat e_prime = final_embedding(cp.params, ops, 2, config.toggles);
    const EvalReport report = evaluate(e_prime, ds, config.eval_k);
    return std::pair{e_prime, report};
  };
  const auto [e1, r1] = run_once("a");
  const auto [e2, r2] = run_once("b");
  const Real diff = (e1 - e2).cwiseAbs().maxCoeff();
  const bool same_report = r1 == r2 && r1.to_key_values() == r2.to_key_values();
  return {diff < 1e-6 && same_report,
          fmt("max |E' difference| = %.2e (tolerance 1e-6), reports %s", diff,
              same_report ? "identical" : "DIFFER")};
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    Outcome (*run)();
  };
  const std::vector<Criterion> criteria = {
      {"gradient correctness (toy, all loss terms)", criterion_gradcheck},
      {"normalization invariants (100 random graphs)", criterion_normalization},
      {"high-order extraction vs all-pairs oracle", criterion_high_order_oracle},
      {"degenerate-mode equivalence to dense reference", criterion_lightgcn_equivalence},
      {"overfit thresholds on the 2-block planted set", criterion_overfit},
      {"ablation direction: full vs w/o intent propagation", criterion_ablation_direction},
      {"ranking metrics vs brute-force sort oracle", criterion_metric_oracle},
      {"MAD sanity and sampling agreement", criterion_mad},
      {"determinism of training, checkpoints, reports", criterion_determinism},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome outcome;
    try {
      outcome = criteria[i].run();
    } catch (const std::exception& e) {
      outcome = {false, std::string("exception: ") + e.what()};
    }
    if (!outcome.pass) ++failures;
    std::printf("[%s] criterion %zu: %s — %s\n", outcome.pass ? "PASS" : "FAIL",
                i + 1, criteria[i].name, outcome.detail.c_str());
    std::fflush(stdout);
  }
  if (failures > 0) {
    std::printf("%d of %zu criteria failed\n", failures, criteria.size());
  } else {
    std::printf("all %zu criteria passed\n", criteria.size());
  }
  return failures;
}
