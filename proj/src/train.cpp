#include "ipccf/train.hpp"

#include <chrono>
#include <cmath>

namespace ipccf {

InteractionDataset load_dataset(const RunConfig& config) {
  InteractionDataset dataset = load_interactions(config.train_file, config.data_format);
  split_train_test(dataset, config.split_ratio, config.seed_split);
  return dataset;
}

GraphOperators build_operators(const InteractionDataset& dataset,
                               const RunConfig& config) {
  GraphOperators ops;
  ops.direct = build_direct_adjacency(dataset);
  ops.direct_norm = normalize_direct(ops.direct);
  const Index n = ops.direct.rows();
  if (config.toggles.ho) {
    ops.high_order =
        extract_high_order(dataset, ExtractionConfig{config.eta, config.top_q});
  } else {
    ops.high_order = SpMat(n, n);
  }
  ops.high_order_norm = normalize_high_order(ops.high_order);
  ops.direct_edges = edge_pattern_from(ops.direct);
  ops.high_order_edges = edge_pattern_from(ops.high_order);
  return ops;
}

Mat final_embedding(const ModelParams& params, const GraphOperators& ops,
                    Index layers, const AblationToggles& toggles) {
  Tape tape;
  ParamVars vars = register_params(tape, params, /*trainable=*/false);
  ForwardTrace trace = multilayer_forward(tape, vars, ops, layers, toggles);
  return tape.value(trace.e_prime);
}

namespace {

Real term_value(const Tape& tape, Var v) {
  return v.valid() ? tape.value(v)(0, 0) : 0.0;
}

}  // namespace

TrainOutcome train_model(const RunConfig& config, const InteractionDataset& dataset,
                         const GraphOperators& ops,
                         const std::function<void(const EpochLog&)>& on_epoch) {
  config.validate();
  const AblationToggles toggles = config.toggles.normalized();
  const Index num_nodes = dataset.num_users + dataset.num_items;

  TrainOutcome outcome;
  outcome.params = init_model_params(num_nodes, config.embed_dim,
                                     config.num_intents, config.seed_init);
  OptimizerState optimizer;
  optimizer.learning_rate = config.learning_rate;

  BprSampler sampler(dataset, config.seed_sampling);
  const Index steps_per_epoch = std::max<Index>(
      1, (dataset.train_size() + config.batch_size - 1) / config.batch_size);

  Real best_recall = -1.0;
  Index epochs_since_best = 0;

  for (Index epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    EpochLog entry;
    entry.epoch = epoch;
    for (Index step = 0; step < steps_per_epoch; ++step) {
      const BprBatch batch = sampler.sample(config.batch_size);
      Tape tape;
      ParamVars vars = register_params(tape, outcome.params);
      ForwardTrace trace =
          multilayer_forward(tape, vars, ops, config.num_layers, toggles);
      Var pos = predict_scores(tape, trace.e_prime, batch.users, batch.pos_items,
                               dataset.num_users);
      Var neg = predict_scores(tape, trace.e_prime, batch.users, batch.neg_items,
                               dataset.num_users);
      const ContrastBatch cb = contrast_batch_from(batch, dataset.num_users);
      LossTerms terms = build_total_loss(tape, trace, pos, neg, cb, config.weights,
                                         vars, toggles);
      tape.backward(terms.total);
      adam_step(outcome.params, read_gradients(tape, vars), optimizer);

      entry.total += tape.value(terms.total)(0, 0);
      entry.bpr += tape.value(terms.bpr)(0, 0);
      entry.seq += term_value(tape, terms.seq);
      entry.prop += term_value(tape, terms.prop);
      entry.intent += term_value(tape, terms.intent);
    }
    const Real inv_steps = 1.0 / static_cast<Real>(steps_per_epoch);
    entry.total *= inv_steps;
    entry.bpr *= inv_steps;
    entry.seq *= inv_steps;
    entry.prop *= inv_steps;
    entry.intent *= inv_steps;
    entry.seconds = std::chrono::duration<Real>(
                        std::chrono::steady_clock::now() - start)
                        .count();
    outcome.log.push_back(entry);
    outcome.epochs_run = epoch;
    if (on_epoch) on_epoch(entry);

    if (config.eval_every > 0 && epoch % config.eval_every == 0) {
      const Mat snapshot =
          final_embedding(outcome.params, ops, config.num_layers, toggles);
      const auto ranked = full_rank_topk(snapshot, dataset, config.eval_k.front());
      const Real recall =
          ranking_metrics(ranked, dataset.test_adjacency, config.eval_k.front())
              .recall;
      if (recall > best_recall) {
        best_recall = recall;
        epochs_since_best = 0;
      } else if (config.early_stop_patience > 0 &&
                 ++epochs_since_best >= config.early_stop_patience) {
        break;
      }
    }
  }

  outcome.e_prime =
      final_embedding(outcome.params, ops, config.num_layers, toggles);
  outcome.report = evaluate(outcome.e_prime, dataset, config.eval_k,
                            config.sparsity_buckets);
  return outcome;
}

GradCheckReport run_gradcheck(const RunConfig& config,
                              const InteractionDataset& dataset, Real eps,
                              Real tol, Index max_nodes) {
  const Index num_nodes = dataset.num_users + dataset.num_items;
  if (num_nodes > max_nodes) {
    throw SizeBoundError("gradient check restricted to <= " +
                         std::to_string(max_nodes) + " nodes, got " +
                         std::to_string(num_nodes));
  }
  const AblationToggles toggles = config.toggles.normalized();
  const GraphOperators ops = build_operators(dataset, config);
  const ModelParams params = init_model_params(num_nodes, config.embed_dim,
                                               config.num_intents, config.seed_init);
  BprSampler sampler(dataset, config.seed_sampling);
  const BprBatch batch =
      sampler.sample(std::min<Index>(config.batch_size, dataset.train_size()));
  const ContrastBatch cb = contrast_batch_from(batch, dataset.num_users);

  // Group g's leaf is the probed tensor; the other groups stay constant.
  auto build_for = [&](int group) {
    return [&, group](Tape& tape, Var x) -> Var {
      ParamVars vars;
      vars.node_embeddings =
          group == 0 ? x : tape.constant(params.node_embeddings);
      vars.intent_embeddings =
          group == 1 ? x : tape.constant(params.intent_embeddings);
      vars.fusion_weights =
          group == 2 ? x : tape.constant(params.fusion_weights);
      vars.fusion_bias = group == 3 ? x : tape.constant(params.fusion_bias);
      ForwardTrace trace =
          multilayer_forward(tape, vars, ops, config.num_layers, toggles);
      Var pos = predict_scores(tape, trace.e_prime, batch.users, batch.pos_items,
                               dataset.num_users);
      Var neg = predict_scores(tape, trace.e_prime, batch.users, batch.neg_items,
                               dataset.num_users);
      return build_total_loss(tape, trace, pos, neg, cb, config.weights, vars,
                              toggles)
          .total;
    };
  };

  const char* names[4] = {"node_embeddings", "intent_embeddings",
                          "fusion_weights", "fusion_bias"};
  const Mat* points[4] = {&params.node_embeddings, &params.intent_embeddings,
                          &params.fusion_weights, &params.fusion_bias};
  GradCheckReport report;
  report.tolerance = tol;
  for (int g = 0; g < 4; ++g) {
    const auto fd = ad::finite_diff_check<Real>(build_for(g), *points[g], eps, tol);
    report.groups.push_back({names[g], fd.max_rel_error, fd.pass});
    report.pass = report.pass && fd.pass;
  }
  return report;
}

}  // namespace ipccf
