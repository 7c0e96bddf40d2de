#include "ipccf/model.hpp"

#include <cmath>
#include <random>

namespace ipccf {

namespace {

Mat uniform_matrix(Index rows, Index cols, Real bound, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<Real> dist(-bound, bound);
  Mat m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) m(i, j) = dist(rng);
  }
  return m;
}

}  // namespace

ModelParams init_model_params(Index num_nodes, Index dim, Index num_intents,
                              std::uint64_t seed) {
  if (dim < 1 || num_intents < 1) {
    throw ConfigError("embedding dimension and intent count must be >= 1");
  }
  ModelParams params;
  const Real bound = 0.5 / std::sqrt(static_cast<Real>(dim));
  const Real fusion_bound = 0.5 / std::sqrt(static_cast<Real>(4 * dim));
  params.node_embeddings = uniform_matrix(num_nodes, dim, bound, mix_seed(seed, 0));
  params.intent_embeddings =
      uniform_matrix(num_intents, dim, bound, mix_seed(seed, 1));
  params.fusion_weights =
      uniform_matrix(4 * dim, dim, fusion_bound, mix_seed(seed, 2));
  params.fusion_bias = Mat::Zero(1, dim);
  return params;
}

ParamVars register_params(Tape& tape, const ModelParams& params, bool trainable) {
  ParamVars vars;
  vars.node_embeddings = tape.leaf(params.node_embeddings, trainable);
  vars.intent_embeddings = tape.leaf(params.intent_embeddings, trainable);
  vars.fusion_weights = tape.leaf(params.fusion_weights, trainable);
  vars.fusion_bias = tape.leaf(params.fusion_bias, trainable);
  return vars;
}

Var structural_propagation(Tape& tape, const SpMat& op, Var input) {
  return ad::spmm(tape, op, input);
}

Var fuse_semantic(Tape& tape, Var xd, Var xh, Var yd, Var yh,
                  const ParamVars& params) {
  Var stacked = ad::concat_cols(tape, {xd, xh, yd, yh});
  return ad::affine(tape, stacked, params.fusion_weights, params.fusion_bias);
}

IntentResult intent_propagate(Tape& tape, const IntentInputs& inputs,
                              Var intent_table) {
  const EdgePattern& pattern = *inputs.pattern;
  const Index n = pattern.rows;
  const Index num_intents = tape.rows(intent_table);
  constexpr Real kEps = 1e-12;

  // Edge intensity from the semantic tensor, shifted into [0, 1].
  Var cosines = ad::row_cosine_pairs(tape, inputs.semantic, pattern.src, pattern.dst);
  Var intensity = ad::scale(tape, ad::add_scalar(tape, cosines, 1.0), 0.5);
  Var base_weight = tape.constant(pattern.weight);
  Var gated = ad::mul(tape, intensity, base_weight);

  // Per-intent shares of every edge.
  Var w_src = ad::gather_rows(tape, inputs.semantic, pattern.src);
  Var w_dst = ad::gather_rows(tape, inputs.semantic, pattern.dst);
  Var interaction = ad::mul(tape, w_src, w_dst);
  Var intent_scores = ad::matmul_nt(tape, interaction, intent_table);
  Var intent_shares = ad::softmax_rows(tape, intent_scores);
  Var per_intent = ad::row_scale(tape, intent_shares, gated);

  // Row-normalize each intent, then average the K operators.
  Var row_totals = ad::scatter_row_sum(tape, per_intent, pattern.src, n);
  Var edge_totals = ad::gather_rows(tape, row_totals, pattern.src);
  Var normalized = ad::div_floor(tape, per_intent, edge_totals, kEps);
  Var edge_weights = ad::scale(tape, ad::row_sum(tape, normalized),
                               1.0 / static_cast<Real>(num_intents));

  Var propagated =
      ad::edge_spmm(tape, pattern.src, pattern.dst, edge_weights, inputs.message, n);
  return IntentResult{propagated, edge_weights};
}

LayerVars helix_step(Tape& tape, Var e_prev, const GraphOperators& ops,
                     const ParamVars& params, const AblationToggles& toggles) {
  const Index n = tape.rows(e_prev);
  const Index d = tape.cols(e_prev);
  LayerVars lv;

  lv.xd = ad::spmm(tape, ops.direct_norm, e_prev);
  lv.xh = ad::spmm(tape, ops.high_order_norm, e_prev);

  if (toggles.dp) {
    lv.yd = ad::spmm(tape, ops.direct_norm, toggles.he ? lv.xh : lv.xd);
    lv.yh = ad::spmm(tape, ops.high_order_norm, toggles.he ? lv.xd : lv.xh);
  } else {
    lv.yd = tape.zeros(n, d);
    lv.yh = tape.zeros(n, d);
  }

  if (toggles.ip) {
    lv.w = fuse_semantic(tape, lv.xd, lv.xh, lv.yd, lv.yh, params);
    IntentInputs direct{lv.w, &ops.direct_edges, ad::add(tape, lv.xd, lv.yh)};
    lv.zd = intent_propagate(tape, direct, params.intent_embeddings).propagated;
    IntentInputs high{lv.w, &ops.high_order_edges, ad::add(tape, lv.xh, lv.yd)};
    lv.zh = intent_propagate(tape, high, params.intent_embeddings).propagated;
  } else {
    lv.zd = tape.zeros(n, d);
    lv.zh = tape.zeros(n, d);
  }

  lv.f = ad::add(tape, ad::add(tape, lv.xd, lv.yh), lv.zd);
  lv.s = ad::add(tape, ad::add(tape, lv.xh, lv.yd), lv.zh);
  return lv;
}

ForwardTrace multilayer_forward(Tape& tape, const ParamVars& params,
                                const GraphOperators& ops, Index layers,
                                const AblationToggles& toggles) {
  if (layers < 0) throw ConfigError("layer count must be >= 0");
  ForwardTrace trace;
  trace.e0 = params.node_embeddings;
  Var current = trace.e0;
  Var pooled = trace.e0;
  for (Index l = 0; l < layers; ++l) {
    LayerVars lv = helix_step(tape, current, ops, params, toggles);
    lv.e = ad::add(tape, ad::add(tape, current, lv.f), lv.s);
    current = lv.e;
    pooled = ad::add(tape, pooled, current);
    trace.layers.push_back(lv);
  }
  trace.e_prime =
      ad::scale(tape, pooled, 1.0 / static_cast<Real>(layers + 1));
  return trace;
}

Var predict_scores(Tape& tape, Var e_prime, const std::vector<Index>& users,
                   const std::vector<Index>& items, Index num_users) {
  if (users.size() != items.size()) {
    throw NumericError("predict_scores needs matched user/item lists");
  }
  const Index n = tape.rows(e_prime);
  std::vector<Index> item_rows;
  item_rows.reserve(items.size());
  for (Index item : items) {
    const Index row = num_users + item;
    if (item < 0 || row >= n) throw NumericError("item index out of range");
    item_rows.push_back(row);
  }
  for (Index user : users) {
    if (user < 0 || user >= num_users) throw NumericError("user index out of range");
  }
  return ad::row_dot_pairs(tape, e_prime, users, item_rows);
}

}  // namespace ipccf
