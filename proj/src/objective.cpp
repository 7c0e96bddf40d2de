#include "ipccf/objective.hpp"

#include <algorithm>
#include <cmath>

namespace ipccf {

void LossWeights::validate() const {
  if (tau <= 0) throw ConfigError("tau must be positive");
  if (lambda1 < 0 || lambda2 < 0 || lambda3 < 0 || lambda4 < 0 || lambda5 < 0) {
    throw ConfigError("loss weights must be non-negative");
  }
}

ContrastBatch contrast_batch_from(const BprBatch& batch, Index num_users) {
  ContrastBatch cb;
  cb.user_rows = batch.users;
  std::sort(cb.user_rows.begin(), cb.user_rows.end());
  cb.user_rows.erase(std::unique(cb.user_rows.begin(), cb.user_rows.end()),
                     cb.user_rows.end());
  cb.item_rows.reserve(batch.pos_items.size());
  for (Index item : batch.pos_items) cb.item_rows.push_back(num_users + item);
  std::sort(cb.item_rows.begin(), cb.item_rows.end());
  cb.item_rows.erase(std::unique(cb.item_rows.begin(), cb.item_rows.end()),
                     cb.item_rows.end());
  return cb;
}

Var bpr_loss(Tape& tape, Var scores_pos, Var scores_neg) {
  if (tape.rows(scores_pos) == 0) throw DataError("bpr_loss on empty batch");
  Var margin = ad::sub(tape, scores_pos, scores_neg);
  return ad::scale(tape, ad::mean(tape, ad::log_sigmoid(tape, margin)), -1.0);
}

Var info_nce(Tape& tape, const std::vector<Var>& view_a,
             const std::vector<Var>& view_b, const ContrastBatch& batch,
             Real tau) {
  if (view_a.size() != view_b.size()) {
    throw NumericError("info_nce needs matching per-layer views");
  }
  if (batch.size() == 0) throw DataError("info_nce on empty batch");
  Var acc = tape.zeros(1, 1);
  for (std::size_t l = 0; l < view_a.size(); ++l) {
    acc = ad::add(tape, acc,
                  ad::info_nce_sum(tape, view_a[l], view_b[l], batch.user_rows, tau));
    acc = ad::add(tape, acc,
                  ad::info_nce_sum(tape, view_a[l], view_b[l], batch.item_rows, tau));
  }
  return ad::scale(tape, acc, 1.0 / static_cast<Real>(batch.size()));
}

namespace {

std::vector<Var> collect(const ForwardTrace& trace, Var LayerVars::* member) {
  std::vector<Var> vars;
  vars.reserve(trace.layers.size());
  for (const LayerVars& lv : trace.layers) vars.push_back(lv.*member);
  return vars;
}

}  // namespace

Var sequence_contrast(Tape& tape, const ForwardTrace& trace,
                      const ContrastBatch& batch, Real tau,
                      const AblationToggles& toggles) {
  Var loss = info_nce(tape, collect(trace, &LayerVars::e),
                      collect(trace, &LayerVars::f), batch, tau);
  if (toggles.ho) {
    loss = ad::add(tape, loss,
                   info_nce(tape, collect(trace, &LayerVars::e),
                            collect(trace, &LayerVars::s), batch, tau));
  }
  return loss;
}

Var propagation_contrast(Tape& tape, const ForwardTrace& trace,
                         const ContrastBatch& batch, Real tau,
                         const AblationToggles& toggles) {
  const auto xd = collect(trace, &LayerVars::xd);
  const auto xh = collect(trace, &LayerVars::xh);
  Var loss = tape.zeros(1, 1);
  if (toggles.pcd) {
    loss = ad::add(tape, loss,
                   info_nce(tape, xd, collect(trace, &LayerVars::yd), batch, tau));
    if (toggles.ho) {
      loss = ad::add(tape, loss,
                     info_nce(tape, xh, collect(trace, &LayerVars::yh), batch, tau));
    }
  }
  if (toggles.pci) {
    loss = ad::add(tape, loss,
                   info_nce(tape, xd, collect(trace, &LayerVars::zd), batch, tau));
    if (toggles.ho) {
      loss = ad::add(tape, loss,
                     info_nce(tape, xh, collect(trace, &LayerVars::zh), batch, tau));
    }
  }
  return loss;
}

Var intent_independence(Tape& tape, Var intent_table) {
  const Index k = tape.rows(intent_table);
  if (k < 2) return tape.zeros(1, 1);
  Var normalized = ad::row_normalize(tape, intent_table);
  Var gram = ad::matmul_nt(tape, normalized, normalized);
  const Real pairs = static_cast<Real>(k) * static_cast<Real>(k - 1) / 2.0;
  return ad::scale(tape, ad::sum_strict_upper(tape, gram), 1.0 / pairs);
}

LossTerms build_total_loss(Tape& tape, const ForwardTrace& trace, Var scores_pos,
                           Var scores_neg, const ContrastBatch& batch,
                           const LossWeights& weights, const ParamVars& params,
                           const AblationToggles& raw_toggles) {
  weights.validate();
  const AblationToggles toggles = raw_toggles.normalized();
  LossTerms terms;
  terms.bpr = bpr_loss(tape, scores_pos, scores_neg);
  Var total = terms.bpr;
  if (toggles.sc && weights.lambda1 > 0 && !trace.layers.empty()) {
    terms.seq = sequence_contrast(tape, trace, batch, weights.tau, toggles);
    total = ad::add(tape, total, ad::scale(tape, terms.seq, weights.lambda1));
  }
  if (toggles.pc && weights.lambda2 > 0 && !trace.layers.empty()) {
    terms.prop = propagation_contrast(tape, trace, batch, weights.tau, toggles);
    total = ad::add(tape, total, ad::scale(tape, terms.prop, weights.lambda2));
  }
  if (tape.rows(params.intent_embeddings) >= 2 && weights.lambda3 > 0) {
    terms.intent = intent_independence(tape, params.intent_embeddings);
    total = ad::add(tape, total, ad::scale(tape, terms.intent, weights.lambda3));
  }
  if (weights.lambda4 > 0) {
    total = ad::add(tape, total,
                    ad::scale(tape, ad::l2_norm_sq(tape, params.node_embeddings),
                              weights.lambda4));
  }
  if (weights.lambda5 > 0) {
    total = ad::add(
        tape, total,
        ad::scale(tape, ad::l2_norm_sq(tape, params.intent_embeddings),
                  weights.lambda5));
  }
  terms.total = total;
  return terms;
}

Gradients read_gradients(const Tape& tape, const ParamVars& params) {
  Gradients grads;
  grads.node_embeddings = tape.grad(params.node_embeddings);
  grads.intent_embeddings = tape.grad(params.intent_embeddings);
  grads.fusion_weights = tape.grad(params.fusion_weights);
  grads.fusion_bias = tape.grad(params.fusion_bias);
  return grads;
}

namespace {

void adam_update(Mat& param, const Mat& grad, OptimizerState::Moments& slot,
                 const OptimizerState& state, const char* name) {
  if (!grad.allFinite()) {
    throw NumericError(std::string("non-finite gradient for parameter '") + name + "'");
  }
  if (slot.m.size() == 0) {
    slot.m = Mat::Zero(param.rows(), param.cols());
    slot.v = Mat::Zero(param.rows(), param.cols());
  }
  slot.m = state.beta1 * slot.m + (1.0 - state.beta1) * grad;
  slot.v = state.beta2 * slot.v + (1.0 - state.beta2) * grad.cwiseProduct(grad);
  const Real bias1 = 1.0 - std::pow(state.beta1, static_cast<Real>(state.step));
  const Real bias2 = 1.0 - std::pow(state.beta2, static_cast<Real>(state.step));
  const Mat m_hat = slot.m / bias1;
  const Mat v_hat = slot.v / bias2;
  param.array() -=
      state.learning_rate * m_hat.array() / (v_hat.array().sqrt() + state.eps);
}

}  // namespace

void adam_step(ModelParams& params, const Gradients& grads, OptimizerState& state) {
  ++state.step;
  adam_update(params.node_embeddings, grads.node_embeddings,
              state.node_embeddings, state, "node_embeddings");
  adam_update(params.intent_embeddings, grads.intent_embeddings,
              state.intent_embeddings, state, "intent_embeddings");
  adam_update(params.fusion_weights, grads.fusion_weights, state.fusion_weights,
              state, "fusion_weights");
  adam_update(params.fusion_bias, grads.fusion_bias, state.fusion_bias, state,
              "fusion_bias");
}

}  // namespace ipccf
