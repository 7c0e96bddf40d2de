#pragma once

#include <cstdint>
#include <vector>

#include "ipccf/autodiff.hpp"
#include "ipccf/core.hpp"
#include "ipccf/graph.hpp"

namespace ipccf {

using ad::Var;
using Tape = ad::Tape<Real>;

/// Component switches mirroring the ablation variants: each flag keeps one
/// piece of the propagation or objective active.
struct AblationToggles {
  bool ho = true;   // high-order propagation
  bool dp = true;   // deep propagation
  bool he = true;   // cross-transmission between helix strands
  bool ip = true;   // intent propagation
  bool spc = true;  // any contrastive objective
  bool sc = true;   // sequence contrast
  bool pc = true;   // propagation contrast
  bool pcd = true;  // shallow-vs-deep contrast pair
  bool pci = true;  // shallow-vs-intent contrast pair

  /// Enforce implications between flags (no intent propagation means no
  /// intent contrast, and so on).
  AblationToggles normalized() const {
    AblationToggles t = *this;
    if (!t.spc) t.sc = t.pc = false;
    if (!t.pc) t.pcd = t.pci = false;
    if (!t.ip) t.pci = false;
    if (!t.dp) t.pcd = false;
    return t;
  }
};

struct ModelParams {
  Mat node_embeddings;    // (num_users + num_items) x d
  Mat intent_embeddings;  // K x d
  Mat fusion_weights;     // 4d x d
  Mat fusion_bias;        // 1 x d

  Index dim() const { return node_embeddings.cols(); }
  Index num_nodes() const { return node_embeddings.rows(); }
  Index num_intents() const { return intent_embeddings.rows(); }
};

/// Uniform init in [-0.5/sqrt(fan_in), +0.5/sqrt(fan_in)]: d for the
/// embedding tables, 4d for the fusion layer. Bias starts at zero.
ModelParams init_model_params(Index num_nodes, Index dim, Index num_intents,
                              std::uint64_t seed);

struct ParamVars {
  Var node_embeddings;
  Var intent_embeddings;
  Var fusion_weights;
  Var fusion_bias;
};

ParamVars register_params(Tape& tape, const ModelParams& params,
                          bool trainable = true);

/// Inputs of the intent message propagation procedure: the semantic tensor
/// driving edge intensities, the fixed relation pattern, and the message to
/// propagate.
struct IntentInputs {
  Var semantic;  // W, (n x d)
  const EdgePattern* pattern = nullptr;
  Var message;  // M, (n x d)
};

struct IntentResult {
  Var propagated;    // N, (n x d)
  Var edge_weights;  // normalized per-edge weights, (m x 1)
};

/// Edge-reweighted propagation: cosine-derived intensities gate the pattern,
/// per-intent softmax shares split it, per-intent row normalization and the
/// mean over intents yield a row-stochastic operator applied to the message.
IntentResult intent_propagate(Tape& tape, const IntentInputs& inputs,
                              Var intent_table);

/// W = Concat(Xd, Xh, Yd, Yh) through the shared affine fusion layer.
Var fuse_semantic(Tape& tape, Var xd, Var xh, Var yd, Var yh,
                  const ParamVars& params);

/// One sparse-dense product, differentiable w.r.t. the dense input.
Var structural_propagation(Tape& tape, const SpMat& op, Var input);

struct LayerVars {
  Var xd, xh, yd, yh;  // shallow and deep propagation outputs
  Var w;               // fused semantic tensor (invalid when ip is off)
  Var zd, zh;          // intent propagation outputs
  Var f, s;            // helix strands
  Var e;               // residual-aggregated embedding after this step
};

struct ForwardTrace {
  Var e0;
  std::vector<LayerVars> layers;
  Var e_prime;  // mean-pooled final embedding
};

LayerVars helix_step(Tape& tape, Var e_prev, const GraphOperators& ops,
                     const ParamVars& params, const AblationToggles& toggles);

ForwardTrace multilayer_forward(Tape& tape, const ParamVars& params,
                                const GraphOperators& ops, Index layers,
                                const AblationToggles& toggles);

/// Inner-product scores for (user, item) pairs; item indices are local and
/// offset into the item block internally.
Var predict_scores(Tape& tape, Var e_prime, const std::vector<Index>& users,
                   const std::vector<Index>& items, Index num_users);

}  // namespace ipccf
