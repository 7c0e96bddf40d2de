#pragma once

#include <string>
#include <vector>

#include "ipccf/autodiff.hpp"
#include "ipccf/core.hpp"
#include "ipccf/dataset.hpp"
#include "ipccf/model.hpp"

namespace ipccf {

struct LossWeights {
  Real lambda1 = 8e-2;   // sequence contrast
  Real lambda2 = 1e-1;   // propagation contrast
  Real lambda3 = 5e-3;   // intent independence
  Real lambda4 = 2.5e-5; // node embedding regularization
  Real lambda5 = 1e-5;   // intent embedding regularization
  Real tau = 0.2;

  void validate() const;
};

/// In-batch node rows used by the contrastive terms: users contrast against
/// users, items against items. Rows are global node indices, deduplicated.
struct ContrastBatch {
  std::vector<Index> user_rows;
  std::vector<Index> item_rows;

  Index size() const {
    return static_cast<Index>(user_rows.size() + item_rows.size());
  }
};

ContrastBatch contrast_batch_from(const BprBatch& batch, Index num_users);

/// -(1/B) sum log sigmoid(pos - neg).
Var bpr_loss(Tape& tape, Var scores_pos, Var scores_neg);

/// Layer-summed, batch-averaged InfoNCE between two per-layer tensor views.
Var info_nce(Tape& tape, const std::vector<Var>& view_a,
             const std::vector<Var>& view_b, const ContrastBatch& batch,
             Real tau);

/// Aligns each helix strand with the aggregated embedding across steps.
Var sequence_contrast(Tape& tape, const ForwardTrace& trace,
                      const ContrastBatch& batch, Real tau,
                      const AblationToggles& toggles);

/// Aligns representations produced by the same propagation family.
Var propagation_contrast(Tape& tape, const ForwardTrace& trace,
                         const ContrastBatch& batch, Real tau,
                         const AblationToggles& toggles);

/// Mean pairwise cosine between intent embeddings; zero for a single intent.
Var intent_independence(Tape& tape, Var intent_table);

struct LossTerms {
  Var total;
  Var bpr;
  Var seq;     // invalid when the sequence-contrast toggle is off
  Var prop;    // invalid when the propagation-contrast toggle is off
  Var intent;  // invalid when K == 1
};

LossTerms build_total_loss(Tape& tape, const ForwardTrace& trace, Var scores_pos,
                           Var scores_neg, const ContrastBatch& batch,
                           const LossWeights& weights, const ParamVars& params,
                           const AblationToggles& toggles);

struct Gradients {
  Mat node_embeddings;
  Mat intent_embeddings;
  Mat fusion_weights;
  Mat fusion_bias;
};

Gradients read_gradients(const Tape& tape, const ParamVars& params);

struct OptimizerState {
  Real learning_rate = 1e-3;
  Real beta1 = 0.9;
  Real beta2 = 0.999;
  Real eps = 1e-8;
  Index step = 0;

  struct Moments {
    Mat m;
    Mat v;
  };
  Moments node_embeddings, intent_embeddings, fusion_weights, fusion_bias;
};

/// Bias-corrected Adam update over all parameter groups. A non-finite
/// gradient aborts with the offending group named.
void adam_step(ModelParams& params, const Gradients& grads, OptimizerState& state);

}  // namespace ipccf
