#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ipccf/config.hpp"
#include "ipccf/core.hpp"
#include "ipccf/dataset.hpp"
#include "ipccf/eval.hpp"
#include "ipccf/graph.hpp"
#include "ipccf/model.hpp"
#include "ipccf/objective.hpp"

namespace ipccf {

struct EpochLog {
  Index epoch = 0;
  Real total = 0;
  Real bpr = 0;
  Real seq = 0;
  Real prop = 0;
  Real intent = 0;
  Real seconds = 0;
};

struct TrainOutcome {
  ModelParams params;
  Mat e_prime;
  std::vector<EpochLog> log;
  EvalReport report;
  Index epochs_run = 0;
};

/// Dataset loading + split as configured.
InteractionDataset load_dataset(const RunConfig& config);

/// Graph operators for the configured extraction thresholds. With the
/// high-order toggle off the similarity operator is left empty, which zeroes
/// that propagation path exactly.
GraphOperators build_operators(const InteractionDataset& dataset,
                               const RunConfig& config);

/// Forward pass without gradient use; returns the pooled final embedding.
Mat final_embedding(const ModelParams& params, const GraphOperators& ops,
                    Index layers, const AblationToggles& toggles);

/// Full training loop; deterministic for fixed seeds. The optional callback
/// observes each epoch log line as it is produced.
TrainOutcome train_model(const RunConfig& config, const InteractionDataset& dataset,
                         const GraphOperators& ops,
                         const std::function<void(const EpochLog&)>& on_epoch = {});

struct GradCheckGroup {
  std::string name;
  Real max_rel_error = 0;
  bool pass = false;
};

struct GradCheckReport {
  std::vector<GradCheckGroup> groups;
  bool pass = true;
  Real tolerance = 0;
};

/// Central-difference verification of the full objective gradient, one
/// parameter group at a time. Enforces the toy-scale bound on node count.
/// The probe step is smaller than the per-primitive harness default because
/// truncation error through the stacked softmax/cosine path grows with eps^2.
GradCheckReport run_gradcheck(const RunConfig& config,
                              const InteractionDataset& dataset, Real eps = 1e-5,
                              Real tol = 1e-4, Index max_nodes = 50);

}  // namespace ipccf
