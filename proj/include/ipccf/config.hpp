#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ipccf/core.hpp"
#include "ipccf/dataset.hpp"
#include "ipccf/model.hpp"
#include "ipccf/objective.hpp"

namespace ipccf {

/// Flat key=value run configuration. Unknown keys are rejected; '#' starts a
/// comment. serialize() emits every key so the file round-trips exactly.
struct RunConfig {
  std::string train_file;
  InputFormat data_format = InputFormat::AdjacencyList;
  Real split_ratio = 0.8;
  std::uint64_t seed_split = 1;
  std::uint64_t seed_init = 2;
  std::uint64_t seed_sampling = 3;

  Index embed_dim = 32;
  Index num_intents = 8;
  Index num_layers = 2;
  Real eta = 0.8;
  Index top_q = 5;

  LossWeights weights;
  Real learning_rate = 1e-3;
  Index batch_size = 10240;
  Index epochs = 100;
  Index eval_every = 0;      // 0 disables periodic evaluation
  Index early_stop_patience = 0;  // 0 disables early stopping

  AblationToggles toggles;
  std::vector<Index> eval_k = {20, 40};
  std::vector<Index> sparsity_buckets;  // empty disables the group report
  std::string out_dir;

  void validate() const;
  std::string serialize() const;
};

RunConfig parse_config_text(const std::string& text);
RunConfig load_config(const std::string& path);

std::vector<Index> parse_index_list(const std::string& text);

/// Named ablation variants and the toggle keys each one clears.
std::string variant_help();
void apply_variant(RunConfig& config, const std::string& name);

}  // namespace ipccf
