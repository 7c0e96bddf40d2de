#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "ipccf/core.hpp"

namespace ipccf {

enum class InputFormat { AdjacencyList, PairPerLine };

/// Id-mapped implicit-feedback log. Item indices are local (0..num_items);
/// graph builders offset them by num_users when assembling bipartite
/// operators.
struct InteractionDataset {
  Index num_users = 0;
  Index num_items = 0;
  // Per-user sorted, duplicate-free item-index lists.
  std::vector<std::vector<Index>> train_adjacency;
  std::vector<std::vector<Index>> test_adjacency;
  std::vector<std::string> user_ids;  // index -> raw id
  std::vector<std::string> item_ids;
  std::unordered_map<std::string, Index> user_index;  // raw id -> index
  std::unordered_map<std::string, Index> item_index;
  bool split_done = false;

  Index train_size() const;
  Index test_size() const;
  bool user_has_train(Index user, Index item) const;
};

/// Parse an interaction file into an unsplit dataset (everything lands in
/// train_adjacency). Ids are assigned contiguously by first appearance.
/// Lines starting with '#' are ignored; tokens split on ASCII whitespace.
InteractionDataset load_interactions(const std::string& path, InputFormat format);

/// Build a dataset directly from (user-id, item-id) pairs. Same id-assignment
/// rule as load_interactions; used by tests and synthetic generators.
InteractionDataset dataset_from_pairs(
    const std::vector<std::pair<std::string, std::string>>& pairs);

/// Per-user random split. Users keep at least one interaction in train;
/// identical seed produces identical splits.
void split_train_test(InteractionDataset& dataset, Real ratio, std::uint64_t seed);

struct BprBatch {
  std::vector<Index> users;
  std::vector<Index> pos_items;
  std::vector<Index> neg_items;

  Index size() const { return static_cast<Index>(users.size()); }
};

/// Uniform BPR triple sampler over the train split. Negatives are drawn
/// with rejection until outside the user's train list.
class BprSampler {
 public:
  BprSampler(const InteractionDataset& dataset, std::uint64_t seed);

  BprBatch sample(Index batch_size);

 private:
  const InteractionDataset& dataset_;
  std::mt19937_64 rng_;
  std::vector<Index> eligible_users_;  // users with >=1 train interaction
};

}  // namespace ipccf
