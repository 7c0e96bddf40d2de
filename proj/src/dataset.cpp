#include "ipccf/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace ipccf {

Index InteractionDataset::train_size() const {
  Index n = 0;
  for (const auto& items : train_adjacency) n += static_cast<Index>(items.size());
  return n;
}

Index InteractionDataset::test_size() const {
  Index n = 0;
  for (const auto& items : test_adjacency) n += static_cast<Index>(items.size());
  return n;
}

bool InteractionDataset::user_has_train(Index user, Index item) const {
  const auto& items = train_adjacency[static_cast<std::size_t>(user)];
  return std::binary_search(items.begin(), items.end(), item);
}

namespace {

Index intern(std::unordered_map<std::string, Index>& index,
             std::vector<std::string>& ids, const std::string& raw) {
  auto [it, inserted] = index.try_emplace(raw, static_cast<Index>(ids.size()));
  if (inserted) ids.push_back(raw);
  return it->second;
}

void finalize_adjacency(InteractionDataset& ds,
                        std::vector<std::vector<Index>>& lists) {
  lists.resize(static_cast<std::size_t>(ds.num_users));
  for (auto& items : lists) {
    std::sort(items.begin(), items.end());
    items.erase(std::unique(items.begin(), items.end()), items.end());
  }
}

}  // namespace

InteractionDataset load_interactions(const std::string& path, InputFormat format) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open interaction file: " + path);

  InteractionDataset ds;
  std::vector<std::vector<Index>> lists;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream tokens(line);
    std::string uid;
    if (!(tokens >> uid)) continue;  // whitespace-only line
    const Index u = intern(ds.user_index, ds.user_ids, uid);
    if (static_cast<std::size_t>(u) >= lists.size()) lists.resize(u + 1);

    std::string iid;
    std::size_t items_on_line = 0;
    while (tokens >> iid) {
      ++items_on_line;
      if (format == InputFormat::PairPerLine && items_on_line > 1) {
        throw DataError("malformed line " + std::to_string(line_no) +
                        ": expected exactly one user and one item");
      }
      lists[static_cast<std::size_t>(u)].push_back(
          intern(ds.item_index, ds.item_ids, iid));
    }
    if (format == InputFormat::PairPerLine && items_on_line == 0) {
      throw DataError("malformed line " + std::to_string(line_no) +
                      ": expected exactly one user and one item");
    }
  }

  ds.num_users = static_cast<Index>(ds.user_ids.size());
  ds.num_items = static_cast<Index>(ds.item_ids.size());
  ds.train_adjacency = std::move(lists);
  finalize_adjacency(ds, ds.train_adjacency);
  ds.test_adjacency.assign(static_cast<std::size_t>(ds.num_users), {});
  if (ds.train_size() == 0) throw DataError("zero interactions in " + path);
  return ds;
}

InteractionDataset dataset_from_pairs(
    const std::vector<std::pair<std::string, std::string>>& pairs) {
  InteractionDataset ds;
  std::vector<std::vector<Index>> lists;
  for (const auto& [uid, iid] : pairs) {
    const Index u = intern(ds.user_index, ds.user_ids, uid);
    if (static_cast<std::size_t>(u) >= lists.size()) lists.resize(u + 1);
    lists[static_cast<std::size_t>(u)].push_back(intern(ds.item_index, ds.item_ids, iid));
  }
  ds.num_users = static_cast<Index>(ds.user_ids.size());
  ds.num_items = static_cast<Index>(ds.item_ids.size());
  ds.train_adjacency = std::move(lists);
  finalize_adjacency(ds, ds.train_adjacency);
  ds.test_adjacency.assign(static_cast<std::size_t>(ds.num_users), {});
  if (ds.train_size() == 0) throw DataError("zero interactions");
  return ds;
}

void split_train_test(InteractionDataset& dataset, Real ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) {
    throw ConfigError("split ratio must lie strictly between 0 and 1");
  }
  if (dataset.split_done) {
    throw DataError("dataset is already split; re-splitting would drop test data");
  }
  dataset.test_adjacency.assign(static_cast<std::size_t>(dataset.num_users), {});
  for (Index u = 0; u < dataset.num_users; ++u) {
    auto& items = dataset.train_adjacency[static_cast<std::size_t>(u)];
    const auto n = items.size();
    if (n <= 1) continue;  // single interaction stays in train
    std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(u)));
    std::shuffle(items.begin(), items.end(), rng);
    auto n_train = static_cast<std::size_t>(
        std::floor(ratio * static_cast<Real>(n)));
    n_train = std::max<std::size_t>(1, n_train);
    auto& test = dataset.test_adjacency[static_cast<std::size_t>(u)];
    test.assign(items.begin() + static_cast<std::ptrdiff_t>(n_train), items.end());
    items.resize(n_train);
    std::sort(items.begin(), items.end());
    std::sort(test.begin(), test.end());
  }
  dataset.split_done = true;
}

BprSampler::BprSampler(const InteractionDataset& dataset, std::uint64_t seed)
    : dataset_(dataset), rng_(seed) {
  for (Index u = 0; u < dataset.num_users; ++u) {
    if (!dataset.train_adjacency[static_cast<std::size_t>(u)].empty()) {
      eligible_users_.push_back(u);
    }
  }
  if (eligible_users_.empty()) throw DataError("train set is empty");
}

BprBatch BprSampler::sample(Index batch_size) {
  BprBatch batch;
  batch.users.reserve(static_cast<std::size_t>(batch_size));
  batch.pos_items.reserve(static_cast<std::size_t>(batch_size));
  batch.neg_items.reserve(static_cast<std::size_t>(batch_size));
  std::uniform_int_distribution<std::size_t> pick_user(0, eligible_users_.size() - 1);
  std::uniform_int_distribution<Index> pick_item(0, dataset_.num_items - 1);
  for (Index t = 0; t < batch_size; ++t) {
    const Index u = eligible_users_[pick_user(rng_)];
    const auto& items = dataset_.train_adjacency[static_cast<std::size_t>(u)];
    if (static_cast<Index>(items.size()) >= dataset_.num_items) {
      throw DataError("user " + std::to_string(u) +
                      " interacts with every item; negative sampling cannot terminate");
    }
    std::uniform_int_distribution<std::size_t> pick_pos(0, items.size() - 1);
    const Index pos = items[pick_pos(rng_)];
    Index neg = pick_item(rng_);
    while (std::binary_search(items.begin(), items.end(), neg)) {
      neg = pick_item(rng_);
    }
    batch.users.push_back(u);
    batch.pos_items.push_back(pos);
    batch.neg_items.push_back(neg);
  }
  return batch;
}

}  // namespace ipccf
