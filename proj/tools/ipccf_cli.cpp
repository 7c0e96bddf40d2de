#include <CLI11.hpp>

#include <fcntl.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "ipccf/checkpoint.hpp"
#include "ipccf/config.hpp"
#include "ipccf/train.hpp"

namespace fs = std::filesystem;
using namespace ipccf;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;
constexpr int kExitCheckpoint = 5;
constexpr int kExitSizeBound = 6;

// Mutual exclusion between train/eval runs sharing an output directory.
class DirLock {
 public:
  explicit DirLock(const std::string& dir) : path_(fs::path(dir) / ".lock") {
    fs::create_directories(dir);
    fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd_ < 0) {
      throw DataError("output directory is locked by another run: " +
                      path_.string());
    }
  }
  ~DirLock() {
    if (fd_ >= 0) {
      ::close(fd_);
      fs::remove(path_);
    }
  }
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  fs::path path_;
  int fd_ = -1;
};

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<Index> epochs;
  std::optional<std::string> k_list;
  std::optional<std::string> out;
  std::vector<std::string> variants;
};

RunConfig load_with_overrides(const std::string& config_path, const Overrides& o) {
  RunConfig config = load_config(config_path);
  if (o.seed) {
    config.seed_split = mix_seed(*o.seed, 0);
    config.seed_init = mix_seed(*o.seed, 1);
    config.seed_sampling = mix_seed(*o.seed, 2);
  }
  if (o.epochs) config.epochs = *o.epochs;
  if (o.k_list) config.eval_k = parse_index_list(*o.k_list);
  if (o.out) config.out_dir = *o.out;
  for (const auto& v : o.variants) apply_variant(config, v);
  config.validate();
  return config;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

std::string epoch_line(const EpochLog& e) {
  char line[256];
  std::snprintf(line, sizeof(line), "%lld\t%.6f\t%.6f\t%.6f\t%.6f\t%.6f\t%.3f",
                static_cast<long long>(e.epoch), e.total, e.bpr, e.seq, e.prop,
                e.intent, e.seconds);
  return line;
}

CheckpointHeader header_for(const RunConfig& config, const InteractionDataset& ds) {
  CheckpointHeader h;
  h.num_users = static_cast<std::uint64_t>(ds.num_users);
  h.num_items = static_cast<std::uint64_t>(ds.num_items);
  h.dim = static_cast<std::uint64_t>(config.embed_dim);
  h.num_intents = static_cast<std::uint64_t>(config.num_intents);
  h.num_layers = static_cast<std::uint64_t>(config.num_layers);
  return h;
}

int cmd_train(const std::string& config_path, const Overrides& o) {
  RunConfig config = load_with_overrides(config_path, o);
  if (config.out_dir.empty()) throw ConfigError("train requires out_dir");
  DirLock lock(config.out_dir);
  const fs::path out_dir(config.out_dir);
  write_text(out_dir / "effective.conf", config.serialize());

  const InteractionDataset dataset = load_dataset(config);
  std::cout << "loaded " << dataset.num_users << " users, " << dataset.num_items
            << " items, " << dataset.train_size() << " train / "
            << dataset.test_size() << " test interactions\n";
  const GraphOperators ops = build_operators(dataset, config);
  std::cout << "graph: " << ops.direct.nonZeros() << " direct edges, "
            << ops.high_order.nonZeros() << " high-order edges\n";

  std::ofstream log(out_dir / "train.log", std::ios::trunc);
  const TrainOutcome outcome =
      train_model(config, dataset, ops, [&](const EpochLog& e) {
        const std::string line = epoch_line(e);
        log << line << "\n";
        log.flush();
        std::cout << line << std::endl;
      });

  save_checkpoint((out_dir / "checkpoint.ipccf").string(),
                  header_for(config, dataset), outcome.params);
  for (const auto& [k, m] : outcome.report.by_k) {
    log << "final\trecall@" << k << "\t" << m.recall << "\n";
    log << "final\tndcg@" << k << "\t" << m.ndcg << "\n";
  }
  write_text(out_dir / "report.tsv", outcome.report.to_tsv());
  write_text(out_dir / "report.kv", outcome.report.to_key_values());
  std::cout << outcome.report.to_tsv();
  return 0;
}

int cmd_eval(const std::string& config_path, const std::string& checkpoint_path,
             const Overrides& o) {
  RunConfig config = load_with_overrides(config_path, o);
  std::optional<DirLock> lock;
  if (!config.out_dir.empty()) lock.emplace(config.out_dir);

  const InteractionDataset dataset = load_dataset(config);
  const Checkpoint cp = load_checkpoint(checkpoint_path);
  const CheckpointHeader expected = header_for(config, dataset);
  if (cp.header.num_users != expected.num_users ||
      cp.header.num_items != expected.num_items ||
      cp.header.dim != expected.dim ||
      cp.header.num_intents != expected.num_intents ||
      cp.header.num_layers != expected.num_layers) {
    throw CheckpointError("checkpoint dimensions do not match the config/data");
  }
  const GraphOperators ops = build_operators(dataset, config);
  const Mat e_prime = final_embedding(cp.params, ops,
                                      static_cast<Index>(cp.header.num_layers),
                                      config.toggles);
  const EvalReport report =
      evaluate(e_prime, dataset, config.eval_k, config.sparsity_buckets);
  std::cout << report.to_tsv();
  if (!config.out_dir.empty()) {
    write_text(fs::path(config.out_dir) / "report.tsv", report.to_tsv());
    write_text(fs::path(config.out_dir) / "report.kv", report.to_key_values());
  }
  return 0;
}

int cmd_gradcheck(const std::string& config_path, const Overrides& o) {
  RunConfig config = load_with_overrides(config_path, o);
  const InteractionDataset dataset = load_dataset(config);
  const GradCheckReport report = run_gradcheck(config, dataset);
  for (const auto& group : report.groups) {
    std::printf("%-18s max_rel_error=%.3e  %s\n", group.name.c_str(),
                group.max_rel_error, group.pass ? "PASS" : "FAIL");
  }
  return report.pass ? 0 : 1;
}

int cmd_extract_graph(const std::string& config_path, const Overrides& o) {
  RunConfig config = load_with_overrides(config_path, o);
  const InteractionDataset dataset = load_dataset(config);
  const SpMat high =
      extract_high_order(dataset, ExtractionConfig{config.eta, config.top_q});
  std::ostream* out = &std::cout;
  std::ofstream file;
  if (!config.out_dir.empty()) {
    fs::create_directories(config.out_dir);
    file.open(fs::path(config.out_dir) / "high_order_edges.txt", std::ios::trunc);
    out = &file;
  }
  out->precision(12);
  for (Index row = 0; row < high.outerSize(); ++row) {
    for (SpMat::InnerIterator it(high, row); it; ++it) {
      (*out) << it.row() << " " << it.col() << " " << it.value() << "\n";
    }
  }
  std::cerr << "wrote " << high.nonZeros() << " high-order edges\n";
  return 0;
}

int cmd_export(const std::string& config_path, const std::string& checkpoint_path,
               const Overrides& o) {
  RunConfig config = load_with_overrides(config_path, o);
  const InteractionDataset dataset = load_dataset(config);
  const Checkpoint cp = load_checkpoint(checkpoint_path);
  if (cp.header.num_users != static_cast<std::uint64_t>(dataset.num_users) ||
      cp.header.num_items != static_cast<std::uint64_t>(dataset.num_items)) {
    throw CheckpointError("checkpoint does not match the dataset");
  }
  const GraphOperators ops = build_operators(dataset, config);
  const Mat e_prime = final_embedding(cp.params, ops,
                                      static_cast<Index>(cp.header.num_layers),
                                      config.toggles);
  std::ostream* out = &std::cout;
  std::ofstream file;
  if (!config.out_dir.empty()) {
    fs::create_directories(config.out_dir);
    file.open(fs::path(config.out_dir) / "embeddings.tsv", std::ios::trunc);
    out = &file;
  }
  out->precision(8);
  for (Index u = 0; u < dataset.num_users; ++u) {
    (*out) << "u\t" << dataset.user_ids[static_cast<std::size_t>(u)];
    for (Index j = 0; j < e_prime.cols(); ++j) (*out) << "\t" << e_prime(u, j);
    (*out) << "\n";
  }
  for (Index i = 0; i < dataset.num_items; ++i) {
    (*out) << "i\t" << dataset.item_ids[static_cast<std::size_t>(i)];
    for (Index j = 0; j < e_prime.cols(); ++j) {
      (*out) << "\t" << e_prime(dataset.num_users + i, j);
    }
    (*out) << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"IPCCF: graph collaborative filtering with intent-disentangled "
               "double-helix propagation and contrastive alignment"};
  app.require_subcommand(1);
  app.footer(variant_help() +
             "\nExit codes: 2 config error, 3 data error, 4 numerical abort, "
             "5 checkpoint mismatch, 6 grad-check size bound exceeded.");

  std::string config_path;
  std::string checkpoint_path;
  Overrides overrides;
  std::uint64_t seed_value = 0;
  long long epochs_value = 0;
  std::string k_value, out_value;

  auto add_common = [&](CLI::App* cmd, bool needs_checkpoint = false) {
    cmd->add_option("-c,--config", config_path, "key=value run configuration")
        ->required();
    auto seed_opt = cmd->add_option("--seed", seed_value,
                                    "override all seed streams from one value");
    auto epoch_opt = cmd->add_option("--epochs", epochs_value, "override epochs");
    auto k_opt = cmd->add_option("--k", k_value, "override eval cutoffs, e.g. 20,40");
    auto out_opt = cmd->add_option("--out", out_value, "override output directory");
    cmd->add_option("--variant", overrides.variants,
                    "named ablation variant, e.g. \"w/o ip\" (repeatable)");
    if (needs_checkpoint) {
      cmd->add_option("--checkpoint", checkpoint_path, "model checkpoint")
          ->required();
    }
    cmd->callback([&, seed_opt, epoch_opt, k_opt, out_opt] {
      if (seed_opt->count()) overrides.seed = seed_value;
      if (epoch_opt->count()) overrides.epochs = static_cast<Index>(epochs_value);
      if (k_opt->count()) overrides.k_list = k_value;
      if (out_opt->count()) overrides.out = out_value;
    });
  };

  auto* train = app.add_subcommand("train", "train a model and write a checkpoint");
  add_common(train);
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(eval_cmd, true);
  auto* gradcheck =
      app.add_subcommand("grad-check", "verify gradients with finite differences");
  add_common(gradcheck);
  auto* extract = app.add_subcommand("extract-graph",
                                     "write the high-order edge list (row col weight)");
  add_common(extract);
  auto* exporter =
      app.add_subcommand("export-embeddings", "write final embeddings as TSV");
  add_common(exporter, true);

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return cmd_train(config_path, overrides);
    if (eval_cmd->parsed()) return cmd_eval(config_path, checkpoint_path, overrides);
    if (gradcheck->parsed()) return cmd_gradcheck(config_path, overrides);
    if (extract->parsed()) return cmd_extract_graph(config_path, overrides);
    if (exporter->parsed()) return cmd_export(config_path, checkpoint_path, overrides);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const SizeBoundError& e) {
    std::cerr << "size bound error: " << e.what() << "\n";
    return kExitSizeBound;
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return kExitCheckpoint;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const NumericError& e) {
    std::cerr << "numerical abort: " << e.what() << "\n";
    return kExitNumeric;
  }
  return 0;
}
