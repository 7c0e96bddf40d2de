#include "ipccf/config.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

namespace ipccf {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

Real parse_real(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const Real v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("invalid real for key '" + key + "': " + value);
  }
}

Index parse_index(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return static_cast<Index>(v);
  } catch (const std::exception&) {
    throw ConfigError("invalid integer for key '" + key + "': " + value);
  }
}

std::uint64_t parse_seed(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("invalid seed for key '" + key + "': " + value);
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "1" || value == "true" || value == "on") return true;
  if (value == "0" || value == "false" || value == "off") return false;
  throw ConfigError("invalid boolean for key '" + key + "': " + value);
}

std::string real_to_string(Real v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::string index_list_to_string(const std::vector<Index>& values) {
  std::ostringstream os;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) os << ",";
    os << values[i];
  }
  return os.str();
}

}  // namespace

std::vector<Index> parse_index_list(const std::string& text) {
  std::vector<Index> values;
  std::stringstream ss(text);
  std::string token;
  while (std::getline(ss, token, ',')) {
    token = trim(token);
    if (token.empty()) continue;
    values.push_back(parse_index("list", token));
  }
  return values;
}

void RunConfig::validate() const {
  if (!(split_ratio > 0 && split_ratio < 1)) {
    throw ConfigError("split_ratio must lie strictly between 0 and 1");
  }
  if (embed_dim < 1) throw ConfigError("embed_dim must be >= 1");
  if (num_intents < 1) throw ConfigError("num_intents must be >= 1");
  if (num_layers < 0) throw ConfigError("num_layers must be >= 0");
  if (eta < 0 || eta > 1) throw ConfigError("eta must lie in [0, 1]");
  if (top_q < 0) throw ConfigError("top_q must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (learning_rate <= 0) throw ConfigError("learning_rate must be positive");
  if (eval_k.empty()) throw ConfigError("eval_k must name at least one cutoff");
  for (Index k : eval_k) {
    if (k < 1) throw ConfigError("eval_k entries must be >= 1");
  }
  weights.validate();
  if (!out_dir.empty() && !train_file.empty() &&
      train_file.rfind(out_dir + "/", 0) == 0) {
    throw ConfigError("train_file must not live inside out_dir");
  }
}

RunConfig parse_config_text(const std::string& text) {
  RunConfig config;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) +
                        " is not key=value: " + line);
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));

    if (key == "train_file") {
      config.train_file = value;
    } else if (key == "data_format") {
      if (value == "adjacency") {
        config.data_format = InputFormat::AdjacencyList;
      } else if (value == "pairs") {
        config.data_format = InputFormat::PairPerLine;
      } else {
        throw ConfigError("data_format must be 'adjacency' or 'pairs'");
      }
    } else if (key == "split_ratio") {
      config.split_ratio = parse_real(key, value);
    } else if (key == "seed_split") {
      config.seed_split = parse_seed(key, value);
    } else if (key == "seed_init") {
      config.seed_init = parse_seed(key, value);
    } else if (key == "seed_sampling") {
      config.seed_sampling = parse_seed(key, value);
    } else if (key == "embed_dim") {
      config.embed_dim = parse_index(key, value);
    } else if (key == "num_intents") {
      config.num_intents = parse_index(key, value);
    } else if (key == "num_layers") {
      config.num_layers = parse_index(key, value);
    } else if (key == "eta") {
      config.eta = parse_real(key, value);
    } else if (key == "top_q") {
      config.top_q = parse_index(key, value);
    } else if (key == "lambda1") {
      config.weights.lambda1 = parse_real(key, value);
    } else if (key == "lambda2") {
      config.weights.lambda2 = parse_real(key, value);
    } else if (key == "lambda3") {
      config.weights.lambda3 = parse_real(key, value);
    } else if (key == "lambda4") {
      config.weights.lambda4 = parse_real(key, value);
    } else if (key == "lambda5") {
      config.weights.lambda5 = parse_real(key, value);
    } else if (key == "tau") {
      config.weights.tau = parse_real(key, value);
    } else if (key == "learning_rate") {
      config.learning_rate = parse_real(key, value);
    } else if (key == "batch_size") {
      config.batch_size = parse_index(key, value);
    } else if (key == "epochs") {
      config.epochs = parse_index(key, value);
    } else if (key == "eval_every") {
      config.eval_every = parse_index(key, value);
    } else if (key == "early_stop_patience") {
      config.early_stop_patience = parse_index(key, value);
    } else if (key == "toggle_ho") {
      config.toggles.ho = parse_bool(key, value);
    } else if (key == "toggle_dp") {
      config.toggles.dp = parse_bool(key, value);
    } else if (key == "toggle_he") {
      config.toggles.he = parse_bool(key, value);
    } else if (key == "toggle_ip") {
      config.toggles.ip = parse_bool(key, value);
    } else if (key == "toggle_spc") {
      config.toggles.spc = parse_bool(key, value);
    } else if (key == "toggle_sc") {
      config.toggles.sc = parse_bool(key, value);
    } else if (key == "toggle_pc") {
      config.toggles.pc = parse_bool(key, value);
    } else if (key == "toggle_pcd") {
      config.toggles.pcd = parse_bool(key, value);
    } else if (key == "toggle_pci") {
      config.toggles.pci = parse_bool(key, value);
    } else if (key == "eval_k") {
      config.eval_k = parse_index_list(value);
    } else if (key == "sparsity_buckets") {
      config.sparsity_buckets = parse_index_list(value);
    } else if (key == "out_dir") {
      config.out_dir = value;
    } else {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }
  config.toggles = config.toggles.normalized();
  config.validate();
  return config;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_config_text(buffer.str());
}

std::string RunConfig::serialize() const {
  std::ostringstream os;
  os << "train_file=" << train_file << "\n";
  os << "data_format="
     << (data_format == InputFormat::AdjacencyList ? "adjacency" : "pairs") << "\n";
  os << "split_ratio=" << real_to_string(split_ratio) << "\n";
  os << "seed_split=" << seed_split << "\n";
  os << "seed_init=" << seed_init << "\n";
  os << "seed_sampling=" << seed_sampling << "\n";
  os << "embed_dim=" << embed_dim << "\n";
  os << "num_intents=" << num_intents << "\n";
  os << "num_layers=" << num_layers << "\n";
  os << "eta=" << real_to_string(eta) << "\n";
  os << "top_q=" << top_q << "\n";
  os << "lambda1=" << real_to_string(weights.lambda1) << "\n";
  os << "lambda2=" << real_to_string(weights.lambda2) << "\n";
  os << "lambda3=" << real_to_string(weights.lambda3) << "\n";
  os << "lambda4=" << real_to_string(weights.lambda4) << "\n";
  os << "lambda5=" << real_to_string(weights.lambda5) << "\n";
  os << "tau=" << real_to_string(weights.tau) << "\n";
  os << "learning_rate=" << real_to_string(learning_rate) << "\n";
  os << "batch_size=" << batch_size << "\n";
  os << "epochs=" << epochs << "\n";
  os << "eval_every=" << eval_every << "\n";
  os << "early_stop_patience=" << early_stop_patience << "\n";
  os << "toggle_ho=" << (toggles.ho ? 1 : 0) << "\n";
  os << "toggle_dp=" << (toggles.dp ? 1 : 0) << "\n";
  os << "toggle_he=" << (toggles.he ? 1 : 0) << "\n";
  os << "toggle_ip=" << (toggles.ip ? 1 : 0) << "\n";
  os << "toggle_spc=" << (toggles.spc ? 1 : 0) << "\n";
  os << "toggle_sc=" << (toggles.sc ? 1 : 0) << "\n";
  os << "toggle_pc=" << (toggles.pc ? 1 : 0) << "\n";
  os << "toggle_pcd=" << (toggles.pcd ? 1 : 0) << "\n";
  os << "toggle_pci=" << (toggles.pci ? 1 : 0) << "\n";
  os << "eval_k=" << index_list_to_string(eval_k) << "\n";
  os << "sparsity_buckets=" << index_list_to_string(sparsity_buckets) << "\n";
  os << "out_dir=" << out_dir << "\n";
  return os.str();
}

std::string variant_help() {
  return "Ablation variants (each clears the listed toggle keys):\n"
         "  w/o ho   toggle_ho=0    drop high-order propagation\n"
         "  w/o dp   toggle_dp=0    drop deep propagation\n"
         "  w/o he   toggle_he=0    same-type transmission instead of cross\n"
         "  w/o ip   toggle_ip=0    drop intent propagation (implies toggle_pci=0)\n"
         "  w/o spc  toggle_spc=0   drop all contrastive terms (implies sc=pc=0)\n"
         "  w/o sc   toggle_sc=0    drop sequence contrast\n"
         "  w/o pc   toggle_pc=0    drop propagation contrast (implies pcd=pci=0)\n"
         "  w/o pcd  toggle_pcd=0   drop shallow-vs-deep contrast pair\n"
         "  w/o pci  toggle_pci=0   drop shallow-vs-intent contrast pair\n";
}

void apply_variant(RunConfig& config, const std::string& name) {
  static const std::map<std::string, bool AblationToggles::*> variants = {
      {"w/o ho", &AblationToggles::ho},   {"w/o dp", &AblationToggles::dp},
      {"w/o he", &AblationToggles::he},   {"w/o ip", &AblationToggles::ip},
      {"w/o spc", &AblationToggles::spc}, {"w/o sc", &AblationToggles::sc},
      {"w/o pc", &AblationToggles::pc},   {"w/o pcd", &AblationToggles::pcd},
      {"w/o pci", &AblationToggles::pci}};
  const auto it = variants.find(name);
  if (it == variants.end()) throw ConfigError("unknown variant '" + name + "'");
  config.toggles.*(it->second) = false;
  config.toggles = config.toggles.normalized();
}

}  // namespace ipccf
