#include "ipccf/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

namespace ipccf {

namespace {

constexpr char kMagic[8] = {'I', 'P', 'C', 'C', 'F', '0', '0', '1'};

static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

void write_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint64_t read_u64(std::istream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

void write_matrix(std::ostream& out, const Mat& m) {
  std::vector<float> row(static_cast<std::size_t>(m.cols()));
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      row[static_cast<std::size_t>(j)] = static_cast<float>(m(i, j));
    }
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
}

Mat read_matrix(std::istream& in, Index rows, Index cols) {
  Mat m(rows, cols);
  std::vector<float> row(static_cast<std::size_t>(cols));
  for (Index i = 0; i < rows; ++i) {
    in.read(reinterpret_cast<char*>(row.data()),
            static_cast<std::streamsize>(row.size() * sizeof(float)));
    if (!in) throw CheckpointError("checkpoint truncated");
    for (Index j = 0; j < cols; ++j) {
      m(i, j) = static_cast<Real>(row[static_cast<std::size_t>(j)]);
    }
  }
  return m;
}

}  // namespace

void save_checkpoint(const std::string& path, const CheckpointHeader& header,
                     const ModelParams& params) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write checkpoint: " + path);
  out.write(kMagic, sizeof(kMagic));
  write_u64(out, header.num_users);
  write_u64(out, header.num_items);
  write_u64(out, header.dim);
  write_u64(out, header.num_intents);
  write_u64(out, header.num_layers);
  write_matrix(out, params.node_embeddings);
  write_matrix(out, params.intent_embeddings);
  write_matrix(out, params.fusion_weights);
  write_matrix(out, params.fusion_bias);
  if (!out) throw CheckpointError("write failure: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw CheckpointError("bad checkpoint magic in " + path);
  }
  Checkpoint cp;
  cp.header.num_users = read_u64(in);
  cp.header.num_items = read_u64(in);
  cp.header.dim = read_u64(in);
  cp.header.num_intents = read_u64(in);
  cp.header.num_layers = read_u64(in);
  if (!in) throw CheckpointError("checkpoint header truncated");
  const auto nodes =
      static_cast<Index>(cp.header.num_users + cp.header.num_items);
  const auto d = static_cast<Index>(cp.header.dim);
  const auto k = static_cast<Index>(cp.header.num_intents);
  cp.params.node_embeddings = read_matrix(in, nodes, d);
  cp.params.intent_embeddings = read_matrix(in, k, d);
  cp.params.fusion_weights = read_matrix(in, 4 * d, d);
  cp.params.fusion_bias = read_matrix(in, 1, d);
  return cp;
}

}  // namespace ipccf
