#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace ipccf {

// Project-wide scalar. The verification suite runs in 64-bit; switch to
// float only for large-scale runs where the relaxed tolerances apply.
using Real = double;

template <class Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <class Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <class Scalar>
using SparseX = Eigen::SparseMatrix<Scalar, Eigen::RowMajor>;

using Mat = MatrixX<Real>;
using Vec = VectorX<Real>;
using SpMat = SparseX<Real>;
using Index = Eigen::Index;

// Error taxonomy; the CLI maps each type to its exit code.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct SizeBoundError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// splitmix64; used to derive independent per-entity seed streams.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace ipccf
