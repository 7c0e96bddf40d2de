#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "ipccf/core.hpp"

// Reverse-mode differentiation over dense matrices and fixed sparse
// operators. One tape per training step; primitives are free functions in
// ipccf::ad that record a forward value plus a pullback closure. Nodes are
// appended in execution order, so reverse iteration is a valid topological
// backward sweep.

namespace ipccf::ad {

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

template <class Scalar>
class Tape {
 public:
  using Mat = MatrixX<Scalar>;

  struct Node {
    Mat value;
    Mat grad;  // empty until a pullback touches it
    std::function<void(Tape&, const Mat&)> pullback;  // null for leaves
    bool trainable = false;
  };

  bool check_finite = true;

  Var leaf(Mat value, bool trainable = true) {
    Var v = push(std::move(value), nullptr, "leaf");
    nodes_[static_cast<std::size_t>(v.id)].trainable = trainable;
    return v;
  }

  Var constant(Mat value) { return push(std::move(value), nullptr, "constant"); }

  Var zeros(Index rows, Index cols) { return constant(Mat::Zero(rows, cols)); }

  Var push(Mat value, std::function<void(Tape&, const Mat&)> pullback,
           const char* op) {
    if (check_finite && !value.allFinite()) {
      throw NumericError(std::string("non-finite output from op '") + op + "'");
    }
    nodes_.push_back(Node{std::move(value), Mat(), std::move(pullback), false});
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  const Mat& value(Var v) const { return nodes_[checked(v)].value; }

  Index rows(Var v) const { return value(v).rows(); }
  Index cols(Var v) const { return value(v).cols(); }

  /// Gradient of the last backward() target w.r.t. v; zero if unreachable.
  Mat grad(Var v) const {
    const Node& node = nodes_[checked(v)];
    if (node.grad.size() == 0) return Mat::Zero(node.value.rows(), node.value.cols());
    return node.grad;
  }

  void accumulate(Var v, const Mat& contribution) {
    Node& node = nodes_[checked(v)];
    if (node.grad.size() == 0) {
      node.grad = Mat::Zero(node.value.rows(), node.value.cols());
    }
    node.grad += contribution;
  }

  void backward(Var loss) {
    const Node& top = nodes_[checked(loss)];
    if (top.value.rows() != 1 || top.value.cols() != 1) {
      throw NumericError("backward target must be scalar (1x1)");
    }
    accumulate(loss, Mat::Ones(1, 1));
    for (int i = loss.id; i >= 0; --i) {
      Node& node = nodes_[static_cast<std::size_t>(i)];
      if (node.grad.size() == 0 || !node.pullback) continue;
      node.pullback(*this, node.grad);
      if (check_finite && !node.grad.allFinite()) {
        throw NumericError("non-finite gradient encountered during backward");
      }
    }
  }

  Scalar scalar(Var v) const {
    const Mat& m = value(v);
    if (m.size() != 1) throw NumericError("scalar() on non-scalar var");
    return m(0, 0);
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  std::size_t checked(Var v) const {
    if (!v.valid() || static_cast<std::size_t>(v.id) >= nodes_.size()) {
      throw NumericError("invalid tape variable");
    }
    return static_cast<std::size_t>(v.id);
  }

  std::vector<Node> nodes_;
};

namespace detail {

template <class Scalar>
void require_same_shape(const Tape<Scalar>& t, Var a, Var b, const char* op) {
  if (t.rows(a) != t.rows(b) || t.cols(a) != t.cols(b)) {
    throw NumericError(std::string("shape mismatch in op '") + op + "'");
  }
}

template <class Scalar>
Scalar stable_sigmoid(Scalar x) {
  if (x >= 0) return Scalar(1) / (Scalar(1) + std::exp(-x));
  const Scalar e = std::exp(x);
  return e / (Scalar(1) + e);
}

}  // namespace detail

// ---- elementwise and linear primitives -----------------------------------

template <class Scalar>
Var add(Tape<Scalar>& t, Var a, Var b) {
  detail::require_same_shape(t, a, b, "add");
  return t.push(t.value(a) + t.value(b),
                [a, b](Tape<Scalar>& tp, const MatrixX<Scalar>& g) {
                  tp.accumulate(a, g);
                  tp.accumulate(b, g);
                },
                "add");
}

template <class Scalar>
Var sub(Tape<Scalar>& t, Var a, Var b) {
  detail::require_same_shape(t, a, b, "sub");
  return t.push(t.value(a) - t.value(b),
                [a, b](Tape<Scalar>& tp, const MatrixX<Scalar>& g) {
                  tp.accumulate(a, g);
                  tp.accumulate(b, -g);
                },
                "sub");
}

template <class Scalar>
Var scale(Tape<Scalar>& t, Var a, std::type_identity_t<Scalar> c) {
  return t.push(t.value(a) * c,
                [a, c](Tape<Scalar>& tp, const MatrixX<Scalar>& g) {
                  tp.accumulate(a, g * c);
                },
                "scale");
}

template <class Scalar>
Var add_scalar(Tape<Scalar>& t, Var a, std::type_identity_t<Scalar> c) {
  return t.push((t.value(a).array() + c).matrix(),
                [a](Tape<Scalar>& tp, const MatrixX<Scalar>& g) {
                  tp.accumulate(a, g);
                },
                "add_scalar");
}

template <class Scalar>
Var mul(Tape<Scalar>& t, Var a, Var b) {
  detail::require_same_shape(t, a, b, "mul");
  return t.push(t.value(a).cwiseProduct(t.value(b)),
                [a, b](Tape<Scalar>& tp, const MatrixX<Scalar>& g) {
                  tp.accumulate(a, g.cwiseProduct(tp.value(b)));
                  tp.accumulate(b, g.cwiseProduct(tp.value(a)));
                },
                "mul");
}

/// a ./ max(b, eps) elementwise; the clamp keeps empty-denominator paths
/// finite and blocks gradient flow where the clamp is active.
template <class Scalar>
Var div_floor(Tape<Scalar>& t, Var a, Var b, std::type_identity_t<Scalar> eps) {
  detail::require_same_shape(t, a, b, "div_floor");
  MatrixX<Scalar> denom = t.value(b).cwiseMax(eps);
  return t.push(t.value(a).cwiseQuotient(denom),
                [a, b, eps](Tape<Scalar>& tp, const MatrixX<Scalar>& g) {
                  const MatrixX<Scalar> denom = tp.value(b).cwiseMax(eps);
                  tp.accumulate(a, g.cwiseQuotient(denom));
                  MatrixX<Scalar> db =
                      -g.cwiseProduct(tp.value(a)).cwiseQuotient(denom.cwiseProduct(denom));
                  db = (tp.value(b).array() > eps).select(db, MatrixX<Scalar>::Zero(db.rows(), db.cols()));
                  tp.accumulate(b, db);
                },
                "div_floor");
}

template <class Scalar>
Var concat_cols(Tape<Scalar>& t, const std::vector<Var>& parts) {
  if (parts.empty()) throw NumericError("concat_cols of nothing");
  const Index rows = t.rows(parts.front());
  Index cols = 0;
  for (Var p : parts) {
    if (t.rows(p) != rows) throw NumericError("shape mismatch in op 'concat_cols'");
    cols += t.cols(p);
  }
  MatrixX<Scalar> out(rows, cols);
  Index at = 0;
  for (Var p : parts) {
    out.middleCols(at, t.cols(p)) = t.value(p);
    at += t.cols(p);
  }
  return t.push(std::move(out),
                [parts](Tape<Scalar>& tp, const MatrixX<Scalar>& g) {
                  Index at = 0;
                  for (Var p : parts) {
                    tp.accumulate(p, g.middleCols(at, tp.cols(p)));
                    at += tp.cols(p);
                  }
                },
                "concat_cols");
}

/// x*w + bias, bias a (1 x q) row broadcast over rows.
template <class Scalar>
Var affine(Tape<Scalar>& t, Var x, Var w, Var bias) {
  if (t.cols(x) != t.rows(w) || t.rows(bias) != 1 || t.cols(bias) != t.cols(w)) {
    throw NumericError("shape mismatch in op 'affine'");
  }
  MatrixX<Scalar> out = t.value(x) * t.value(w);
  out.rowwise() += t.value(bias).row(0);
  return t.push(std::move(out),
                [x, w, bias](Tape<Scalar>& tp, const MatrixX<Scalar>& g) {
                  tp.accumulate(x, g * tp.value(w).transpose());
                  tp.accumulate(w, tp.value(x).transpose() * g);
                  tp.accumulate(bias, g.colwise().sum());
                },
                "affine");
}

/// a * b^T.
template <class Scalar>
Var matmul_nt(Tape<Scalar>& t, Var a, Var b) {
  if (t.cols(a) != t.cols(b)) throw NumericError("shape mismatch in op 'matmul_nt'");
  return t.push(t.value(a) * t.value(b).transpose(),
                [a, b](Tape<Scalar>& tp, const MatrixX<Scalar>& g) {
                  tp.accumulate(a, g * tp.value(b));
                  tp.accumulate(b, g.transpose() * tp.value(a));
                },
                "matmul_nt");
}

/// Product with a fixed sparse operator. The operator must outlive the tape.
template <class Scalar>
Var spmm(Tape<Scalar>& t, const SparseX<Scalar>& op, Var x) {
  if (op.cols() != t.rows(x)) throw NumericError("shape mismatch in op 'spmm'");
  const SparseX<Scalar>* s = &op;
  return t.push(op * t.value(x),
                [s, x](Tape<Scalar>& tp, const MatrixX<Scalar>& g) {
                  tp.accumulate(x, s->transpose() * g);
                },
                "spmm");
}

// ---- row selection and segment primitives --------------------------------

template <class Scalar>
Var gather_rows(Tape<Scalar>& t, Var x, std::vector<Index> rows) {
  const MatrixX<Scalar>& src = t.value(x);
  MatrixX<Scalar> out(static_cast<Index>(rows.size()), src.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= src.rows()) {
      throw NumericError("gather_rows index out of range");
    }
    out.row(static_cast<Index>(i)) = src.row(rows[i]);
  }
  return t.push(std::move(out),
                [x, rows = std::move(rows)](Tape<Scalar>& tp, const MatrixX<Scalar>& g) {
                  MatrixX<Scalar> dx =
                      MatrixX<Scalar>::Zero(tp.rows(x), tp.cols(x));
                  for (std::size_t i = 0; i < rows.size(); ++i) {
                    dx.row(rows[i]) += g.row(static_cast<Index>(i));
                  }
                  tp.accumulate(x, dx);
                },
                "gather_rows");
}

/// (n x k) -> (rows x k) segment sum: out[ids[e]] += a[e].
template <class Scalar>
Var scatter_row_sum(Tape<Scalar>& t, Var a, std::vector<Index> ids, Index rows) {
  const MatrixX<Scalar>& src = t.value(a);
  if (static_cast<Index>(ids.size()) != src.rows()) {
    throw NumericError("scatter_row_sum needs one id per row");
  }
  MatrixX<Scalar> out = MatrixX<Scalar>::Zero(rows, src.cols());
  for (std::size_t e = 0; e < ids.size(); ++e) {
    out.row(ids[e]) += src.row(static_cast<Index>(e));
  }
  return t.push(std::move(out),
                [a, ids = std::move(ids)](Tape<Scalar>& tp, const MatrixX<Scalar>& g) {
                  MatrixX<Scalar> da(static_cast<Index>(ids.size()), g.cols());
                  for (std::size_t e = 0; e < ids.size(); ++e) {
                    da.row(static_cast<Index>(e)) = g.row(ids[e]);
                  }
                  tp.accumulate(a, da);
                },
                "scatter_row_sum");
}

/// Row-broadcast scale: out_ij = a_ij * s_i with s an (m x 1) column.
template <class Scalar>
Var row_scale(Tape<Scalar>& t, Var a, Var s) {
  if (t.rows(a) != t.rows(s) || t.cols(s) != 1) {
    throw NumericError("shape mismatch in op 'row_scale'");
  }
  return t.push(
      (t.value(a).array().colwise() * t.value(s).col(0).array()).matrix(),
      [a, s](Tape<Scalar>& tp, const MatrixX<Scalar>& g) {
        tp.accumulate(
            a, (g.array().colwise() * tp.value(s).col(0).array()).matrix());
        tp.accumulate(s, g.cwiseProduct(tp.value(a)).rowwise().sum());
      },
      "row_scale");
}

/// out[src[e]] += w_e * m[dst[e]]; sparse product whose per-edge weights are
/// themselves differentiable.
template <class Scalar>
Var edge_spmm(Tape<Scalar>& t, std::vector<Index> src, std::vector<Index> dst,
              Var w, Var m, Index out_rows) {
  if (t.rows(w) != static_cast<Index>(src.size()) || t.cols(w) != 1 ||
      src.size() != dst.size()) {
    throw NumericError("shape mismatch in op 'edge_spmm'");
  }
  const MatrixX<Scalar>& weights = t.value(w);
  const MatrixX<Scalar>& dense = t.value(m);
  MatrixX<Scalar> out = MatrixX<Scalar>::Zero(out_rows, dense.cols());
  for (std::size_t e = 0; e < src.size(); ++e) {
    out.row(src[e]) += weights(static_cast<Index>(e), 0) * dense.row(dst[e]);
  }
  return t.push(std::move(out),
                [src = std::move(src), dst = std::move(dst), w,
                 m](Tape<Scalar>& tp, const MatrixX<Scalar>& g) {
                  const MatrixX<Scalar>& weights = tp.value(w);
                  const MatrixX<Scalar>& dense = tp.value(m);
                  MatrixX<Scalar> dw(static_cast<Index>(src.size()), 1);
                  MatrixX<Scalar> dm = MatrixX<Scalar>::Zero(dense.rows(), dense.cols());
                  for (std::size_t e = 0; e < src.size(); ++e) {
                    dw(static_cast<Index>(e), 0) = g.row(src[e]).dot(dense.row(dst[e]));
                    dm.row(dst[e]) += weights(static_cast<Index>(e), 0) * g.row(src[e]);
                  }
                  tp.accumulate(w, dw);
                  tp.accumulate(m, dm);
                },
                "edge_spmm");
}

// ---- row geometry ---------------------------------------------------------

inline constexpr double kNormEps = 1e-12;

/// Rows scaled to unit L2 norm; rows with norm <= eps become zero rows and
/// pass no gradient.
template <class Scalar>
Var row_normalize(Tape<Scalar>& t, Var x,
                  std::type_identity_t<Scalar> eps = Scalar(kNormEps)) {
  const MatrixX<Scalar>& src = t.value(x);
  MatrixX<Scalar> out = MatrixX<Scalar>::Zero(src.rows(), src.cols());
  for (Index i = 0; i < src.rows(); ++i) {
    const Scalar n = src.row(i).norm();
    if (n > eps) out.row(i) = src.row(i) / n;
  }
  return t.push(std::move(out),
                [x, eps](Tape<Scalar>& tp, const MatrixX<Scalar>& g) {
                  const MatrixX<Scalar>& src = tp.value(x);
                  MatrixX<Scalar> dx = MatrixX<Scalar>::Zero(src.rows(), src.cols());
                  for (Index i = 0; i < src.rows(); ++i) {
                    const Scalar n = src.row(i).norm();
                    if (n <= eps) continue;
                    const auto a = src.row(i) / n;
                    dx.row(i) = (g.row(i) - a * g.row(i).dot(a)) / n;
                  }
                  tp.accumulate(x, dx);
                },
                "row_normalize");
}

/// cos(x[rows_a[e]], x[rows_b[e]]) as an (m x 1) column; zero rows yield 0.
template <class Scalar>
Var row_cosine_pairs(Tape<Scalar>& t, Var x, std::vector<Index> rows_a,
                     std::vector<Index> rows_b) {
  if (rows_a.size() != rows_b.size()) {
    throw NumericError("row_cosine_pairs needs equal index lists");
  }
  const MatrixX<Scalar>& src = t.value(x);
  const Scalar eps = Scalar(kNormEps);
  MatrixX<Scalar> out(static_cast<Index>(rows_a.size()), 1);
  for (std::size_t e = 0; e < rows_a.size(); ++e) {
    const auto a = src.row(rows_a[e]);
    const auto b = src.row(rows_b[e]);
    const Scalar na = a.norm(), nb = b.norm();
    out(static_cast<Index>(e), 0) =
        (na > eps && nb > eps) ? a.dot(b) / (na * nb) : Scalar(0);
  }
  return t.push(
      std::move(out),
      [x, rows_a = std::move(rows_a), rows_b = std::move(rows_b),
       eps](Tape<Scalar>& tp, const MatrixX<Scalar>& g) {
        const MatrixX<Scalar>& src = tp.value(x);
        MatrixX<Scalar> dx = MatrixX<Scalar>::Zero(src.rows(), src.cols());
        for (std::size_t e = 0; e < rows_a.size(); ++e) {
          const auto a = src.row(rows_a[e]);
          const auto b = src.row(rows_b[e]);
          const Scalar na = a.norm(), nb = b.norm();
          if (na <= eps || nb <= eps) continue;
          const Scalar c = a.dot(b) / (na * nb);
          const Scalar ge = g(static_cast<Index>(e), 0);
          dx.row(rows_a[e]) += ge * (b / (na * nb) - c * a / (na * na));
          dx.row(rows_b[e]) += ge * (a / (na * nb) - c * b / (nb * nb));
        }
        tp.accumulate(x, dx);
      },
      "row_cosine_pairs");
}

/// x[rows_a[e]] . x[rows_b[e]] as an (m x 1) column.
template <class Scalar>
Var row_dot_pairs(Tape<Scalar>& t, Var x, std::vector<Index> rows_a,
                  std::vector<Index> rows_b) {
  if (rows_a.size() != rows_b.size()) {
    throw NumericError("row_dot_pairs needs equal index lists");
  }
  const MatrixX<Scalar>& src = t.value(x);
  MatrixX<Scalar> out(static_cast<Index>(rows_a.size()), 1);
  for (std::size_t e = 0; e < rows_a.size(); ++e) {
    out(static_cast<Index>(e), 0) = src.row(rows_a[e]).dot(src.row(rows_b[e]));
  }
  return t.push(std::move(out),
                [x, rows_a = std::move(rows_a), rows_b = std::move(rows_b)](
                    Tape<Scalar>& tp, const MatrixX<Scalar>& g) {
                  const MatrixX<Scalar>& src = tp.value(x);
                  MatrixX<Scalar> dx = MatrixX<Scalar>::Zero(src.rows(), src.cols());
                  for (std::size_t e = 0; e < rows_a.size(); ++e) {
                    const Scalar ge = g(static_cast<Index>(e), 0);
                    dx.row(rows_a[e]) += ge * src.row(rows_b[e]);
                    dx.row(rows_b[e]) += ge * src.row(rows_a[e]);
                  }
                  tp.accumulate(x, dx);
                },
                "row_dot_pairs");
}

// ---- nonlinearities and reductions ----------------------------------------

template <class Scalar>
Var softmax_rows(Tape<Scalar>& t, Var x) {
  const MatrixX<Scalar>& src = t.value(x);
  MatrixX<Scalar> out(src.rows(), src.cols());
  for (Index i = 0; i < src.rows(); ++i) {
    const Scalar m = src.row(i).maxCoeff();
    out.row(i) = (src.row(i).array() - m).exp().matrix();
    out.row(i) /= out.row(i).sum();
  }
  return t.push(std::move(out),
                [x, self = static_cast<int>(t.size())](Tape<Scalar>& tp,
                                                       const MatrixX<Scalar>& g) {
                  const MatrixX<Scalar>& y = tp.value(Var{self});
                  MatrixX<Scalar> dx(y.rows(), y.cols());
                  for (Index i = 0; i < y.rows(); ++i) {
                    const Scalar dot = g.row(i).dot(y.row(i));
                    dx.row(i) =
                        (y.row(i).array() * (g.row(i).array() - dot)).matrix();
                  }
                  tp.accumulate(x, dx);
                },
                "softmax_rows");
}

template <class Scalar>
Var log_sigmoid(Tape<Scalar>& t, Var x) {
  const MatrixX<Scalar>& src = t.value(x);
  MatrixX<Scalar> out = src.unaryExpr([](Scalar v) {
    return std::min(v, Scalar(0)) - std::log1p(std::exp(-std::abs(v)));
  });
  return t.push(std::move(out),
                [x](Tape<Scalar>& tp, const MatrixX<Scalar>& g) {
                  tp.accumulate(x, g.cwiseProduct(tp.value(x).unaryExpr([](Scalar v) {
                    return detail::stable_sigmoid(-v);
                  })));
                },
                "log_sigmoid");
}

template <class Scalar>
Var sum(Tape<Scalar>& t, Var x) {
  MatrixX<Scalar> out(1, 1);
  out(0, 0) = t.value(x).sum();
  return t.push(std::move(out),
                [x](Tape<Scalar>& tp, const MatrixX<Scalar>& g) {
                  tp.accumulate(x, MatrixX<Scalar>::Constant(
                                       tp.rows(x), tp.cols(x), g(0, 0)));
                },
                "sum");
}

template <class Scalar>
Var mean(Tape<Scalar>& t, Var x) {
  const Scalar n = static_cast<Scalar>(t.value(x).size());
  MatrixX<Scalar> out(1, 1);
  out(0, 0) = t.value(x).sum() / n;
  return t.push(std::move(out),
                [x, n](Tape<Scalar>& tp, const MatrixX<Scalar>& g) {
                  tp.accumulate(x, MatrixX<Scalar>::Constant(
                                       tp.rows(x), tp.cols(x), g(0, 0) / n));
                },
                "mean");
}

template <class Scalar>
Var row_sum(Tape<Scalar>& t, Var x) {
  return t.push(t.value(x).rowwise().sum(),
                [x](Tape<Scalar>& tp, const MatrixX<Scalar>& g) {
                  tp.accumulate(x, g.col(0).replicate(1, tp.cols(x)));
                },
                "row_sum");
}

template <class Scalar>
Var l2_norm_sq(Tape<Scalar>& t, Var x) {
  MatrixX<Scalar> out(1, 1);
  out(0, 0) = t.value(x).squaredNorm();
  return t.push(std::move(out),
                [x](Tape<Scalar>& tp, const MatrixX<Scalar>& g) {
                  tp.accumulate(x, Scalar(2) * g(0, 0) * tp.value(x));
                },
                "l2_norm_sq");
}

template <class Scalar>
Var sum_strict_upper(Tape<Scalar>& t, Var x) {
  const MatrixX<Scalar>& src = t.value(x);
  Scalar acc = 0;
  for (Index i = 0; i < src.rows(); ++i) {
    for (Index j = i + 1; j < src.cols(); ++j) acc += src(i, j);
  }
  MatrixX<Scalar> out(1, 1);
  out(0, 0) = acc;
  return t.push(std::move(out),
                [x](Tape<Scalar>& tp, const MatrixX<Scalar>& g) {
                  MatrixX<Scalar> dx = MatrixX<Scalar>::Zero(tp.rows(x), tp.cols(x));
                  for (Index i = 0; i < dx.rows(); ++i) {
                    for (Index j = i + 1; j < dx.cols(); ++j) dx(i, j) = g(0, 0);
                  }
                  tp.accumulate(x, dx);
                },
                "sum_strict_upper");
}

// ---- fused contrastive reduction ------------------------------------------

inline constexpr Index kInfoNceBlock = 256;

/// Sum over selected nodes i of  logsumexp_j cos(a_i, b_j)/tau  -  cos(a_i, b_i)/tau,
/// where a/b are rows of the two views at `ids`. Never materializes the full
/// pairwise matrix: scores are streamed in row blocks both ways.
template <class Scalar>
Var info_nce_sum(Tape<Scalar>& t, Var view_a, Var view_b,
                 const std::vector<Index>& ids,
                 std::type_identity_t<Scalar> tau) {
  detail::require_same_shape(t, view_a, view_b, "info_nce_sum");
  const Index m = static_cast<Index>(ids.size());
  if (m == 0) return t.zeros(1, 1);
  const Scalar eps = Scalar(kNormEps);
  const MatrixX<Scalar>& a_src = t.value(view_a);
  const MatrixX<Scalar>& b_src = t.value(view_b);
  const Index d = a_src.cols();

  auto normalized_rows = [&](const MatrixX<Scalar>& src, VectorX<Scalar>& norms) {
    MatrixX<Scalar> out = MatrixX<Scalar>::Zero(m, d);
    norms.resize(m);
    for (Index i = 0; i < m; ++i) {
      const auto row = src.row(ids[static_cast<std::size_t>(i)]);
      const Scalar n = row.norm();
      norms[i] = n;
      if (n > eps) out.row(i) = row / n;
    }
    return out;
  };

  VectorX<Scalar> na, nb;
  MatrixX<Scalar> an = normalized_rows(a_src, na);
  MatrixX<Scalar> bn = normalized_rows(b_src, nb);

  VectorX<Scalar> lse(m);
  Scalar loss = 0;
  for (Index r0 = 0; r0 < m; r0 += kInfoNceBlock) {
    const Index r = std::min(kInfoNceBlock, m - r0);
    MatrixX<Scalar> s = (an.middleRows(r0, r) * bn.transpose()) / tau;
    for (Index i = 0; i < r; ++i) {
      const Scalar mx = s.row(i).maxCoeff();
      lse[r0 + i] = mx + std::log((s.row(i).array() - mx).exp().sum());
      loss += lse[r0 + i] - s(i, r0 + i);
    }
  }

  MatrixX<Scalar> out(1, 1);
  out(0, 0) = loss;
  auto pullback = [view_a, view_b, ids, tau, eps, an = std::move(an),
                   bn = std::move(bn), na = std::move(na), nb = std::move(nb),
                   lse = std::move(lse)](Tape<Scalar>& tp, const MatrixX<Scalar>& g) {
    const Index m = an.rows();
    const Scalar gs = g(0, 0) / tau;
    MatrixX<Scalar> dan = MatrixX<Scalar>::Zero(m, an.cols());
    MatrixX<Scalar> dbn = MatrixX<Scalar>::Zero(m, bn.cols());
    for (Index r0 = 0; r0 < m; r0 += kInfoNceBlock) {
      const Index r = std::min(kInfoNceBlock, m - r0);
      MatrixX<Scalar> p = (an.middleRows(r0, r) * bn.transpose()) / tau;
      for (Index i = 0; i < r; ++i) {
        p.row(i) = (p.row(i).array() - lse[r0 + i]).exp().matrix();
      }
      dan.middleRows(r0, r) += gs * (p * bn);
      dbn += gs * (p.transpose() * an.middleRows(r0, r));
    }
    dan -= gs * bn;  // aligned-pair term
    dbn -= gs * an;
    MatrixX<Scalar> da = MatrixX<Scalar>::Zero(tp.rows(view_a), tp.cols(view_a));
    MatrixX<Scalar> db = MatrixX<Scalar>::Zero(tp.rows(view_b), tp.cols(view_b));
    for (Index i = 0; i < m; ++i) {
      const auto id = ids[static_cast<std::size_t>(i)];
      if (na[i] > eps) {
        da.row(id) += (dan.row(i) - an.row(i) * dan.row(i).dot(an.row(i))) / na[i];
      }
      if (nb[i] > eps) {
        db.row(id) += (dbn.row(i) - bn.row(i) * dbn.row(i).dot(bn.row(i))) / nb[i];
      }
    }
    tp.accumulate(view_a, da);
    tp.accumulate(view_b, db);
  };
  return t.push(std::move(out), std::move(pullback), "info_nce_sum");
}

// ---- finite-difference verification ----------------------------------------

template <class Scalar>
struct FiniteDiffReport {
  Scalar max_rel_error = 0;
  Index worst_row = -1;
  Index worst_col = -1;
  bool pass = true;
  Scalar tolerance = 0;
};

/// Central-difference check of a scalar-valued tape program against its own
/// backward pass. `build` must be deterministic: (Tape&, Var leaf) -> loss Var.
template <class Scalar, class BuildFn>
FiniteDiffReport<Scalar> finite_diff_check(BuildFn&& build, const MatrixX<Scalar>& point,
                                           Scalar eps, Scalar tol) {
  MatrixX<Scalar> analytic;
  {
    Tape<Scalar> tape;
    Var x = tape.leaf(point, true);
    Var loss = build(tape, x);
    tape.backward(loss);
    analytic = tape.grad(x);
  }
  auto eval = [&](const MatrixX<Scalar>& at) {
    Tape<Scalar> tape;
    Var x = tape.leaf(at, false);
    return tape.scalar(build(tape, x));
  };
  FiniteDiffReport<Scalar> report;
  report.tolerance = tol;
  MatrixX<Scalar> probe = point;
  for (Index i = 0; i < point.rows(); ++i) {
    for (Index j = 0; j < point.cols(); ++j) {
      probe(i, j) = point(i, j) + eps;
      const Scalar up = eval(probe);
      probe(i, j) = point(i, j) - eps;
      const Scalar down = eval(probe);
      probe(i, j) = point(i, j);
      const Scalar numeric = (up - down) / (2 * eps);
      const Scalar denom = std::max(Scalar(1e-8), std::abs(numeric) + std::abs(analytic(i, j)));
      const Scalar rel = std::abs(numeric - analytic(i, j)) / denom;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_row = i;
        report.worst_col = j;
      }
    }
  }
  report.pass = report.max_rel_error < tol;
  return report;
}

}  // namespace ipccf::ad
