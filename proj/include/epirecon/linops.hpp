#pragma once

// Linear operators used by the reconstruction problem: a compressed sparse-row
// matrix with row-block views, matrix-free discrete gradients, a type-erased
// operator wrapper and a power-method norm estimate.
//
// Images are vectorized row-major: pixel (row i, column j) of an h x w image
// lives at index i * w + j.

#include "epirecon/core.hpp"

#include <algorithm>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace epirecon {

template <typename Scalar>
class CsrMatrix {
 public:
  using StorageIndex = std::int64_t;

  CsrMatrix() : row_offsets_{0} {}

  CsrMatrix(Index rows, Index cols, std::vector<StorageIndex> row_offsets,
            std::vector<StorageIndex> col_indices, std::vector<Scalar> values)
      : rows_(rows),
        cols_(cols),
        row_offsets_(std::move(row_offsets)),
        col_indices_(std::move(col_indices)),
        values_(std::move(values)) {
    validate();
  }

  static CsrMatrix identity(Index n) {
    std::vector<StorageIndex> offsets(n + 1), cols(n);
    for (Index i = 0; i <= n; ++i) offsets[i] = i;
    for (Index i = 0; i < n; ++i) cols[i] = i;
    return CsrMatrix(n, n, std::move(offsets), std::move(cols), std::vector<Scalar>(n, Scalar(1)));
  }

  /// Keeps every entry that is exactly nonzero.
  template <typename Derived>
  static CsrMatrix from_dense(const Eigen::MatrixBase<Derived>& dense) {
    std::vector<StorageIndex> offsets{0}, cols;
    std::vector<Scalar> vals;
    for (Index r = 0; r < dense.rows(); ++r) {
      for (Index c = 0; c < dense.cols(); ++c) {
        if (dense(r, c) != Scalar(0)) {
          cols.push_back(c);
          vals.push_back(dense(r, c));
        }
      }
      offsets.push_back(static_cast<StorageIndex>(cols.size()));
    }
    return CsrMatrix(dense.rows(), dense.cols(), std::move(offsets), std::move(cols),
                     std::move(vals));
  }

  MatrixX<Scalar> to_dense() const {
    MatrixX<Scalar> out = MatrixX<Scalar>::Zero(rows_, cols_);
    for (Index r = 0; r < rows_; ++r)
      for (StorageIndex k = row_offsets_[r]; k < row_offsets_[r + 1]; ++k)
        out(r, col_indices_[k]) = values_[k];
    return out;
  }

  Index rows() const noexcept { return rows_; }
  Index cols() const noexcept { return cols_; }
  Index nnz() const noexcept { return static_cast<Index>(values_.size()); }

  std::span<const StorageIndex> row_offsets() const noexcept { return row_offsets_; }
  std::span<const StorageIndex> col_indices() const noexcept { return col_indices_; }
  std::span<const Scalar> values() const noexcept { return values_; }

  /// Throws std::invalid_argument if any structural invariant is broken.
  void validate() const {
    require(rows_ >= 0 && cols_ >= 0, "CsrMatrix: negative shape");
    require(row_offsets_.size() == static_cast<std::size_t>(rows_) + 1,
            "CsrMatrix: row_offsets must have rows+1 entries");
    require(row_offsets_.front() == 0, "CsrMatrix: row_offsets[0] must be 0");
    require(static_cast<std::size_t>(row_offsets_.back()) == values_.size() &&
                col_indices_.size() == values_.size(),
            "CsrMatrix: row_offsets[rows] must equal nnz");
    for (Index r = 0; r < rows_; ++r) {
      require(row_offsets_[r] <= row_offsets_[r + 1], "CsrMatrix: row_offsets must be non-decreasing");
      for (StorageIndex k = row_offsets_[r]; k < row_offsets_[r + 1]; ++k) {
        require(col_indices_[k] >= 0 && col_indices_[k] < cols_,
                "CsrMatrix: column index out of range in row " + std::to_string(r));
        require(k == row_offsets_[r] || col_indices_[k - 1] < col_indices_[k],
                "CsrMatrix: column indices must be strictly increasing in row " +
                    std::to_string(r));
        require(std::isfinite(static_cast<double>(values_[k])), "CsrMatrix: non-finite value");
      }
    }
  }

  friend bool operator==(const CsrMatrix&, const CsrMatrix&) = default;

 private:
  Index rows_ = 0;
  Index cols_ = 0;
  std::vector<StorageIndex> row_offsets_;
  std::vector<StorageIndex> col_indices_;
  std::vector<Scalar> values_;
};

/// y = A x, each row accumulated left to right.
template <typename Scalar, typename DerivedX, typename DerivedY>
void matvec_into(const CsrMatrix<Scalar>& A, const Eigen::MatrixBase<DerivedX>& x,
                 Eigen::MatrixBase<DerivedY>& y) {
  require_same_size(A.cols(), x.size(), "matvec");
  require_same_size(A.rows(), y.size(), "matvec output");
  const auto offsets = A.row_offsets();
  const auto cols = A.col_indices();
  const auto vals = A.values();
  for (Index r = 0; r < A.rows(); ++r) {
    Scalar acc(0);
    for (auto k = offsets[r]; k < offsets[r + 1]; ++k) acc += vals[k] * x(cols[k]);
    y(r) = acc;
  }
}

template <typename Scalar, typename Derived>
VectorX<Scalar> matvec(const CsrMatrix<Scalar>& A, const Eigen::MatrixBase<Derived>& x) {
  VectorX<Scalar> y(A.rows());
  matvec_into(A, x, y);
  return y;
}

/// y = A^T x, scattered in row order so the result is reproducible.
template <typename Scalar, typename DerivedX, typename DerivedY>
void rmatvec_into(const CsrMatrix<Scalar>& A, const Eigen::MatrixBase<DerivedX>& x,
                  Eigen::MatrixBase<DerivedY>& y) {
  require_same_size(A.rows(), x.size(), "rmatvec");
  require_same_size(A.cols(), y.size(), "rmatvec output");
  const auto offsets = A.row_offsets();
  const auto cols = A.col_indices();
  const auto vals = A.values();
  y.setZero();
  for (Index r = 0; r < A.rows(); ++r) {
    const Scalar xr = x(r);
    if (xr == Scalar(0)) continue;
    for (auto k = offsets[r]; k < offsets[r + 1]; ++k) y(cols[k]) += vals[k] * xr;
  }
}

template <typename Scalar, typename Derived>
VectorX<Scalar> rmatvec(const CsrMatrix<Scalar>& A, const Eigen::MatrixBase<Derived>& x) {
  VectorX<Scalar> y(A.cols());
  rmatvec_into(A, x, y);
  return y;
}

struct RowRange {
  Index begin = 0;
  Index end = 0;  // exclusive
  Index size() const noexcept { return end - begin; }
  friend bool operator==(const RowRange&, const RowRange&) = default;
};

/// Row decomposition of a stacked operator into L contiguous blocks.
struct BlockPartition {
  std::vector<RowRange> ranges;
  std::vector<double> norms;  // per-block operator norm estimates, empty until computed

  Index num_blocks() const noexcept { return static_cast<Index>(ranges.size()); }
  Index total_rows() const noexcept { return ranges.empty() ? 0 : ranges.back().end; }

  void validate(Index rows) const {
    require(!ranges.empty(), "BlockPartition: need at least one block");
    Index expected = 0;
    for (const auto& r : ranges) {
      require(r.begin == expected && r.end > r.begin,
              "BlockPartition: blocks must be ordered, non-empty and contiguous");
      expected = r.end;
    }
    require(expected == rows, "BlockPartition: blocks must cover every row");
    require(norms.empty() || norms.size() == ranges.size(),
            "BlockPartition: one norm per block");
    for (double n : norms) require(std::isfinite(n) && n >= 0.0, "BlockPartition: bad norm");
  }
};

/// L contiguous near-equal blocks; the first (rows mod L) blocks get one extra row.
inline BlockPartition uniform_partition(Index rows, Index num_blocks) {
  require(num_blocks >= 1, "uniform_partition: need L >= 1");
  require(num_blocks <= rows, "uniform_partition: L exceeds the number of rows");
  BlockPartition p;
  const Index base = rows / num_blocks;
  const Index extra = rows % num_blocks;
  Index begin = 0;
  for (Index l = 0; l < num_blocks; ++l) {
    const Index len = base + (l < extra ? 1 : 0);
    p.ranges.push_back({begin, begin + len});
    begin += len;
  }
  return p;
}

/// Copy of the rows belonging to block l.
template <typename Scalar>
CsrMatrix<Scalar> block_view(const CsrMatrix<Scalar>& A, const BlockPartition& P, Index l) {
  require(l >= 0 && l < P.num_blocks(), "block_view: block index out of range");
  require(P.total_rows() == A.rows(), "block_view: partition does not match matrix rows");
  const RowRange r = P.ranges[l];
  const auto offsets = A.row_offsets();
  const auto first = offsets[r.begin];
  const auto last = offsets[r.end];
  std::vector<typename CsrMatrix<Scalar>::StorageIndex> sub_offsets(r.size() + 1);
  for (Index i = 0; i <= r.size(); ++i) sub_offsets[i] = offsets[r.begin + i] - first;
  const auto cols = A.col_indices();
  const auto vals = A.values();
  return CsrMatrix<Scalar>(r.size(), A.cols(), std::move(sub_offsets),
                           {cols.begin() + first, cols.begin() + last},
                           {vals.begin() + first, vals.begin() + last});
}

enum class GradientDirection { vertical, horizontal };

/// Forward differences with Neumann boundary (zero in the last row/column).
struct GradientOperator {
  Index height = 0;
  Index width = 0;
  GradientDirection direction = GradientDirection::vertical;

  Index size() const noexcept { return height * width; }
};

template <typename Derived>
VectorX<typename Derived::Scalar> apply_gradient(const GradientOperator& G,
                                                 const Eigen::MatrixBase<Derived>& u) {
  using Scalar = typename Derived::Scalar;
  require_same_size(G.size(), u.size(), "apply_gradient");
  VectorX<Scalar> out(G.size());
  const Index h = G.height, w = G.width;
  if (G.direction == GradientDirection::vertical) {
    for (Index i = 0; i < h; ++i)
      for (Index j = 0; j < w; ++j)
        out(i * w + j) = i + 1 < h ? Scalar(u((i + 1) * w + j) - u(i * w + j)) : Scalar(0);
  } else {
    for (Index i = 0; i < h; ++i)
      for (Index j = 0; j < w; ++j)
        out(i * w + j) = j + 1 < w ? Scalar(u(i * w + j + 1) - u(i * w + j)) : Scalar(0);
  }
  return out;
}

template <typename Derived>
VectorX<typename Derived::Scalar> apply_gradient_adjoint(const GradientOperator& G,
                                                         const Eigen::MatrixBase<Derived>& p) {
  using Scalar = typename Derived::Scalar;
  require_same_size(G.size(), p.size(), "apply_gradient_adjoint");
  VectorX<Scalar> out = VectorX<Scalar>::Zero(G.size());
  const Index h = G.height, w = G.width;
  // Transpose of the forward difference: each p(i) subtracts at i and adds at
  // its successor.
  if (G.direction == GradientDirection::vertical) {
    for (Index i = 0; i + 1 < h; ++i)
      for (Index j = 0; j < w; ++j) {
        out(i * w + j) -= p(i * w + j);
        out((i + 1) * w + j) += p(i * w + j);
      }
  } else {
    for (Index i = 0; i < h; ++i)
      for (Index j = 0; j + 1 < w; ++j) {
        out(i * w + j) -= p(i * w + j);
        out(i * w + j + 1) += p(i * w + j);
      }
  }
  return out;
}

/// Type-erased linear map with its adjoint.
template <typename Scalar>
struct LinearMap {
  using VectorType = VectorX<Scalar>;
  using Apply = std::function<VectorType(const VectorType&)>;

  Index rows = 0;
  Index cols = 0;
  Apply forward;
  Apply adjoint;

  VectorType apply(const VectorType& x) const {
    require_same_size(cols, x.size(), "LinearMap::apply");
    return forward(x);
  }
  VectorType apply_adjoint(const VectorType& y) const {
    require_same_size(rows, y.size(), "LinearMap::apply_adjoint");
    return adjoint(y);
  }
};

template <typename Scalar>
LinearMap<Scalar> as_linear_map(const CsrMatrix<Scalar>& A) {
  // Shares the matrix; the map must not outlive it.
  const CsrMatrix<Scalar>* m = &A;
  return {A.rows(), A.cols(),
          [m](const VectorX<Scalar>& x) { return matvec(*m, x); },
          [m](const VectorX<Scalar>& y) { return rmatvec(*m, y); }};
}

template <typename Scalar>
LinearMap<Scalar> as_linear_map(CsrMatrix<Scalar>&&) = delete;

template <typename Scalar>
LinearMap<Scalar> as_linear_map(GradientOperator G) {
  return {G.size(), G.size(),
          [G](const VectorX<Scalar>& x) { return apply_gradient(G, x); },
          [G](const VectorX<Scalar>& y) { return apply_gradient_adjoint(G, y); }};
}

template <typename Scalar, typename Derived>
LinearMap<Scalar> as_linear_map(const Eigen::MatrixBase<Derived>& dense) {
  MatrixX<Scalar> m = dense;
  return {m.rows(), m.cols(),
          [m](const VectorX<Scalar>& x) -> VectorX<Scalar> { return m * x; },
          [m](const VectorX<Scalar>& y) -> VectorX<Scalar> { return m.transpose() * y; }};
}

/// Vertical stack (A_1; A_2; ...) of maps sharing a domain.
template <typename Scalar>
LinearMap<Scalar> vstack(std::vector<LinearMap<Scalar>> parts) {
  require(!parts.empty(), "vstack: nothing to stack");
  Index rows = 0;
  for (const auto& p : parts) {
    require_same_size(parts.front().cols, p.cols, "vstack");
    rows += p.rows;
  }
  const Index cols = parts.front().cols;
  auto fwd = [parts, rows](const VectorX<Scalar>& x) {
    VectorX<Scalar> out(rows);
    Index offset = 0;
    for (const auto& p : parts) {
      out.segment(offset, p.rows) = p.apply(x);
      offset += p.rows;
    }
    return out;
  };
  auto adj = [parts, cols](const VectorX<Scalar>& y) {
    VectorX<Scalar> out = VectorX<Scalar>::Zero(cols);
    Index offset = 0;
    for (const auto& p : parts) {
      out += p.apply_adjoint(y.segment(offset, p.rows));
      offset += p.rows;
    }
    return out;
  };
  return {rows, cols, std::move(fwd), std::move(adj)};
}

struct PowerMethodOptions {
  double tol = 1e-4;
  int max_iters = 1000;
  std::uint64_t seed = 0;
};

/// Largest singular value of A by power iteration on A^T A.
///
/// Stops once the Rayleigh estimate changes by less than tol relative to its
/// value, or after max_iters sweeps. Returns 0 for the zero operator.
template <typename Scalar>
Scalar operator_norm(const LinearMap<Scalar>& A, const PowerMethodOptions& opts = {}) {
  require(opts.tol > 0.0, "operator_norm: tol must be positive");
  if (A.rows == 0 || A.cols == 0) return Scalar(0);
  Rng rng(opts.seed);
  VectorX<Scalar> x(A.cols);
  for (Index i = 0; i < x.size(); ++i) x(i) = Scalar(2.0 * uniform_unit(rng) - 1.0);
  x.normalize();
  Scalar rayleigh(0);
  for (int it = 0; it < opts.max_iters; ++it) {
    const VectorX<Scalar> Ax = A.apply(x);
    const Scalar next = Ax.squaredNorm();
    if (next == Scalar(0)) return Scalar(0);
    const bool converged = it > 0 && std::abs(next - rayleigh) < opts.tol * next;
    rayleigh = next;
    if (converged) break;
    x = A.apply_adjoint(Ax);
    const Scalar len = x.norm();
    if (len == Scalar(0)) return Scalar(0);
    x /= len;
  }
  return std::sqrt(rayleigh);
}

}  // namespace epirecon
