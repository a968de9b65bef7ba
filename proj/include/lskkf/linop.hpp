#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <memory>
#include <string_view>
#include <vector>

#include "lskkf/field.hpp"

namespace lskkf {

/// Matrix-free linear operator: a linear map exposed only through apply /
/// apply_adjoint. Operators are immutable after construction and safe to
/// share across threads; per-call scratch is call-local.
///
/// Adjoint contract: <apply(u), v> == <u, apply_adjoint(v)> for all u, v.
class LinearOperator {
 public:
  virtual ~LinearOperator() = default;

  Index rows() const { return rows_; }
  Index cols() const { return cols_; }
  virtual std::string_view kind() const = 0;

  /// op * v. Requires v.size() == cols().
  Vector apply(const Vector& v) const;

  /// op^T * v. Requires v.size() == rows().
  Vector apply_adjoint(const Vector& v) const;

 protected:
  LinearOperator(Index rows, Index cols) : rows_(rows), cols_(cols) {}
  virtual Vector do_apply(const Vector& v) const = 0;
  virtual Vector do_apply_adjoint(const Vector& v) const = 0;

 private:
  Index rows_;
  Index cols_;
};

using LinOp = std::shared_ptr<const LinearOperator>;

// ---- Building blocks (each matches a dense definition) --------------------

/// Identity on R^n.
LinOp make_identity(Index n);

/// L(i,i) = d_i: pointwise multiplication on the grid.
LinOp make_diagonal(Vector diag);
LinOp make_diagonal(const ScalarField& field);

/// L(i,j) = l(r_i - r_j): zero-padded linear convolution evaluated with the
/// FFT. The kernel is tabulated on an odd-sized support box centered at the
/// origin offset; its grid spacing must match the target grid. FFT plans and
/// the kernel spectrum are precomputed at construction.
LinOp make_convolution(const Grid& grid, const ScalarField& kernel);

/// L = L_1 (x) ... (x) L_D with row-major axis order (axis 1 outermost).
/// Factor d must have cols == grid.shape[d]; rows may differ.
LinOp make_separable(const Grid& grid, const std::vector<Matrix>& factors);

/// General sparse operator from triplets.
LinOp make_sparse(Index rows, Index cols,
                  const std::vector<Eigen::Triplet<double>>& triplets);
LinOp make_sparse(Eigen::SparseMatrix<double> matrix);

/// Wraps a small dense matrix as a sparse-kind operator (oracle support).
LinOp from_dense(const Matrix& m);

// ---- Combinators (lazy; shapes checked at construction) -------------------

LinOp op_sum(LinOp a, LinOp b);
LinOp op_compose(LinOp a, LinOp b);  // (a o b)(v) = a(b(v))
LinOp op_scale(LinOp a, double s);
LinOp op_adjoint(LinOp a);

/// Gaussian kernel parameters k(r) = gamma * exp(-|r|^2 / sigma^2).
struct GaussianKernel {
  double gamma = 1.0;
  double sigma = 1.0;
};

/// Tabulates the Gaussian on grid offsets, truncated at radius 4*sigma
/// (and at the grid extent).
ScalarField gaussian_kernel_field(const Grid& grid, const GaussianKernel& k);

/// Masked spatial-correlation operator:
///   apply(v) = sum_i mask_i .* (k * (mask_i .* v))
/// Symmetric for symmetric kernels; cross-material entries are exactly zero.
LinOp make_masked_kernel(const MaskSet& masks, const GaussianKernel& kernel,
                         const Grid& grid);

/// Same, but with an explicitly tabulated kernel field.
LinOp make_masked_kernel(const MaskSet& masks, const ScalarField& kernel,
                         const Grid& grid);

/// Densifies by probing with unit vectors. Small operators only.
Matrix to_dense(const LinearOperator& op);

}  // namespace lskkf
