#include "lskkf/linop.hpp"

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <mutex>
#include <string>

namespace lskkf {

Vector LinearOperator::apply(const Vector& v) const {
  if (v.size() != cols_)
    throw ShapeError(std::string(kind()) + ": apply expects length " +
                     std::to_string(cols_) + ", got " + std::to_string(v.size()));
  return do_apply(v);
}

Vector LinearOperator::apply_adjoint(const Vector& v) const {
  if (v.size() != rows_)
    throw ShapeError(std::string(kind()) + ": apply_adjoint expects length " +
                     std::to_string(rows_) + ", got " + std::to_string(v.size()));
  return do_apply_adjoint(v);
}

namespace {

class IdentityOp final : public LinearOperator {
 public:
  explicit IdentityOp(Index n) : LinearOperator(n, n) {}
  std::string_view kind() const override { return "identity"; }

 protected:
  Vector do_apply(const Vector& v) const override { return v; }
  Vector do_apply_adjoint(const Vector& v) const override { return v; }
};

class DiagonalOp final : public LinearOperator {
 public:
  explicit DiagonalOp(Vector d) : LinearOperator(d.size(), d.size()), diag_(std::move(d)) {}
  std::string_view kind() const override { return "diagonal"; }

 protected:
  Vector do_apply(const Vector& v) const override {
    return (diag_.array() * v.array()).matrix();
  }
  Vector do_apply_adjoint(const Vector& v) const override { return do_apply(v); }

 private:
  Vector diag_;
};

class SparseOp final : public LinearOperator {
 public:
  explicit SparseOp(Eigen::SparseMatrix<double> m)
      : LinearOperator(m.rows(), m.cols()), mat_(std::move(m)) {
    mat_.makeCompressed();
  }
  std::string_view kind() const override { return "sparse"; }

 protected:
  Vector do_apply(const Vector& v) const override { return mat_ * v; }
  Vector do_apply_adjoint(const Vector& v) const override { return mat_.transpose() * v; }

 private:
  Eigen::SparseMatrix<double> mat_;
};

class SumOp final : public LinearOperator {
 public:
  SumOp(LinOp a, LinOp b)
      : LinearOperator(a->rows(), a->cols()), a_(std::move(a)), b_(std::move(b)) {}
  std::string_view kind() const override { return "sum"; }

 protected:
  Vector do_apply(const Vector& v) const override { return a_->apply(v) + b_->apply(v); }
  Vector do_apply_adjoint(const Vector& v) const override {
    return a_->apply_adjoint(v) + b_->apply_adjoint(v);
  }

 private:
  LinOp a_, b_;
};

class ComposeOp final : public LinearOperator {
 public:
  ComposeOp(LinOp a, LinOp b)
      : LinearOperator(a->rows(), b->cols()), a_(std::move(a)), b_(std::move(b)) {}
  std::string_view kind() const override { return "compose"; }

 protected:
  Vector do_apply(const Vector& v) const override { return a_->apply(b_->apply(v)); }
  Vector do_apply_adjoint(const Vector& v) const override {
    return b_->apply_adjoint(a_->apply_adjoint(v));
  }

 private:
  LinOp a_, b_;
};

class ScaleOp final : public LinearOperator {
 public:
  ScaleOp(LinOp a, double s)
      : LinearOperator(a->rows(), a->cols()), a_(std::move(a)), s_(s) {}
  std::string_view kind() const override { return "scale"; }

 protected:
  Vector do_apply(const Vector& v) const override { return s_ * a_->apply(v); }
  Vector do_apply_adjoint(const Vector& v) const override {
    return s_ * a_->apply_adjoint(v);
  }

 private:
  LinOp a_;
  double s_;
};

class AdjointOp final : public LinearOperator {
 public:
  explicit AdjointOp(LinOp a) : LinearOperator(a->cols(), a->rows()), a_(std::move(a)) {}
  std::string_view kind() const override { return "adjoint"; }

 protected:
  Vector do_apply(const Vector& v) const override { return a_->apply_adjoint(v); }
  Vector do_apply_adjoint(const Vector& v) const override { return a_->apply(v); }

 private:
  LinOp a_;
};

// Applies a dense factor along one axis of a row-major tensor.
// in has shape (prefix, n, suffix) flattened; out gets (prefix, m, suffix).
void apply_along_axis(const Matrix& factor, const double* in, Index prefix,
                      Index suffix, double* out) {
  const Index n = factor.cols();
  const Index m = factor.rows();
  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  for (Index p = 0; p < prefix; ++p) {
    Eigen::Map<const RowMat> block(in + p * n * suffix, n, suffix);
    Eigen::Map<RowMat> result(out + p * m * suffix, m, suffix);
    result.noalias() = factor * block;
  }
}

class SeparableOp final : public LinearOperator {
 public:
  SeparableOp(const Grid& grid, std::vector<Matrix> factors, Index rows)
      : LinearOperator(rows, grid.size()), grid_(grid), factors_(std::move(factors)) {}
  std::string_view kind() const override { return "separable"; }

 protected:
  Vector do_apply(const Vector& v) const override { return tensor_apply(v, false); }
  Vector do_apply_adjoint(const Vector& v) const override { return tensor_apply(v, true); }

 private:
  Vector tensor_apply(const Vector& v, bool transpose) const {
    const int D = grid_.dims;
    // Current tensor shape, updated axis by axis.
    std::array<Index, 3> shape{1, 1, 1};
    for (int d = 0; d < D; ++d)
      shape[static_cast<size_t>(d)] =
          transpose ? factors_[static_cast<size_t>(d)].rows() : grid_.shape[static_cast<size_t>(d)];
    Vector cur = v;
    for (int d = 0; d < D; ++d) {
      const auto i = static_cast<size_t>(d);
      const Matrix& f = factors_[i];
      const Matrix ft = transpose ? f.transpose() : f;
      Index prefix = 1, suffix = 1;
      for (int a = 0; a < d; ++a) prefix *= shape[static_cast<size_t>(a)];
      for (int a = d + 1; a < D; ++a) suffix *= shape[static_cast<size_t>(a)];
      Vector next(prefix * ft.rows() * suffix);
      apply_along_axis(ft, cur.data(), prefix, suffix, next.data());
      shape[i] = ft.rows();
      cur = std::move(next);
    }
    return cur;
  }

  Grid grid_;
  std::vector<Matrix> factors_;
};

// ---- FFT convolution --------------------------------------------------------

std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

// Smallest 5-smooth integer >= n; FFTW stays O(n log n) on these.
Index good_fft_size(Index n) {
  for (;; ++n) {
    Index m = n;
    for (Index f : {2, 3, 5})
      while (m % f == 0) m /= f;
    if (m == 1) return n;
  }
}

struct FftwDeleter {
  void operator()(void* p) const { fftw_free(p); }
};
using RealBuf = std::unique_ptr<double[], FftwDeleter>;
using ComplexBuf = std::unique_ptr<fftw_complex[], FftwDeleter>;

RealBuf alloc_real(Index n) {
  return RealBuf(static_cast<double*>(fftw_malloc(sizeof(double) * static_cast<size_t>(n))));
}
ComplexBuf alloc_complex(Index n) {
  return ComplexBuf(
      static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * static_cast<size_t>(n))));
}

class ConvolutionOp final : public LinearOperator {
 public:
  ConvolutionOp(const Grid& grid, const ScalarField& kernel)
      : LinearOperator(grid.size(), grid.size()), grid_(grid), kernel_shape_{1, 1, 1} {
    grid_.validate();
    if (kernel.grid.dims != grid.dims)
      throw ShapeError("convolution: kernel dims " + std::to_string(kernel.grid.dims) +
                       " != grid dims " + std::to_string(grid.dims));
    for (int d = 0; d < grid.dims; ++d) {
      const auto i = static_cast<size_t>(d);
      if (kernel.grid.shape[i] % 2 == 0)
        throw ShapeError("convolution: kernel support must be odd per axis");
      if (kernel.grid.spacing[i] != grid.spacing[i])
        throw ShapeError("convolution: kernel spacing differs from grid spacing");
      kernel_shape_[i] = kernel.grid.shape[i];
      half_[i] = kernel.grid.shape[i] / 2;
      // p >= n + h keeps the positive wrap region inside the zero padding;
      // p >= 2h + 1 keeps the kernel's own wrap blocks from overlapping.
      padded_[i] = good_fft_size(std::max(grid.shape[i] + half_[i], 2 * half_[i] + 1));
    }
    padded_total_ = padded_[0] * padded_[1] * padded_[2];
    complex_shape_ = padded_;
    complex_shape_[static_cast<size_t>(grid.dims - 1)] =
        padded_[static_cast<size_t>(grid.dims - 1)] / 2 + 1;
    complex_total_ = complex_shape_[0] * complex_shape_[1] * complex_shape_[2];

    int dims[3];
    for (int d = 0; d < grid.dims; ++d) dims[d] = static_cast<int>(padded_[static_cast<size_t>(d)]);

    RealBuf real = alloc_real(padded_total_);
    ComplexBuf cplx = alloc_complex(complex_total_);
    {
      std::lock_guard<std::mutex> lock(fftw_planner_mutex());
      fwd_ = fftw_plan_dft_r2c(grid.dims, dims, real.get(), cplx.get(), FFTW_ESTIMATE);
      inv_ = fftw_plan_dft_c2r(grid.dims, dims, cplx.get(), real.get(), FFTW_ESTIMATE);
    }
    if (!fwd_ || !inv_) throw NumericError("convolution: FFT plan creation failed");

    // Kernel spectrum: embed with the center wrapped to index 0.
    std::fill(real.get(), real.get() + padded_total_, 0.0);
    for (Index o0 = -half_[0]; o0 <= half_[0]; ++o0)
      for (Index o1 = -half_[1]; o1 <= half_[1]; ++o1)
        for (Index o2 = -half_[2]; o2 <= half_[2]; ++o2) {
          const Index src = ((o0 + half_[0]) * kernel_shape_[1] + (o1 + half_[1])) * kernel_shape_[2] +
                            (o2 + half_[2]);
          const Index dst = (((o0 + padded_[0]) % padded_[0]) * padded_[1] +
                             ((o1 + padded_[1]) % padded_[1])) *
                                padded_[2] +
                            ((o2 + padded_[2]) % padded_[2]);
          real[static_cast<size_t>(dst)] = kernel.values[src];
        }
    fftw_execute_dft_r2c(fwd_, real.get(), cplx.get());
    spectrum_.resize(static_cast<size_t>(complex_total_));
    for (Index i = 0; i < complex_total_; ++i)
      spectrum_[static_cast<size_t>(i)] = {cplx[static_cast<size_t>(i)][0],
                                           cplx[static_cast<size_t>(i)][1]};
  }

  ~ConvolutionOp() override {
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    if (fwd_) fftw_destroy_plan(fwd_);
    if (inv_) fftw_destroy_plan(inv_);
  }

  ConvolutionOp(const ConvolutionOp&) = delete;
  ConvolutionOp& operator=(const ConvolutionOp&) = delete;

  std::string_view kind() const override { return "convolution"; }

 protected:
  Vector do_apply(const Vector& v) const override { return convolve(v, false); }
  // L^T has entries l(r_j - r_i): correlation, i.e. the conjugate spectrum.
  Vector do_apply_adjoint(const Vector& v) const override { return convolve(v, true); }

 private:
  Vector convolve(const Vector& v, bool conjugate) const {
    RealBuf real = alloc_real(padded_total_);
    ComplexBuf cplx = alloc_complex(complex_total_);
    std::fill(real.get(), real.get() + padded_total_, 0.0);
    const auto& n = grid_.shape;
    for (Index i0 = 0; i0 < n[0]; ++i0)
      for (Index i1 = 0; i1 < n[1]; ++i1) {
        const double* src = v.data() + (i0 * n[1] + i1) * n[2];
        double* dst = real.get() + (i0 * padded_[1] + i1) * padded_[2];
        std::copy(src, src + n[2], dst);
      }
    fftw_execute_dft_r2c(fwd_, real.get(), cplx.get());
    for (Index i = 0; i < complex_total_; ++i) {
      const std::complex<double> s = conjugate ? std::conj(spectrum_[static_cast<size_t>(i)])
                                               : spectrum_[static_cast<size_t>(i)];
      const std::complex<double> x{cplx[static_cast<size_t>(i)][0], cplx[static_cast<size_t>(i)][1]};
      const std::complex<double> y = x * s;
      cplx[static_cast<size_t>(i)][0] = y.real();
      cplx[static_cast<size_t>(i)][1] = y.imag();
    }
    fftw_execute_dft_c2r(inv_, cplx.get(), real.get());
    const double scale = 1.0 / static_cast<double>(padded_total_);
    Vector out(grid_.size());
    for (Index i0 = 0; i0 < n[0]; ++i0)
      for (Index i1 = 0; i1 < n[1]; ++i1) {
        const double* src = real.get() + (i0 * padded_[1] + i1) * padded_[2];
        double* dst = out.data() + (i0 * n[1] + i1) * n[2];
        for (Index i2 = 0; i2 < n[2]; ++i2) dst[i2] = src[i2] * scale;
      }
    return out;
  }

  Grid grid_;
  std::array<Index, 3> kernel_shape_;
  std::array<Index, 3> half_{0, 0, 0};
  std::array<Index, 3> padded_{1, 1, 1};
  std::array<Index, 3> complex_shape_{1, 1, 1};
  Index padded_total_ = 1;
  Index complex_total_ = 1;
  std::vector<std::complex<double>> spectrum_;
  fftw_plan fwd_ = nullptr;
  fftw_plan inv_ = nullptr;
};

class MaskedKernelOp final : public LinearOperator {
 public:
  MaskedKernelOp(MaskSet masks, LinOp conv, const Grid& grid)
      : LinearOperator(grid.size(), grid.size()),
        masks_(std::move(masks)),
        conv_(std::move(conv)) {}
  std::string_view kind() const override { return "masked_kernel"; }

 protected:
  Vector do_apply(const Vector& v) const override { return masked(v, false); }
  Vector do_apply_adjoint(const Vector& v) const override { return masked(v, true); }

 private:
  Vector masked(const Vector& v, bool adjoint) const {
    Vector out = Vector::Zero(v.size());
    for (const auto& m : masks_.masks()) {
      const Vector restricted = (m.values.array() * v.array()).matrix();
      const Vector smoothed =
          adjoint ? conv_->apply_adjoint(restricted) : conv_->apply(restricted);
      out.array() += m.values.array() * smoothed.array();
    }
    return out;
  }

  MaskSet masks_;
  LinOp conv_;
};

void require(bool ok, const std::string& message) {
  if (!ok) throw ShapeError(message);
}

}  // namespace

LinOp make_identity(Index n) {
  require(n > 0, "identity: size must be positive");
  return std::make_shared<IdentityOp>(n);
}

LinOp make_diagonal(Vector diag) {
  require(diag.size() > 0, "diagonal: empty field");
  return std::make_shared<DiagonalOp>(std::move(diag));
}

LinOp make_diagonal(const ScalarField& field) { return make_diagonal(field.values); }

LinOp make_convolution(const Grid& grid, const ScalarField& kernel) {
  return std::make_shared<ConvolutionOp>(grid, kernel);
}

LinOp make_separable(const Grid& grid, const std::vector<Matrix>& factors) {
  grid.validate();
  require(static_cast<int>(factors.size()) == grid.dims,
          "separable: factor count " + std::to_string(factors.size()) + " != grid dimension " +
              std::to_string(grid.dims));
  Index rows = 1;
  for (int d = 0; d < grid.dims; ++d) {
    const auto& f = factors[static_cast<size_t>(d)];
    require(f.cols() == grid.shape[static_cast<size_t>(d)],
            "separable: factor " + std::to_string(d) + " has " + std::to_string(f.cols()) +
                " cols, grid axis has " + std::to_string(grid.shape[static_cast<size_t>(d)]));
    rows *= f.rows();
  }
  return std::make_shared<SeparableOp>(grid, factors, rows);
}

LinOp make_sparse(Index rows, Index cols, const std::vector<Eigen::Triplet<double>>& triplets) {
  Eigen::SparseMatrix<double> m(rows, cols);
  m.setFromTriplets(triplets.begin(), triplets.end());
  return std::make_shared<SparseOp>(std::move(m));
}

LinOp make_sparse(Eigen::SparseMatrix<double> matrix) {
  return std::make_shared<SparseOp>(std::move(matrix));
}

LinOp from_dense(const Matrix& m) { return make_sparse(m.sparseView(0.0, 0.0)); }

LinOp op_sum(LinOp a, LinOp b) {
  require(a && b, "sum: null operand");
  require(a->rows() == b->rows() && a->cols() == b->cols(),
          "sum: shapes " + std::to_string(a->rows()) + "x" + std::to_string(a->cols()) +
              " and " + std::to_string(b->rows()) + "x" + std::to_string(b->cols()) +
              " differ");
  return std::make_shared<SumOp>(std::move(a), std::move(b));
}

LinOp op_compose(LinOp a, LinOp b) {
  require(a && b, "compose: null operand");
  require(a->cols() == b->rows(),
          "compose: inner dimensions " + std::to_string(a->cols()) + " and " +
              std::to_string(b->rows()) + " differ");
  return std::make_shared<ComposeOp>(std::move(a), std::move(b));
}

LinOp op_scale(LinOp a, double s) {
  require(static_cast<bool>(a), "scale: null operand");
  return std::make_shared<ScaleOp>(std::move(a), s);
}

LinOp op_adjoint(LinOp a) {
  require(static_cast<bool>(a), "adjoint: null operand");
  return std::make_shared<AdjointOp>(std::move(a));
}

ScalarField gaussian_kernel_field(const Grid& grid, const GaussianKernel& k) {
  grid.validate();
  require(k.gamma > 0.0 && k.sigma > 0.0, "gaussian kernel: gamma and sigma must be positive");
  Grid kgrid;
  kgrid.dims = grid.dims;
  std::array<Index, 3> half{0, 0, 0};
  for (int d = 0; d < grid.dims; ++d) {
    const auto i = static_cast<size_t>(d);
    const auto reach = static_cast<Index>(std::ceil(4.0 * k.sigma / grid.spacing[i]));
    half[i] = std::min(grid.shape[i] - 1, std::max<Index>(reach, 1));
    kgrid.shape[i] = 2 * half[i] + 1;
    kgrid.spacing[i] = grid.spacing[i];
  }
  Vector values(kgrid.size());
  for (Index flat = 0; flat < kgrid.size(); ++flat) {
    const auto idx = kgrid.unflatten(flat);
    double r2 = 0.0;
    for (int d = 0; d < grid.dims; ++d) {
      const auto i = static_cast<size_t>(d);
      const double off = static_cast<double>(idx[i] - half[i]) * grid.spacing[i];
      r2 += off * off;
    }
    values[flat] = k.gamma * std::exp(-r2 / (k.sigma * k.sigma));
  }
  return {kgrid, std::move(values)};
}

LinOp make_masked_kernel(const MaskSet& masks, const GaussianKernel& kernel, const Grid& grid) {
  return make_masked_kernel(masks, gaussian_kernel_field(grid, kernel), grid);
}

LinOp make_masked_kernel(const MaskSet& masks, const ScalarField& kernel, const Grid& grid) {
  require(masks.count() > 0, "masked_kernel: empty mask set");
  require(masks.grid() == grid, "masked_kernel: masks are not on the target grid");
  LinOp conv = make_convolution(grid, kernel);
  return std::make_shared<MaskedKernelOp>(masks, std::move(conv), grid);
}

Matrix to_dense(const LinearOperator& op) {
  Matrix m(op.rows(), op.cols());
  Vector e = Vector::Zero(op.cols());
  for (Index j = 0; j < op.cols(); ++j) {
    e[j] = 1.0;
    m.col(j) = op.apply(e);
    e[j] = 0.0;
  }
  return m;
}

}  // namespace lskkf
