#pragma once

#include <cmath>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "qdiff/types.hpp"

namespace qdiff {

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& m) {
  for (Index j = 0; j < m.cols(); ++j) {
    for (Index i = 0; i < m.rows(); ++i) {
      const auto& z = m(i, j);
      if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) return false;
    }
  }
  return true;
}

template <typename Derived>
auto hermitian_defect(const Eigen::MatrixBase<Derived>& m) {
  return (m - m.adjoint()).cwiseAbs().maxCoeff();
}

template <typename Derived>
bool is_hermitian(const Eigen::MatrixBase<Derived>& m, double tol = kTolHermitian) {
  return m.rows() == m.cols() && hermitian_defect(m) <= tol;
}

/// Throws InvalidArgument unless `op` is a finite square matrix of supported size.
template <typename Derived>
void check_operator(const Eigen::MatrixBase<Derived>& op, const std::string& what = "operator") {
  if (op.rows() < 1 || op.rows() != op.cols()) {
    throw InvalidArgument(what + ": must be a non-empty square matrix");
  }
  if (op.rows() > kMaxDim) {
    throw InvalidArgument(what + ": dimension exceeds " + std::to_string(kMaxDim));
  }
  if (!all_finite(op)) throw InvalidArgument(what + ": non-finite entry");
}

/// Ordered collection of Lindblad operators sharing one dimension. Caches
/// L†L per operator and their sum K.
template <typename Real>
class BasicLindbladSet {
 public:
  using Matrix = CMatrix<Real>;

  explicit BasicLindbladSet(std::vector<Matrix> ops) : ops_(std::move(ops)) {
    if (ops_.empty()) throw InvalidArgument("Lindblad set must be non-empty");
    const Index dim = ops_.front().rows();
    for (std::size_t m = 0; m < ops_.size(); ++m) {
      check_operator(ops_[m], "Lindblad operator " + std::to_string(m));
      if (ops_[m].rows() != dim) {
        throw InvalidArgument("Lindblad operators must share one dimension");
      }
    }
    dag_.reserve(ops_.size());
    dag_l_.reserve(ops_.size());
    k_ = Matrix::Zero(dim, dim);
    for (const auto& l : ops_) {
      dag_.push_back(l.adjoint());
      dag_l_.push_back(l.adjoint() * l);
      k_ += dag_l_.back();
    }
  }

  Index dim() const { return ops_.front().rows(); }
  std::size_t size() const { return ops_.size(); }
  const Matrix& operator[](std::size_t m) const { return ops_[m]; }
  const Matrix& adjoint(std::size_t m) const { return dag_[m]; }
  /// L_m† L_m
  const Matrix& dagger_product(std::size_t m) const { return dag_l_[m]; }
  /// K = Σ L_m† L_m, the norm-preserving generator.
  const Matrix& k() const { return k_; }
  std::span<const Matrix> operators() const { return ops_; }

  /// max_m ||L_m||² in the spectral norm.
  Real max_norm_squared() const {
    Real best = 0;
    for (const auto& l : dag_l_) {
      Eigen::SelfAdjointEigenSolver<Matrix> es(l, Eigen::EigenvaluesOnly);
      best = std::max(best, es.eigenvalues().maxCoeff());
    }
    return best;
  }

 private:
  std::vector<Matrix> ops_;
  std::vector<Matrix> dag_;
  std::vector<Matrix> dag_l_;
  Matrix k_;
};

/// Pure-state amplitudes. The norm is not enforced here; the state-vector
/// stepper checks it when renormalization is on.
template <typename Real>
class BasicStateVector {
 public:
  using Vector = CVector<Real>;

  explicit BasicStateVector(Vector amplitudes) : amps_(std::move(amplitudes)) {
    if (amps_.size() < 1 || amps_.size() > kMaxDim) {
      throw InvalidArgument("state vector: unsupported dimension");
    }
    if (!all_finite(amps_)) throw InvalidArgument("state vector: non-finite amplitude");
  }

  static BasicStateVector basis(Index dim, Index k) {
    if (dim < 1 || dim > kMaxDim || k < 0 || k >= dim) throw InvalidArgument("basis state: index out of range");
    Vector v = Vector::Zero(dim);
    v(k) = 1;
    return BasicStateVector(std::move(v));
  }

  Index dim() const { return amps_.size(); }
  const Vector& amplitudes() const { return amps_; }
  Real norm_squared() const { return amps_.squaredNorm(); }
  CMatrix<Real> projector() const { return amps_ * amps_.adjoint(); }

 private:
  Vector amps_;
};

/// Hermitian, unit-trace, positive semidefinite matrix. The public
/// constructor validates; `unchecked` is for integrator outputs that carry
/// their own repair policy.
template <typename Real>
class BasicDensityMatrix {
 public:
  using Matrix = CMatrix<Real>;

  explicit BasicDensityMatrix(Matrix m) : m_(std::move(m)) {
    check_operator(m_, "density matrix");
    if (hermitian_defect(m_) > kTolHermitian) {
      throw InvalidArgument("density matrix: not Hermitian");
    }
    if (std::abs(m_.trace() - Complex<Real>(1)) > kTolTrace) {
      throw InvalidArgument("density matrix: trace must be 1");
    }
    Eigen::SelfAdjointEigenSolver<Matrix> es(m_, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -kTolPsd) {
      throw InvalidArgument("density matrix: negative eigenvalue");
    }
  }

  static BasicDensityMatrix unchecked(Matrix m) {
    BasicDensityMatrix out;
    out.m_ = std::move(m);
    return out;
  }

  static BasicDensityMatrix pure(const BasicStateVector<Real>& psi) {
    const Real n = psi.norm_squared();
    return unchecked(psi.projector() / n);
  }

  static BasicDensityMatrix diagonal(std::span<const Real> p) {
    if (p.empty() || p.size() > std::size_t(kMaxDim)) throw InvalidArgument("density matrix: unsupported dimension");
    Matrix m = Matrix::Zero(Index(p.size()), Index(p.size()));
    for (std::size_t i = 0; i < p.size(); ++i) m(Index(i), Index(i)) = p[i];
    return BasicDensityMatrix(std::move(m));
  }

  Index dim() const { return m_.rows(); }
  const Matrix& matrix() const { return m_; }
  Complex<Real> operator()(Index i, Index j) const { return m_(i, j); }
  RVector<Real> diagonals() const { return m_.diagonal().real(); }
  Real purity() const { return (m_ * m_).trace().real(); }

 private:
  BasicDensityMatrix() = default;
  Matrix m_;
};

/// R = Mρ⁽ⁱ⁾M† together with its trace w.
template <typename Real>
struct BasicUnnormalizedState {
  CMatrix<Real> r;
  Real w = 1;

  static BasicUnnormalizedState from(const BasicDensityMatrix<Real>& rho) {
    return {rho.matrix(), Real(1)};
  }
};

using LindbladSet = BasicLindbladSet<double>;
using StateVector = BasicStateVector<double>;
using DensityMatrix = BasicDensityMatrix<double>;
using UnnormalizedState = BasicUnnormalizedState<double>;
using Matrix = CMatrix<double>;
using Vector = CVector<double>;

/// Singleton set holding diag(eigenvalues).
template <typename Real = double>
BasicLindbladSet<Real> build_observable(std::span<const Real> eigenvalues) {
  if (eigenvalues.empty()) throw InvalidArgument("observable: empty eigenvalue list");
  if (eigenvalues.size() > std::size_t(kMaxDim)) throw InvalidArgument("observable: dimension above kMaxDim");
  const Index n = Index(eigenvalues.size());
  CMatrix<Real> l = CMatrix<Real>::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    if (!std::isfinite(eigenvalues[std::size_t(i)])) {
      throw InvalidArgument("observable: non-finite eigenvalue");
    }
    l(i, i) = eigenvalues[std::size_t(i)];
  }
  return BasicLindbladSet<Real>({std::move(l)});
}

/// {|m⟩⟨m|} for m = 0..dim-1.
template <typename Real = double>
BasicLindbladSet<Real> build_projector_set(Index dim) {
  if (dim < 2) throw InvalidArgument("projector set: dim must be >= 2");
  if (dim > kMaxDim) throw InvalidArgument("projector set: dimension above kMaxDim");
  std::vector<CMatrix<Real>> ops;
  for (Index m = 0; m < dim; ++m) {
    CMatrix<Real> p = CMatrix<Real>::Zero(dim, dim);
    p(m, m) = 1;
    ops.push_back(std::move(p));
  }
  return BasicLindbladSet<Real>(std::move(ops));
}

/// Tr(op · rho).
template <typename Derived, typename Real>
Complex<Real> expectation(const Eigen::MatrixBase<Derived>& op,
                          const BasicDensityMatrix<Real>& rho) {
  if (op.rows() != rho.dim() || op.cols() != rho.dim()) {
    throw InvalidArgument("expectation: dimension mismatch");
  }
  return (op * rho.matrix()).trace();
}

/// ⟨ψ|op|ψ⟩ without normalizing ψ.
template <typename Derived, typename Real>
Complex<Real> expectation(const Eigen::MatrixBase<Derived>& op,
                          const BasicStateVector<Real>& psi) {
  if (op.rows() != psi.dim() || op.cols() != psi.dim()) {
    throw InvalidArgument("expectation: dimension mismatch");
  }
  return psi.amplitudes().dot(op * psi.amplitudes());
}

}  // namespace qdiff
