#pragma once

#include <complex>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace qdiff {

/// Largest supported Hilbert-space dimension. Matrices use fixed-capacity
/// storage so the per-step arithmetic never touches the heap.
inline constexpr int kMaxDim = 16;

template <typename Real>
using Complex = std::complex<Real>;

template <typename Real>
using CMatrix = Eigen::Matrix<Complex<Real>, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor,
                              kMaxDim, kMaxDim>;

template <typename Real>
using CVector = Eigen::Matrix<Complex<Real>, Eigen::Dynamic, 1, Eigen::ColMajor, kMaxDim, 1>;

template <typename Real>
using RVector = Eigen::Matrix<Real, Eigen::Dynamic, 1, Eigen::ColMajor, kMaxDim, 1>;

using Index = Eigen::Index;

// Validation tolerances for inputs.
inline constexpr double kTolHermitian = 1e-10;
inline constexpr double kTolTrace = 1e-10;
inline constexpr double kTolNorm = 1e-10;
inline constexpr double kTolPsd = 1e-8;

class QdiffError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dimension mismatch or malformed operator/state.
class InvalidArgument : public QdiffError {
 public:
  using QdiffError::QdiffError;
};

/// Raised by a stepper when the step cannot be accepted. The message names
/// the failing condition; the trajectory is flagged by the caller.
class StepFailure : public QdiffError {
 public:
  enum class Kind { NonFinite, NegativeEigenvalue, StepTooLarge };
  StepFailure(Kind kind, const std::string& what) : QdiffError(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

}  // namespace qdiff
