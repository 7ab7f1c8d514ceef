#pragma once

// Shared helpers for the unit tests: random states and operators from a
// seeded std::mt19937_64, and plain-loop reference arithmetic that does not
// go through Eigen expressions.

#include <complex>
#include <random>
#include <vector>

#include "qdiff/operators.hpp"

namespace qdiff::test {

using cd = std::complex<double>;
using Grid = std::vector<std::vector<cd>>;

inline Matrix random_matrix(std::mt19937_64& rng, Index dim, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(dim, dim);
  for (Index i = 0; i < dim; ++i) {
    for (Index j = 0; j < dim; ++j) m(i, j) = cd(n(rng), n(rng));
  }
  return m;
}

inline Matrix random_hermitian(std::mt19937_64& rng, Index dim, double scale = 1.0) {
  const Matrix a = random_matrix(rng, dim, scale);
  return (a + a.adjoint()) * 0.5;
}

inline Vector random_state(std::mt19937_64& rng, Index dim) {
  std::normal_distribution<double> n;
  Vector v(dim);
  for (Index i = 0; i < dim; ++i) v(i) = cd(n(rng), n(rng));
  return v / v.norm();
}

/// Full-rank mixed state A A† / Tr(A A†).
inline Matrix random_density(std::mt19937_64& rng, Index dim) {
  const Matrix a = random_matrix(rng, dim);
  Matrix r = a * a.adjoint();
  return r / r.trace().real();
}

inline Matrix diag(std::initializer_list<double> d) {
  Matrix m = Matrix::Zero(Index(d.size()), Index(d.size()));
  Index i = 0;
  for (double x : d) {
    m(i, i) = x;
    ++i;
  }
  return m;
}

inline Matrix plus_state() {
  Matrix m(2, 2);
  m.setConstant(0.5);
  return m;
}

inline Grid to_grid(const Matrix& m) {
  Grid g(std::size_t(m.rows()), std::vector<cd>(std::size_t(m.cols())));
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) g[std::size_t(i)][std::size_t(j)] = m(i, j);
  }
  return g;
}

inline Grid mul(const Grid& a, const Grid& b) {
  const std::size_t n = a.size();
  Grid c(n, std::vector<cd>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      cd s = 0;
      for (std::size_t k = 0; k < n; ++k) s += a[i][k] * b[k][j];
      c[i][j] = s;
    }
  }
  return c;
}

inline Grid dagger(const Grid& a) {
  const std::size_t n = a.size();
  Grid c(n, std::vector<cd>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) c[i][j] = std::conj(a[j][i]);
  }
  return c;
}

inline cd trace(const Grid& a) {
  cd s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i][i];
  return s;
}

inline double max_abs_diff(const Matrix& a, const Grid& b) {
  double worst = 0;
  for (Index i = 0; i < a.rows(); ++i) {
    for (Index j = 0; j < a.cols(); ++j) {
      worst = std::max(worst, std::abs(a(i, j) - b[std::size_t(i)][std::size_t(j)]));
    }
  }
  return worst;
}

}  // namespace qdiff::test
