#include <doctest.h>

#include <array>

#include "qdiff/operators.hpp"
#include "support.hpp"

using namespace qdiff;
using qdiff::test::cd;

TEST_CASE("observable from eigenvalues") {
  const std::array<double, 3> ev{0.0, 0.5, 2.0};
  const LindbladSet ls = build_observable<double>(ev);
  REQUIRE(ls.size() == 1);
  CHECK(ls.dim() == 3);
  CHECK(ls[0].isApprox(test::diag({0.0, 0.5, 2.0})));
  CHECK(is_hermitian(ls[0]));
  CHECK(ls.k().isApprox(test::diag({0.0, 0.25, 4.0})));
  CHECK(ls.max_norm_squared() == doctest::Approx(4.0));
}

TEST_CASE("degenerate spectrum gives the identity") {
  const std::array<double, 2> ev{1.0, 1.0};
  const LindbladSet ls = build_observable<double>(ev);
  CHECK(ls[0] == Matrix::Identity(2, 2));
}

TEST_CASE("observable rejects bad input") {
  const std::array<double, 2> nan{0.0, std::nan("")};
  CHECK_THROWS_AS(build_observable<double>(nan), InvalidArgument);
  CHECK_THROWS_AS(build_observable<double>(std::span<const double>{}), InvalidArgument);
  const std::vector<double> big(kMaxDim + 1, 1.0);
  CHECK_THROWS_AS(build_observable<double>(big), InvalidArgument);
}

TEST_CASE("projector set is orthogonal and complete") {
  for (Index dim : {2, 3, 5}) {
    const LindbladSet ls = build_projector_set(dim);
    REQUIRE(ls.size() == std::size_t(dim));
    Matrix sum = Matrix::Zero(dim, dim);
    for (std::size_t m = 0; m < ls.size(); ++m) {
      for (std::size_t n = 0; n < ls.size(); ++n) {
        const Matrix prod = ls[m] * ls[n];
        CHECK(prod.isApprox(m == n ? ls[m] : Matrix::Zero(dim, dim)));
      }
      sum += ls[m];
    }
    CHECK(sum == Matrix::Identity(dim, dim));
    CHECK(ls.k() == Matrix::Identity(dim, dim));
  }
  CHECK_THROWS_AS(build_projector_set(1), InvalidArgument);
}

TEST_CASE("Lindblad set validation") {
  CHECK_THROWS_AS(LindbladSet({}), InvalidArgument);
  CHECK_THROWS_AS(LindbladSet({Matrix::Identity(2, 2), Matrix::Identity(3, 3)}), InvalidArgument);
  Matrix nonsquare(2, 3);
  nonsquare.setZero();
  CHECK_THROWS_AS(LindbladSet({nonsquare}), InvalidArgument);
  Matrix inf = Matrix::Identity(2, 2);
  inf(0, 1) = cd(std::numeric_limits<double>::infinity(), 0);
  CHECK_THROWS_AS(LindbladSet({inf}), InvalidArgument);
  // Non-Hermitian operators are accepted in the general set.
  Matrix lower = Matrix::Zero(2, 2);
  lower(0, 1) = 1;
  CHECK_NOTHROW(LindbladSet({lower}));
}

TEST_CASE("density matrix validation") {
  CHECK_NOTHROW(DensityMatrix(test::plus_state()));
  CHECK_THROWS_AS(DensityMatrix(test::diag({0.5, 0.6})), InvalidArgument);
  CHECK_THROWS_AS(DensityMatrix(test::diag({1.2, -0.2})), InvalidArgument);
  Matrix skew = test::plus_state();
  skew(0, 1) = cd(0.5, 0.1);
  CHECK_THROWS_AS(DensityMatrix{skew}, InvalidArgument);
  // Eigenvalue floor tolerance.
  CHECK_NOTHROW(DensityMatrix(test::diag({1.0 + 5e-9, -5e-9})));
}

TEST_CASE("density matrix accessors") {
  const std::array<double, 3> p{0.25, 0.25, 0.5};
  const DensityMatrix rho = DensityMatrix::diagonal(p);
  CHECK(rho.dim() == 3);
  CHECK(rho.diagonals()(2) == 0.5);
  CHECK(rho.purity() == doctest::Approx(0.375));
  const DensityMatrix pure = DensityMatrix::pure(StateVector::basis(3, 1));
  CHECK(pure.purity() == doctest::Approx(1.0));
  CHECK(pure(1, 1) == cd(1, 0));
}

TEST_CASE("expectation") {
  std::mt19937_64 rng(11);
  SUBCASE("identity gives one") {
    for (int k = 0; k < 20; ++k) {
      const DensityMatrix rho(test::random_density(rng, 4));
      CHECK(std::abs(expectation(Matrix::Identity(4, 4), rho) - cd(1, 0)) < 1e-12);
    }
  }
  SUBCASE("matches the plain-loop trace") {
    for (int k = 0; k < 20; ++k) {
      const Matrix op = test::random_matrix(rng, 3);
      const DensityMatrix rho(test::random_density(rng, 3));
      const cd oracle = test::trace(test::mul(test::to_grid(op), test::to_grid(rho.matrix())));
      CHECK(std::abs(expectation(op, rho) - oracle) < 1e-12);
    }
  }
  SUBCASE("linear and conjugate-symmetric") {
    for (int k = 0; k < 20; ++k) {
      const Matrix a = test::random_matrix(rng, 3);
      const Matrix b = test::random_matrix(rng, 3);
      const DensityMatrix rho(test::random_density(rng, 3));
      const cd c(0.3, -1.7);
      CHECK(std::abs(expectation((a + c * b).eval(), rho) - (expectation(a, rho) + c * expectation(b, rho))) < 1e-12);
      CHECK(std::abs(expectation(a.adjoint().eval(), rho) - std::conj(expectation(a, rho))) < 1e-12);
    }
  }
  SUBCASE("state vector and projector agree") {
    for (int k = 0; k < 20; ++k) {
      const StateVector psi(test::random_state(rng, 4));
      const Matrix op = test::random_matrix(rng, 4);
      CHECK(std::abs(expectation(op, psi) - expectation(op, DensityMatrix::pure(psi))) < 1e-12);
    }
  }
  SUBCASE("dimension mismatch") {
    CHECK_THROWS_AS(expectation(Matrix::Identity(3, 3), DensityMatrix(test::plus_state())), InvalidArgument);
  }
}

TEST_CASE("float instantiation") {
  const std::array<float, 2> ev{0.0f, 1.0f};
  const auto ls = build_observable<float>(ev);
  CHECK(ls.max_norm_squared() == doctest::Approx(1.0f));
}
