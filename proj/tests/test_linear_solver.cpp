#include <catch2/catch.hpp>

#include "stokeslm/linear_solver.hpp"

#include <Eigen/Dense>

using namespace stokeslm;

TEST_CASE("sparse solve") {
  SECTION("identity returns the right-hand side") {
    SparseMatrix a(4, 4);
    a.setIdentity();
    SparseLU lu;
    lu.factorize(a);
    Vector b(4);
    b << 1, -2, 3, -4;
    CHECK((lu.solve(b) - b).lpNorm<Eigen::Infinity>() == 0.0);
  }

  SECTION("1D Laplacian n=5 against a dense oracle") {
    const int n = 5;
    std::vector<Triplet> t;
    Eigen::MatrixXd dense = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
      t.emplace_back(i, i, 2.0);
      dense(i, i) = 2.0;
      if (i + 1 < n) {
        t.emplace_back(i, i + 1, -1.0);
        t.emplace_back(i + 1, i, -1.0);
        dense(i, i + 1) = dense(i + 1, i) = -1.0;
      }
    }
    SparseMatrix a(n, n);
    a.setFromTriplets(t.begin(), t.end());
    SparseLU lu;
    lu.factorize(a);
    Vector b = Vector::Zero(n);
    b[0] = 1.0;
    const Vector x = lu.solve(b);
    const Vector oracle = dense.fullPivLu().solve(b);
    CHECK((x - oracle).lpNorm<Eigen::Infinity>() < 1e-14);

    // several right-hand sides share the factorization
    Vector b2 = Vector::Ones(n);
    CHECK((a * lu.solve(b2) - b2).lpNorm<Eigen::Infinity>() < 1e-12);
  }

  SECTION("repeated factorization is bit-identical") {
    const int n = 50;
    std::vector<Triplet> t;
    for (int i = 0; i < n; ++i) {
      t.emplace_back(i, i, 2.0 + 0.01 * i);
      if (i + 1 < n) {
        t.emplace_back(i, i + 1, -1.0);
        t.emplace_back(i + 1, i, -1.3);
      }
    }
    SparseMatrix a(n, n);
    a.setFromTriplets(t.begin(), t.end());
    Vector b = Vector::LinSpaced(n, -1.0, 1.0);
    SparseLU lu1, lu2;
    lu1.factorize(a);
    lu2.factorize(a);
    const Vector x1 = lu1.solve(b), x2 = lu2.solve(b);
    for (int i = 0; i < n; ++i) CHECK(x1[i] == x2[i]);
  }

  SECTION("zero pivot raises a singular-system error") {
    SparseMatrix a(3, 3);
    std::vector<Triplet> t{{0, 0, 1.0}, {1, 1, 1.0}};  // last row/column empty
    a.setFromTriplets(t.begin(), t.end());
    SparseLU lu;
    CHECK_THROWS_AS(lu.factorize(a), SolverError);
  }
}

TEST_CASE("2x2 multiplier reconstruction") {
  SECTION("identity") {
    const auto sol = solve_2x2({1, 0, 0, 1, 3, 4});
    REQUIRE(sol.has_value());
    CHECK(sol->first == 3.0);
    CHECK(sol->second == 4.0);
  }

  SECTION("proportional rows are a singular signal") {
    CHECK_FALSE(solve_2x2({2, 3, 2, 3, 1, 1}).has_value());
    CHECK_FALSE(solve_2x2({2, 3, 4, 6, 1, 1}).has_value());
  }

  SECTION("nearly singular within the relative tolerance is signalled") {
    // det = 1e-14 against scale ~ 2
    CHECK_FALSE(solve_2x2({1, 1, 1, 1 + 1e-14, 1, 1}, 1e-10).has_value());
    // comfortably regular case passes
    const auto sol = solve_2x2({2, 1, 1, 2, 4, 5}, 1e-10);
    REQUIRE(sol.has_value());
    CHECK(sol->first == Approx(1.0));
    CHECK(sol->second == Approx(2.0));
  }
}
