#ifndef STOKESLM_LINEAR_SOLVER_HPP
#define STOKESLM_LINEAR_SOLVER_HPP

#include "stokeslm/common.hpp"

#include <Eigen/UmfPackSupport>

#include <cmath>
#include <optional>
#include <sstream>
#include <utility>

namespace stokeslm {

// Direct sparse factorization (UMFPACK multifrontal LU with its default column
// ordering). One factorization serves any number of right-hand sides. Solutions are
// checked against the residual bound |Ax-b|_inf <= 1e-10 (1 + |b|_inf), with a single
// step of iterative refinement before giving up.
class SparseLU {
public:
  SparseLU() {
    // the wrapper enforces its own residual bound with one refinement step; the
    // default two internal refinement passes per solve would triple the solve cost
    lu_.umfpackControl()[UMFPACK_IRSTEP] = 0;
  }

  void factorize(const SparseMatrix& a) {
    const bool same_pattern = ready() && pattern_matches(a);
    matrix_ = a;
    matrix_.makeCompressed();
    if (same_pattern) {
      lu_.factorize(matrix_);  // reuse the symbolic analysis
    } else {
      lu_.compute(matrix_);
    }
    if (lu_.info() != Eigen::Success) {
      std::ostringstream msg;
      msg << "sparse factorization failed: numerically singular system"
          << " (|A|_inf = " << infinity_norm(matrix_) << ", rcond estimate 0)";
      throw SolverError(msg.str());
    }
  }

  bool ready() const { return matrix_.rows() > 0; }
  Eigen::Index size() const { return matrix_.rows(); }

  Vector solve(const Vector& b) const {
    Vector x = lu_.solve(b);
    const double bound = 1e-10 * (1.0 + b.lpNorm<Eigen::Infinity>());
    Vector r = b - matrix_ * x;
    if (r.lpNorm<Eigen::Infinity>() > bound) {
      x += lu_.solve(r);
      r = b - matrix_ * x;
      if (r.lpNorm<Eigen::Infinity>() > bound) {
        // rcond estimate from the refinement step: residual amplification ~ 1/rcond
        std::ostringstream msg;
        msg << "sparse solve residual " << r.lpNorm<Eigen::Infinity>() << " exceeds bound " << bound
            << " (rcond estimate ~ " << bound / (r.lpNorm<Eigen::Infinity>() + 1e-300) << ")";
        throw SolverError(msg.str());
      }
    }
    return x;
  }

  static double infinity_norm(const SparseMatrix& m) {
    Vector row_sums = Vector::Zero(m.rows());
    for (int k = 0; k < m.outerSize(); ++k)
      for (SparseMatrix::InnerIterator it(m, k); it; ++it) row_sums[it.row()] += std::abs(it.value());
    return row_sums.size() ? row_sums.maxCoeff() : 0.0;
  }

private:
  bool pattern_matches(const SparseMatrix& a) const {
    if (!a.isCompressed()) return false;
    if (a.rows() != matrix_.rows() || a.cols() != matrix_.cols() || a.nonZeros() != matrix_.nonZeros())
      return false;
    const auto n = matrix_.nonZeros();
    if (!std::equal(a.innerIndexPtr(), a.innerIndexPtr() + n, matrix_.innerIndexPtr())) return false;
    return std::equal(a.outerIndexPtr(), a.outerIndexPtr() + a.outerSize() + 1, matrix_.outerIndexPtr());
  }

  SparseMatrix matrix_;
  Eigen::UmfPackLU<SparseMatrix> lu_;
};

// Solves the zero-mean-constrained saddle system
//     [ J   c ] [ z  ]   [ b    ]
//     [ r^T 0 ] [ xi ] = [ beta ]
// exactly, without ever factorizing the dense constraint row/column: UMFPACK sees
// only J + e_k e_k^T (one pinned pressure diagonal), and the bordered solution is
// recovered through the cached Schur complement plus a Sherman-Morrison correction
// for the pin. A dense row in the factorization would blow up the fill-in by more
// than an order of magnitude.
class MeanConstrainedLU {
public:
  void factorize(const SparseMatrix& j, const Vector& column, const Vector& row, int pin_index) {
    SparseMatrix pinned = j;
    pinned.coeffRef(pin_index, pin_index) += 1.0;
    lu_.factorize(pinned);
    c_ = column;
    r_ = row;
    pin_ = pin_index;
    y_c_ = lu_.solve(c_);
    Vector e = Vector::Zero(j.rows());
    e[pin_] = 1.0;
    y_e_ = lu_.solve(e);
    // bordered apply of [e_pin; 0] through M1
    const double denom_c = r_.dot(y_c_);
    if (std::abs(denom_c) < 1e-300) throw SolverError("mean-constraint Schur complement vanished");
    w_xi_ = r_.dot(y_e_) / denom_c;
    w_z_ = y_e_ - w_xi_ * y_c_;
    const double sm_denom = 1.0 - w_z_[pin_];
    if (std::abs(sm_denom) < 1e-14) throw SolverError("pin correction became singular");
    sm_denom_ = sm_denom;
  }

  bool ready() const { return lu_.ready(); }

  // returns (z, xi)
  std::pair<Vector, double> solve(const Vector& b, double beta) const {
    Vector y_b = lu_.solve(b);
    const double denom_c = r_.dot(y_c_);
    double xi = (r_.dot(y_b) - beta) / denom_c;
    Vector z = y_b - xi * y_c_;
    // Sherman-Morrison correction removes the artificial pin
    const double factor = z[pin_] / sm_denom_;
    z += factor * w_z_;
    xi += factor * w_xi_;
    return {std::move(z), xi};
  }

private:
  SparseLU lu_;
  Vector c_, r_, y_c_, y_e_, w_z_;
  double w_xi_ = 0, sm_denom_ = 1;
  int pin_ = 0;
};

struct TwoByTwo {
  double a11 = 0, a12 = 0, a21 = 0, a22 = 0;
  double g1 = 0, g2 = 0;
};

// Cramer solve guarded by a relative determinant test; a near-singular system returns
// an empty optional (the caller falls back per scheme policy), never silent garbage.
inline std::optional<std::pair<double, double>> solve_2x2(const TwoByTwo& t, double rel_det_tol = 1e-10) {
  const double det = t.a11 * t.a22 - t.a12 * t.a21;
  const double scale = std::abs(t.a11 * t.a22) + std::abs(t.a12 * t.a21) + 1e-300;
  if (std::abs(det) <= rel_det_tol * scale) return std::nullopt;
  return std::make_pair((t.g1 * t.a22 - t.g2 * t.a12) / det, (t.a11 * t.g2 - t.a21 * t.g1) / det);
}

}  // namespace stokeslm

#endif
