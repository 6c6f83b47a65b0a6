#ifndef STOKESLM_NEWTON_HPP
#define STOKESLM_NEWTON_HPP

#include "stokeslm/assembly.hpp"
#include "stokeslm/linear_solver.hpp"

#include <cmath>
#include <iostream>
#include <optional>
#include <vector>

namespace stokeslm {

enum class MultiplierMode { both, energy_only, volume_only, none };
enum class SingularFallback { volume_only, error };

// One per-step nonlinear system in the shape shared by all schemes. Rows 1-4 are
// assembled on the fixed assembly surface (the previous interface, or the predictor
// for the second-order schemes); rows 5-6 are the enforced energy/volume equations,
// evaluated on the moved surface. The scheme only chooses the coefficients:
//   alpha    factor on (u, p, kappa, lambda) unknowns in rows 1-4 (mid-time average: 1/2)
//   beta_dt  factor on X in the interface-motion row (1/dt, or 3/(2 dt) for BDF2)
//   alpha4   factor on X in the curvature row (mid-time average: 1/2)
//   ce       factor on E(X) in the energy row (1/dt, or 3/(2 dt))
//   c6       factor on V(X) in the volume row (1, or 3)
struct StepProblem {
  const VelocitySpace* vel = nullptr;
  const PressureSpace* pres = nullptr;
  const InterfacePolygon* sigma = nullptr;  // assembly surface
  OperatorBlocks blocks;
  std::optional<Rect> hole;

  double gamma = 1, dt = 1;
  double alpha = 1, beta_dt = 1, alpha4 = 1, ce = 1, c6 = 1;
  bool bdf2 = false;

  Vector u_prev, p_prev;
  double xi_prev = 0;
  VectorField x_prev, x_prev2;   // x_prev2 only read when bdf2
  ScalarField kappa_prev;
  double lambda_e_prev = 0, lambda_v_prev = 0;
  double e_prev = 0, e_prev2 = 0, v_prev = 0, v_prev2 = 0;

  double flux_term = 0;  // dt*Phi (or 2 dt*Phi for BDF2), added to the volume row
  double bc_time = 0;    // boundary data is applied to the initial iterate at this time

  MultiplierMode mode = MultiplierMode::both;
  SingularFallback fallback = SingularFallback::volume_only;
  double rel_det_tol = 1e-10;
  double tol = 1e-10;
  int max_iters = 50;
  // relative lambda_E drift that triggers a refactorization; 0 refactorizes on any
  // change. The fixed point of the iteration is the same either way (the residual is
  // always exact); a stale lambda_E block only perturbs the Newton path by
  // |d lambda| * max(alpha M) relative to O(1) matrix entries.
  double lambda_refactor_tol = 0.0;
  bool debug = false;
};

struct NewtonIterate {
  Vector u, p;
  double xi = 0;
  VectorField x;
  ScalarField kappa;
  double lambda_e = 0, lambda_v = 0;
};

struct NewtonOutcome {
  NewtonIterate iterate;
  int iterations = 0;
  bool fallback_used = false;
};

struct Residuals {
  Vector f1;   // free velocity rows
  Vector f2;   // pressure rows
  double fmean = 0;
  Vector f3;   // K
  Vector f4;   // 2K
  double f5 = 0, f6 = 0;
  // moved-surface quantities reused by the direction solve
  double energy_moved = 0, volume_moved = 0;
  VectorField energy_grad, volume_grad;  // shape gradients on the moved surface
};

namespace detail {

inline double sup(const Vector& v) { return v.size() ? v.lpNorm<Eigen::Infinity>() : 0.0; }

struct EffectiveFields {
  Vector u, p;
  double xi;
  ScalarField kappa;
  double lambda_e, lambda_v;
};

inline EffectiveFields effective(const StepProblem& pb, const NewtonIterate& it) {
  EffectiveFields eff;
  const double a = pb.alpha, b = 1.0 - pb.alpha;
  eff.u = a * it.u + b * pb.u_prev;
  eff.p = a * it.p + b * pb.p_prev;
  eff.xi = a * it.xi + b * pb.xi_prev;
  eff.kappa = a * it.kappa + b * pb.kappa_prev;
  eff.lambda_e = a * it.lambda_e + b * pb.lambda_e_prev;
  eff.lambda_v = a * it.lambda_v + b * pb.lambda_v_prev;
  return eff;
}

}  // namespace detail

// Residuals F1..F6 of the Newton system at an iterate: minus the scheme rows
// evaluated at (u,p,X,kappa,lambda)^{m+1,i}. Rows 1-4 live on the assembly surface;
// the energy/volume rows use the moved surface X^{m+1,i}(assembly connectivity).
inline Residuals assemble_residuals(const StepProblem& pb, const NewtonIterate& it) {
  const detail::EffectiveFields eff = detail::effective(pb, it);
  const OperatorBlocks& bl = pb.blocks;
  const VelocitySpace& vel = *pb.vel;

  Residuals r;

  // row 1: (2 mu D(u), D(phi)) - (p, div phi) - gamma <kappa nu, phi> - (g, phi)
  const Vector r1 = bl.A * eff.u - bl.B.transpose() * eff.p - pb.gamma * (bl.C * eff.kappa) - bl.force;
  r.f1.resize(vel.n_free());
  for (int i = 0; i < vel.n_free(); ++i) r.f1[i] = -r1[vel.free_to_full()[i]];

  // row 2: (div u, q) + xi (1, q); mean row: (p, 1)
  r.f2 = -(bl.B * eff.u + eff.xi * bl.mean);
  r.fmean = -bl.mean.dot(eff.p);

  // row 3: <X_td . nu, eta>^h - <u . nu, eta> - lambda_E <kappa, eta>^h - lambda_V <1, eta>^h
  VectorField x_td;
  if (pb.bdf2)
    x_td = (3.0 * it.x - 4.0 * pb.x_prev + pb.x_prev2) / (2.0 * pb.dt);
  else
    x_td = (it.x - pb.x_prev) / pb.dt;
  const Vector lumped_kappa_eff = bl.M.cwiseProduct(eff.kappa);
  r.f3 = -(bl.N * x_td - bl.C.transpose() * eff.u - eff.lambda_e * lumped_kappa_eff -
           eff.lambda_v * bl.M);

  // row 4: <kappa nu, omega>^h + <grad X, grad omega>
  const VectorField x_eff4 = pb.alpha4 * it.x + (1.0 - pb.alpha4) * pb.x_prev;
  r.f4 = -(bl.N.transpose() * eff.kappa + apply_stiffness(bl.S, x_eff4));

  // moved surface
  const InterfacePolygon moved = pb.sigma->with_positions(it.x);
  r.energy_moved = pb.gamma * moved.perimeter();
  r.volume_moved = enclosed_area(moved, pb.hole);
  const ShapeGradients grads = shape_gradients(moved);
  r.energy_grad = grads.energy;
  r.volume_grad = grads.volume;

  // row 5: energy identity; row 6: volume identity
  const double e_diff = pb.bdf2 ? (3.0 * r.energy_moved - 4.0 * pb.e_prev + pb.e_prev2) / (2.0 * pb.dt)
                                : (r.energy_moved - pb.e_prev) / pb.dt;
  const double dissipation = eff.u.dot(bl.A * eff.u);
  r.f5 = -(e_diff + dissipation - eff.u.dot(bl.force));
  const double v_row = pb.bdf2 ? 3.0 * r.volume_moved - 4.0 * pb.v_prev + pb.v_prev2 + pb.flux_term
                               : r.volume_moved - pb.v_prev + pb.flux_term;
  r.f6 = -v_row;
  return r;
}

// Scheme residuals of the enforced rows at a state; the same expressions the report
// logs and the diagnostics recompute.
inline double residual_sup(const Residuals& r) {
  return std::max({detail::sup(r.f1), detail::sup(r.f2), std::abs(r.fmean), detail::sup(r.f3),
                   detail::sup(r.f4), std::abs(r.f5), std::abs(r.f6)});
}

class NewtonSolver {
public:
  explicit NewtonSolver(const StepProblem& pb) : pb_(pb) {
    nf_ = pb.vel->n_free();
    np_ = pb.pres->dim();
    k_ = pb.sigma->size();
    n_ = nf_ + np_ + k_ + 2 * k_;
    build_base_triplets();
    // zero-mean constraint as the bordered row/column of the saddle system
    mean_column_ = Vector::Zero(n_);
    mean_row_ = Vector::Zero(n_);
    for (int q = 0; q < np_; ++q) {
      mean_column_[nf_ + q] = pb_.blocks.mean[q];
      mean_row_[nf_ + q] = pb_.alpha * pb_.blocks.mean[q];
    }
  }

  int dim() const { return n_; }
  int kappa_offset() const { return nf_ + np_; }
  int x_offset() const { return nf_ + np_ + k_; }

  NewtonOutcome solve() {
    NewtonIterate it = initial_iterate();
    NewtonOutcome out;
    MultiplierMode mode = pb_.mode;
    double lambda_e_factorized = std::numeric_limits<double>::quiet_NaN();
    bool need_refactor = false;

    for (int iter = 0; iter <= pb_.max_iters; ++iter) {
      const Residuals res = assemble_residuals(pb_, it);
      if (residual_sup(res) <= 1e-300) {  // nothing to do (e.g. gamma = 0 without forcing)
        out.iterate = it;
        return out;
      }
      if (iter == pb_.max_iters) break;

      // the only iteration-dependent matrix block carries lambda_E; modes without an
      // active energy multiplier keep one factorization per step
      const detail::EffectiveFields eff = detail::effective(pb_, it);
      const bool lambda_active = (mode == MultiplierMode::both || mode == MultiplierMode::energy_only);
      const bool lambda_drifted =
          lambda_active && std::abs(eff.lambda_e - lambda_e_factorized) >
                               pb_.lambda_refactor_tol * (1.0 + std::abs(lambda_e_factorized));
      if (!lu_.ready() || need_refactor || (lambda_active && std::isnan(lambda_e_factorized)) ||
          lambda_drifted) {
        factorize(eff.lambda_e);
        lambda_e_factorized = eff.lambda_e;
        need_refactor = false;
        cached_b2_valid_ = false;
      }

      // three right-hand sides against one factorization
      auto [b0, xi0] = lu_.solve(pack_rhs(res), res.fmean);
      Vector b1, b2;
      double xi1 = 0, xi2 = 0;
      if (mode == MultiplierMode::both || mode == MultiplierMode::energy_only) {
        Vector rhs = Vector::Zero(n_);
        const Vector lumped_kappa = pb_.blocks.M.cwiseProduct(eff.kappa);
        for (int i = 0; i < k_; ++i) rhs[kappa_offset() + i] = pb_.alpha * lumped_kappa[i];
        std::tie(b1, xi1) = lu_.solve(rhs, 0.0);
      }
      if (mode == MultiplierMode::both || mode == MultiplierMode::volume_only) {
        // constant right-hand side: reuse the solve while the factorization stands
        if (!cached_b2_valid_) {
          Vector rhs = Vector::Zero(n_);
          for (int i = 0; i < k_; ++i) rhs[kappa_offset() + i] = pb_.alpha * pb_.blocks.M[i];
          std::tie(cached_b2_, cached_xi2_) = lu_.solve(rhs, 0.0);
          cached_b2_valid_ = true;
        }
        b2 = cached_b2_;
        xi2 = cached_xi2_;
      }

      // reconstruct the multiplier directions from the enforced rows
      const Vector w5u = row5_velocity_weights(eff);
      double lam_e_delta = 0, lam_v_delta = 0;
      const double r50 = row5_of(b0, w5u, res), r60 = row6_of(b0, res);
      if (mode == MultiplierMode::both) {
        TwoByTwo sys;
        sys.a11 = row5_of(b1, w5u, res);
        sys.a12 = row5_of(b2, w5u, res);
        sys.a21 = row6_of(b1, res);
        sys.a22 = row6_of(b2, res);
        sys.g1 = res.f5 - r50;
        sys.g2 = res.f6 - r60;
        const auto sol = solve_2x2(sys, pb_.rel_det_tol);
        if (sol) {
          lam_e_delta = sol->first;
          lam_v_delta = sol->second;
        } else {
          if (pb_.fallback == SingularFallback::error)
            throw StepError("singular 2x2 multiplier system (near-constant curvature)");
          std::cerr << "[stokeslm] warning: singular 2x2 multiplier system, step falls back to "
                       "the volume-only multiplier\n";
          out.fallback_used = true;
          mode = MultiplierMode::volume_only;
          it.lambda_e = 0;  // energy row dropped for the rest of this step
          need_refactor = true;
          lam_v_delta = scalar_multiplier(sys.a22, res.f6 - r60, "volume");
        }
      } else if (mode == MultiplierMode::energy_only) {
        lam_e_delta = scalar_multiplier(row5_of(b1, w5u, res), res.f5 - r50, "energy");
      } else if (mode == MultiplierMode::volume_only) {
        lam_v_delta = scalar_multiplier(row6_of(b2, res), res.f6 - r60, "volume");
      }

      Vector z = b0;
      double xi_delta = xi0;
      if (b1.size()) {
        z += lam_e_delta * b1;
        xi_delta += lam_e_delta * xi1;
      }
      if (b2.size()) {
        z += lam_v_delta * b2;
        xi_delta += lam_v_delta * xi2;
      }

      const double step_norm = direction_norm(z, xi_delta, lam_e_delta, lam_v_delta, mode);
      if (pb_.debug)
        std::cerr << "[newton] iter " << iter + 1 << " |delta| " << step_norm << " lambda ("
                  << it.lambda_e + lam_e_delta << ", " << it.lambda_v + lam_v_delta << ")\n";
      if (step_norm <= pb_.tol) {
        // a sub-tolerance direction is the convergence signal, not an iteration;
        // leaving it unapplied keeps discrete equilibria exactly fixed
        out.iterate = it;
        return out;
      }
      apply_update(it, z, xi_delta, lam_e_delta, lam_v_delta, mode);
      out.iterations = iter + 1;
    }
    const Residuals res = assemble_residuals(pb_, it);
    throw StepError("Newton did not converge in " + std::to_string(pb_.max_iters) +
                    " iterations (residual sup-norm " + std::to_string(residual_sup(res)) + ")");
  }

  // Direction from the full coupled linearized system, with the zero-mean row, the
  // multiplier columns and the scalar rows 5-6 assembled explicitly into one sparse
  // matrix; the decoupling-correctness oracle for small instances.
  NewtonIterate monolithic_direction(const NewtonIterate& it) {
    const Residuals res = assemble_residuals(pb_, it);
    const detail::EffectiveFields eff = detail::effective(pb_, it);
    const bool has_e = pb_.mode == MultiplierMode::both || pb_.mode == MultiplierMode::energy_only;
    const bool has_v = pb_.mode == MultiplierMode::both || pb_.mode == MultiplierMode::volume_only;
    const int xi_index = n_;
    int col = n_ + 1;
    const int col_e = has_e ? col++ : -1;
    const int col_v = has_v ? col++ : -1;
    const int ncols = col;

    std::vector<Triplet> trips = base_;
    append_lambda_block(trips, eff.lambda_e);
    for (int q = 0; q < np_; ++q) {
      trips.emplace_back(nf_ + q, xi_index, pb_.blocks.mean[q]);
      trips.emplace_back(xi_index, nf_ + q, pb_.alpha * pb_.blocks.mean[q]);
    }
    const Vector lumped_kappa = pb_.blocks.M.cwiseProduct(eff.kappa);
    const Vector w5u = row5_velocity_weights(eff);
    for (int i = 0; i < k_; ++i) {
      if (has_e) trips.emplace_back(kappa_offset() + i, col_e, -pb_.alpha * lumped_kappa[i]);
      if (has_v) trips.emplace_back(kappa_offset() + i, col_v, -pb_.alpha * pb_.blocks.M[i]);
    }
    if (has_e) {
      for (int i = 0; i < nf_; ++i)
        if (w5u[i] != 0.0) trips.emplace_back(col_e, i, w5u[i]);
      for (int i = 0; i < 2 * k_; ++i)
        trips.emplace_back(col_e, x_offset() + i, pb_.ce * pb_.gamma * res.energy_grad[i]);
    }
    if (has_v)
      for (int i = 0; i < 2 * k_; ++i)
        trips.emplace_back(col_v, x_offset() + i, pb_.c6 * res.volume_grad[i]);

    SparseMatrix j(ncols, ncols);
    j.setFromTriplets(trips.begin(), trips.end());
    Vector rhs = Vector::Zero(ncols);
    rhs.head(n_) = pack_rhs(res);
    rhs[xi_index] = res.fmean;
    if (has_e) rhs[col_e] = res.f5;
    if (has_v) rhs[col_v] = res.f6;

    SparseLU lu;
    lu.factorize(j);
    const Vector z = lu.solve(rhs);

    NewtonIterate dir;
    dir.u = Vector::Zero(pb_.vel->n_dofs());
    for (int i = 0; i < nf_; ++i) dir.u[pb_.vel->free_to_full()[i]] = z[i];
    dir.p = z.segment(nf_, np_);
    dir.xi = z[xi_index];
    dir.kappa = z.segment(kappa_offset(), k_);
    dir.x = z.segment(x_offset(), 2 * k_);
    dir.lambda_e = has_e ? z[col_e] : 0.0;
    dir.lambda_v = has_v ? z[col_v] : 0.0;
    return dir;
  }

  // Decoupled direction at a given iterate (testing hook; solve() inlines the same steps).
  NewtonIterate decoupled_direction(const NewtonIterate& it) {
    const Residuals res = assemble_residuals(pb_, it);
    const detail::EffectiveFields eff = detail::effective(pb_, it);
    factorize(eff.lambda_e);
    auto [b0, xi0] = lu_.solve(pack_rhs(res), res.fmean);
    Vector b1, b2;
    double xi1 = 0, xi2 = 0;
    const Vector lumped_kappa = pb_.blocks.M.cwiseProduct(eff.kappa);
    const bool has_e = pb_.mode == MultiplierMode::both || pb_.mode == MultiplierMode::energy_only;
    const bool has_v = pb_.mode == MultiplierMode::both || pb_.mode == MultiplierMode::volume_only;
    if (has_e) {
      Vector rhs = Vector::Zero(n_);
      for (int i = 0; i < k_; ++i) rhs[kappa_offset() + i] = pb_.alpha * lumped_kappa[i];
      std::tie(b1, xi1) = lu_.solve(rhs, 0.0);
    }
    if (has_v) {
      Vector rhs = Vector::Zero(n_);
      for (int i = 0; i < k_; ++i) rhs[kappa_offset() + i] = pb_.alpha * pb_.blocks.M[i];
      std::tie(b2, xi2) = lu_.solve(rhs, 0.0);
    }
    const Vector w5u = row5_velocity_weights(eff);
    double le = 0, lv = 0;
    const double r50 = row5_of(b0, w5u, res), r60 = row6_of(b0, res);
    if (pb_.mode == MultiplierMode::both) {
      TwoByTwo sys{row5_of(b1, w5u, res), row5_of(b2, w5u, res), row6_of(b1, res), row6_of(b2, res),
                   res.f5 - r50, res.f6 - r60};
      const auto sol = solve_2x2(sys, pb_.rel_det_tol);
      if (!sol) throw StepError("singular 2x2 multiplier system in direction oracle");
      le = sol->first;
      lv = sol->second;
    } else if (pb_.mode == MultiplierMode::energy_only) {
      le = (res.f5 - r50) / row5_of(b1, w5u, res);
    } else if (pb_.mode == MultiplierMode::volume_only) {
      lv = (res.f6 - r60) / row6_of(b2, res);
    }
    Vector z = b0;
    double xi = xi0;
    if (b1.size()) {
      z += le * b1;
      xi += le * xi1;
    }
    if (b2.size()) {
      z += lv * b2;
      xi += lv * xi2;
    }

    NewtonIterate dir;
    dir.u = Vector::Zero(pb_.vel->n_dofs());
    for (int i = 0; i < nf_; ++i) dir.u[pb_.vel->free_to_full()[i]] = z[i];
    dir.p = z.segment(nf_, np_);
    dir.xi = xi;
    dir.kappa = z.segment(kappa_offset(), k_);
    dir.x = z.segment(x_offset(), 2 * k_);
    dir.lambda_e = le;
    dir.lambda_v = lv;
    return dir;
  }

  NewtonIterate initial_iterate() const {
    NewtonIterate it;
    it.u = pb_.u_prev;
    pb_.vel->apply_boundary_values(it.u, pb_.bc_time);
    it.p = pb_.p_prev;
    it.xi = pb_.xi_prev;
    it.x = pb_.x_prev;
    it.kappa = pb_.kappa_prev;
    it.lambda_e = pb_.lambda_e_prev;
    it.lambda_v = pb_.lambda_v_prev;
    return it;
  }

private:
  void build_base_triplets() {
    const OperatorBlocks& bl = pb_.blocks;
    const VelocitySpace& vel = *pb_.vel;
    base_.clear();
    base_.reserve(bl.A.nonZeros() + 2 * bl.B.nonZeros() + 2 * bl.C.nonZeros() + 8 * k_ + 2 * np_);

    for (int c = 0; c < bl.A.outerSize(); ++c)
      for (SparseMatrix::InnerIterator a(bl.A, c); a; ++a) {
        const int fr = vel.full_to_free(a.row()), fc = vel.full_to_free(a.col());
        if (fr >= 0 && fc >= 0) base_.emplace_back(fr, fc, pb_.alpha * a.value());
      }
    for (int c = 0; c < bl.B.outerSize(); ++c)
      for (SparseMatrix::InnerIterator b(bl.B, c); b; ++b) {
        const int fc = vel.full_to_free(b.col());
        if (fc < 0) continue;
        base_.emplace_back(nf_ + b.row(), fc, pb_.alpha * b.value());   // (div u, q)
        base_.emplace_back(fc, nf_ + b.row(), -pb_.alpha * b.value());  // -(p, div phi)
      }
    for (int c = 0; c < bl.C.outerSize(); ++c)
      for (SparseMatrix::InnerIterator cc(bl.C, c); cc; ++cc) {
        const int fr = vel.full_to_free(cc.row());
        if (fr < 0) continue;
        base_.emplace_back(fr, kappa_offset() + cc.col(), -pb_.gamma * pb_.alpha * cc.value());
        base_.emplace_back(kappa_offset() + cc.col(), fr, -pb_.alpha * cc.value());
      }
    for (int c = 0; c < bl.N.outerSize(); ++c)
      for (SparseMatrix::InnerIterator nn(bl.N, c); nn; ++nn) {
        base_.emplace_back(kappa_offset() + nn.row(), x_offset() + nn.col(), pb_.beta_dt * nn.value());
        base_.emplace_back(x_offset() + nn.col(), kappa_offset() + nn.row(), pb_.alpha * nn.value());
      }
    for (int c = 0; c < bl.S.outerSize(); ++c)
      for (SparseMatrix::InnerIterator ss(bl.S, c); ss; ++ss)
        for (int comp = 0; comp < 2; ++comp)
          base_.emplace_back(x_offset() + 2 * ss.row() + comp, x_offset() + 2 * ss.col() + comp,
                             pb_.alpha4 * ss.value());
  }

  // always emitted (possibly with value zero) so the sparsity pattern stays fixed
  // across Newton refactorizations and the symbolic analysis can be reused
  void append_lambda_block(std::vector<Triplet>& trips, double lambda_e_eff) const {
    for (int i = 0; i < k_; ++i)
      trips.emplace_back(kappa_offset() + i, kappa_offset() + i,
                         -pb_.alpha * lambda_e_eff * pb_.blocks.M[i]);
  }

  void factorize(double lambda_e_eff) {
    std::vector<Triplet> trips = base_;
    append_lambda_block(trips, lambda_e_eff);
    SparseMatrix j(n_, n_);
    j.setFromTriplets(trips.begin(), trips.end());
    lu_.factorize(j, mean_column_, mean_row_, nf_);  // pin the first pressure dof
  }

  Vector pack_rhs(const Residuals& r) const {
    Vector rhs(n_);
    rhs.head(nf_) = r.f1;
    rhs.segment(nf_, np_) = r.f2;
    rhs.segment(kappa_offset(), k_) = r.f3;
    rhs.segment(x_offset(), 2 * k_) = r.f4;
    return rhs;
  }

  // linearized energy row weights on the free velocity dofs:
  // d/du [ u_eff^T A u_eff - (u_eff, g) ] = 2 alpha A u_eff - alpha g
  Vector row5_velocity_weights(const detail::EffectiveFields& eff) const {
    const Vector w_full = 2.0 * pb_.alpha * (pb_.blocks.A * eff.u) - pb_.alpha * pb_.blocks.force;
    Vector w(nf_);
    for (int i = 0; i < nf_; ++i) w[i] = w_full[pb_.vel->free_to_full()[i]];
    return w;
  }

  double row5_of(const Vector& z, const Vector& w5u, const Residuals& res) const {
    double v = w5u.dot(z.head(nf_));
    for (int i = 0; i < 2 * k_; ++i) v += pb_.ce * pb_.gamma * res.energy_grad[i] * z[x_offset() + i];
    return v;
  }

  double row6_of(const Vector& z, const Residuals& res) const {
    double v = 0;
    for (int i = 0; i < 2 * k_; ++i) v += pb_.c6 * res.volume_grad[i] * z[x_offset() + i];
    return v;
  }

  double scalar_multiplier(double a, double g, const char* which) const {
    if (std::abs(a) < 1e-300) throw StepError(std::string("degenerate scalar ") + which + " multiplier system");
    return g / a;
  }

  double direction_norm(const Vector& z, double xi, double le, double lv, MultiplierMode mode) const {
    const bool has_e = mode == MultiplierMode::both || mode == MultiplierMode::energy_only;
    const bool has_v = mode == MultiplierMode::both || mode == MultiplierMode::volume_only;
    return std::max({detail::sup(z.head(nf_)),
                     std::max(detail::sup(z.segment(nf_, np_)), std::abs(xi)),
                     detail::sup(z.segment(kappa_offset(), k_)),
                     detail::sup(z.segment(x_offset(), 2 * k_)), has_e ? std::abs(le) : 0.0,
                     has_v ? std::abs(lv) : 0.0});
  }

  void apply_update(NewtonIterate& it, const Vector& z, double xi, double le, double lv,
                    MultiplierMode mode) {
    for (int i = 0; i < nf_; ++i) it.u[pb_.vel->free_to_full()[i]] += z[i];
    it.p += z.segment(nf_, np_);
    it.xi += xi;
    it.kappa += z.segment(kappa_offset(), k_);
    it.x += z.segment(x_offset(), 2 * k_);
    if (mode == MultiplierMode::both || mode == MultiplierMode::energy_only) it.lambda_e += le;
    if (mode == MultiplierMode::both || mode == MultiplierMode::volume_only) it.lambda_v += lv;
  }

  const StepProblem& pb_;
  int nf_ = 0, np_ = 0, k_ = 0, n_ = 0;
  std::vector<Triplet> base_;
  Vector mean_column_, mean_row_;
  MeanConstrainedLU lu_;
  Vector cached_b2_;
  double cached_xi2_ = 0;
  bool cached_b2_valid_ = false;
};

}  // namespace stokeslm

#endif
