#ifndef STOKESLM_TIME_SCHEMES_HPP
#define STOKESLM_TIME_SCHEMES_HPP

#include "stokeslm/newton.hpp"

#include <chrono>
#include <memory>
#include <optional>
#include <utility>

namespace stokeslm {

enum class SchemeKind { bgn, euler, cn, bdf2 };
enum class PredictorKind { bgn, euler };

struct BoundarySpec {
  VectorFunction u_d;       // empty = homogeneous no-slip
  bool volume_flux = false; // enforce the volume-growth row with the hole-boundary flux of u_d
};

struct PhysicalParams {
  double mu_minus = 1, mu_plus = 1;
  double rho_minus = 1, rho_plus = 1;  // only read by the density-gravity force
  double gamma = 1;
  ForceSpec force;
  BoundarySpec boundary;
};

struct SchemeConfig {
  SchemeKind scheme = SchemeKind::euler;
  MultiplierMode multipliers = MultiplierMode::both;
  PredictorKind predictor = PredictorKind::bgn;
  double dt = 1e-3;
  PhysicalParams phys;
  double newton_tol = 1e-10;
  int max_newton_iters = 50;
  SingularFallback fallback = SingularFallback::volume_only;
  double rel_det_tol = 1e-10;
  double lambda_refactor_tol = 1e-2;  // see StepProblem::lambda_refactor_tol
  bool bdf2_euler_startup = false;    // default startup is one Crank-Nicolson step
  bool debug_newton = false;

  void validate() const {
    if (!(dt > 0)) throw ConfigError("dt must be positive");
    if (!(phys.gamma >= 0)) throw ConfigError("gamma must be nonnegative");
    if (!(phys.mu_minus > 0) || !(phys.mu_plus > 0)) throw ConfigError("viscosities must be positive");
    if (phys.boundary.u_d) {
      if (!phys.boundary.volume_flux)
        throw ConfigError("non-homogeneous boundary data requires the flux-modified volume row");
      if (multipliers == MultiplierMode::both || multipliers == MultiplierMode::energy_only)
        throw ConfigError(
            "non-homogeneous boundary data supports only the volume multiplier (the energy "
            "identity takes a different form)");
    }
    if (phys.boundary.volume_flux && !phys.boundary.u_d)
      throw ConfigError("the flux-modified volume row needs boundary data");
  }
};

// One time level: interface, bulk velocity/pressure dofs, interface curvature,
// multipliers and the geometric scalars. Energy and volume are always computed
// geometrically from the polygon.
struct DiscreteState {
  double t = 0;
  InterfacePolygon gamma;
  Vector u, p;
  double xi = 0;  // zero-mean constraint multiplier (diagnostic, stays ~0)
  ScalarField kappa;
  double lambda_e = 0, lambda_v = 0;
  double energy = 0, volume = 0;
};

struct StepReport {
  int newton_iters = 0;
  int predictor_iters = 0;  // inner solve for CN/BDF2 predictor surfaces
  double lambda_e = 0, lambda_v = 0;
  double residual_e = 0, residual_v = 0;  // enforced rows evaluated at the accepted state
  bool fallback_used = false;
  double wall_seconds = 0;
};

class Simulation {
public:
  Simulation(const BulkMesh& mesh, SchemeConfig cfg)
      : mesh_(&mesh), cfg_(std::move(cfg)), vel_(mesh, BoundaryData{cfg_.phys.boundary.u_d}), pres_(mesh) {
    cfg_.validate();
    if (cfg_.phys.boundary.volume_flux && !mesh.domain().hole)
      throw ConfigError("the flux-modified volume row needs a domain hole (the inner boundary)");
  }

  const BulkMesh& mesh() const { return *mesh_; }
  const VelocitySpace& velocity_space() const { return vel_; }
  const PressureSpace& pressure_space() const { return pres_; }
  const SchemeConfig& config() const { return cfg_; }

  // kappa^0 from the discrete curvature identity, (u^0, p^0) from one linear Stokes
  // solve with that curvature, multipliers zero, scalars geometric.
  DiscreteState initialize(const InterfacePolygon& gamma0) const {
    DiscreteState s{0.0, gamma0, Vector(), Vector(), 0.0, discrete_curvature(gamma0), 0.0, 0.0, 0.0, 0.0};
    const Assembled ctx = assemble_on(gamma0, 0.0);

    const int nf = vel_.n_free(), np = pres_.dim();
    Vector u_full = vel_.boundary_values(0.0);
    const Vector rhs_full = cfg_.phys.gamma * (ctx.blocks.C * s.kappa) + ctx.blocks.force - ctx.blocks.A * u_full;
    const Vector div_bc = ctx.blocks.B * u_full;

    std::vector<Triplet> trips;
    for (int c = 0; c < ctx.blocks.A.outerSize(); ++c)
      for (SparseMatrix::InnerIterator a(ctx.blocks.A, c); a; ++a) {
        const int fr = vel_.full_to_free(a.row()), fc = vel_.full_to_free(a.col());
        if (fr >= 0 && fc >= 0) trips.emplace_back(fr, fc, a.value());
      }
    for (int c = 0; c < ctx.blocks.B.outerSize(); ++c)
      for (SparseMatrix::InnerIterator b(ctx.blocks.B, c); b; ++b) {
        const int fc = vel_.full_to_free(b.col());
        if (fc < 0) continue;
        trips.emplace_back(nf + b.row(), fc, b.value());
        trips.emplace_back(fc, nf + b.row(), -b.value());
      }
    SparseMatrix j(nf + np, nf + np);
    j.setFromTriplets(trips.begin(), trips.end());
    Vector rhs(nf + np);
    for (int i = 0; i < nf; ++i) rhs[i] = rhs_full[vel_.free_to_full()[i]];
    rhs.segment(nf, np) = -div_bc;

    Vector mean_col = Vector::Zero(nf + np), mean_row = Vector::Zero(nf + np);
    for (int q = 0; q < np; ++q) mean_col[nf + q] = mean_row[nf + q] = ctx.blocks.mean[q];
    MeanConstrainedLU lu;
    lu.factorize(j, mean_col, mean_row, nf);
    const auto [z, xi] = lu.solve(rhs, 0.0);
    for (int i = 0; i < nf; ++i) u_full[vel_.free_to_full()[i]] = z[i];
    s.u = u_full;
    s.p = z.segment(nf, np);
    s.xi = xi;
    s.energy = interface_energy(gamma0, cfg_.phys.gamma);
    s.volume = enclosed_area(gamma0, mesh_->domain().hole);
    return s;
  }

  // Advance one step. prev_prev is only needed by BDF2 (two consecutive states with
  // identified interface connectivity); the runner handles the startup step.
  std::pair<DiscreteState, StepReport> step(const DiscreteState& prev,
                                            const DiscreteState* prev_prev = nullptr) const {
    const auto t0 = std::chrono::steady_clock::now();
    StepReport report;

    if (cfg_.scheme == SchemeKind::bdf2 && !prev_prev)
      throw StepError("BDF2 needs two consecutive states; compute the startup level first");

    std::unique_ptr<InterfacePolygon> predictor;
    const InterfacePolygon* surface = &prev.gamma;
    if (cfg_.scheme == SchemeKind::cn || cfg_.scheme == SchemeKind::bdf2) {
      const double fraction = (cfg_.scheme == SchemeKind::cn) ? 0.5 : 1.0;
      auto [poly, iters] = make_predictor(prev, cfg_.predictor, fraction);
      predictor = std::make_unique<InterfacePolygon>(std::move(poly));
      surface = predictor.get();
      report.predictor_iters = iters;
    }

    StepProblem pb = build_problem(*surface, prev, prev_prev, cfg_.scheme, cfg_.multipliers, cfg_.dt);
    NewtonSolver solver(pb);
    const NewtonOutcome outcome = solver.solve();

    DiscreteState next = accept(*surface, prev, outcome, pb);
    report.newton_iters = outcome.iterations;
    report.fallback_used = outcome.fallback_used;
    report.lambda_e = next.lambda_e;
    report.lambda_v = next.lambda_v;
    enforced_residuals(pb, next, prev, prev_prev, report.residual_e, report.residual_v);
    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return {std::move(next), report};
  }

  // Predictor surface from one first-order step of size fraction*dt; the BGN variant
  // is fully linear, the Euler variant keeps the parent's multiplier mode. Direct
  // geometric extrapolation is deliberately not offered.
  std::pair<InterfacePolygon, int> make_predictor(const DiscreteState& prev, PredictorKind kind,
                                                  double fraction) const {
    const SchemeKind sub_scheme = (kind == PredictorKind::bgn) ? SchemeKind::bgn : SchemeKind::euler;
    const MultiplierMode sub_mode =
        (kind == PredictorKind::bgn) ? MultiplierMode::none : cfg_.multipliers;
    StepProblem pb = build_problem(prev.gamma, prev, nullptr, sub_scheme, sub_mode, fraction * cfg_.dt);
    try {
      NewtonSolver solver(pb);
      const NewtonOutcome outcome = solver.solve();
      return {prev.gamma.with_positions(outcome.iterate.x), outcome.iterations};
    } catch (const std::exception& e) {
      throw StepError(std::string("predictor step failed: ") + e.what());
    }
  }

  // Scheme residuals of the enforced rows, recomputed from states (used by the report
  // and by the diagnostics post-pass).
  void enforced_residuals(const StepProblem& pb, const DiscreteState& next, const DiscreteState& prev,
                          const DiscreteState* prev_prev, double& r_e, double& r_v) const {
    const double a = pb.alpha;
    const Vector u_eff = a * next.u + (1 - a) * prev.u;
    const double e_diff = pb.bdf2
                              ? (3 * next.energy - 4 * prev.energy + prev_prev->energy) / (2 * pb.dt)
                              : (next.energy - prev.energy) / pb.dt;
    r_e = e_diff + u_eff.dot(pb.blocks.A * u_eff) - u_eff.dot(pb.blocks.force);
    r_v = pb.bdf2 ? 3 * next.volume - 4 * prev.volume + prev_prev->volume + pb.flux_term
                  : next.volume - prev.volume + pb.flux_term;
  }

  StepProblem build_problem(const InterfacePolygon& surface, const DiscreteState& prev,
                            const DiscreteState* prev_prev, SchemeKind scheme, MultiplierMode mode,
                            double dt) const {
    const double t_force = (scheme == SchemeKind::cn)     ? prev.t + 0.5 * dt
                           : (scheme == SchemeKind::bdf2) ? prev.t + dt
                                                          : prev.t;
    Assembled ctx = assemble_on(surface, t_force);

    StepProblem pb;
    pb.vel = &vel_;
    pb.pres = &pres_;
    pb.sigma = &surface;
    pb.blocks = std::move(ctx.blocks);
    pb.hole = mesh_->domain().hole;
    pb.gamma = cfg_.phys.gamma;
    pb.dt = dt;
    switch (scheme) {
      case SchemeKind::bgn:
      case SchemeKind::euler:
        pb.alpha = 1;
        pb.beta_dt = 1.0 / dt;
        pb.alpha4 = 1;
        pb.ce = 1.0 / dt;
        pb.c6 = 1;
        break;
      case SchemeKind::cn:
        pb.alpha = 0.5;
        pb.beta_dt = 1.0 / dt;
        pb.alpha4 = 0.5;
        pb.ce = 1.0 / dt;
        pb.c6 = 1;
        break;
      case SchemeKind::bdf2:
        pb.alpha = 1;
        pb.beta_dt = 3.0 / (2.0 * dt);
        pb.alpha4 = 1;
        pb.ce = 3.0 / (2.0 * dt);
        pb.c6 = 3;
        pb.bdf2 = true;
        break;
    }
    pb.u_prev = prev.u;
    pb.p_prev = prev.p;
    pb.xi_prev = prev.xi;
    pb.x_prev = prev.gamma.positions();
    pb.kappa_prev = prev.kappa;
    pb.lambda_e_prev = prev.lambda_e;
    pb.lambda_v_prev = prev.lambda_v;
    pb.e_prev = prev.energy;
    pb.v_prev = prev.volume;
    if (pb.bdf2) {
      pb.x_prev2 = prev_prev ? prev_prev->gamma.positions() : pb.x_prev;
      pb.e_prev2 = prev_prev ? prev_prev->energy : pb.e_prev;
      pb.v_prev2 = prev_prev ? prev_prev->volume : pb.v_prev;
    }
    if (cfg_.phys.boundary.volume_flux) {
      const double t_flux = (scheme == SchemeKind::cn)     ? prev.t + 0.5 * dt
                            : (scheme == SchemeKind::bdf2) ? prev.t + dt
                                                           : prev.t;
      const double phi = boundary_flux_hole(*mesh_, vel_, cfg_.phys.boundary.u_d, t_flux);
      pb.flux_term = (pb.bdf2 ? 2.0 * dt : dt) * phi;
    }
    pb.mode = (scheme == SchemeKind::bgn) ? MultiplierMode::none : mode;
    pb.fallback = cfg_.fallback;
    pb.rel_det_tol = cfg_.rel_det_tol;
    pb.lambda_refactor_tol = cfg_.lambda_refactor_tol;
    pb.tol = cfg_.newton_tol;
    pb.max_iters = cfg_.max_newton_iters;
    pb.bc_time = prev.t + dt;
    pb.debug = cfg_.debug_newton;
    return pb;
  }

  struct Assembled {
    ElementClassification cls;
    OperatorBlocks blocks;
    CutQuadrature quad;
  };

  // All operators of one interface configuration: classification-dependent viscosity,
  // bulk blocks, cut-quadrature coupling, interface blocks and the force vector.
  Assembled assemble_on(const InterfacePolygon& surface, double force_time) const {
    Assembled ctx;
    ctx.cls = classify_elements(*mesh_, surface);
    const std::vector<double> mu = coefficient_field(ctx.cls, cfg_.phys.mu_minus, cfg_.phys.mu_plus);
    assemble_bulk(*mesh_, mu, vel_, pres_, ctx.blocks.A, ctx.blocks.B, ctx.blocks.mean);
    ctx.quad = build_cut_quadrature(*mesh_, surface);
    ctx.blocks.C = assemble_coupling(surface, ctx.quad, vel_);
    assemble_interface_blocks(surface, ctx.blocks.N, ctx.blocks.M, ctx.blocks.S);
    if (cfg_.phys.force.kind == ForceSpec::Kind::density_gravity) {
      const std::vector<double> rho = coefficient_field(ctx.cls, cfg_.phys.rho_minus, cfg_.phys.rho_plus);
      ctx.blocks.force = assemble_force(*mesh_, vel_, cfg_.phys.force, &rho, force_time);
    } else {
      ctx.blocks.force = assemble_force(*mesh_, vel_, cfg_.phys.force, nullptr, force_time);
    }
    return ctx;
  }

private:
  DiscreteState accept(const InterfacePolygon& surface, const DiscreteState& prev,
                       const NewtonOutcome& outcome, const StepProblem& pb) const {
    DiscreteState next{prev.t + pb.dt,
                       surface.with_positions(outcome.iterate.x),
                       outcome.iterate.u,
                       outcome.iterate.p,
                       outcome.iterate.xi,
                       outcome.iterate.kappa,
                       outcome.iterate.lambda_e,
                       outcome.iterate.lambda_v,
                       0.0,
                       0.0};
    next.energy = interface_energy(next.gamma, cfg_.phys.gamma);
    next.volume = enclosed_area(next.gamma, mesh_->domain().hole);
    return next;
  }

  const BulkMesh* mesh_;
  SchemeConfig cfg_;
  VelocitySpace vel_;
  PressureSpace pres_;
};

}  // namespace stokeslm

#endif
