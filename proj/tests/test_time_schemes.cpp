#include <catch2/catch.hpp>

#include "stokeslm/time_schemes.hpp"

#include <cmath>

using namespace stokeslm;

namespace {

InterfacePolygon circle_polygon(int k, double r, Vec2 c) {
  std::vector<Vec2> v(k);
  for (int i = 0; i < k; ++i) {
    const double phi = 2.0 * M_PI * i / k;
    v[i] = c + r * Vec2(std::cos(phi), std::sin(phi));
  }
  return InterfacePolygon(std::move(v));
}

InterfacePolygon ellipse_polygon(int k, Vec2 c, double ax, double ay) {
  std::vector<Vec2> v(k);
  for (int i = 0; i < k; ++i) {
    const double phi = 2.0 * M_PI * i / k;
    v[i] = c + Vec2(ax * std::cos(phi), ay * std::sin(phi));
  }
  return InterfacePolygon(std::move(v));
}

SchemeConfig retraction_config(SchemeKind scheme, MultiplierMode mode, double dt) {
  SchemeConfig cfg;
  cfg.scheme = scheme;
  cfg.multipliers = mode;
  cfg.dt = dt;
  cfg.phys.mu_minus = cfg.phys.mu_plus = 2.0;
  cfg.phys.gamma = 5.0;
  return cfg;
}

}  // namespace

TEST_CASE("initialization") {
  const BulkMesh mesh = BulkMesh::build_structured({Rect{0, 0, 1, 1}, std::nullopt}, 1.0 / 16);

  SECTION("circle initial data gives constant negative curvature and exact scalars") {
    SchemeConfig cfg = retraction_config(SchemeKind::euler, MultiplierMode::both, 1e-3);
    const Simulation sim(mesh, cfg);
    const InterfacePolygon g0 = circle_polygon(16, 0.25, Vec2(0.5, 0.5));
    const DiscreteState s0 = sim.initialize(g0);
    CHECK(s0.kappa.maxCoeff() - s0.kappa.minCoeff() < 1e-12);
    CHECK(s0.kappa[0] < 0);
    CHECK(s0.lambda_e == 0.0);
    CHECK(s0.lambda_v == 0.0);
    CHECK(s0.energy == Approx(5.0 * g0.perimeter()).epsilon(1e-14));
    CHECK(s0.volume == Approx(enclosed_area(g0)).epsilon(1e-14));
  }

  SECTION("gamma = 0 and no force gives zero initial velocity") {
    SchemeConfig cfg = retraction_config(SchemeKind::euler, MultiplierMode::both, 1e-3);
    cfg.phys.gamma = 0.0;
    const Simulation sim(mesh, cfg);
    const DiscreteState s0 = sim.initialize(circle_polygon(24, 0.25, Vec2(0.5, 0.5)));
    CHECK(s0.u.lpNorm<Eigen::Infinity>() < 1e-12);
    CHECK(s0.p.lpNorm<Eigen::Infinity>() < 1e-10);
  }

  SECTION("512-gon of radius 0.5 has volume close to the disc") {
    SchemeConfig cfg = retraction_config(SchemeKind::euler, MultiplierMode::both, 1e-3);
    const BulkMesh big = BulkMesh::build_structured({Rect{-1, -1, 1, 1}, std::nullopt}, 0.125);
    const Simulation sim(big, cfg);
    const DiscreteState s0 = sim.initialize(circle_polygon(512, 0.5, Vec2(0, 0)));
    CHECK(s0.volume == Approx(M_PI * 0.25).margin(1e-4));
  }
}

TEST_CASE("a stationary configuration stays exactly fixed without forcing") {
  const BulkMesh mesh = BulkMesh::build_structured({Rect{0, 0, 1, 1}, std::nullopt}, 1.0 / 8);
  for (SchemeKind scheme : {SchemeKind::bgn, SchemeKind::euler, SchemeKind::cn}) {
    SchemeConfig cfg = retraction_config(scheme, MultiplierMode::both, 1e-2);
    if (scheme == SchemeKind::bgn) cfg.multipliers = MultiplierMode::none;
    cfg.phys.gamma = 0.0;
    const Simulation sim(mesh, cfg);
    const DiscreteState s0 = sim.initialize(circle_polygon(12, 0.2, Vec2(0.5, 0.5)));
    const auto [s1, rep] = sim.step(s0);
    CHECK(rep.newton_iters == 0);  // residuals vanish at the initial guess
    CHECK((s1.gamma.positions() - s0.gamma.positions()).lpNorm<Eigen::Infinity>() == 0.0);
    CHECK(s1.u.lpNorm<Eigen::Infinity>() == 0.0);
  }
}

TEST_CASE("retracting ellipse: structure preservation per step") {
  const BulkMesh mesh = BulkMesh::build_structured({Rect{0, 0, 1, 1}, std::nullopt}, 1.0 / 16);
  const InterfacePolygon g0 = ellipse_polygon(24, Vec2(0.5, 0.5), 0.2, 0.05);
  const double dt = 0.1 / 64;

  SECTION("euler with both multipliers conserves volume and drops energy") {
    const Simulation sim(mesh, retraction_config(SchemeKind::euler, MultiplierMode::both, dt));
    DiscreteState s = sim.initialize(g0);
    const double v0 = s.volume;
    double prev_energy = s.energy;
    for (int m = 0; m < 6; ++m) {
      const auto [next, rep] = sim.step(s);
      CHECK(std::abs(next.volume - v0) < 1e-11 * v0 + 1e-13);
      CHECK(std::abs(rep.residual_e) < 1e-9);
      CHECK(std::abs(rep.residual_v) < 1e-12);
      CHECK(next.energy <= prev_energy + 1e-12);
      CHECK(rep.newton_iters <= 10);
      CHECK_FALSE(rep.fallback_used);
      prev_energy = next.energy;
      s = next;
    }
    // the ellipse is really moving
    CHECK(manifold_distance(s.gamma, g0) > 1e-5);
  }

  SECTION("bgn matches euler with multipliers=none to solver tolerance") {
    const Simulation bgn(mesh, retraction_config(SchemeKind::bgn, MultiplierMode::none, dt));
    const Simulation none(mesh, retraction_config(SchemeKind::euler, MultiplierMode::none, dt));
    DiscreteState sb = bgn.initialize(g0), sn = none.initialize(g0);
    for (int m = 0; m < 3; ++m) {
      auto [nb, rb] = bgn.step(sb);
      auto [nn, rn] = none.step(sn);
      CHECK(rb.newton_iters == 1);
      CHECK(rn.newton_iters == 1);
      CHECK((nb.gamma.positions() - nn.gamma.positions()).lpNorm<Eigen::Infinity>() < 1e-12);
      CHECK((nb.u - nn.u).lpNorm<Eigen::Infinity>() < 1e-12);
      sb = std::move(nb);
      sn = std::move(nn);
    }
    // bgn does not conserve volume exactly, but drifts only mildly
    const double v0 = enclosed_area(g0);
    CHECK(std::abs(sb.volume - v0) > 1e-12);
    CHECK(std::abs(sb.volume - v0) < 1e-3);
  }

  SECTION("cn conserves volume and enforces the mid-time energy row") {
    const Simulation sim(mesh, retraction_config(SchemeKind::cn, MultiplierMode::both, dt));
    DiscreteState s = sim.initialize(g0);
    const double v0 = s.volume;
    double prev_energy = s.energy;
    for (int m = 0; m < 4; ++m) {
      const auto [next, rep] = sim.step(s);
      CHECK(std::abs(next.volume - v0) < 1e-11 * v0 + 1e-13);
      CHECK(std::abs(rep.residual_e) < 1e-9);
      CHECK(next.energy <= prev_energy + 1e-12);
      CHECK(rep.newton_iters <= 10);
      prev_energy = next.energy;
      s = next;
    }
  }

  SECTION("bdf2 enforces the three-level volume combination") {
    const Simulation cn(mesh, retraction_config(SchemeKind::cn, MultiplierMode::both, dt));
    const Simulation bdf2(mesh, retraction_config(SchemeKind::bdf2, MultiplierMode::both, dt));
    const DiscreteState s0 = cn.initialize(g0);
    const auto [s1, rep1] = cn.step(s0);  // startup level
    DiscreteState prev = s0, cur = s1;
    for (int m = 0; m < 4; ++m) {
      const auto [next, rep] = bdf2.step(cur, &prev);
      CHECK(std::abs(3 * next.volume - 4 * cur.volume + prev.volume) < 1e-12);
      CHECK(std::abs(rep.residual_e) < 1e-9);
      CHECK(rep.newton_iters <= 10);
      prev = cur;
      cur = next;
    }
    // volume telescopes back to the initial one
    CHECK(std::abs(cur.volume - s0.volume) < 1e-10 * s0.volume + 1e-13);
  }

  SECTION("bdf2 without a second state is a step failure") {
    const Simulation sim(mesh, retraction_config(SchemeKind::bdf2, MultiplierMode::both, dt));
    const DiscreteState s0 = sim.initialize(g0);
    CHECK_THROWS_AS(sim.step(s0), StepError);
  }
}

TEST_CASE("predictors") {
  const BulkMesh mesh = BulkMesh::build_structured({Rect{0, 0, 1, 1}, std::nullopt}, 1.0 / 16);
  const InterfacePolygon g0 = ellipse_polygon(24, Vec2(0.5, 0.5), 0.2, 0.05);
  SchemeConfig cfg = retraction_config(SchemeKind::cn, MultiplierMode::both, 0.1 / 64);
  const Simulation sim(mesh, cfg);
  const DiscreteState s0 = sim.initialize(g0);

  SECTION("no motion, no prediction") {
    // a regular polygon is discretely stationary (conformal); an ellipse would still
    // redistribute its vertices tangentially through the curvature row
    SchemeConfig frozen = cfg;
    frozen.phys.gamma = 0.0;
    const Simulation fsim(mesh, frozen);
    const InterfacePolygon c0 = circle_polygon(24, 0.2, Vec2(0.5, 0.5));
    const DiscreteState f0 = fsim.initialize(c0);
    const auto [poly, iters] = fsim.make_predictor(f0, PredictorKind::bgn, 0.5);
    CHECK((poly.positions() - c0.positions()).lpNorm<Eigen::Infinity>() == 0.0);
    CHECK(iters == 0);
  }

  SECTION("bgn and euler predictors move the surface similarly but not identically") {
    const auto [pb, ib] = sim.make_predictor(s0, PredictorKind::bgn, 0.5);
    const auto [pe, ie] = sim.make_predictor(s0, PredictorKind::euler, 0.5);
    const double diff = (pb.positions() - pe.positions()).lpNorm<Eigen::Infinity>();
    CHECK(diff > 0);
    CHECK(diff < 1e-3);
    CHECK(ib == 1);  // linear
    CHECK(ie >= 1);
    // the half-step predictor sits between the old surface and a full-step one
    const auto [pfull, _] = sim.make_predictor(s0, PredictorKind::bgn, 1.0);
    const double dhalf = manifold_distance(pb, s0.gamma);
    const double dfull = manifold_distance(pfull, s0.gamma);
    CHECK(dhalf < dfull);
  }
}

TEST_CASE("expanding bubble: modified volume identity") {
  // domain with hole, non-homogeneous boundary data u_D = alpha x / |x|^2
  const double alpha = 0.2;
  const BulkMesh mesh = BulkMesh::build_structured({Rect{-1, -1, 1, 1}, Rect{-0.2, -0.2, 0.2, 0.2}}, 0.1);
  SchemeConfig cfg;
  cfg.scheme = SchemeKind::euler;
  cfg.multipliers = MultiplierMode::volume_only;
  cfg.dt = 0.1 / 64;
  cfg.phys.mu_plus = 5.0;
  cfg.phys.mu_minus = 2.0;
  cfg.phys.gamma = 0.1;
  cfg.phys.force.kind = ForceSpec::Kind::analytic;
  cfg.phys.force.g = [alpha](const Vec2& x, double) { return Vec2(alpha * x / x.squaredNorm()); };
  cfg.phys.boundary.u_d = cfg.phys.force.g;
  cfg.phys.boundary.volume_flux = true;

  const Simulation sim(mesh, cfg);
  const DiscreteState s0 = sim.initialize(circle_polygon(32, 0.5, Vec2(0, 0)));
  const double phi = boundary_flux_hole(mesh, sim.velocity_space(), cfg.phys.boundary.u_d, 0.0);

  DiscreteState s = s0;
  for (int m = 0; m < 4; ++m) {
    const auto [next, rep] = sim.step(s);
    // V^{m+1} - V^m = -dt * Phi, up to the Newton tolerance
    CHECK(next.volume - s.volume == Approx(-cfg.dt * phi).margin(1e-11));
    CHECK(std::abs(rep.residual_v) < 1e-11);
    CHECK(rep.lambda_e == 0.0);
    CHECK(rep.newton_iters <= 10);
    s = next;
  }
  // the bubble actually grows by about 2 pi alpha dt per step
  CHECK(s.volume - s0.volume == Approx(4 * cfg.dt * 2 * M_PI * alpha).epsilon(1e-3));

  SECTION("config validation rejects unsupported multiplier modes") {
    SchemeConfig bad = cfg;
    bad.multipliers = MultiplierMode::both;
    CHECK_THROWS_AS(Simulation(mesh, bad), ConfigError);
  }
}

TEST_CASE("config validation") {
  SchemeConfig cfg;
  cfg.dt = -1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.dt = 1e-3;
  cfg.phys.gamma = -0.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.phys.gamma = 1.0;
  cfg.phys.mu_minus = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
