#ifndef STOKESLM_DIAGNOSTICS_HPP
#define STOKESLM_DIAGNOSTICS_HPP

#include "stokeslm/time_schemes.hpp"

#include <cmath>
#include <optional>
#include <vector>

namespace stokeslm {

// Exact expanding-bubble solution on (-1,1)^2 minus a centered square hole: a bubble
// of radius r(t) = sqrt(r0^2 + 2 alpha t) driven by the source field u = alpha x/|x|^2
// imposed on the boundary, with forcing g = u.
//
// The pressure carries a continuous alpha log|x| component on top of the piecewise
// constant jump part: with u harmonic in each phase the momentum balance reduces to
// grad p = g pointwise, so the potential of g is part of p. The jump part alone
// satisfies the interface stress condition (the log term is continuous across the
// interface), which the manufactured-solution residual test pins down.
struct ExpandingBubbleExact {
  double r0 = 0.5, alpha = 0.2, gamma = 0.1, mu_plus = 5.0, mu_minus = 2.0;
  Rect outer{-1, -1, 1, 1};
  Rect hole{-0.2, -0.2, 0.2, 0.2};
  bool log_corrected = true;

  double radius(double t) const { return std::sqrt(r0 * r0 + 2.0 * alpha * t); }

  Vec2 velocity(const Vec2& x) const {
    const double n2 = x.squaredNorm();
    if (n2 == 0) throw GeometryError("expanding-bubble velocity is singular at the origin");
    return alpha * x / n2;
  }

  // pressure jump constant: [p] = -(gamma + 2 alpha (mu_+ - mu_-)/r) kappa with kappa = -1/r
  double jump(double t) const {
    const double r = radius(t);
    return (gamma + 2.0 * alpha * (mu_plus - mu_minus) / r) / r;
  }

  double domain_area() const { return outer.area() - hole.area(); }
  double inner_area(double t) const { return M_PI * radius(t) * radius(t) - hole.area(); }

  // integral of log|x| over the domain (closed form over centered squares)
  double log_integral() const {
    auto square = [](double a) {
      // int over [-a,a]^2 of log|x| = a^2 (4 log a + 2 (log 2 + pi/2 - 3))
      return a * a * (4.0 * std::log(a) + 2.0 * (std::log(2.0) + M_PI / 2.0 - 3.0));
    };
    return square(0.5 * outer.width()) - square(0.5 * hole.width());
  }

  // zero-mean pressure over the domain
  double pressure(const Vec2& x, double t) const {
    const double r = radius(t);
    const double c = jump(t);
    double p = (x.norm() < r) ? c : 0.0;
    double mean = c * inner_area(t);
    if (log_corrected) {
      p += alpha * std::log(x.norm());
      mean += alpha * log_integral();
    }
    return p - mean / domain_area();
  }

  VectorFunction boundary_data() const {
    return [*this](const Vec2& x, double) { return velocity(x); };
  }

  ForceSpec force() const {
    ForceSpec f;
    f.kind = ForceSpec::Kind::analytic;
    f.g = [*this](const Vec2& x, double) { return velocity(x); };
    return f;
  }
};

// Highly resolved polygonal stand-in for the exact circle, vertices at radius r.
inline InterfacePolygon reference_interface(double r, int k_ref = 640) {
  if (k_ref < 64) throw ConfigError("reference interface needs at least 64 vertices");
  std::vector<Vec2> v(k_ref);
  for (int i = 0; i < k_ref; ++i) {
    const double phi = 2.0 * M_PI * i / k_ref;
    v[i] = r * Vec2(std::cos(phi), std::sin(phi));
  }
  return InterfacePolygon(std::move(v));
}

struct ErrorReport {
  double e_x = 0, e_u = 0, e_p = 0, e_lambda_v = 0, e_lambda_e = 0;
};

// Accumulates the error norms of one run against the exact expanding-bubble solution:
//   e_X       max over steps of the manifold distance to the reference polygon
//   e_u       l2-in-time of |I_2^h u - u^m|_{L2}
//   e_p       l2-in-time of |p - p^m|_{L2}, plain order-4 quadrature per triangle
//             (cut triangles are not subdivided at the exact circle)
//   e_lambda  l2-in-time of the multiplier magnitudes
class ExactErrorAccumulator {
public:
  ExactErrorAccumulator(const ExpandingBubbleExact& exact, const Simulation& sim, int k_ref = 640)
      : exact_(exact), sim_(&sim), k_ref_(k_ref) {}

  void add_step(const DiscreteState& s, double dt) {
    const double t = s.t;
    const InterfacePolygon ref = reference_interface(exact_.radius(t), k_ref_);
    e_x_ = std::max(e_x_, manifold_distance(ref, s.gamma));

    const VelocitySpace& vel = sim_->velocity_space();
    const Vector u_exact = vel.interpolate([this](const Vec2& x, double) { return exact_.velocity(x); }, t);
    const Vector du = u_exact - s.u;
    double u_sq = 0, p_sq = 0;
    const BulkMesh& mesh = sim_->mesh();
    const TriangleRule& rule = triangle_rule_order4();
    for (int tri = 0; tri < mesh.n_triangles(); ++tri) {
      const double area = mesh.triangle_area(tri);
      for (size_t q = 0; q < rule.points.size(); ++q) {
        const auto& l = rule.points[q];
        const double w = rule.weights[q] * area;
        const Vec2 x = l[0] * mesh.vertices()[mesh.triangles()[tri][0]] +
                       l[1] * mesh.vertices()[mesh.triangles()[tri][1]] +
                       l[2] * mesh.vertices()[mesh.triangles()[tri][2]];
        u_sq += w * vel.evaluate(du, tri, l).squaredNorm();
        const double dp = exact_.pressure(x, t) - sim_->pressure_space().evaluate(s.p, tri, l);
        p_sq += w * dp * dp;
      }
    }
    u_sq_sum_ += dt * u_sq;
    p_sq_sum_ += dt * p_sq;
    lv_sq_sum_ += dt * s.lambda_v * s.lambda_v;
    le_sq_sum_ += dt * s.lambda_e * s.lambda_e;
  }

  ErrorReport report() const {
    return {e_x_, std::sqrt(u_sq_sum_), std::sqrt(p_sq_sum_), std::sqrt(lv_sq_sum_), std::sqrt(le_sq_sum_)};
  }

private:
  ExpandingBubbleExact exact_;
  const Simulation* sim_;
  int k_ref_;
  double e_x_ = 0, u_sq_sum_ = 0, p_sq_sum_ = 0, lv_sq_sum_ = 0, le_sq_sum_ = 0;
};

// Error norms against a stored reference trajectory (finest run), compared at shared
// coarse time points only; nothing is interpolated.
class ReferenceErrorAccumulator {
public:
  void add_step(const DiscreteState& s, const InterfacePolygon& ref, double dt) {
    e_x_ = std::max(e_x_, manifold_distance(ref, s.gamma));
    lv_sq_sum_ += dt * s.lambda_v * s.lambda_v;
    le_sq_sum_ += dt * s.lambda_e * s.lambda_e;
  }
  ErrorReport report() const { return {e_x_, 0.0, 0.0, std::sqrt(lv_sq_sum_), std::sqrt(le_sq_sum_)}; }

private:
  double e_x_ = 0, lv_sq_sum_ = 0, le_sq_sum_ = 0;
};

inline double velocity_l2_norm(const BulkMesh& mesh, const VelocitySpace& vel, const Vector& u) {
  double acc = 0;
  const TriangleRule& rule = triangle_rule_order4();
  for (int t = 0; t < mesh.n_triangles(); ++t) {
    const double area = mesh.triangle_area(t);
    for (size_t q = 0; q < rule.points.size(); ++q)
      acc += rule.weights[q] * area * vel.evaluate(u, t, rule.points[q]).squaredNorm();
  }
  return std::sqrt(acc);
}

// Experimental orders of convergence: pairwise log-ratio slopes. Non-positive errors
// leave the slope undefined (NaN).
inline std::vector<double> eoc(const std::vector<double>& errors, const std::vector<double>& steps) {
  if (errors.size() != steps.size() || errors.size() < 2)
    throw ConfigError("eoc needs at least two matching error/step pairs");
  std::vector<double> slopes(errors.size() - 1);
  for (size_t i = 0; i + 1 < errors.size(); ++i) {
    if (!(errors[i] > 0) || !(errors[i + 1] > 0) || !(steps[i] > 0) || !(steps[i + 1] > 0))
      slopes[i] = std::numeric_limits<double>::quiet_NaN();
    else
      slopes[i] = std::log(errors[i] / errors[i + 1]) / std::log(steps[i] / steps[i + 1]);
  }
  return slopes;
}

// Recompute the enforced energy/volume rows of every step from a logged trajectory,
// independently of the Newton path. Predictor surfaces of the second-order schemes are
// regenerated deterministically.
inline std::vector<std::pair<double, double>> structure_residual_series(
    const Simulation& sim, const std::vector<DiscreteState>& states) {
  const SchemeConfig& cfg = sim.config();
  std::vector<std::pair<double, double>> out;
  const size_t start = (cfg.scheme == SchemeKind::bdf2) ? 2 : 1;
  for (size_t m = start; m < states.size(); ++m) {
    const DiscreteState& prev = states[m - 1];
    const DiscreteState* prev2 = (cfg.scheme == SchemeKind::bdf2) ? &states[m - 2] : nullptr;
    std::unique_ptr<InterfacePolygon> predictor;
    const InterfacePolygon* surface = &prev.gamma;
    if (cfg.scheme == SchemeKind::cn || cfg.scheme == SchemeKind::bdf2) {
      const double fraction = (cfg.scheme == SchemeKind::cn) ? 0.5 : 1.0;
      auto [poly, iters] = sim.make_predictor(prev, cfg.predictor, fraction);
      predictor = std::make_unique<InterfacePolygon>(std::move(poly));
      surface = predictor.get();
    }
    const StepProblem pb =
        sim.build_problem(*surface, prev, prev2, cfg.scheme, cfg.multipliers, cfg.dt);
    double r_e = 0, r_v = 0;
    sim.enforced_residuals(pb, states[m], prev, prev2, r_e, r_v);
    out.emplace_back(r_e, r_v);
  }
  return out;
}

}  // namespace stokeslm

#endif
