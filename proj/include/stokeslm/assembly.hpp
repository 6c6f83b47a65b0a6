#ifndef STOKESLM_ASSEMBLY_HPP
#define STOKESLM_ASSEMBLY_HPP

#include "stokeslm/fe_spaces.hpp"
#include "stokeslm/quadrature.hpp"

#include <cstdio>
#include <fstream>
#include <vector>

namespace stokeslm {

// Assembled bilinear forms of one interface configuration. All blocks act on full
// velocity DOF vectors; Dirichlet reduction happens when the step system is built.
struct OperatorBlocks {
  SparseMatrix A;        // n_u x n_u, (2 mu D(u), D(phi))
  SparseMatrix B;        // n_p x n_u, (div u, q)
  Vector mean;           // n_p, zero-mean constraint row
  SparseMatrix C;        // n_u x K, <eta nu, phi> with exact cut quadrature
  Vector force;          // n_u, (g, phi)
  SparseMatrix N;        // K x 2K, lumped <V . nu, eta>^h
  Vector M;              // K, diagonal lumped interface mass
  SparseMatrix S;        // K x K scalar surface stiffness (componentwise on vectors)
  Vector lumped_kappa;   // K, <kappa, .>^h = M * kappa (filled by the scheme)
};

inline void assemble_bulk(const BulkMesh& mesh, const std::vector<double>& mu, const VelocitySpace& vel,
                          const PressureSpace& pres, SparseMatrix& A, SparseMatrix& B, Vector& mean) {
  const TriangleRule& rule = triangle_rule_order4();
  std::vector<Triplet> ta, tb;
  ta.reserve(mesh.n_triangles() * 144);
  tb.reserve(mesh.n_triangles() * 48);

  for (int t = 0; t < mesh.n_triangles(); ++t) {
    const auto& tri = mesh.triangles()[t];
    const Vec2 p0 = mesh.vertices()[tri[0]], p1 = mesh.vertices()[tri[1]], p2 = mesh.vertices()[tri[2]];
    const double area = mesh.triangle_area(t);
    // constant barycentric gradients
    const double inv2a = 1.0 / (2.0 * area);
    const std::array<Vec2, 3> gl = {
        Vec2((p1.y() - p2.y()) * inv2a, (p2.x() - p1.x()) * inv2a),
        Vec2((p2.y() - p0.y()) * inv2a, (p0.x() - p2.x()) * inv2a),
        Vec2((p0.y() - p1.y()) * inv2a, (p1.x() - p0.x()) * inv2a),
    };
    const auto nodes = vel.element_nodes(t);

    double a_loc[12][12] = {};
    double b_loc[4][12] = {};  // rows: 3 vertex hats + 1 indicator
    for (size_t q = 0; q < rule.points.size(); ++q) {
      const auto& l = rule.points[q];
      const double w = rule.weights[q] * area;
      std::array<Vec2, 6> grad;
      VelocitySpace::shape_gradients(l, gl, grad);
      // velocity-velocity: 2 mu D(u):D(phi)
      for (int i = 0; i < 6; ++i)
        for (int ci = 0; ci < 2; ++ci) {
          // D of basis (i, ci): D_ab = (delta_{a ci} g_b + delta_{b ci} g_a)/2 with g = grad[i]
          const Vec2 gi = grad[i];
          for (int jn = 0; jn < 6; ++jn)
            for (int cj = 0; cj < 2; ++cj) {
              const Vec2 gj = grad[jn];
              // sum_ab D_ab(i,ci) D_ab(j,cj), expanded
              double dd = 0.5 * gi.dot(gj) * (ci == cj ? 1.0 : 0.0) + 0.5 * gi[cj] * gj[ci];
              a_loc[2 * i + ci][2 * jn + cj] += w * 2.0 * mu[t] * dd;
            }
        }
      // divergence against pressure basis
      std::array<double, 6> phi;
      VelocitySpace::shape_values(l, phi);
      for (int jn = 0; jn < 6; ++jn)
        for (int cj = 0; cj < 2; ++cj) {
          const double div_basis = grad[jn][cj];
          for (int i = 0; i < 3; ++i) b_loc[i][2 * jn + cj] += w * l[i] * div_basis;
          b_loc[3][2 * jn + cj] += w * div_basis;
        }
    }

    for (int i = 0; i < 12; ++i) {
      const int gi = 2 * nodes[i / 2] + (i % 2);
      for (int jn = 0; jn < 12; ++jn) {
        const int gj = 2 * nodes[jn / 2] + (jn % 2);
        if (a_loc[i][jn] != 0.0) ta.emplace_back(gi, gj, a_loc[i][jn]);
      }
    }
    for (int i = 0; i < 3; ++i) {
      const int gp = pres.vertex_dof(tri[i]);
      for (int jn = 0; jn < 12; ++jn) {
        const int gj = 2 * nodes[jn / 2] + (jn % 2);
        if (b_loc[i][jn] != 0.0) tb.emplace_back(gp, gj, b_loc[i][jn]);
      }
    }
    const int gp = pres.triangle_dof(t);
    if (gp >= 0)
      for (int jn = 0; jn < 12; ++jn) {
        const int gj = 2 * nodes[jn / 2] + (jn % 2);
        if (b_loc[3][jn] != 0.0) tb.emplace_back(gp, gj, b_loc[3][jn]);
      }
  }

  A.resize(vel.n_dofs(), vel.n_dofs());
  A.setFromTriplets(ta.begin(), ta.end());
  B.resize(pres.dim(), vel.n_dofs());
  B.setFromTriplets(tb.begin(), tb.end());
  mean = pres.mean_integrals();
}

// Coupling block C[u-dof, k] = int_Gamma eta_k (nu . phi) ds with P1 interface trace,
// per-segment constant normal and exact P2 bulk traces. Both scheme occurrences
// (<kappa nu, phi> in the momentum row and <u . nu, eta> in the motion row) use this
// single block and its transpose.
inline SparseMatrix assemble_coupling(const InterfacePolygon& poly, const CutQuadrature& quad,
                                      const VelocitySpace& vel) {
  const int k = poly.size();
  std::vector<Triplet> tc;
  tc.reserve(k * 48);
  for (int j = 0; j < k; ++j) {
    const Vec2 nu = poly.segment_normal(j);
    const int ka = j, kb = (j + 1) % k;
    for (const CutNode& node : quad.segment_nodes[j]) {
      std::array<double, 6> phi;
      VelocitySpace::shape_values(node.bary, phi);
      const auto nodes = vel.element_nodes(node.triangle);
      const double eta_a = 1.0 - node.seg_param, eta_b = node.seg_param;
      for (int i = 0; i < 6; ++i)
        for (int c = 0; c < 2; ++c) {
          const double v = node.weight * phi[i] * nu[c];
          tc.emplace_back(2 * nodes[i] + c, ka, v * eta_a);
          tc.emplace_back(2 * nodes[i] + c, kb, v * eta_b);
        }
    }
  }
  SparseMatrix c(vel.n_dofs(), k);
  c.setFromTriplets(tc.begin(), tc.end());
  return c;
}

// Lumped interface operators: N maps a vertex vector field V to the scalar field
// <V . nu, eta>^h (one-sided limits of the per-segment normal), M is the diagonal
// lumped mass, S the componentwise stiffness.
inline void assemble_interface_blocks(const InterfacePolygon& poly, SparseMatrix& N, Vector& M,
                                      SparseMatrix& S) {
  const int k = poly.size();
  std::vector<Triplet> tn;
  tn.reserve(4 * k);
  const std::vector<Vec2> ln = lumped_normals(poly);
  for (int i = 0; i < k; ++i) {
    tn.emplace_back(i, 2 * i, ln[i].x());
    tn.emplace_back(i, 2 * i + 1, ln[i].y());
  }
  N.resize(k, 2 * k);
  N.setFromTriplets(tn.begin(), tn.end());
  M = lumped_mass(poly);
  S = surface_stiffness(poly);
}

struct ForceSpec {
  enum class Kind { none, analytic, density_gravity };
  Kind kind = Kind::none;
  VectorFunction g;          // analytic
  Vec2 f = Vec2(0, -0.981);  // gravity direction for density_gravity
};

// Load vector (g^h, phi). Analytic forces are interpolated by I_2^h first; the
// density-gravity form uses the per-triangle constant rho of the current
// classification.
inline Vector assemble_force(const BulkMesh& mesh, const VelocitySpace& vel, const ForceSpec& spec,
                             const std::vector<double>* rho, double time) {
  Vector load = Vector::Zero(vel.n_dofs());
  if (spec.kind == ForceSpec::Kind::none) return load;

  Vector g_nodes;
  if (spec.kind == ForceSpec::Kind::analytic) g_nodes = vel.interpolate(spec.g, time);

  const TriangleRule& rule = triangle_rule_order4();
  for (int t = 0; t < mesh.n_triangles(); ++t) {
    const double area = mesh.triangle_area(t);
    const auto nodes = vel.element_nodes(t);
    for (size_t q = 0; q < rule.points.size(); ++q) {
      const auto& l = rule.points[q];
      const double w = rule.weights[q] * area;
      std::array<double, 6> phi;
      VelocitySpace::shape_values(l, phi);
      Vec2 gq(0, 0);
      if (spec.kind == ForceSpec::Kind::analytic) {
        for (int i = 0; i < 6; ++i) {
          gq.x() += phi[i] * g_nodes[2 * nodes[i]];
          gq.y() += phi[i] * g_nodes[2 * nodes[i] + 1];
        }
      } else {
        gq = (*rho)[t] * spec.f;
      }
      for (int i = 0; i < 6; ++i) {
        load[2 * nodes[i]] += w * phi[i] * gq.x();
        load[2 * nodes[i] + 1] += w * phi[i] * gq.y();
      }
    }
  }
  return load;
}

// Discrete boundary flux int_{d2 Omega} I_2^h u_D . n over the hole boundary, by
// 3-point Gauss per boundary edge (exact for the P2 trace). n is the outer normal
// of the fluid domain, pointing into the hole.
inline double boundary_flux_hole(const BulkMesh& mesh, const VelocitySpace& vel, const VectorFunction& u_d,
                                 double time) {
  if (!mesh.domain().hole) return 0.0;
  const Vec2 hc = mesh.domain().hole->center();
  double flux = 0;
  for (int e = 0; e < mesh.n_edges(); ++e) {
    if (!mesh.hole_boundary_edge()[e]) continue;
    const Vec2 a = mesh.vertices()[mesh.edges()[e][0]];
    const Vec2 b = mesh.vertices()[mesh.edges()[e][1]];
    const Vec2 mid_node = vel.node_coords()[mesh.n_vertices() + e];
    const Vec2 d = b - a;
    const double len = d.norm();
    Vec2 n(d.y() / len, -d.x() / len);
    if ((hc - a).dot(n) < 0) n = -n;  // outer normal of Omega points toward the hole
    const Vec2 va = u_d(a, time), vb = u_d(b, time), vm = u_d(mid_node, time);
    for (const auto& gq : gauss3_unit()) {
      const double s = gq[0];
      // quadratic trace through the two endpoints and the midpoint node
      const double pa = (1 - s) * (1 - 2 * s), pb = s * (2 * s - 1), pm = 4 * s * (1 - s);
      const Vec2 u = pa * va + pb * vb + pm * vm;
      flux += gq[1] * len * u.dot(n);
    }
  }
  return flux;
}

// MatrixMarket coordinate dump for debugging (flag-gated by the caller).
inline void write_matrix_market(const std::string& path, const SparseMatrix& m) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open matrix dump file: " + path);
  out << "%%MatrixMarket matrix coordinate real general\n";
  out << m.rows() << " " << m.cols() << " " << m.nonZeros() << "\n";
  char buf[96];
  for (int k = 0; k < m.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(m, k); it; ++it) {
      std::snprintf(buf, sizeof buf, "%ld %ld %.17g\n", static_cast<long>(it.row() + 1),
                    static_cast<long>(it.col() + 1), it.value());
      out << buf;
    }
}

}  // namespace stokeslm

#endif
