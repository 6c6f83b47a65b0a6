#ifndef STOKESLM_QUADRATURE_HPP
#define STOKESLM_QUADRATURE_HPP

#include "stokeslm/bulk_mesh.hpp"

#include <array>
#include <cmath>
#include <vector>

namespace stokeslm {

struct TriangleRule {
  std::vector<std::array<double, 3>> points;  // barycentric
  std::vector<double> weights;                // sum to 1, scale by triangle area
};

// 6-point rule of degree 4 (Dunavant), exact for every polynomial integrand that
// appears in the P2-(P1+P0) assembly with per-triangle constant coefficients.
inline const TriangleRule& triangle_rule_order4() {
  static const TriangleRule rule = [] {
    TriangleRule r;
    const double a1 = 0.445948490915965, w1 = 0.223381589678011;
    const double a2 = 0.091576213509771, w2 = 0.109951743655322;
    r.points = {{1 - 2 * a1, a1, a1}, {a1, 1 - 2 * a1, a1}, {a1, a1, 1 - 2 * a1},
                {1 - 2 * a2, a2, a2}, {a2, 1 - 2 * a2, a2}, {a2, a2, 1 - 2 * a2}};
    r.weights = {w1, w1, w1, w2, w2, w2};
    return r;
  }();
  return rule;
}

// Gauss-Legendre on [0,1]
inline const std::array<std::array<double, 2>, 2>& gauss2_unit() {
  static const std::array<std::array<double, 2>, 2> g = {{
      {0.5 - 0.5 / std::sqrt(3.0), 0.5},
      {0.5 + 0.5 / std::sqrt(3.0), 0.5},
  }};
  return g;
}

inline const std::array<std::array<double, 2>, 3>& gauss3_unit() {
  static const std::array<std::array<double, 2>, 3> g = {{
      {0.5 - 0.5 * std::sqrt(0.6), 5.0 / 18.0},
      {0.5, 8.0 / 18.0},
      {0.5 + 0.5 * std::sqrt(0.6), 5.0 / 18.0},
  }};
  return g;
}

// One quadrature node of an interface sub-segment.
struct CutNode {
  Vec2 point;          // global coordinates
  double weight = 0;   // includes sub-segment length
  double seg_param=0;  // parameter on the full interface segment, in [0,1]
  int triangle = -1;   // owning bulk triangle
  std::array<double, 3> bary{};
};

// Per interface segment: sub-segments obtained by splitting at bulk grid crossings,
// each carrying a 2-point Gauss rule (exact for cubics along the segment).
struct CutQuadrature {
  std::vector<std::vector<CutNode>> segment_nodes;  // indexed by interface segment
};

inline CutQuadrature build_cut_quadrature(const BulkMesh& mesh, const InterfacePolygon& poly) {
  require_interface_inside(mesh, poly);
  CutQuadrature quad;
  quad.segment_nodes.resize(poly.size());
  const Rect& o = mesh.domain().outer;
  const double hx = mesh.hx(), hy = mesh.hy();

  for (int j = 0; j < poly.size(); ++j) {
    const Vec2 a = poly.vertex(j), b = poly.vertex((j + 1) % poly.size());
    const Vec2 d = b - a;
    const double len = d.norm();

    std::vector<double> cuts{0.0, 1.0};
    auto add_family = [&](double fa, double fb) {
      // crossings of fa*x + fb*y = const grid lines: values at the endpoints
      const double va = fa * (a.x() - o.x0) / hx + fb * (a.y() - o.y0) / hy;
      const double vb = fa * (b.x() - o.x0) / hx + fb * (b.y() - o.y0) / hy;
      const double lo = std::min(va, vb), hi = std::max(va, vb);
      for (long k = static_cast<long>(std::ceil(lo)); k <= static_cast<long>(std::floor(hi)); ++k) {
        if (std::abs(vb - va) < 1e-15) continue;
        const double t = (static_cast<double>(k) - va) / (vb - va);
        if (t > 1e-12 && t < 1.0 - 1e-12) cuts.push_back(t);
      }
    };
    add_family(1, 0);   // vertical grid lines
    add_family(0, 1);   // horizontal grid lines
    add_family(1, -1);  // cell diagonals
    add_family(1, 1);   // flipped corner-cell diagonals (extra splits elsewhere are exact)
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end(), [](double u, double v) { return v - u < 1e-12; }),
               cuts.end());
    if (cuts.back() < 1.0 - 1e-12) cuts.push_back(1.0);

    double total = 0;
    for (size_t s = 0; s + 1 < cuts.size(); ++s) {
      const double t0 = cuts[s], t1 = cuts[s + 1];
      const double sub_len = (t1 - t0) * len;
      if (sub_len < 1e-14 * len) continue;
      total += sub_len;
      const Vec2 mid = a + 0.5 * (t0 + t1) * d;
      const PointLocation owner = mesh.locate(mid);
      for (const auto& g : gauss2_unit()) {
        CutNode node;
        node.seg_param = t0 + g[0] * (t1 - t0);
        node.point = a + node.seg_param * d;
        node.weight = g[1] * sub_len;
        node.triangle = owner.triangle;
        node.bary = mesh.barycentric(owner.triangle, node.point);
        quad.segment_nodes[j].push_back(node);
      }
    }
    if (std::abs(total - len) > 1e-13 * std::max(1.0, len))
      throw GeometryError("cut quadrature: sub-segment lengths do not sum to the segment length");
  }
  return quad;
}

}  // namespace stokeslm

#endif
