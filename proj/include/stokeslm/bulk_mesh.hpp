#ifndef STOKESLM_BULK_MESH_HPP
#define STOKESLM_BULK_MESH_HPP

#include "stokeslm/interface_geometry.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <vector>

namespace stokeslm {

struct DomainSpec {
  Rect outer{0, 0, 1, 1};
  std::optional<Rect> hole;
};

enum class Region : int { minus = 0, plus = 1, cut = 2 };
using ElementClassification = std::vector<Region>;

struct PointLocation {
  int triangle = -1;
  std::array<double, 3> bary{};
};

// Fixed conforming triangulation of a rectangle, optionally with a grid-aligned
// rectangular hole. Every grid cell is split along the (i,j)->(i+1,j+1) diagonal,
// which keeps runs bit-reproducible. Vertex numbering is row-major over the grid
// with unused (hole interior) vertices compacted away.
class BulkMesh {
public:
  static BulkMesh build_structured(const DomainSpec& domain, double h) {
    BulkMesh m;
    m.domain_ = domain;
    const Rect& o = domain.outer;
    const double rx = o.width() / h, ry = o.height() / h;
    m.nx_ = static_cast<int>(std::lround(rx));
    m.ny_ = static_cast<int>(std::lround(ry));
    if (m.nx_ < 1 || m.ny_ < 1 || std::abs(rx - m.nx_) > 0.01 * rx || std::abs(ry - m.ny_) > 0.01 * ry)
      throw ConfigError("mesh size h must divide the rectangle edges within 1%");
    m.hx_ = o.width() / m.nx_;
    m.hy_ = o.height() / m.ny_;
    m.h_ = std::max(m.hx_, m.hy_);

    int hi0 = 0, hj0 = 0, hi1 = 0, hj1 = 0;
    if (domain.hole) {
      const Rect& hle = *domain.hole;
      auto snap = [](double v, double origin, double step, const char* what) {
        const double u = (v - origin) / step;
        const long i = std::lround(u);
        if (std::abs(u - i) > 1e-9) throw ConfigError(std::string("hole edge not grid-aligned: ") + what);
        return static_cast<int>(i);
      };
      hi0 = snap(hle.x0, o.x0, m.hx_, "x0");
      hi1 = snap(hle.x1, o.x0, m.hx_, "x1");
      hj0 = snap(hle.y0, o.y0, m.hy_, "y0");
      hj1 = snap(hle.y1, o.y0, m.hy_, "y1");
      if (hi0 >= hi1 || hj0 >= hj1 || hi0 < 0 || hj0 < 0 || hi1 > m.nx_ || hj1 > m.ny_)
        throw ConfigError("hole rectangle does not fit inside the domain");
    }
    auto cell_in_hole = [&](int i, int j) {
      return domain.hole && i >= hi0 && i < hi1 && j >= hj0 && j < hj1;
    };

    // row-major grid vertices, compacting the ones used by no kept cell
    std::vector<int> vid((m.nx_ + 1) * (m.ny_ + 1), -1);
    auto gid = [&](int i, int j) { return j * (m.nx_ + 1) + i; };
    for (int j = 0; j <= m.ny_; ++j)
      for (int i = 0; i <= m.nx_; ++i) {
        bool used = false;
        for (int dj = -1; dj <= 0 && !used; ++dj)
          for (int di = -1; di <= 0 && !used; ++di) {
            const int ci = i + di, cj = j + dj;
            if (ci >= 0 && ci < m.nx_ && cj >= 0 && cj < m.ny_ && !cell_in_hole(ci, cj)) used = true;
          }
        if (used) {
          vid[gid(i, j)] = static_cast<int>(m.vertices_.size());
          m.vertices_.emplace_back(o.x0 + i * m.hx_, o.y0 + j * m.hy_);
        }
      }

    m.cell_tri_.assign(m.nx_ * m.ny_, {-1, -1});
    for (int j = 0; j < m.ny_; ++j)
      for (int i = 0; i < m.nx_; ++i) {
        if (cell_in_hole(i, j)) continue;
        const int v00 = vid[gid(i, j)], v10 = vid[gid(i + 1, j)];
        const int v11 = vid[gid(i + 1, j + 1)], v01 = vid[gid(i, j + 1)];
        // The split direction is fixed except in the two outer corner cells the main
        // diagonal does not reach. There the single-diagonal split would give the
        // corner triangle two boundary edges, which produces an exact spurious
        // pressure mode of the P2-(P1+P0) pair under full Dirichlet conditions.
        const bool flip = (i == 0 && j == m.ny_ - 1) || (i == m.nx_ - 1 && j == 0);
        m.cell_tri_[j * m.nx_ + i][0] = static_cast<int>(m.triangles_.size());
        m.cell_tri_[j * m.nx_ + i][1] = static_cast<int>(m.triangles_.size()) + 1;
        if (flip) {
          m.triangles_.push_back({v00, v10, v01});
          m.triangles_.push_back({v10, v11, v01});
        } else {
          m.triangles_.push_back({v00, v10, v11});
          m.triangles_.push_back({v00, v11, v01});
        }
      }

    m.build_edges();
    m.build_boundary_flags();
    return m;
  }

  int n_vertices() const { return static_cast<int>(vertices_.size()); }
  int n_triangles() const { return static_cast<int>(triangles_.size()); }
  int n_edges() const { return static_cast<int>(edges_.size()); }
  const std::vector<Vec2>& vertices() const { return vertices_; }
  const std::vector<std::array<int, 3>>& triangles() const { return triangles_; }
  const std::vector<std::array<int, 2>>& edges() const { return edges_; }
  // per-triangle edge ids, ordered as vertex pairs (0,1), (1,2), (2,0)
  const std::vector<std::array<int, 3>>& triangle_edges() const { return tri_edges_; }
  const std::vector<bool>& boundary_vertex() const { return boundary_vertex_; }
  const std::vector<bool>& boundary_edge() const { return boundary_edge_; }
  const std::vector<bool>& hole_boundary_edge() const { return hole_boundary_edge_; }
  const DomainSpec& domain() const { return domain_; }
  double h() const { return h_; }
  double hx() const { return hx_; }
  double hy() const { return hy_; }
  int nx() const { return nx_; }
  int ny() const { return ny_; }

  double triangle_area(int t) const {
    const auto& tri = triangles_[t];
    const Vec2 a = vertices_[tri[0]], b = vertices_[tri[1]], c = vertices_[tri[2]];
    return 0.5 * ((b - a).x() * (c - a).y() - (b - a).y() * (c - a).x());
  }

  Vec2 centroid(int t) const {
    const auto& tri = triangles_[t];
    return (vertices_[tri[0]] + vertices_[tri[1]] + vertices_[tri[2]]) / 3.0;
  }

  double domain_area() const {
    double a = domain_.outer.area();
    if (domain_.hole) a -= domain_.hole->area();
    return a;
  }

  // triangles of the up-to-4 cells around a point (tolerant near grid lines)
  std::vector<int> candidate_triangles(const Vec2& p, double pad = 1e-9) const {
    std::vector<int> out;
    const int i0 = cell_index_x(p.x() - pad * hx_), i1 = cell_index_x(p.x() + pad * hx_);
    const int j0 = cell_index_y(p.y() - pad * hy_), j1 = cell_index_y(p.y() + pad * hy_);
    for (int j = j0; j <= j1; ++j)
      for (int i = i0; i <= i1; ++i)
        if (i >= 0 && i < nx_ && j >= 0 && j < ny_)
          for (int t : cell_tri_[j * nx_ + i])
            if (t >= 0) out.push_back(t);
    return out;
  }

  // triangles in the grid-cell range covered by a bounding box
  std::vector<int> triangles_in_box(const Vec2& lo, const Vec2& hi) const {
    std::vector<int> out;
    const int i0 = std::max(0, cell_index_x(lo.x())), i1 = std::min(nx_ - 1, cell_index_x(hi.x()));
    const int j0 = std::max(0, cell_index_y(lo.y())), j1 = std::min(ny_ - 1, cell_index_y(hi.y()));
    for (int j = j0; j <= j1; ++j)
      for (int i = i0; i <= i1; ++i)
        for (int t : cell_tri_[j * nx_ + i])
          if (t >= 0) out.push_back(t);
    return out;
  }

  std::array<double, 3> barycentric(int t, const Vec2& p) const {
    const auto& tri = triangles_[t];
    const Vec2 a = vertices_[tri[0]], b = vertices_[tri[1]], c = vertices_[tri[2]];
    const double det = (b - a).x() * (c - a).y() - (b - a).y() * (c - a).x();
    const double l1 = ((p - a).x() * (c - a).y() - (p - a).y() * (c - a).x()) / det;
    const double l2 = ((b - a).x() * (p - a).y() - (b - a).y() * (p - a).x()) / det;
    return {1.0 - l1 - l2, l1, l2};
  }

  // Grid-accelerated point location. Barycentric coordinates are accepted in
  // [-1e-12, 1+1e-12] and renormalized.
  PointLocation locate(const Vec2& p) const {
    constexpr double tol = 1e-12;
    PointLocation best;
    double best_violation = std::numeric_limits<double>::infinity();
    for (int t : candidate_triangles(p)) {
      const auto bc = barycentric(t, p);
      const double violation = -std::min({bc[0], bc[1], bc[2]});
      if (violation < best_violation) {
        best_violation = violation;
        best = {t, bc};
      }
    }
    if (best.triangle < 0 || best_violation > tol)
      throw GeometryError("locate_point: point outside the domain (or inside the hole)");
    double sum = 0;
    for (double& l : best.bary) {
      l = std::max(l, 0.0);
      sum += l;
    }
    for (double& l : best.bary) l /= sum;
    return best;
  }

private:
  void build_edges() {
    std::map<std::pair<int, int>, int> edge_id;
    tri_edges_.resize(triangles_.size());
    for (size_t t = 0; t < triangles_.size(); ++t) {
      const auto& tri = triangles_[t];
      for (int e = 0; e < 3; ++e) {
        const int a = tri[e], b = tri[(e + 1) % 3];
        const auto key = std::minmax(a, b);
        auto it = edge_id.find(key);
        if (it == edge_id.end()) {
          it = edge_id.emplace(key, static_cast<int>(edges_.size())).first;
          edges_.push_back({key.first, key.second});
        }
        tri_edges_[t][e] = it->second;
      }
    }
    edge_tri_count_.assign(edges_.size(), 0);
    for (const auto& te : tri_edges_)
      for (int e : te) ++edge_tri_count_[e];
  }

  void build_boundary_flags() {
    boundary_edge_.assign(edges_.size(), false);
    hole_boundary_edge_.assign(edges_.size(), false);
    boundary_vertex_.assign(vertices_.size(), false);
    for (size_t e = 0; e < edges_.size(); ++e) {
      if (edge_tri_count_[e] != 1) continue;
      boundary_edge_[e] = true;
      boundary_vertex_[edges_[e][0]] = true;
      boundary_vertex_[edges_[e][1]] = true;
      if (domain_.hole) {
        const Vec2 mid = 0.5 * (vertices_[edges_[e][0]] + vertices_[edges_[e][1]]);
        const Rect& hl = *domain_.hole;
        const double tol = 1e-9 * h_;
        const bool on_hole = (std::abs(mid.x() - hl.x0) < tol || std::abs(mid.x() - hl.x1) < tol ||
                              std::abs(mid.y() - hl.y0) < tol || std::abs(mid.y() - hl.y1) < tol) &&
                             mid.x() > hl.x0 - tol && mid.x() < hl.x1 + tol && mid.y() > hl.y0 - tol &&
                             mid.y() < hl.y1 + tol;
        hole_boundary_edge_[e] = on_hole;
      }
    }
  }

  int cell_index_x(double x) const {
    return static_cast<int>(std::floor((x - domain_.outer.x0) / hx_));
  }
  int cell_index_y(double y) const {
    return static_cast<int>(std::floor((y - domain_.outer.y0) / hy_));
  }

  DomainSpec domain_;
  int nx_ = 0, ny_ = 0;
  double hx_ = 0, hy_ = 0, h_ = 0;
  std::vector<Vec2> vertices_;
  std::vector<std::array<int, 3>> triangles_;
  std::vector<std::array<int, 2>> edges_;
  std::vector<std::array<int, 3>> tri_edges_;
  std::vector<int> edge_tri_count_;
  std::vector<std::array<int, 2>> cell_tri_;
  std::vector<bool> boundary_vertex_, boundary_edge_, hole_boundary_edge_;
};

namespace detail {

inline bool segment_intersects_triangle(const Vec2& p, const Vec2& q, const Vec2& a, const Vec2& b,
                                        const Vec2& c, double tol) {
  auto side = [&](const Vec2& x) {
    const double det = (b - a).x() * (c - a).y() - (b - a).y() * (c - a).x();
    const double l1 = ((x - a).x() * (c - a).y() - (x - a).y() * (c - a).x()) / det;
    const double l2 = ((b - a).x() * (x - a).y() - (b - a).y() * (x - a).x()) / det;
    return std::min({1.0 - l1 - l2, l1, l2});
  };
  // endpoint in the closed triangle (tolerant: vertex-on-edge promotes to cut)
  if (side(p) >= -tol || side(q) >= -tol) return true;
  auto seg_cross = [](const Vec2& s1, const Vec2& e1, const Vec2& s2, const Vec2& e2) {
    auto cr = [](const Vec2& u, const Vec2& v) { return u.x() * v.y() - u.y() * v.x(); };
    const double d1 = cr(e1 - s1, s2 - s1), d2 = cr(e1 - s1, e2 - s1);
    const double d3 = cr(e2 - s2, s1 - s2), d4 = cr(e2 - s2, e1 - s2);
    return ((d1 >= 0) != (d2 > 0)) && ((d3 >= 0) != (d4 > 0));
  };
  return seg_cross(p, q, a, b) || seg_cross(p, q, b, c) || seg_cross(p, q, c, a);
}

}  // namespace detail

// Requires the interface to lie strictly inside the domain (away from the outer
// boundary and from the hole).
inline void require_interface_inside(const BulkMesh& mesh, const InterfacePolygon& poly) {
  const Rect& o = mesh.domain().outer;
  const double margin = 1e-12 * mesh.h();
  for (int k = 0; k < poly.size(); ++k) {
    const Vec2& v = poly.vertex(k);
    if (v.x() <= o.x0 + margin || v.x() >= o.x1 - margin || v.y() <= o.y0 + margin || v.y() >= o.y1 - margin)
      throw ConfigError("interface touches the outer domain boundary");
    if (mesh.domain().hole && mesh.domain().hole->contains(v))
      throw ConfigError("interface vertex lies inside the domain hole");
  }
}

// Triangles intersected by any interface segment are labeled cut; the rest are labeled
// by the side of their centroid. Geometric tie-breaks promote to cut.
inline ElementClassification classify_elements(const BulkMesh& mesh, const InterfacePolygon& poly) {
  require_interface_inside(mesh, poly);
  ElementClassification cls(mesh.n_triangles(), Region::plus);
  std::vector<bool> is_cut(mesh.n_triangles(), false);
  const double tol = 1e-12;
  for (int j = 0; j < poly.size(); ++j) {
    const Vec2 p = poly.vertex(j), q = poly.vertex((j + 1) % poly.size());
    const Vec2 lo = p.cwiseMin(q) - Vec2(tol, tol), hi = p.cwiseMax(q) + Vec2(tol, tol);
    for (int t : mesh.triangles_in_box(lo, hi)) {
      if (is_cut[t]) continue;
      const auto& tri = mesh.triangles()[t];
      if (detail::segment_intersects_triangle(p, q, mesh.vertices()[tri[0]], mesh.vertices()[tri[1]],
                                              mesh.vertices()[tri[2]], tol))
        is_cut[t] = true;
    }
  }
  for (int t = 0; t < mesh.n_triangles(); ++t) {
    if (is_cut[t]) {
      cls[t] = Region::cut;
    } else {
      cls[t] = point_in_interface(poly, mesh.centroid(t)) ? Region::minus : Region::plus;
    }
  }
  return cls;
}

// Piecewise-constant material coefficient: c_- inside, c_+ outside, average on cut cells.
inline std::vector<double> coefficient_field(const ElementClassification& cls, double c_minus, double c_plus) {
  std::vector<double> out(cls.size());
  for (size_t t = 0; t < cls.size(); ++t) {
    switch (cls[t]) {
      case Region::minus: out[t] = c_minus; break;
      case Region::plus: out[t] = c_plus; break;
      case Region::cut: out[t] = 0.5 * (c_minus + c_plus); break;
    }
  }
  return out;
}

// Legacy-VTK ASCII export with per-cell arrays.
inline void write_vtk(const std::string& path, const BulkMesh& mesh, const ElementClassification* cls = nullptr,
                      const std::vector<double>* coeff = nullptr, const char* coeff_name = "coefficient") {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open VTK output file: " + path);
  out << "# vtk DataFile Version 3.0\nstokeslm bulk mesh\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  out << "POINTS " << mesh.n_vertices() << " double\n";
  char buf[96];
  for (const Vec2& v : mesh.vertices()) {
    std::snprintf(buf, sizeof buf, "%.17g %.17g 0\n", v.x(), v.y());
    out << buf;
  }
  out << "CELLS " << mesh.n_triangles() << " " << 4 * mesh.n_triangles() << "\n";
  for (const auto& t : mesh.triangles()) out << "3 " << t[0] << " " << t[1] << " " << t[2] << "\n";
  out << "CELL_TYPES " << mesh.n_triangles() << "\n";
  for (int t = 0; t < mesh.n_triangles(); ++t) out << "5\n";
  if (cls || coeff) out << "CELL_DATA " << mesh.n_triangles() << "\n";
  if (cls) {
    out << "SCALARS classification int 1\nLOOKUP_TABLE default\n";
    for (Region r : *cls) out << static_cast<int>(r) << "\n";
  }
  if (coeff) {
    out << "SCALARS " << coeff_name << " double 1\nLOOKUP_TABLE default\n";
    for (double c : *coeff) {
      std::snprintf(buf, sizeof buf, "%.17g\n", c);
      out << buf;
    }
  }
}

}  // namespace stokeslm

#endif
