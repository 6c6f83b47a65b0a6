#ifndef STOKESLM_INTERFACE_GEOMETRY_HPP
#define STOKESLM_INTERFACE_GEOMETRY_HPP

#include "stokeslm/common.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <utility>
#include <vector>

namespace stokeslm {

// Axis-aligned rectangle, used for domains and holes.
struct Rect {
  double x0 = 0, y0 = 0, x1 = 1, y1 = 1;
  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  double area() const { return width() * height(); }
  Vec2 center() const { return Vec2(0.5 * (x0 + x1), 0.5 * (y0 + y1)); }
  bool contains(const Vec2& p) const { return p.x() > x0 && p.x() < x1 && p.y() > y0 && p.y() < y1; }
};

enum class Orientation {
  normalize,    // clockwise input is reversed with a warning
  require_ccw,  // clockwise input is a geometry error (evolution path: vertex order is identity)
};

// Closed oriented polygonal curve. Vertices are stored counter-clockwise; segment j
// connects vertex j to vertex j+1 (mod K). Segment normals point away from the
// enclosed region (into the outer phase).
class InterfacePolygon {
public:
  explicit InterfacePolygon(std::vector<Vec2> vertices, Orientation orient = Orientation::normalize)
      : verts_(std::move(vertices)) {
    const int k = static_cast<int>(verts_.size());
    if (k < 3) throw GeometryError("interface polygon needs at least 3 vertices");
    if (signed_area(verts_) < 0) {
      if (orient == Orientation::require_ccw)
        throw GeometryError("interface polygon lost counter-clockwise orientation");
      std::cerr << "[stokeslm] warning: clockwise interface input reversed to counter-clockwise\n";
      std::reverse(verts_.begin(), verts_.end());
    }
    lengths_.resize(k);
    normals_.resize(k);
    for (int j = 0; j < k; ++j) {
      const Vec2 d = verts_[(j + 1) % k] - verts_[j];
      const double len = d.norm();
      if (!(len > 0)) throw GeometryError("degenerate interface segment of zero length");
      lengths_[j] = len;
      // outward normal = tangent rotated by -90 degrees
      normals_[j] = Vec2(d.y() / len, -d.x() / len);
    }
    check_simple();
  }

  int size() const { return static_cast<int>(verts_.size()); }
  const std::vector<Vec2>& vertices() const { return verts_; }
  const Vec2& vertex(int k) const { return verts_[k]; }
  const Vec2& segment_normal(int j) const { return normals_[j]; }
  double segment_length(int j) const { return lengths_[j]; }

  double perimeter() const {
    double s = 0;
    for (double l : lengths_) s += l;
    return s;
  }

  // Vertex positions as an interleaved vector field (the identity map on the polygon).
  VectorField positions() const {
    VectorField x(2 * size());
    for (int k = 0; k < size(); ++k) set_vertex(x, k, verts_[k]);
    return x;
  }

  // Polygon with the same connectivity and new vertex positions. Evolution must not
  // flip orientation, so this path requires counter-clockwise order.
  InterfacePolygon with_positions(const VectorField& x) const {
    std::vector<Vec2> v(size());
    for (int k = 0; k < size(); ++k) v[k] = at_vertex(x, k);
    return InterfacePolygon(std::move(v), Orientation::require_ccw);
  }

  static double signed_area(const std::vector<Vec2>& v) {
    double a = 0;
    const int k = static_cast<int>(v.size());
    for (int j = 0; j < k; ++j) {
      const Vec2& p = v[j];
      const Vec2& q = v[(j + 1) % k];
      a += p.x() * q.y() - q.x() * p.y();
    }
    return 0.5 * a;
  }

private:
  void check_simple() const {
    const int k = size();
    for (int i = 0; i < k; ++i) {
      for (int j = i + 1; j < k; ++j) {
        if (j == i || (j + 1) % k == i || (i + 1) % k == j) continue;  // adjacent share a vertex
        if (segments_intersect(verts_[i], verts_[(i + 1) % k], verts_[j], verts_[(j + 1) % k]))
          throw GeometryError("interface polygon self-intersects");
      }
    }
  }

  static bool segments_intersect(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
    auto cross = [](const Vec2& u, const Vec2& v) { return u.x() * v.y() - u.y() * v.x(); };
    const double d1 = cross(b - a, c - a);
    const double d2 = cross(b - a, d - a);
    const double d3 = cross(d - c, a - c);
    const double d4 = cross(d - c, b - c);
    return ((d1 > 0) != (d2 > 0)) && ((d3 > 0) != (d4 > 0));
  }

  std::vector<Vec2> verts_;
  std::vector<double> lengths_;
  std::vector<Vec2> normals_;
};

inline std::vector<Vec2> segment_normals(const InterfacePolygon& poly) {
  std::vector<Vec2> n(poly.size());
  for (int j = 0; j < poly.size(); ++j) n[j] = poly.segment_normal(j);
  return n;
}

// Lumped normal at vertex k: sum of the adjacent half-segment normal contributions,
// (|s_{k-1}|/2) nu_{k-1} + (|s_k|/2) nu_k.
inline std::vector<Vec2> lumped_normals(const InterfacePolygon& poly) {
  const int k = poly.size();
  std::vector<Vec2> n(k);
  for (int j = 0; j < k; ++j) {
    const int jm = (j + k - 1) % k;
    n[j] = 0.5 * poly.segment_length(jm) * poly.segment_normal(jm) +
           0.5 * poly.segment_length(j) * poly.segment_normal(j);
  }
  return n;
}

namespace detail {
inline bool winding_inside(const std::vector<Vec2>& v, const Vec2& p) {
  // even-odd crossing test
  bool inside = false;
  const int k = static_cast<int>(v.size());
  for (int i = 0, j = k - 1; i < k; j = i++) {
    const bool straddles = (v[i].y() > p.y()) != (v[j].y() > p.y());
    if (straddles) {
      const double xc = v[j].x() + (p.y() - v[j].y()) / (v[i].y() - v[j].y()) * (v[i].x() - v[j].x());
      if (p.x() < xc) inside = !inside;
    }
  }
  return inside;
}

inline double distance_to_segment(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 d = b - a;
  const double t = std::clamp((p - a).dot(d) / d.squaredNorm(), 0.0, 1.0);
  return (p - (a + t * d)).norm();
}
}  // namespace detail

inline double distance_to_polygon(const InterfacePolygon& poly, const Vec2& p) {
  double dmin = std::numeric_limits<double>::infinity();
  for (int j = 0; j < poly.size(); ++j)
    dmin = std::min(dmin, detail::distance_to_segment(p, poly.vertex(j), poly.vertex((j + 1) % poly.size())));
  return dmin;
}

enum class Side { inside, outside, on_boundary };

// Point classification against the interface. Points within 1e-12 of the curve are
// reported as boundary-ambiguous; the caller decides (element classification treats
// the owning triangles as cut).
inline Side interface_side(const InterfacePolygon& poly, const Vec2& p, double boundary_tol = 1e-12) {
  if (distance_to_polygon(poly, p) <= boundary_tol) return Side::on_boundary;
  return detail::winding_inside(poly.vertices(), p) ? Side::inside : Side::outside;
}

inline bool point_in_interface(const InterfacePolygon& poly, const Vec2& p) {
  return detail::winding_inside(poly.vertices(), p);
}

// Area of the region enclosed by the polygon. If the computational domain has a hole
// and the polygon surrounds it, the hole area is subtracted; a partial overlap of
// interface and hole is a physically invalid configuration.
inline double enclosed_area(const InterfacePolygon& poly, const std::optional<Rect>& hole = std::nullopt) {
  double a = InterfacePolygon::signed_area(poly.vertices());
  if (a < 0) throw GeometryError("enclosed_area: polygon is clockwise");
  if (hole) {
    const bool center_in = point_in_interface(poly, hole->center());
    const Vec2 corners[4] = {Vec2(hole->x0, hole->y0), Vec2(hole->x1, hole->y0), Vec2(hole->x1, hole->y1),
                             Vec2(hole->x0, hole->y1)};
    int inside_count = 0;
    for (const Vec2& c : corners)
      if (point_in_interface(poly, c)) ++inside_count;
    if (center_in) {
      if (inside_count != 4)
        throw GeometryError("interface partially overlaps the domain hole");
      for (int j = 0; j < poly.size(); ++j)
        if (hole->contains(poly.vertex(j)))
          throw GeometryError("interface vertex inside the domain hole");
      a -= hole->area();
    } else if (inside_count != 0) {
      throw GeometryError("interface partially overlaps the domain hole");
    }
  }
  return a;
}

inline double interface_energy(const InterfacePolygon& poly, double gamma) { return gamma * poly.perimeter(); }

// Lumped inner product of two piecewise-linear vertex fields,
// sum_j (|s_j|/2) * sum over the two endpoints of (f g).
inline double lumped_inner(const ScalarField& f, const ScalarField& g, const InterfacePolygon& poly) {
  const int k = poly.size();
  double s = 0;
  for (int j = 0; j < k; ++j) {
    const int a = j, b = (j + 1) % k;
    s += 0.5 * poly.segment_length(j) * (f[a] * g[a] + f[b] * g[b]);
  }
  return s;
}

// Lumped mass entries: M_k = half the sum of the two adjacent segment lengths.
inline Vector lumped_mass(const InterfacePolygon& poly) {
  const int k = poly.size();
  Vector m(k);
  for (int j = 0; j < k; ++j) {
    const int jm = (j + k - 1) % k;
    m[j] = 0.5 * (poly.segment_length(jm) + poly.segment_length(j));
  }
  return m;
}

// Scalar surface stiffness, per segment (1/|s_j|) [[1,-1],[-1,1]]; acts componentwise
// on vector fields. Exact (non-lumped) integration of <grad f, grad g> on the curve.
inline SparseMatrix surface_stiffness(const InterfacePolygon& poly) {
  const int k = poly.size();
  std::vector<Triplet> trips;
  trips.reserve(4 * k);
  for (int j = 0; j < k; ++j) {
    const int a = j, b = (j + 1) % k;
    const double w = 1.0 / poly.segment_length(j);
    trips.emplace_back(a, a, w);
    trips.emplace_back(b, b, w);
    trips.emplace_back(a, b, -w);
    trips.emplace_back(b, a, -w);
  }
  SparseMatrix s(k, k);
  s.setFromTriplets(trips.begin(), trips.end());
  return s;
}

// Apply the scalar stiffness componentwise to an interleaved vector field.
inline VectorField apply_stiffness(const SparseMatrix& s, const VectorField& x) {
  const int k = s.rows();
  Vector cx(k), cy(k);
  for (int i = 0; i < k; ++i) {
    cx[i] = x[2 * i];
    cy[i] = x[2 * i + 1];
  }
  const Vector rx = s * cx, ry = s * cy;
  VectorField out(2 * k);
  for (int i = 0; i < k; ++i) {
    out[2 * i] = rx[i];
    out[2 * i + 1] = ry[i];
  }
  return out;
}

// Vertex curvature from the lumped identity kappa * nu = -stiffness * Id, solved per
// vertex by least squares over the two components.
inline ScalarField discrete_curvature(const InterfacePolygon& poly) {
  const int k = poly.size();
  const SparseMatrix s = surface_stiffness(poly);
  const VectorField sx = apply_stiffness(s, poly.positions());
  const std::vector<Vec2> n = lumped_normals(poly);
  ScalarField kappa(k);
  for (int i = 0; i < k; ++i) {
    const double nn = n[i].squaredNorm();
    const double local = poly.segment_length((i + k - 1) % k) + poly.segment_length(i);
    if (std::sqrt(nn) <= 1e-12 * local)
      throw GeometryError("degenerate vertex: lumped normal vanishes (antiparallel adjacent normals)");
    const Vec2 b = -at_vertex(sx, i);
    kappa[i] = n[i].dot(b) / nn;
  }
  return kappa;
}

struct ShapeGradients {
  VectorField energy;  // representer of X' -> <grad Id, grad X'> : stiffness applied to positions
  VectorField volume;  // representer of X' -> <X', nu>^h       : lumped normals
};

inline ShapeGradients shape_gradients(const InterfacePolygon& poly) {
  ShapeGradients g;
  g.energy = apply_stiffness(surface_stiffness(poly), poly.positions());
  const std::vector<Vec2> n = lumped_normals(poly);
  g.volume.resize(2 * poly.size());
  for (int i = 0; i < poly.size(); ++i) set_vertex(g.volume, i, n[i]);
  return g;
}

inline double equidistribution_ratio(const InterfacePolygon& poly) {
  double lmin = std::numeric_limits<double>::infinity(), lmax = 0;
  for (int j = 0; j < poly.size(); ++j) {
    lmin = std::min(lmin, poly.segment_length(j));
    lmax = std::max(lmax, poly.segment_length(j));
  }
  return lmax / lmin;
}

namespace detail {

inline bool polygon_convex(const std::vector<Vec2>& v, double tol_rel = 1e-12) {
  const int k = static_cast<int>(v.size());
  double scale = 0;
  for (int j = 0; j < k; ++j) scale = std::max(scale, (v[(j + 1) % k] - v[j]).squaredNorm());
  for (int j = 0; j < k; ++j) {
    const Vec2 e1 = v[(j + 1) % k] - v[j];
    const Vec2 e2 = v[(j + 2) % k] - v[(j + 1) % k];
    if (e1.x() * e2.y() - e1.y() * e2.x() < -tol_rel * scale) return false;
  }
  return true;
}

// Sutherland-Hodgman clip of a simple subject polygon against a convex clip polygon.
inline std::vector<Vec2> clip_against_convex(const std::vector<Vec2>& subject, const std::vector<Vec2>& clip) {
  std::vector<Vec2> out = subject;
  const int kc = static_cast<int>(clip.size());
  for (int j = 0; j < kc && !out.empty(); ++j) {
    const Vec2 a = clip[j], b = clip[(j + 1) % kc];
    const Vec2 e = b - a;
    auto inside = [&](const Vec2& p) { return e.x() * (p.y() - a.y()) - e.y() * (p.x() - a.x()) >= 0; };
    auto intersect = [&](const Vec2& p, const Vec2& q) {
      const Vec2 d = q - p;
      const double denom = e.x() * d.y() - e.y() * d.x();
      const double t = (e.x() * (a.y() - p.y()) - e.y() * (a.x() - p.x())) / denom;
      return Vec2(p + t * d);
    };
    std::vector<Vec2> in;
    in.swap(out);
    const int n = static_cast<int>(in.size());
    for (int i = 0; i < n; ++i) {
      const Vec2& cur = in[i];
      const Vec2& prev = in[(i + n - 1) % n];
      const bool ci = inside(cur), pi = inside(prev);
      if (ci) {
        if (!pi) out.push_back(intersect(prev, cur));
        out.push_back(cur);
      } else if (pi) {
        out.push_back(intersect(prev, cur));
      }
    }
  }
  return out;
}

inline double sampled_intersection_area(const std::vector<Vec2>& p1, const std::vector<Vec2>& p2, int res) {
  double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
  for (const Vec2& v : p1) {
    x0 = std::min(x0, v.x());
    x1 = std::max(x1, v.x());
    y0 = std::min(y0, v.y());
    y1 = std::max(y1, v.y());
  }
  const double dx = (x1 - x0) / res, dy = (y1 - y0) / res;
  long hits = 0;
  for (int i = 0; i < res; ++i)
    for (int j = 0; j < res; ++j) {
      const Vec2 p(x0 + (i + 0.5) * dx, y0 + (j + 0.5) * dy);
      if (winding_inside(p1, p) && winding_inside(p2, p)) ++hits;
    }
  return static_cast<double>(hits) * dx * dy;
}

}  // namespace detail

// Manifold distance between two closed curves: area of the symmetric difference of the
// enclosed regions, |O1| + |O2| - 2 |O1 n O2|. The intersection is clipped exactly when
// one polygon is convex; otherwise a dense sampling fallback (1024x1024 over the first
// polygon's bounding box) is used and a warning is emitted.
inline double manifold_distance(const InterfacePolygon& g1, const InterfacePolygon& g2) {
  const double a1 = InterfacePolygon::signed_area(g1.vertices());
  const double a2 = InterfacePolygon::signed_area(g2.vertices());
  double inter = 0;
  if (detail::polygon_convex(g2.vertices())) {
    const std::vector<Vec2> isect = detail::clip_against_convex(g1.vertices(), g2.vertices());
    if (isect.size() >= 3) inter = std::abs(InterfacePolygon::signed_area(isect));
  } else if (detail::polygon_convex(g1.vertices())) {
    const std::vector<Vec2> isect = detail::clip_against_convex(g2.vertices(), g1.vertices());
    if (isect.size() >= 3) inter = std::abs(InterfacePolygon::signed_area(isect));
  } else {
    std::cerr << "[stokeslm] warning: manifold_distance falling back to 1024x1024 sampling "
                 "(neither polygon is convex)\n";
    inter = detail::sampled_intersection_area(g1.vertices(), g2.vertices(), 1024);
  }
  return a1 + a2 - 2.0 * inter;
}

// Center of mass of the enclosed region (hole excluded when surrounded).
inline Vec2 region_centroid(const InterfacePolygon& poly, const std::optional<Rect>& hole = std::nullopt) {
  const std::vector<Vec2>& v = poly.vertices();
  const int k = poly.size();
  double a = 0;
  Vec2 c(0, 0);
  for (int j = 0; j < k; ++j) {
    const Vec2& p = v[j];
    const Vec2& q = v[(j + 1) % k];
    const double w = p.x() * q.y() - q.x() * p.y();
    a += w;
    c += w * (p + q);
  }
  a *= 0.5;
  c /= 6.0;
  if (hole && point_in_interface(poly, hole->center())) {
    const double ah = hole->area();
    c -= ah * hole->center();
    a -= ah;
  }
  return c / a;
}

// Snapshot format: first line "K_GAMMA <K>", then K lines "x y", counter-clockwise,
// 17 significant digits.
inline void write_polygon(const std::string& path, const InterfacePolygon& poly) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open polygon snapshot file for writing: " + path);
  out << "K_GAMMA " << poly.size() << "\n";
  char buf[80];
  for (int k = 0; k < poly.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%.17g %.17g", poly.vertex(k).x(), poly.vertex(k).y());
    out << buf << "\n";
  }
}

inline InterfacePolygon read_polygon(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open polygon snapshot file: " + path);
  std::string tag;
  int k = 0;
  in >> tag >> k;
  if (tag != "K_GAMMA" || k < 3) throw ConfigError("malformed polygon snapshot header in " + path);
  std::vector<Vec2> v(k);
  for (int i = 0; i < k; ++i) in >> v[i].x() >> v[i].y();
  if (!in) throw ConfigError("truncated polygon snapshot: " + path);
  return InterfacePolygon(std::move(v));
}

}  // namespace stokeslm

#endif
