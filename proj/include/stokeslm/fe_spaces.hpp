#ifndef STOKESLM_FE_SPACES_HPP
#define STOKESLM_FE_SPACES_HPP

#include "stokeslm/bulk_mesh.hpp"

#include <functional>
#include <utility>
#include <vector>

namespace stokeslm {

using VectorFunction = std::function<Vec2(const Vec2&, double)>;

// Dirichlet data on the whole outer boundary (and hole boundary when present).
struct BoundaryData {
  VectorFunction value;  // empty means homogeneous
  bool homogeneous() const { return !value; }
};

// P2 vector velocity space: scalar nodes at mesh vertices and edge midpoints, two
// DOFs per node, boundary nodes constrained componentwise.
class VelocitySpace {
public:
  VelocitySpace(const BulkMesh& mesh, BoundaryData bc) : mesh_(&mesh), bc_(std::move(bc)) {
    const int nv = mesh.n_vertices(), ne = mesh.n_edges();
    n_nodes_ = nv + ne;
    node_coords_.resize(n_nodes_);
    node_on_boundary_.assign(n_nodes_, false);
    for (int v = 0; v < nv; ++v) {
      node_coords_[v] = mesh.vertices()[v];
      node_on_boundary_[v] = mesh.boundary_vertex()[v];
    }
    for (int e = 0; e < ne; ++e) {
      const auto& ed = mesh.edges()[e];
      node_coords_[nv + e] = 0.5 * (mesh.vertices()[ed[0]] + mesh.vertices()[ed[1]]);
      node_on_boundary_[nv + e] = mesh.boundary_edge()[e];
    }
    full_to_free_.assign(2 * n_nodes_, -1);
    for (int n = 0; n < n_nodes_; ++n) {
      if (node_on_boundary_[n]) continue;
      for (int c = 0; c < 2; ++c) {
        full_to_free_[2 * n + c] = static_cast<int>(free_to_full_.size());
        free_to_full_.push_back(2 * n + c);
      }
    }
  }

  const BulkMesh& mesh() const { return *mesh_; }
  int n_nodes() const { return n_nodes_; }
  int n_dofs() const { return 2 * n_nodes_; }
  int n_free() const { return static_cast<int>(free_to_full_.size()); }
  const std::vector<Vec2>& node_coords() const { return node_coords_; }
  bool node_on_boundary(int n) const { return node_on_boundary_[n]; }
  const std::vector<int>& free_to_full() const { return free_to_full_; }
  int full_to_free(int dof) const { return full_to_free_[dof]; }
  const BoundaryData& boundary_data() const { return bc_; }

  // scalar node ids of a triangle: 3 vertices then 3 edge midpoints in local edge
  // order (0,1), (1,2), (2,0)
  std::array<int, 6> element_nodes(int t) const {
    const auto& tri = mesh_->triangles()[t];
    const auto& te = mesh_->triangle_edges()[t];
    return {tri[0], tri[1], tri[2], mesh_->n_vertices() + te[0], mesh_->n_vertices() + te[1],
            mesh_->n_vertices() + te[2]};
  }

  // nodal interpolation I_2^h of a smooth vector function
  Vector interpolate(const VectorFunction& f, double t) const {
    Vector out(n_dofs());
    for (int n = 0; n < n_nodes_; ++n) {
      const Vec2 v = f(node_coords_[n], t);
      if (!std::isfinite(v.x()) || !std::isfinite(v.y()))
        throw ConfigError("interpolation target not evaluable at a mesh node");
      out[2 * n] = v.x();
      out[2 * n + 1] = v.y();
    }
    return out;
  }

  // full-length vector with boundary nodes set to the interpolated Dirichlet data
  Vector boundary_values(double t) const {
    Vector out = Vector::Zero(n_dofs());
    if (bc_.homogeneous()) return out;
    for (int n = 0; n < n_nodes_; ++n) {
      if (!node_on_boundary_[n]) continue;
      const Vec2 v = bc_.value(node_coords_[n], t);
      out[2 * n] = v.x();
      out[2 * n + 1] = v.y();
    }
    return out;
  }

  // overwrite constrained entries of a full-length vector with boundary data
  void apply_boundary_values(Vector& u, double t) const {
    for (int n = 0; n < n_nodes_; ++n) {
      if (!node_on_boundary_[n]) continue;
      Vec2 v(0, 0);
      if (!bc_.homogeneous()) v = bc_.value(node_coords_[n], t);
      u[2 * n] = v.x();
      u[2 * n + 1] = v.y();
    }
  }

  static void shape_values(const std::array<double, 3>& l, std::array<double, 6>& phi) {
    phi[0] = l[0] * (2 * l[0] - 1);
    phi[1] = l[1] * (2 * l[1] - 1);
    phi[2] = l[2] * (2 * l[2] - 1);
    phi[3] = 4 * l[0] * l[1];
    phi[4] = 4 * l[1] * l[2];
    phi[5] = 4 * l[2] * l[0];
  }

  // gradients from barycentric gradients (constant per triangle)
  static void shape_gradients(const std::array<double, 3>& l, const std::array<Vec2, 3>& gl,
                              std::array<Vec2, 6>& grad) {
    grad[0] = (4 * l[0] - 1) * gl[0];
    grad[1] = (4 * l[1] - 1) * gl[1];
    grad[2] = (4 * l[2] - 1) * gl[2];
    grad[3] = 4.0 * (l[1] * gl[0] + l[0] * gl[1]);
    grad[4] = 4.0 * (l[2] * gl[1] + l[1] * gl[2]);
    grad[5] = 4.0 * (l[0] * gl[2] + l[2] * gl[0]);
  }

  // evaluate a P2 vector field at a located point
  Vec2 evaluate(const Vector& u, int triangle, const std::array<double, 3>& bary) const {
    std::array<double, 6> phi;
    shape_values(bary, phi);
    const auto nodes = element_nodes(triangle);
    Vec2 v(0, 0);
    for (int i = 0; i < 6; ++i) {
      v.x() += phi[i] * u[2 * nodes[i]];
      v.y() += phi[i] * u[2 * nodes[i] + 1];
    }
    return v;
  }

private:
  const BulkMesh* mesh_;
  BoundaryData bc_;
  int n_nodes_ = 0;
  std::vector<Vec2> node_coords_;
  std::vector<bool> node_on_boundary_;
  std::vector<int> full_to_free_, free_to_full_;
};

// (P1 + P0) pressure space. Basis: all vertex hats plus one indicator per triangle,
// with the lowest-numbered triangle's indicator dropped (the span is unchanged by the
// partition of unity). The zero-mean condition is enforced at solve time by one extra
// scalar equation, not by basis elimination.
class PressureSpace {
public:
  explicit PressureSpace(const BulkMesh& mesh) : mesh_(&mesh) {
    if (mesh.n_triangles() == 0) throw ConfigError("pressure space needs a non-empty mesh");
    check_connected(mesh);
    n_vertex_ = mesh.n_vertices();
    n_tri_dofs_ = mesh.n_triangles() - 1;
    mean_ = Vector::Zero(dim());
    for (int t = 0; t < mesh.n_triangles(); ++t) {
      const double area = mesh.triangle_area(t);
      for (int v : mesh.triangles()[t]) mean_[v] += area / 3.0;
      if (t > 0) mean_[n_vertex_ + t - 1] += area;
    }
  }

  const BulkMesh& mesh() const { return *mesh_; }
  int dim() const { return n_vertex_ + n_tri_dofs_; }
  int vertex_dof(int v) const { return v; }
  // dropped indicator: triangle 0; valid for t >= 1
  int triangle_dof(int t) const { return t >= 1 ? n_vertex_ + t - 1 : -1; }
  // integrals of the basis functions (the zero-mean constraint row)
  const Vector& mean_integrals() const { return mean_; }

  // evaluate a pressure coefficient vector at a located point
  double evaluate(const Vector& p, int triangle, const std::array<double, 3>& bary) const {
    const auto& tri = mesh_->triangles()[triangle];
    double v = 0;
    for (int i = 0; i < 3; ++i) v += bary[i] * p[tri[i]];
    if (triangle >= 1) v += p[n_vertex_ + triangle - 1];
    return v;
  }

private:
  static void check_connected(const BulkMesh& mesh) {
    // flood fill over shared edges
    std::vector<std::array<int, 2>> edge_tris(mesh.n_edges(), {-1, -1});
    for (int t = 0; t < mesh.n_triangles(); ++t)
      for (int e : mesh.triangle_edges()[t]) {
        if (edge_tris[e][0] < 0)
          edge_tris[e][0] = t;
        else
          edge_tris[e][1] = t;
      }
    std::vector<bool> seen(mesh.n_triangles(), false);
    std::vector<int> stack{0};
    seen[0] = true;
    int count = 0;
    while (!stack.empty()) {
      const int t = stack.back();
      stack.pop_back();
      ++count;
      for (int e : mesh.triangle_edges()[t])
        for (int s : edge_tris[e])
          if (s >= 0 && !seen[s]) {
            seen[s] = true;
            stack.push_back(s);
          }
    }
    if (count != mesh.n_triangles()) throw ConfigError("pressure space requires a connected mesh");
  }

  const BulkMesh* mesh_;
  int n_vertex_ = 0, n_tri_dofs_ = 0;
  Vector mean_;
};

}  // namespace stokeslm

#endif
