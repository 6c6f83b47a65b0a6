#include <catch2/catch.hpp>

#include "stokeslm/assembly.hpp"

#include <cmath>

using namespace stokeslm;

namespace {

struct BulkSetup {
  BulkMesh mesh;
  VelocitySpace vel;
  PressureSpace pres;
  SparseMatrix A, B;
  Vector mean;

  explicit BulkSetup(const DomainSpec& dom, double h, double mu_const = 1.0)
      : mesh(BulkMesh::build_structured(dom, h)), vel(mesh, BoundaryData{}), pres(mesh) {
    const std::vector<double> mu(mesh.n_triangles(), mu_const);
    assemble_bulk(mesh, mu, vel, pres, A, B, mean);
  }
};

InterfacePolygon circle_polygon(int k, double r, Vec2 c = Vec2(0, 0)) {
  std::vector<Vec2> v(k);
  for (int i = 0; i < k; ++i) {
    const double phi = 2.0 * M_PI * i / k;
    v[i] = c + r * Vec2(std::cos(phi), std::sin(phi));
  }
  return InterfacePolygon(std::move(v));
}

}  // namespace

TEST_CASE("viscous block on the unit square") {
  BulkSetup s({Rect{0, 0, 1, 1}, std::nullopt}, 0.25);

  SECTION("energy of the linear field (x, -y) is 4") {
    const Vector u = s.vel.interpolate([](const Vec2& x, double) { return Vec2(x.x(), -x.y()); }, 0);
    CHECK(u.dot(s.A * u) == Approx(4.0).epsilon(1e-13));
  }

  SECTION("rigid rotation has zero deformation energy") {
    const Vector u = s.vel.interpolate([](const Vec2& x, double) { return Vec2(-x.y(), x.x()); }, 0);
    CHECK(u.dot(s.A * u) < 1e-13);
    const Vector c = s.vel.interpolate([](const Vec2&, double) { return Vec2(0.3, -0.7); }, 0);
    CHECK(c.dot(s.A * c) < 1e-14);
  }

  SECTION("A is symmetric") {
    const SparseMatrix diff = SparseMatrix(s.A.transpose()) - s.A;
    CHECK(diff.coeffs().cwiseAbs().maxCoeff() < 1e-14);
  }

  SECTION("viscosity scales the block linearly") {
    BulkSetup s2({Rect{0, 0, 1, 1}, std::nullopt}, 0.25, 3.5);
    const Vector u = s.vel.interpolate([](const Vec2& x, double) { return Vec2(x.x(), -x.y()); }, 0);
    CHECK(u.dot(s2.A * u) == Approx(3.5 * 4.0).epsilon(1e-13));
  }
}

TEST_CASE("divergence block and mean row") {
  BulkSetup s({Rect{0, 0, 1, 1}, std::nullopt}, 0.25);

  SECTION("constant pressure against a no-flux field vanishes") {
    const Vector u =
        s.vel.interpolate([](const Vec2& x, double) { return Vec2(x.x() * (1 - x.x()), x.y() * (1 - x.y())); }, 0);
    Vector q1 = Vector::Zero(s.pres.dim());
    for (int v = 0; v < s.mesh.n_vertices(); ++v) q1[s.pres.vertex_dof(v)] = 1.0;
    CHECK(std::abs(q1.dot(s.B * u)) < 1e-13);
  }

  SECTION("divergence-free linear field is annihilated by every pressure test") {
    const Vector u = s.vel.interpolate([](const Vec2& x, double) { return Vec2(x.x(), -x.y()); }, 0);
    CHECK((s.B * u).lpNorm<Eigen::Infinity>() < 1e-12);
  }

  SECTION("mean row matches basis integrals") {
    CHECK(s.mean.sum() > 0);
    CHECK(s.mean == s.pres.mean_integrals());
  }
}

TEST_CASE("interface-bulk coupling block") {
  BulkSetup s({Rect{0, 0, 2, 2}, std::nullopt}, 0.25);
  const InterfacePolygon poly = circle_polygon(48, 0.55, Vec2(1.0, 1.0));
  const CutQuadrature quad = build_cut_quadrature(s.mesh, poly);
  const SparseMatrix C = assemble_coupling(poly, quad, s.vel);

  SECTION("divergence-theorem identity: <Id . nu, 1> = 2 area") {
    const Vector uid = s.vel.interpolate([](const Vec2& x, double) { return Vec2(x); }, 0);
    const Vector ones = Vector::Ones(poly.size());
    CHECK(ones.dot(C.transpose() * uid) == Approx(2.0 * enclosed_area(poly)).epsilon(1e-12));
  }

  SECTION("constant fields see the closed-curve normal sum") {
    const Vector uc = s.vel.interpolate([](const Vec2&, double) { return Vec2(1.0, 0.0); }, 0);
    const Vector ones = Vector::Ones(poly.size());
    CHECK(std::abs(ones.dot(C.transpose() * uc)) < 1e-13);
  }

  SECTION("quadratic normal-flux integrals are exact") {
    // u = (x^2, 0): int_Gamma (u . nu) ds = int_{Omega_-} div u = int 2x over the disc
    // = 2 * x_c * area for the polygon region by the centroid rule
    const Vector u = s.vel.interpolate([](const Vec2& x, double) { return Vec2(x.x() * x.x(), 0.0); }, 0);
    const Vector ones = Vector::Ones(poly.size());
    const double area = enclosed_area(poly);
    const Vec2 cen = region_centroid(poly);
    CHECK(ones.dot(C.transpose() * u) == Approx(2.0 * cen.x() * area).epsilon(1e-12));
  }
}

TEST_CASE("lumped interface blocks") {
  const InterfacePolygon poly = circle_polygon(40, 0.7);
  SparseMatrix N, S;
  Vector M;
  assemble_interface_blocks(poly, N, M, S);

  SECTION("translations produce zero lumped normal velocity") {
    VectorField v(2 * poly.size());
    for (int i = 0; i < poly.size(); ++i) set_vertex(v, i, Vec2(0.4, -1.1));
    CHECK((Vector::Ones(poly.size()).dot(N * v)) == Approx(0.0).margin(1e-13));
  }

  SECTION("lumped mass of an equal-length polygon is the segment length") {
    for (int i = 0; i < poly.size(); ++i) CHECK(M[i] == Approx(poly.segment_length(0)).epsilon(1e-13));
    CHECK(M.sum() == Approx(poly.perimeter()).epsilon(1e-13));
  }

  SECTION("stiffness matches the geometry module") {
    const SparseMatrix diff = S - surface_stiffness(poly);
    CHECK(diff.coeffs().cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("force assembly") {
  BulkSetup s({Rect{0, 0, 1, 1}, std::nullopt}, 0.25);

  SECTION("no force gives the zero vector") {
    const Vector f = assemble_force(s.mesh, s.vel, ForceSpec{}, nullptr, 0.0);
    CHECK(f.lpNorm<Eigen::Infinity>() == 0.0);
  }

  SECTION("uniform gravity against the unit vertical field integrates to -0.981") {
    ForceSpec spec;
    spec.kind = ForceSpec::Kind::density_gravity;
    spec.f = Vec2(0, -0.981);
    const std::vector<double> rho(s.mesh.n_triangles(), 1.0);
    const Vector f = assemble_force(s.mesh, s.vel, spec, &rho, 0.0);
    const Vector e2 = s.vel.interpolate([](const Vec2&, double) { return Vec2(0, 1); }, 0);
    CHECK(f.dot(e2) == Approx(-0.981).epsilon(1e-13));
  }

  SECTION("analytic force is interpolated before integration") {
    ForceSpec spec;
    spec.kind = ForceSpec::Kind::analytic;
    spec.g = [](const Vec2& x, double) { return Vec2(x.y(), x.x()); };
    const Vector f = assemble_force(s.mesh, s.vel, spec, nullptr, 0.0);
    const Vector e1 = s.vel.interpolate([](const Vec2&, double) { return Vec2(1, 0); }, 0);
    // int_0^1 int_0^1 y dx dy = 1/2, and the interpolant is exact for linears
    CHECK(f.dot(e1) == Approx(0.5).epsilon(1e-13));
  }
}

TEST_CASE("hole boundary flux of the expanding-bubble data") {
  const BulkMesh m = BulkMesh::build_structured({Rect{-1, -1, 1, 1}, Rect{-0.2, -0.2, 0.2, 0.2}}, 0.05);
  const VelocitySpace vel(m, BoundaryData{});
  const double alpha = 0.2;
  const VectorFunction ud = [alpha](const Vec2& x, double) { return Vec2(alpha * x / x.squaredNorm()); };
  const double flux = boundary_flux_hole(m, vel, ud, 0.0);
  // div-free data radiating from the origin: flux through the hole boundary with the
  // outer normal of the fluid domain is -2 pi alpha
  CHECK(flux == Approx(-2.0 * M_PI * alpha).epsilon(1e-6));
}

TEST_CASE("matrix market dump") {
  BulkSetup s({Rect{0, 0, 1, 1}, std::nullopt}, 0.5);
  write_matrix_market("/tmp/stokeslm_dump_test.mtx", s.B);
  std::ifstream in("/tmp/stokeslm_dump_test.mtx");
  std::string line;
  std::getline(in, line);
  CHECK(line == "%%MatrixMarket matrix coordinate real general");
  long rows, cols, nnz;
  in >> rows >> cols >> nnz;
  CHECK(rows == s.pres.dim());
  CHECK(cols == s.vel.n_dofs());
  CHECK(nnz == s.B.nonZeros());
}
