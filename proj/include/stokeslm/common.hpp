#ifndef STOKESLM_COMMON_HPP
#define STOKESLM_COMMON_HPP

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <stdexcept>
#include <string>

namespace stokeslm {

using Vec2 = Eigen::Vector2d;
using Vector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

// A scalar field on the interface polygon: one value per vertex (piecewise linear).
using ScalarField = Eigen::VectorXd;
// A vector field on the interface polygon: 2K values, interleaved (x_0,y_0,x_1,y_1,...).
using VectorField = Eigen::VectorXd;

class GeometryError : public std::runtime_error {
public:
  explicit GeometryError(const std::string& what) : std::runtime_error(what) {}
};

class ConfigError : public std::runtime_error {
public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

class SolverError : public std::runtime_error {
public:
  explicit SolverError(const std::string& what) : std::runtime_error(what) {}
};

// Newton non-convergence or any failure that aborts a time step.
class StepError : public std::runtime_error {
public:
  explicit StepError(const std::string& what) : std::runtime_error(what) {}
};

inline Vec2 at_vertex(const VectorField& f, int k) { return Vec2(f[2 * k], f[2 * k + 1]); }

inline void set_vertex(VectorField& f, int k, const Vec2& v) {
  f[2 * k] = v.x();
  f[2 * k + 1] = v.y();
}

}  // namespace stokeslm

#endif
