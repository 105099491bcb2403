#pragma once

#include <memory>
#include <span>
#include <vector>

#include <Eigen/SparseCore>

#include "garmentgen/mesh.hpp"

namespace garmentgen {

/// One 3x3 deformation gradient per face: rows index output coordinates,
/// columns index template-space directions.
using JacobianField = std::vector<Mat3>;

JacobianField identity_jacobians(std::size_t faces);

class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Least-squares map from per-face Jacobians to vertex positions:
///   argmin_x sum_f area_f |grad_f(x) - J_f|^2  s.t.  centroid(x) = centroid(template)
/// where grad_f is the piecewise-linear gradient on the template triangle and
/// the centroid is area weighted. The system matrix is the template's
/// cotangent Laplacian; it is factorized once at construction.
class PoissonSystem {
 public:
  /// Throws MeshError for meshes with more than one connected component or
  /// degenerate faces, SolverError if the factorization fails.
  explicit PoissonSystem(const TriMesh& tpl);
  ~PoissonSystem();
  PoissonSystem(PoissonSystem&&) noexcept;
  PoissonSystem& operator=(PoissonSystem&&) noexcept;

  std::size_t num_vertices() const { return num_vertices_; }
  std::size_t num_faces() const { return num_faces_; }
  const TriMesh& template_mesh() const { return template_; }

  /// Vertex positions for `J` (throws SolverError on non-finite entries).
  std::vector<Vec3> solve(std::span<const Mat3> jacobians) const;
  /// `template_mesh()` with the solved positions.
  TriMesh deform(std::span<const Mat3> jacobians) const;

  /// Adjoint of `solve`: maps dL/dx to dL/dJ.
  JacobianField backprop(std::span<const Vec3> grad_vertices) const;

  /// Per-face gradient of the template vertex positions (I minus the normal
  /// projector on each face).
  JacobianField template_gradients() const;
  /// Per-face gradient of arbitrary vertex positions on the template domain.
  JacobianField gradients_of(std::span<const Vec3> positions) const;

  /// Stacked operator G (3F x V) and divergence D = G^T A (V x 3F).
  const Eigen::SparseMatrix<double>& gradient_operator() const { return gradient_; }
  const Eigen::SparseMatrix<double>& divergence_operator() const { return divergence_; }
  /// Cotangent Laplacian L = G^T A G (V x V), positive semidefinite.
  const Eigen::SparseMatrix<double>& laplacian() const { return laplacian_; }
  const Eigen::VectorXd& centroid_weights() const { return centroid_weights_; }

 private:
  struct Factor;

  Eigen::MatrixXd solve_grounded(const Eigen::MatrixXd& rhs) const;

  TriMesh template_;
  std::size_t num_vertices_ = 0;
  std::size_t num_faces_ = 0;
  Eigen::SparseMatrix<double> gradient_;
  Eigen::SparseMatrix<double> divergence_;
  Eigen::SparseMatrix<double> laplacian_;
  Eigen::VectorXd centroid_weights_;
  Vec3 centroid_ = Vec3::Zero();
  std::unique_ptr<Factor> factor_;
};

}  // namespace garmentgen
