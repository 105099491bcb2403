#include "garmentgen/njf.hpp"

#include <cmath>

#include <Eigen/Geometry>
#include <Eigen/SparseCholesky>

namespace garmentgen {

struct PoissonSystem::Factor {
  // Laplacian with vertex 0 removed; the centroid shift restores the pin.
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
};

JacobianField identity_jacobians(std::size_t faces) { return JacobianField(faces, Mat3::Identity()); }

PoissonSystem::PoissonSystem(const TriMesh& tpl) : template_(tpl) {
  validate_mesh(template_);
  num_vertices_ = template_.vertices.size();
  num_faces_ = template_.faces.size();
  if (num_faces_ == 0) throw MeshError("template mesh has no faces");
  if (const int c = count_components(template_); c != 1) {
    throw MeshError("template mesh has " + std::to_string(c) +
                    " connected components; build one system per component");
  }
  std::vector<bool> used(num_vertices_, false);
  for (const Face& t : template_.faces) {
    for (int idx : t) used[static_cast<std::size_t>(idx)] = true;
  }
  for (std::size_t v = 0; v < num_vertices_; ++v) {
    if (!used[v]) throw MeshError("template vertex " + std::to_string(v) + " is not referenced by any face");
  }

  const auto nv = static_cast<Eigen::Index>(num_vertices_);
  const auto nf = static_cast<Eigen::Index>(num_faces_);
  std::vector<Eigen::Triplet<double>> g_trip;
  std::vector<Eigen::Triplet<double>> d_trip;
  g_trip.reserve(num_faces_ * 9);
  d_trip.reserve(num_faces_ * 9);
  centroid_weights_ = Eigen::VectorXd::Zero(nv);
  double total_area = 0.0;

  for (std::size_t f = 0; f < num_faces_; ++f) {
    const Face& t = template_.faces[f];
    const Vec3& p0 = template_.vertices[static_cast<std::size_t>(t[0])];
    const Vec3& p1 = template_.vertices[static_cast<std::size_t>(t[1])];
    const Vec3& p2 = template_.vertices[static_cast<std::size_t>(t[2])];
    const Vec3 c = (p1 - p0).cross(p2 - p0);
    const double dbl_area = c.norm();
    const double area = 0.5 * dbl_area;
    const Vec3 n = c / dbl_area;
    // gradient of the hat function of corner i: n x (opposite edge) / 2A
    const std::array<Vec3, 3> grad_hat = {n.cross(p2 - p1) / dbl_area, n.cross(p0 - p2) / dbl_area,
                                          n.cross(p1 - p0) / dbl_area};
    for (int i = 0; i < 3; ++i) {
      for (int k = 0; k < 3; ++k) {
        const auto row = static_cast<int>(3 * f + static_cast<std::size_t>(k));
        const double value = grad_hat[static_cast<std::size_t>(i)][k];
        g_trip.emplace_back(row, t[i], value);
        d_trip.emplace_back(t[i], row, area * value);
      }
      centroid_weights_[t[i]] += area / 3.0;
    }
    total_area += area;
  }
  centroid_weights_ /= total_area;

  gradient_.resize(3 * nf, nv);
  gradient_.setFromTriplets(g_trip.begin(), g_trip.end());
  divergence_.resize(nv, 3 * nf);
  divergence_.setFromTriplets(d_trip.begin(), d_trip.end());
  laplacian_ = (divergence_ * gradient_).pruned();

  for (std::size_t v = 0; v < num_vertices_; ++v) {
    centroid_ += centroid_weights_[static_cast<Eigen::Index>(v)] * template_.vertices[v];
  }

  factor_ = std::make_unique<Factor>();
  const Eigen::SparseMatrix<double> reduced = laplacian_.bottomRightCorner(nv - 1, nv - 1);
  factor_->ldlt.compute(reduced);
  if (factor_->ldlt.info() != Eigen::Success) throw SolverError("cotangent Laplacian factorization failed");
}

PoissonSystem::~PoissonSystem() = default;
PoissonSystem::PoissonSystem(PoissonSystem&&) noexcept = default;
PoissonSystem& PoissonSystem::operator=(PoissonSystem&&) noexcept = default;

Eigen::MatrixXd PoissonSystem::solve_grounded(const Eigen::MatrixXd& rhs) const {
  const auto nv = static_cast<Eigen::Index>(num_vertices_);
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(nv, rhs.cols());
  x.bottomRows(nv - 1) = factor_->ldlt.solve(rhs.bottomRows(nv - 1));
  if (factor_->ldlt.info() != Eigen::Success) throw SolverError("Poisson solve failed");
  return x;
}

std::vector<Vec3> PoissonSystem::solve(std::span<const Mat3> jacobians) const {
  if (jacobians.size() != num_faces_) throw std::invalid_argument("Jacobian count does not match face count");
  Eigen::MatrixXd jmat(3 * static_cast<Eigen::Index>(num_faces_), 3);
  for (std::size_t f = 0; f < num_faces_; ++f) {
    if (!jacobians[f].allFinite()) throw SolverError("non-finite Jacobian on face " + std::to_string(f));
    jmat.middleRows<3>(3 * static_cast<Eigen::Index>(f)) = jacobians[f].transpose();
  }
  const Eigen::MatrixXd x = solve_grounded(divergence_ * jmat);
  const Eigen::RowVector3d shift = centroid_.transpose() - centroid_weights_.transpose() * x;
  std::vector<Vec3> out(num_vertices_);
  for (std::size_t v = 0; v < num_vertices_; ++v) {
    out[v] = (x.row(static_cast<Eigen::Index>(v)) + shift).transpose();
  }
  return out;
}

TriMesh PoissonSystem::deform(std::span<const Mat3> jacobians) const {
  TriMesh out = template_;
  out.vertices = solve(jacobians);
  return out;
}

JacobianField PoissonSystem::backprop(std::span<const Vec3> grad_vertices) const {
  if (grad_vertices.size() != num_vertices_) throw std::invalid_argument("gradient count does not match vertex count");
  const auto nv = static_cast<Eigen::Index>(num_vertices_);
  Eigen::MatrixXd g(nv, 3);
  for (Eigen::Index v = 0; v < nv; ++v) g.row(v) = grad_vertices[static_cast<std::size_t>(v)].transpose();
  // adjoint of the centroid shift x -> x - 1 a^T x
  const Eigen::RowVector3d total = g.colwise().sum();
  g -= centroid_weights_ * total;
  const Eigen::MatrixXd rhs_bar = solve_grounded(g);
  const Eigen::MatrixXd jbar = divergence_.transpose() * rhs_bar;
  JacobianField out(num_faces_);
  for (std::size_t f = 0; f < num_faces_; ++f) {
    out[f] = jbar.middleRows<3>(3 * static_cast<Eigen::Index>(f)).transpose();
  }
  return out;
}

JacobianField PoissonSystem::gradients_of(std::span<const Vec3> positions) const {
  if (positions.size() != num_vertices_) throw std::invalid_argument("position count does not match vertex count");
  Eigen::MatrixXd x(static_cast<Eigen::Index>(num_vertices_), 3);
  for (std::size_t v = 0; v < num_vertices_; ++v) x.row(static_cast<Eigen::Index>(v)) = positions[v].transpose();
  const Eigen::MatrixXd gx = gradient_ * x;
  JacobianField out(num_faces_);
  for (std::size_t f = 0; f < num_faces_; ++f) out[f] = gx.middleRows<3>(3 * static_cast<Eigen::Index>(f)).transpose();
  return out;
}

JacobianField PoissonSystem::template_gradients() const { return gradients_of(template_.vertices); }

}  // namespace garmentgen
