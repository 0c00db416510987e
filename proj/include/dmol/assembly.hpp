#pragma once

#include <Eigen/Dense>
#include <cmath>

#include "dmol/common.hpp"
#include "dmol/geometry.hpp"
#include "dmol/material.hpp"
#include "dmol/mesh.hpp"

namespace dmol {

// Assembled pencil of the radial ODE system: B2 U'' + B1 U' + B0 U = rhs.
// B2 is SPD, B1 antisymmetric by construction, B0 symmetric negative
// semi-definite.
struct SystemMatrices {
  Eigen::MatrixXd B0, B1, B2;
  int size() const { return static_cast<int>(B2.rows()); }
};

namespace detail {

inline void check_alignment(const AngularMesh& mesh, double boundary_angle) {
  for (double n : mesh.nodes)
    if (std::abs(n - boundary_angle) < 1e-9) return;
  throw NumericalError("assemble: material sector boundary is not a mesh node");
}

}  // namespace detail

// Elementwise Gauss-Legendre assembly of the three pencil matrices.
// Coefficients involve rt, rt' and trig products, so quadrature
// over-resolves: 6 points per element for P1, 8 for P2.
inline SystemMatrices assemble(const AngularMesh& mesh, const BoundaryShape& shape,
                               const PiecewiseMaterial& material) {
  for (double b : material.boundaries()) detail::check_alignment(mesh, b);
  for (double b : shape.breakpoints()) detail::check_alignment(mesh, b);

  int nd = mesh.dof_count();
  int n = 2 * nd;
  Eigen::MatrixXd B0 = Eigen::MatrixXd::Zero(n, n);
  Eigen::MatrixXd B2 = Eigen::MatrixXd::Zero(n, n);
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n, n);  // B1 = K - K^T

  GaussRule base = gauss_legendre(mesh.order == 1 ? 6 : 8);

  for (int e = 0; e < mesh.element_count(); ++e) {
    double a = mesh.nodes[e], b = mesh.nodes[e + 1];
    double midpt = 0.5 * (a + b), half = 0.5 * (b - a);
    const AnisoTensor& tensor = material.tensor_at(midpt);
    const BoundarySegment& seg = shape.segment_at(midpt);

    for (std::size_t q = 0; q < base.nodes.size(); ++q) {
      double phi = midpt + half * base.nodes[q];
      double w = half * base.weights[q];
      PsiMatrices psi = psi_matrices(tensor, seg.r(phi), seg.r_prime(phi), phi);
      AngularMesh::BasisSample bs = mesh.basis_on(e, phi);

      for (int i = 0; i < bs.count; ++i) {
        for (int j = 0; j < bs.count; ++j) {
          for (int c1 = 0; c1 < 2; ++c1) {
            int gi = c1 * nd + bs.dofs[i];
            for (int c2 = 0; c2 < 2; ++c2) {
              int gj = c2 * nd + bs.dofs[j];
              B0(gi, gj) -= w * bs.deriv[i] * psi.psi0(c1, c2) * bs.deriv[j];
              B2(gi, gj) += w * bs.val[i] * psi.psi2(c1, c2) * bs.val[j];
              K(gi, gj) += w * bs.val[i] * psi.psi1(c1, c2) * bs.deriv[j];
            }
          }
        }
      }
    }
  }

  SystemMatrices sys;
  sys.B0 = 0.5 * (B0 + B0.transpose());
  sys.B2 = 0.5 * (B2 + B2.transpose());
  sys.B1 = K - K.transpose();
  return sys;
}

// Load vector of a body force whose curvilinear image depends only on phi:
// the ODE system right side is e^{2 rho} G with
//   G_i = -int rt(phi)^2 p(phi) . BF_i(phi) dphi.
inline Eigen::VectorXd assemble_force_projection(
    const AngularMesh& mesh, const BoundaryShape& shape,
    const std::function<Eigen::Vector2d(double)>& force_of_phi) {
  int nd = mesh.dof_count();
  Eigen::VectorXd G = Eigen::VectorXd::Zero(2 * nd);
  GaussRule base = gauss_legendre(mesh.order == 1 ? 6 : 8);
  for (int e = 0; e < mesh.element_count(); ++e) {
    double a = mesh.nodes[e], b = mesh.nodes[e + 1];
    double midpt = 0.5 * (a + b), half = 0.5 * (b - a);
    const BoundarySegment& seg = shape.segment_at(midpt);
    for (std::size_t q = 0; q < base.nodes.size(); ++q) {
      double phi = midpt + half * base.nodes[q];
      double w = half * base.weights[q];
      double rt = seg.r(phi);
      Eigen::Vector2d p = force_of_phi(phi);
      AngularMesh::BasisSample bs = mesh.basis_on(e, phi);
      for (int i = 0; i < bs.count; ++i)
        for (int c = 0; c < 2; ++c)
          G(c * nd + bs.dofs[i]) -= w * rt * rt * p(c) * bs.val[i];
    }
  }
  return G;
}

}  // namespace dmol
