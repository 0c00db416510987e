#pragma once

// Independent finite-difference reference solver on the semi-infinite strip,
// used only by the test suite to cross-check the modal forward solver and the
// analytic gradient of the objective.
//
// The displacement PDE in strip coordinates (rho, phi) reads, in conservative
// flux form,
//
//   d/drho [ Psi2 u_rho + Psi1 u_phi ] + d/dphi [ Psi1^T u_rho + Psi0 u_phi ]
//     = -e^{2 rho} rt(phi)^2 p(phi),
//
// with Dirichlet data at rho = 0, periodicity in phi, and decay as
// rho -> -infinity, which the solver truncates at rho_min with a homogeneous
// Neumann closure (fields of interest decay like e^{gamma rho}, gamma > 0, so
// the truncation error is O(e^{gamma rho_min})).
//
// Second-order central differences on a tensor grid; angular fluxes are
// evaluated at half points, which never straddle a material interface when
// the interface angles are grid nodes, so coefficient jumps are handled
// conservatively. At interface nodes the rho-flux coefficient takes the mean
// of the two one-sided limits.

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <stdexcept>
#include <vector>

#include "dmol/forward.hpp"

namespace dmol {

struct StripFDSolver {
  double rho_min = -10.0;
  int n_rho = 200;  // intervals in rho
  int n_phi = 128;  // intervals in phi over the full period

  struct Solution {
    double rho_min;
    int n_rho, n_phi;
    // values[c] is (n_rho+1) x n_phi, row i at rho_min + i*h_rho.
    Eigen::MatrixXd u1, u2;
    double h_rho, h_phi;

    Eigen::Vector2d at(int i, int j) const { return {u1(i, j), u2(i, j)}; }

    // Bilinear interpolation at (rho, phi), phi folded into [0, 2pi).
    Eigen::Vector2d interpolate(double rho, double phi) const {
      double two_pi = 2.0 * kPi;
      phi = std::fmod(phi, two_pi);
      if (phi < 0) phi += two_pi;
      double si = (rho - rho_min) / h_rho, sj = phi / h_phi;
      int i = std::min(std::max(int(std::floor(si)), 0), n_rho - 1);
      int j = int(std::floor(sj)) % n_phi;
      double ti = si - i, tj = sj - j;
      int jp = (j + 1) % n_phi;
      auto val = [&](const Eigen::MatrixXd& m) {
        return (1 - ti) * ((1 - tj) * m(i, j) + tj * m(i, jp)) +
               ti * ((1 - tj) * m(i + 1, j) + tj * m(i + 1, jp));
      };
      return {val(u1), val(u2)};
    }
  };

  Solution solve(const ForwardProblem& pb) const {
    const BoundaryShape& shape = pb.domain.boundary;
    if (shape.period_type != PeriodType::Periodic)
      throw ConfigError("StripFDSolver: periodic domains only");
    int nr = n_rho, np = n_phi;
    double hr = -rho_min / nr, hp = 2.0 * kPi / np;

    // Material interfaces must be grid nodes for the half-point fluxes to
    // see single-valued coefficients.
    for (const auto& sec : pb.material.sectors) {
      double s = sec.start / hp;
      if (std::abs(s - std::round(s)) > 1e-9)
        throw ConfigError("StripFDSolver: interface not on the phi grid");
    }

    auto psi_at = [&](double phi) {
      double two_pi = 2.0 * kPi;
      double pm = std::fmod(phi, two_pi);
      if (pm < 0) pm += two_pi;
      return psi_matrices(pb.material.tensor_at(pm), shape.radius(pm),
                          shape.radius_prime(pm), pm);
    };
    // Node coefficients. The psi2 term pairs with u_rho, which is continuous
    // across interfaces, so its node value may use the mean of the one-sided
    // limits. The mixed psi1^T u_phi term must keep the one-sided limits
    // separate because u_phi jumps at material interfaces: the flux is the
    // mean of the one-sided products, not the mean coefficient times a
    // central difference.
    std::vector<PsiMatrices> node_psi(np), half_psi(np), psi_l(np), psi_r(np);
    for (int j = 0; j < np; ++j) {
      double phi = j * hp, eps = 1e-7 * hp;
      psi_l[j] = psi_at(phi - eps);
      psi_r[j] = psi_at(phi + eps);
      node_psi[j].psi0 = 0.5 * (psi_l[j].psi0 + psi_r[j].psi0);
      node_psi[j].psi1 = 0.5 * (psi_l[j].psi1 + psi_r[j].psi1);
      node_psi[j].psi2 = 0.5 * (psi_l[j].psi2 + psi_r[j].psi2);
      half_psi[j] = psi_at((j + 0.5) * hp);
    }

    // Unknown layout: idx(i,j,c) with i=0..nr (rho), j=0..np-1, c=0..1.
    auto idx = [&](int i, int j, int c) { return 2 * (i * np + j) + c; };
    int n = 2 * (nr + 1) * np;
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(40 * n);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);

    auto add = [&](int row, int i, int j, int c, double v) {
      // Neumann ghost at the bottom: mirror row -1 onto row 1.
      if (i < 0) i = 1;
      trip.emplace_back(row, idx(i, ((j % np) + np) % np, c), v);
    };

    for (int i = 0; i <= nr; ++i) {
      for (int j = 0; j < np; ++j) {
        if (i == nr) {  // Dirichlet at rho = 0
          Eigen::Vector2d g = pb.dirichlet(j * hp);
          for (int c = 0; c < 2; ++c) {
            trip.emplace_back(idx(i, j, c), idx(i, j, c), 1.0);
            rhs(idx(i, j, c)) = g(c);
          }
          continue;
        }
        // Flux balance at node (i, j): for each test component row c,
        //   [F_rho(i+1/2) - F_rho(i-1/2)]/hr + [F_phi(j+1/2) - F_phi(j-1/2)]/hp
        //     = -e^{2 rho} rt^2 p.
        const PsiMatrices& pn = node_psi[j];
        const PsiMatrices& ph_r = half_psi[j];
        const PsiMatrices& ph_l = half_psi[(j - 1 + np) % np];
        for (int c = 0; c < 2; ++c) {
          int row = idx(i, j, c);
          for (int d = 0; d < 2; ++d) {
            // F_rho(i+1/2) = Psi2 (u_{i+1}-u_i)/hr + Psi1 u_phi(i+1/2)
            double a2 = pn.psi2(c, d) / (hr * hr);
            add(row, i + 1, j, d, a2);
            add(row, i, j, d, -2.0 * a2);
            add(row, i - 1, j, d, a2);
            // Psi1 u_phi, with one-sided limits on each side of the node:
            //   G = (Psi1^- (u_j - u_{j-1}) + Psi1^+ (u_{j+1} - u_j))/(2 hp)
            // averaged over rows i and i+1 (resp. i-1 and i) for the two
            // half-level rho fluxes; the row-i contributions cancel.
            double aL = psi_l[j].psi1(c, d) / (4.0 * hp * hr);
            double aR = psi_r[j].psi1(c, d) / (4.0 * hp * hr);
            add(row, i + 1, j + 1, d, aR);
            add(row, i + 1, j, d, aL - aR);
            add(row, i + 1, j - 1, d, -aL);
            add(row, i - 1, j + 1, d, -aR);
            add(row, i - 1, j, d, aR - aL);
            add(row, i - 1, j - 1, d, aL);
            // F_phi(j+1/2) = Psi1^T u_rho(j+1/2) + Psi0 (u_{j+1}-u_j)/hp
            double b1r = ph_r.psi1(d, c) / (4.0 * hr * hp);
            add(row, i + 1, j, d, b1r);
            add(row, i - 1, j, d, -b1r);
            add(row, i + 1, j + 1, d, b1r);
            add(row, i - 1, j + 1, d, -b1r);
            double b1l = ph_l.psi1(d, c) / (4.0 * hr * hp);
            add(row, i + 1, j, d, -b1l);
            add(row, i - 1, j, d, b1l);
            add(row, i + 1, j - 1, d, -b1l);
            add(row, i - 1, j - 1, d, b1l);
            double b0r = ph_r.psi0(c, d) / (hp * hp);
            add(row, i, j + 1, d, b0r);
            add(row, i, j, d, -b0r);
            double b0l = ph_l.psi0(c, d) / (hp * hp);
            add(row, i, j - 1, d, b0l);
            add(row, i, j, d, -b0l);
          }
          if (pb.body_force.present()) {
            double rho = rho_min + i * hr, phi = j * hp;
            double rt = shape.radius(phi);
            rhs(row) = -std::exp(2.0 * rho) * rt * rt *
                       pb.body_force.of_phi(phi)(c);
          }
        }
      }
    }

    Eigen::SparseMatrix<double> A(n, n);
    A.setFromTriplets(trip.begin(), trip.end());
    A.makeCompressed();
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(A);
    if (lu.info() != Eigen::Success)
      throw NumericalError("StripFDSolver: sparse factorization failed");
    Eigen::VectorXd x = lu.solve(rhs);
    if (lu.info() != Eigen::Success)
      throw NumericalError("StripFDSolver: sparse solve failed");

    Solution out;
    out.rho_min = rho_min;
    out.n_rho = nr;
    out.n_phi = np;
    out.h_rho = hr;
    out.h_phi = hp;
    out.u1.resize(nr + 1, np);
    out.u2.resize(nr + 1, np);
    for (int i = 0; i <= nr; ++i)
      for (int j = 0; j < np; ++j) {
        out.u1(i, j) = x(idx(i, j, 0));
        out.u2(i, j) = x(idx(i, j, 1));
      }
    return out;
  }
};

// Relative difference between a modal solution and an FD solution, measured
// over the annulus r > r_floor (quadrature on the FD grid nodes), in a
// discrete H1-like metric on values only (the FD field is nodal; gradients
// are formed by differencing and carry the FD truncation error, so value
// agreement under refinement is the oracle criterion).
inline double fd_relative_difference(const ModalSolution& sol,
                                     const StripFDSolver::Solution& fd,
                                     double r_floor = 0.1) {
  double num = 0.0, den = 0.0;
  double rho_floor = std::log(r_floor);
  for (int i = 0; i <= fd.n_rho; ++i) {
    double rho = fd.rho_min + i * fd.h_rho;
    if (rho < rho_floor) continue;
    Eigen::VectorXd Uv = sol.U(rho);
    for (int j = 0; j < fd.n_phi; ++j) {
      double phi = j * fd.h_phi;
      Eigen::Vector2d um = sol.combine(Uv, phi);
      Eigen::Vector2d uf = fd.at(i, j);
      double rt = sol.shape.radius(phi);
      double w = std::exp(2.0 * rho) * rt * rt;
      num += w * (um - uf).squaredNorm();
      den += w * uf.squaredNorm();
    }
  }
  return std::sqrt(num / den);
}

}  // namespace dmol
