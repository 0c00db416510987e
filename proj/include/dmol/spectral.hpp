#pragma once

#include <lapacke.h>

#include <Eigen/Dense>
#include <complex>
#include <optional>
#include <vector>

#include "dmol/assembly.hpp"
#include "dmol/common.hpp"
#include "dmol/geometry.hpp"
#include "dmol/mesh.hpp"

namespace dmol {

// All 2n eigenpairs of the quadratic pencil gamma^2 B2 + gamma B1 + B0,
// n = 2 * dof_count. Conjugate pairs sit in adjacent slots.
struct RawEigenPairs {
  Eigen::VectorXcd gammas;  // 2n entries
  Eigen::MatrixXcd xis;     // n x 2n, unit columns
};

// Companion linearization ([0, I; -B0, -B1], diag(I, B2)) reduced to a
// standard eigenproblem through a Cholesky solve with B2, then LAPACK dgeev.
inline RawEigenPairs solve_qep(const SystemMatrices& sys) {
  int n = sys.size();
  Eigen::LLT<Eigen::MatrixXd> llt(sys.B2);
  if (llt.info() != Eigen::Success)
    throw NumericalError("solve_qep: B2 is not positive definite");

  Eigen::MatrixXd T = Eigen::MatrixXd::Zero(2 * n, 2 * n);
  T.topRightCorner(n, n).setIdentity();
  T.bottomLeftCorner(n, n) = -llt.solve(sys.B0);
  T.bottomRightCorner(n, n) = -llt.solve(sys.B1);

  int N = 2 * n;
  Eigen::VectorXd wr(N), wi(N);
  Eigen::MatrixXd vr(N, N);
  int info = LAPACKE_dgeev(LAPACK_COL_MAJOR, 'N', 'V', N, T.data(), N, wr.data(),
                           wi.data(), nullptr, N, vr.data(), N);
  if (info != 0) {
    double b0n = sys.B0.norm(), b1n = sys.B1.norm(), b2n = sys.B2.norm();
    throw NumericalError("solve_qep: dgeev failed, info=" + std::to_string(info) +
                         " (|B0|=" + std::to_string(b0n) +
                         ", |B1|=" + std::to_string(b1n) +
                         ", |B2|=" + std::to_string(b2n) + ")");
  }

  RawEigenPairs out;
  out.gammas.resize(N);
  out.xis.resize(n, N);
  for (int j = 0; j < N; ++j) {
    out.gammas(j) = {wr(j), wi(j)};
    Eigen::VectorXcd full(N);
    if (wi(j) == 0.0) {
      full = vr.col(j).cast<std::complex<double>>();
    } else if (wi(j) > 0.0) {
      full = vr.col(j) + std::complex<double>(0, 1) * vr.col(j + 1);
    } else {
      full = vr.col(j - 1) - std::complex<double>(0, 1) * vr.col(j);
    }
    Eigen::VectorXcd xi = full.head(n);
    double nrm = xi.norm();
    if (nrm > 0) xi /= nrm;
    // Deterministic phase: largest-magnitude entry real positive.
    int imax = 0;
    xi.cwiseAbs().maxCoeff(&imax);
    std::complex<double> ph = xi(imax) / std::abs(xi(imax));
    out.xis.col(j) = xi / ph;
  }
  return out;
}

// Retained half of the spectrum: Re(gamma) >= 0, exactly 2*dof_count modes.
// Reals are sorted ascending with the snapped zeros first; complex modes are
// kept as one representative (Im > 0) per conjugate pair, sorted by (Re,|Im|).
struct ModeSet {
  int n = 0;                                      // 2 * dof_count
  std::vector<double> real_gammas;                // 2m entries
  std::vector<std::complex<double>> pair_gammas;  // (n - 2m)/2 entries
  Eigen::MatrixXd real_xis;                       // n x 2m
  Eigen::MatrixXcd pair_xis;                      // n x pairs
  int zero_count = 0;

  int real_count() const { return static_cast<int>(real_gammas.size()); }
  int pair_count() const { return static_cast<int>(pair_gammas.size()); }

  // Modal matrix EI(rho): real columns e^{rho g} xi, then per complex pair
  // Re/Im of e^{rho g} xi. Square n x n.
  Eigen::MatrixXd EI(double rho, int derivative_order = 0) const {
    Eigen::MatrixXd E(n, n);
    for (int j = 0; j < real_count(); ++j) {
      double g = real_gammas[j];
      double f = std::exp(rho * g);
      for (int d = 0; d < derivative_order; ++d) f *= g;
      E.col(j) = f * real_xis.col(j);
    }
    for (int j = 0; j < pair_count(); ++j) {
      std::complex<double> g = pair_gammas[j];
      std::complex<double> f = std::exp(rho * g);
      for (int d = 0; d < derivative_order; ++d) f *= g;
      Eigen::VectorXcd col = f * pair_xis.col(j);
      E.col(real_count() + 2 * j) = col.real();
      E.col(real_count() + 2 * j + 1) = col.imag();
    }
    return E;
  }
};

struct SpectralTols {
  double tol_eig = 1e-8;   // relative residual bound
  double zero_snap = 1e-8; // scaled by max(1, spectral scale)
  double imag_snap = 1e-8; // scaled by 1 + |gamma|
};

inline ModeSet select_and_pair(const RawEigenPairs& raw, const SystemMatrices& sys,
                               const SpectralTols& tols = {}) {
  int n = sys.size();
  int N = static_cast<int>(raw.gammas.size());
  double scale = 0.0;
  for (int j = 0; j < N; ++j) scale = std::max(scale, std::abs(raw.gammas(j)));
  double tol_zero = tols.zero_snap * std::max(1.0, scale);

  std::vector<int> zeros;
  std::vector<std::pair<double, Eigen::VectorXd>> pos_real;
  std::vector<int> pos_pairs;  // representative indices, Im > 0
  for (int j = 0; j < N; ++j) {
    std::complex<double> g = raw.gammas(j);
    if (std::abs(g) < tol_zero) {
      zeros.push_back(j);
    } else if (g.imag() == 0.0) {
      if (g.real() > 0) pos_real.emplace_back(g.real(), raw.xis.col(j).real());
    } else if (g.imag() > 0) {
      if (std::abs(g.imag()) < tols.imag_snap * (1.0 + std::abs(g))) {
        // Conjugate pair collapsed onto the real axis: a (numerically)
        // double real eigenvalue whose eigenspace is spanned by Re and Im.
        if (g.real() > 0) {
          Eigen::VectorXd re = raw.xis.col(j).real();
          Eigen::VectorXd im = raw.xis.col(j).imag();
          im -= re.dot(im) / re.squaredNorm() * re;
          pos_real.emplace_back(g.real(), re);
          pos_real.emplace_back(g.real(), im);
        }
      } else if (g.real() >= -tol_zero) {
        pos_pairs.push_back(j);
      }
    }
  }

  int kept_nonzero = static_cast<int>(pos_real.size()) + 2 * static_cast<int>(pos_pairs.size());
  int need_zeros = n - kept_nonzero;
  if (need_zeros < 2 || need_zeros > static_cast<int>(zeros.size()))
    throw NumericalError(
        "select_and_pair: retained mode count mismatch (nonzero " +
        std::to_string(kept_nonzero) + " + zeros available " +
        std::to_string(zeros.size()) + " vs required " + std::to_string(n) + ")");

  ModeSet ms;
  ms.n = n;
  ms.zero_count = need_zeros;

  // Zero modes. The pencil's kernel at gamma = 0 is the pair of constant
  // displacement fields (B0 annihilates constants), so when exactly two are
  // needed we substitute that exact basis; otherwise pick the most
  // independent eigenvectors by greedy orthogonalization.
  Eigen::MatrixXd zero_cols(n, need_zeros);
  int nd = n / 2;
  Eigen::VectorXd c1 = Eigen::VectorXd::Zero(n), c2 = Eigen::VectorXd::Zero(n);
  c1.head(nd).setConstant(1.0 / std::sqrt(double(nd)));
  c2.tail(nd).setConstant(1.0 / std::sqrt(double(nd)));
  if (need_zeros == 2 && (sys.B0 * c1).norm() < 1e-8 * sys.B0.norm() &&
      (sys.B0 * c2).norm() < 1e-8 * sys.B0.norm()) {
    zero_cols.col(0) = c1;
    zero_cols.col(1) = c2;
  } else {
    Eigen::MatrixXd cand(n, zeros.size());
    for (std::size_t j = 0; j < zeros.size(); ++j) {
      Eigen::VectorXd re = raw.xis.col(zeros[j]).real();
      Eigen::VectorXd im = raw.xis.col(zeros[j]).imag();
      cand.col(j) = re.norm() > im.norm() ? re : im;
    }
    std::vector<int> taken;
    Eigen::MatrixXd basis(n, need_zeros);
    for (int k = 0; k < need_zeros; ++k) {
      int best = -1;
      double best_res = -1.0;
      for (std::size_t j = 0; j < zeros.size(); ++j) {
        if (std::find(taken.begin(), taken.end(), (int)j) != taken.end()) continue;
        Eigen::VectorXd v = cand.col(j);
        for (int p = 0; p < k; ++p) v -= basis.col(p).dot(v) * basis.col(p);
        if (v.norm() > best_res) {
          best_res = v.norm();
          best = static_cast<int>(j);
        }
      }
      taken.push_back(best);
      Eigen::VectorXd v = cand.col(best);
      for (int p = 0; p < k; ++p) v -= basis.col(p).dot(v) * basis.col(p);
      basis.col(k) = v / v.norm();
      zero_cols.col(k) = cand.col(best) / cand.col(best).norm();
    }
  }

  // Positive reals ascending.
  std::sort(pos_real.begin(), pos_real.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  // Complex pairs by (Re, |Im|).
  std::sort(pos_pairs.begin(), pos_pairs.end(), [&](int a, int b) {
    double ra = raw.gammas(a).real(), rb = raw.gammas(b).real();
    if (ra != rb) return ra < rb;
    return std::abs(raw.gammas(a).imag()) < std::abs(raw.gammas(b).imag());
  });

  int m2 = need_zeros + static_cast<int>(pos_real.size());
  ms.real_gammas.resize(m2);
  ms.real_xis.resize(n, m2);
  for (int j = 0; j < need_zeros; ++j) {
    ms.real_gammas[j] = 0.0;
    ms.real_xis.col(j) = zero_cols.col(j);
  }
  for (std::size_t j = 0; j < pos_real.size(); ++j) {
    ms.real_gammas[need_zeros + j] = pos_real[j].first;
    ms.real_xis.col(need_zeros + j) = pos_real[j].second / pos_real[j].second.norm();
  }

  ms.pair_gammas.resize(pos_pairs.size());
  ms.pair_xis.resize(n, pos_pairs.size());
  for (std::size_t j = 0; j < pos_pairs.size(); ++j) {
    ms.pair_gammas[j] = raw.gammas(pos_pairs[j]);
    ms.pair_xis.col(j) = raw.xis.col(pos_pairs[j]);
  }

  // Residual validation of every retained mode.
  double n0 = sys.B0.norm(), n1 = sys.B1.norm(), n2 = sys.B2.norm();
  auto check = [&](std::complex<double> g, const Eigen::VectorXcd& xi) {
    Eigen::VectorXcd r = (g * g) * (sys.B2 * xi) + g * (sys.B1 * xi) + sys.B0 * xi;
    double bound = tols.tol_eig * xi.norm() *
                   (n2 * std::norm(g) + n1 * std::abs(g) + n0);
    if (r.norm() > bound)
      throw NumericalError("select_and_pair: eigenpair residual too large");
  };
  for (int j = 0; j < ms.real_count(); ++j)
    check(ms.real_gammas[j], ms.real_xis.col(j).cast<std::complex<double>>());
  for (int j = 0; j < ms.pair_count(); ++j) check(ms.pair_gammas[j], ms.pair_xis.col(j));

  return ms;
}

// Evaluable semi-discrete solution u^h(rho, phi) = BF(phi)^T U(rho) with
// U(rho) = EI(rho) alpha (+ e^{2 rho} W for a body-force particular part).
struct ModalSolution {
  ModeSet modes;
  Eigen::VectorXd alpha;
  AngularMesh mesh;
  BoundaryShape shape;
  std::optional<Eigen::VectorXd> particular;  // W, decay rate e^{2 rho}
  double condition_estimate = 0.0;
  double trace_residual = 0.0;  // achieved ||EI(0) alpha - rhs||_inf

  Eigen::VectorXd U(double rho) const {
    Eigen::VectorXd u = modes.EI(rho) * alpha;
    if (particular) u += std::exp(2.0 * rho) * (*particular);
    return u;
  }

  Eigen::VectorXd U_prime(double rho) const {
    Eigen::VectorXd u = modes.EI(rho, 1) * alpha;
    if (particular) u += 2.0 * std::exp(2.0 * rho) * (*particular);
    return u;
  }

  Eigen::Vector2d evaluate(double rho, double phi) const {
    return combine(U(rho), phi);
  }

  // Rows: (du1/dx, du1/dy; du2/dx, du2/dy).
  Eigen::Matrix2d gradient_from(const Eigen::VectorXd& u_val,
                                const Eigen::VectorXd& u_prime, double rho,
                                double phi) const {
    int nd = mesh.dof_count();
    AngularMesh::BasisSample bs = mesh.basis_at(phi);
    Eigen::Vector2d du_drho = Eigen::Vector2d::Zero();
    Eigen::Vector2d du_dphi = Eigen::Vector2d::Zero();
    for (int i = 0; i < bs.count; ++i)
      for (int c = 0; c < 2; ++c) {
        du_drho(c) += bs.val[i] * u_prime(c * nd + bs.dofs[i]);
        du_dphi(c) += bs.deriv[i] * u_val(c * nd + bs.dofs[i]);
      }
    Eigen::Matrix2d J = jacobian_rows(shape, rho, phi);
    Eigen::Matrix2d g;
    for (int c = 0; c < 2; ++c) {
      g(c, 0) = du_drho(c) * J(0, 0) + du_dphi(c) * J(1, 0);
      g(c, 1) = du_drho(c) * J(0, 1) + du_dphi(c) * J(1, 1);
    }
    return g;
  }

  Eigen::Matrix2d evaluate_gradient(double rho, double phi) const {
    return gradient_from(U(rho), U_prime(rho), rho, phi);
  }

  Eigen::Vector2d combine(const Eigen::VectorXd& u_val, double phi) const {
    int nd = mesh.dof_count();
    AngularMesh::BasisSample bs = mesh.basis_at(phi);
    Eigen::Vector2d u = Eigen::Vector2d::Zero();
    for (int i = 0; i < bs.count; ++i)
      for (int c = 0; c < 2; ++c)
        u(c) += bs.val[i] * u_val(c * nd + bs.dofs[i]);
    return u;
  }

  // Angular profiles of retained real mode j: the mode contributes
  // alpha_j r^{gamma_j} (profile1, profile2) in polar coordinates.
  struct SingularProfile {
    double gamma;
    std::function<double(double)> profile1, profile2;
  };

  SingularProfile singular_profiles(int j) const {
    if (j < 0 || j >= modes.real_count())
      throw std::out_of_range("singular_profiles: mode index out of range");
    double g = modes.real_gammas[j];
    Eigen::VectorXd xi = modes.real_xis.col(j);
    const AngularMesh& msh = mesh;
    const BoundaryShape shp = shape;
    int nd = mesh.dof_count();
    auto comp = [msh, shp, xi, g, nd](double phi, int c) {
      AngularMesh::BasisSample bs = msh.basis_at(phi);
      double v = 0.0;
      for (int i = 0; i < bs.count; ++i) v += bs.val[i] * xi(c * nd + bs.dofs[i]);
      return std::pow(shp.radius(phi), -g) * v;
    };
    return {g, [comp](double phi) { return comp(phi, 0); },
            [comp](double phi) { return comp(phi, 1); }};
  }
};

// Fits the modal expansion to boundary data F by an LU solve with EI(0);
// a particular term W shifts the data to F - W first.
inline ModalSolution build_modal_solution(
    const ModeSet& modes, const Eigen::VectorXd& F, const AngularMesh& mesh,
    const BoundaryShape& shape,
    const std::optional<Eigen::VectorXd>& particular = std::nullopt,
    double max_trace_residual = 1e-8) {
  Eigen::MatrixXd E0 = modes.EI(0.0);
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(E0);
  double rc = lu.rcond();
  double cond = (rc > 0) ? 1.0 / rc : std::numeric_limits<double>::infinity();
  Eigen::VectorXd rhs = F;
  if (particular) rhs -= *particular;
  Eigen::VectorXd alpha = lu.solve(rhs);
  // One round of iterative refinement recovers accuracy lost to a badly
  // conditioned factorization.
  alpha += lu.solve(rhs - E0 * alpha);
  // Clusters of nearly defective high-frequency modes make kappa(EI(0)) grow
  // with the mesh size even though the fitted trace stays accurate, so the
  // condition estimate alone is not a failure signal: fail only when a badly
  // conditioned factorization also leaves a non-trivial residual.
  double resid = (E0 * alpha - rhs).norm() / std::max(1e-300, rhs.norm());
  if (resid > 1e-10) {
    // Rank-revealing fallback: minimum-norm coefficients avoid amplifying
    // noise along nearly dependent mode directions.
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(E0);
    Eigen::VectorXd alt = cod.solve(rhs);
    double alt_resid = (E0 * alt - rhs).norm() / std::max(1e-300, rhs.norm());
    if (alt_resid < resid) {
      alpha = alt;
      resid = alt_resid;
    }
  }
  if (resid > 1e-9) {
    // Double-precision least squares stalls once eps * kappa(EI(0)) exceeds
    // one; extended-precision QR recovers the attainable residual over the
    // same column span. Only reference-quality meshes reach this branch.
    using MatL = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
    using VecL = Eigen::Matrix<long double, Eigen::Dynamic, 1>;
    MatL E0l = E0.cast<long double>();
    VecL altl = Eigen::ColPivHouseholderQR<MatL>(E0l).solve(rhs.cast<long double>());
    Eigen::VectorXd alt = altl.cast<double>();
    double alt_resid = (E0 * alt - rhs).norm() / std::max(1e-300, rhs.norm());
    if (alt_resid < resid) {
      alpha = alt;
      resid = alt_resid;
    }
  }
  if (cond > 1e12 && resid > max_trace_residual)
    throw NumericalError(
        "build_modal_solution: modal basis ill-conditioned (cond ~ " +
        std::to_string(cond) + ", residual " + std::to_string(resid) +
        "); suspect near-duplicate modes");
  ModalSolution sol;
  sol.modes = modes;
  sol.alpha = alpha;
  sol.mesh = mesh;
  sol.shape = shape;
  sol.particular = particular;
  sol.condition_estimate = cond;
  sol.trace_residual = resid;
  return sol;
}

}  // namespace dmol
