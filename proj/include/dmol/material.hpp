#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>

#include "dmol/common.hpp"
#include "dmol/geometry.hpp"

namespace dmol {

namespace detail {

// Eigenvalues of a symmetric 3x3 matrix by the trigonometric closed form.
inline std::array<double, 3> sym3_eigenvalues(const Eigen::Matrix3d& A) {
  double q = A.trace() / 3.0;
  Eigen::Matrix3d B = A - q * Eigen::Matrix3d::Identity();
  double p2 = B.squaredNorm() / 6.0;
  double p = std::sqrt(p2);
  if (p < 1e-300) return {q, q, q};
  double detB = B.determinant();
  double r = detB / (2.0 * p * p * p);
  r = std::clamp(r, -1.0, 1.0);
  double theta = std::acos(r) / 3.0;
  double e1 = q + 2.0 * p * std::cos(theta);
  double e3 = q + 2.0 * p * std::cos(theta + 2.0 * kPi / 3.0);
  double e2 = 3.0 * q - e1 - e3;
  return {e3, e2, e1};  // ascending
}

}  // namespace detail

// Plane-strain elastic coefficient tensor in Voigt-like 3x3 form.
struct AnisoTensor {
  double a11 = 0, a22 = 0, a33 = 0, a12 = 0, a13 = 0, a23 = 0;

  Eigen::Matrix3d matrix() const {
    Eigen::Matrix3d A;
    A << a11, a12, a13, a12, a22, a23, a13, a23, a33;
    return A;
  }

  static AnisoTensor from_matrix(const Eigen::Matrix3d& A) {
    return {A(0, 0), A(1, 1), A(2, 2), A(0, 1), A(0, 2), A(1, 2)};
  }

  double min_eigenvalue() const { return detail::sym3_eigenvalues(matrix())[0]; }

  // SPD with a deterministic closed-form check, tolerance 1e-12 * trace.
  bool is_spd() const {
    double tr = a11 + a22 + a33;
    return min_eigenvalue() > 1e-12 * std::abs(tr);
  }
};

inline AnisoTensor isotropic_tensor(double lambda, double mu) {
  if (!(mu > 0.0)) throw ConfigError("isotropic_tensor: mu must be positive");
  if (lambda < 0.0) throw ConfigError("isotropic_tensor: lambda must be >= 0");
  return {2 * mu + lambda, 2 * mu + lambda, mu, lambda, 0.0, 0.0};
}

// (s11, s22, s12) = A * (e11, e22, 2 e12).
inline std::array<double, 3> stress_of_strain(const AnisoTensor& t, double e11,
                                              double e22, double e12) {
  double g = 2.0 * e12;
  return {t.a11 * e11 + t.a12 * e22 + t.a13 * g,
          t.a12 * e11 + t.a22 * e22 + t.a23 * g,
          t.a13 * e11 + t.a23 * e22 + t.a33 * g};
}

struct PsiMatrices {
  Eigen::Matrix2d psi0, psi1, psi2;
};

// Pointwise coefficient matrices of the curvilinear variational form.
// With s = rt' sin + rt cos and t = -rt' cos + rt sin:
//   psi2 weights d/drho pairs, psi1 the mixed terms, psi0 the d/dphi pairs.
inline PsiMatrices psi_matrices(const AnisoTensor& a, double rt, double rtp,
                                double phi) {
  double c = std::cos(phi), n = std::sin(phi);
  double s = rtp * n + rt * c;
  double t = -rtp * c + rt * n;
  PsiMatrices out;

  double inv_r2 = 1.0 / (rt * rt);
  out.psi2(0, 0) = inv_r2 * (a.a11 * s * s + 2 * a.a13 * s * t + a.a33 * t * t);
  out.psi2(0, 1) =
      inv_r2 * (a.a13 * s * s + (a.a33 + a.a12) * s * t + a.a23 * t * t);
  out.psi2(1, 0) = out.psi2(0, 1);
  out.psi2(1, 1) = inv_r2 * (a.a33 * s * s + 2 * a.a23 * s * t + a.a22 * t * t);

  double inv_r = 1.0 / rt;
  out.psi1(0, 0) = inv_r * (-a.a11 * s * n + a.a13 * s * c - a.a13 * t * n +
                            a.a33 * t * c);
  out.psi1(0, 1) = inv_r * (-a.a13 * s * n + a.a12 * s * c - a.a33 * t * n +
                            a.a23 * t * c);
  out.psi1(1, 0) = inv_r * (-a.a13 * s * n + a.a33 * s * c - a.a12 * t * n +
                            a.a23 * t * c);
  out.psi1(1, 1) = inv_r * (-a.a33 * s * n + a.a23 * s * c - a.a23 * t * n +
                            a.a22 * t * c);

  out.psi0(0, 0) = a.a11 * n * n + a.a33 * c * c - 2 * a.a13 * c * n;
  out.psi0(0, 1) = a.a13 * n * n + a.a23 * c * c - (a.a33 + a.a12) * c * n;
  out.psi0(1, 0) = out.psi0(0, 1);
  out.psi0(1, 1) = a.a33 * n * n + a.a22 * c * c - 2 * a.a23 * c * n;

  return out;
}

// Piecewise-constant material over angular sectors.
struct PiecewiseMaterial {
  struct Sector {
    double start, end;
    AnisoTensor tensor;
  };
  std::vector<Sector> sectors;

  const AnisoTensor& tensor_at(double phi) const {
    for (std::size_t i = 0; i + 1 < sectors.size(); ++i)
      if (phi < sectors[i].end) return sectors[i].tensor;
    return sectors.back().tensor;
  }

  std::vector<double> boundaries() const {
    std::vector<double> out;
    for (std::size_t i = 0; i + 1 < sectors.size(); ++i)
      out.push_back(sectors[i].end);
    return out;
  }

  void validate(double range_start, double range_end) const {
    if (sectors.empty()) throw ConfigError("PiecewiseMaterial: no sectors");
    if (std::abs(sectors.front().start - range_start) > 1e-12 ||
        std::abs(sectors.back().end - range_end) > 1e-12)
      throw ConfigError("PiecewiseMaterial: sectors do not tile the range");
    for (std::size_t i = 0; i + 1 < sectors.size(); ++i)
      if (std::abs(sectors[i].end - sectors[i + 1].start) > 1e-12)
        throw ConfigError("PiecewiseMaterial: sector gap or overlap");
    for (const auto& s : sectors)
      if (!s.tensor.is_spd())
        throw ConfigError("PiecewiseMaterial: sector tensor is not SPD");
  }

  // Material tiling a DomainSpec with one tensor per subdomain.
  static PiecewiseMaterial over_domain(const DomainSpec& domain,
                                       const std::vector<AnisoTensor>& tensors) {
    if (tensors.size() != domain.interfaces.size())
      throw ConfigError("PiecewiseMaterial: need one tensor per subdomain");
    PiecewiseMaterial mat;
    for (std::size_t k = 0; k < tensors.size(); ++k) {
      double lo = domain.interfaces[k];
      double hi = (k + 1 < tensors.size()) ? domain.interfaces[k + 1]
                                           : domain.boundary.range_end();
      mat.sectors.push_back({lo, hi, tensors[k]});
    }
    return mat;
  }

  // Uniform m-sector material over the full angular range.
  static PiecewiseMaterial uniform_sectors(double range_start, double range_end,
                                           int m, const AnisoTensor& t) {
    PiecewiseMaterial mat;
    for (int i = 0; i < m; ++i) {
      double lo = range_start + (range_end - range_start) * i / m;
      double hi = range_start + (range_end - range_start) * (i + 1) / m;
      mat.sectors.push_back({lo, hi, t});
    }
    return mat;
  }
};

// Symmetric eigenvalue clipping: nearest tensor with spectrum >= floor.
inline AnisoTensor spd_project(const AnisoTensor& t, double floor) {
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(t.matrix());
  Eigen::Vector3d ev = es.eigenvalues();
  if (ev(0) >= floor) return t;
  for (int i = 0; i < 3; ++i) ev(i) = std::max(ev(i), floor);
  Eigen::Matrix3d A =
      es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
  A = 0.5 * (A + A.transpose());
  return AnisoTensor::from_matrix(A);
}

}  // namespace dmol
