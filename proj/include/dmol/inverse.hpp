#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <vector>

#include "dmol/common.hpp"
#include "dmol/forward.hpp"
#include "dmol/material.hpp"

namespace dmol {

// Tensor-product quadrature grid: Gauss panels in rho on [rho_min, 0]
// crossed with Gauss points on uniform angular intervals. Doubles as the
// measurement sensor set and the J0 quadrature rule, so sector boundaries of
// any m dividing phi_intervals land exactly on interval edges.
struct QuadGrid {
  double rho_min = -12.0;
  int rho_panels = 48;
  int rho_gauss = 3;
  int phi_intervals = 256;
  int phi_gauss = 2;

  std::vector<double> rho_points, rho_weights;
  std::vector<double> phi_points, phi_weights;

  int n_rho() const { return static_cast<int>(rho_points.size()); }
  int n_phi() const { return static_cast<int>(phi_points.size()); }

  static QuadGrid make(const BoundaryShape& shape, double rho_min = -12.0,
                       int rho_panels = 48, int rho_gauss = 3,
                       int phi_intervals = 256, int phi_gauss = 2) {
    QuadGrid g;
    g.rho_min = rho_min;
    g.rho_panels = rho_panels;
    g.rho_gauss = rho_gauss;
    g.phi_intervals = phi_intervals;
    g.phi_gauss = phi_gauss;
    GaussRule rg = gauss_legendre(rho_gauss);
    for (int p = 0; p < rho_panels; ++p) {
      double a = rho_min - rho_min * double(p) / rho_panels;
      double b = rho_min - rho_min * double(p + 1) / rho_panels;
      for (int q = 0; q < rho_gauss; ++q) {
        g.rho_points.push_back(0.5 * (a + b) + 0.5 * (b - a) * rg.nodes[q]);
        g.rho_weights.push_back(0.5 * (b - a) * rg.weights[q]);
      }
    }
    GaussRule pg = gauss_legendre(phi_gauss);
    double lo = shape.range_start(), hi = shape.range_end();
    for (int e = 0; e < phi_intervals; ++e) {
      double a = lo + (hi - lo) * e / phi_intervals;
      double b = lo + (hi - lo) * (e + 1) / phi_intervals;
      for (int q = 0; q < phi_gauss; ++q) {
        g.phi_points.push_back(0.5 * (a + b) + 0.5 * (b - a) * pg.nodes[q]);
        g.phi_weights.push_back(0.5 * (b - a) * pg.weights[q]);
      }
    }
    return g;
  }
};

// Displacement values and Cartesian gradients sampled on the grid,
// row = rho index, column = phi index.
struct MeasurementField {
  QuadGrid grid;
  Eigen::MatrixXd z1, z2;            // displacement components
  Eigen::MatrixXd g1x, g1y, g2x, g2y;  // d z_i / d(x,y)
  double delta = 0.0;
  std::uint64_t seed = 0;
};

inline MeasurementField sample_field(const ModalSolution& sol, const QuadGrid& grid) {
  MeasurementField f;
  f.grid = grid;
  int nr = grid.n_rho(), np = grid.n_phi();
  f.z1.resize(nr, np);
  f.z2.resize(nr, np);
  f.g1x.resize(nr, np);
  f.g1y.resize(nr, np);
  f.g2x.resize(nr, np);
  f.g2y.resize(nr, np);
  for (int i = 0; i < nr; ++i) {
    double rho = grid.rho_points[i];
    Eigen::VectorXd Uv = sol.U(rho), Up = sol.U_prime(rho);
    for (int j = 0; j < np; ++j) {
      double phi = grid.phi_points[j];
      Eigen::Vector2d u = sol.combine(Uv, phi);
      Eigen::Matrix2d g = sol.gradient_from(Uv, Up, rho, phi);
      f.z1(i, j) = u(0);
      f.z2(i, j) = u(1);
      f.g1x(i, j) = g(0, 0);
      f.g1y(i, j) = g(0, 1);
      f.g2x(i, j) = g(1, 0);
      f.g2y(i, j) = g(1, 1);
    }
  }
  return f;
}

namespace detail {
// Portable deterministic Uniform[-1, 1]: fixed transform of raw mt19937_64
// words, so synthesized measurements are bit-identical across platforms.
inline double uniform_pm1(std::mt19937_64& rng) {
  return 2.0 * ((rng() >> 11) * 0x1.0p-53) - 1.0;
}
}  // namespace detail

// Samples the truth solution on the grid and perturbs displacements with
// iid Uniform[-1,1] noise scaled by delta*max|z|, then gradients (from the
// same stream, displacement draws first) scaled by delta*max|grad z|.
inline MeasurementField synthesize_measurements(const ModalSolution& truth_sol,
                                                const QuadGrid& grid, double delta,
                                                std::uint64_t seed) {
  if (delta < 0) throw ConfigError("synthesize_measurements: delta < 0");
  MeasurementField f = sample_field(truth_sol, grid);
  f.delta = delta;
  f.seed = seed;
  if (delta == 0.0) return f;
  double u_inf = std::max(f.z1.cwiseAbs().maxCoeff(), f.z2.cwiseAbs().maxCoeff());
  double g_inf = std::max(std::max(f.g1x.cwiseAbs().maxCoeff(), f.g1y.cwiseAbs().maxCoeff()),
                          std::max(f.g2x.cwiseAbs().maxCoeff(), f.g2y.cwiseAbs().maxCoeff()));
  std::mt19937_64 rng(seed);
  for (int i = 0; i < f.z1.rows(); ++i)
    for (int j = 0; j < f.z1.cols(); ++j) {
      f.z1(i, j) += delta * u_inf * detail::uniform_pm1(rng);
      f.z2(i, j) += delta * u_inf * detail::uniform_pm1(rng);
    }
  for (int i = 0; i < f.z1.rows(); ++i)
    for (int j = 0; j < f.z1.cols(); ++j) {
      f.g1x(i, j) += delta * g_inf * detail::uniform_pm1(rng);
      f.g1y(i, j) += delta * g_inf * detail::uniform_pm1(rng);
      f.g2x(i, j) += delta * g_inf * detail::uniform_pm1(rng);
      f.g2y(i, j) += delta * g_inf * detail::uniform_pm1(rng);
    }
  return f;
}

// Energy misfit: half the a_h-weighted elastic energy of u[a_h] - z,
// integrated with the area element e^{2 rho} rt^2.
inline double compute_J0(const PiecewiseMaterial& a_h, const ModalSolution& sol,
                         const MeasurementField& z) {
  const QuadGrid& g = z.grid;
  const BoundaryShape& shape = sol.shape;
  double acc = 0.0;
  for (int i = 0; i < g.n_rho(); ++i) {
    double rho = g.rho_points[i];
    double wr = g.rho_weights[i];
    Eigen::VectorXd Uv = sol.U(rho), Up = sol.U_prime(rho);
    for (int j = 0; j < g.n_phi(); ++j) {
      double phi = g.phi_points[j];
      double rt = shape.radius(phi);
      double w = wr * g.phi_weights[j] * std::exp(2.0 * rho) * rt * rt;
      Eigen::Matrix2d gu = sol.gradient_from(Uv, Up, rho, phi);
      double d1 = gu(0, 0) - z.g1x(i, j);
      double d2 = gu(1, 1) - z.g2y(i, j);
      double d3 = (gu(0, 1) - z.g1y(i, j)) + (gu(1, 0) - z.g2x(i, j));
      const AnisoTensor& t = a_h.tensor_at(phi);
      acc += 0.5 * w *
             (t.a11 * d1 * d1 + t.a22 * d2 * d2 + t.a33 * d3 * d3 +
              2.0 * t.a12 * d1 * d2 + 2.0 * t.a13 * d1 * d3 + 2.0 * t.a23 * d2 * d3);
    }
  }
  return acc;
}

// Coefficient vector layout: all m sector values of a11, then a22, a33,
// a12, a13, a23 (6m entries total).
inline Eigen::VectorXd material_to_vector(const PiecewiseMaterial& a_h) {
  int m = static_cast<int>(a_h.sectors.size());
  Eigen::VectorXd v(6 * m);
  for (int t = 0; t < m; ++t) {
    const AnisoTensor& a = a_h.sectors[t].tensor;
    v(0 * m + t) = a.a11;
    v(1 * m + t) = a.a22;
    v(2 * m + t) = a.a33;
    v(3 * m + t) = a.a12;
    v(4 * m + t) = a.a13;
    v(5 * m + t) = a.a23;
  }
  return v;
}

inline PiecewiseMaterial vector_to_material(const Eigen::VectorXd& v,
                                            const PiecewiseMaterial& like) {
  int m = static_cast<int>(like.sectors.size());
  PiecewiseMaterial out = like;
  for (int t = 0; t < m; ++t)
    out.sectors[t].tensor = AnisoTensor{v(0 * m + t), v(1 * m + t), v(2 * m + t),
                                        v(3 * m + t), v(4 * m + t), v(5 * m + t)};
  return out;
}

// Sector-wise gradient of J0 using the measured and modeled gradient fields
// only (no sensitivity solve): each coefficient's derivative is the integral,
// over its sector, of the difference between the measurement's and the
// model's corresponding quadratic strain terms.
inline Eigen::VectorXd gradient_J0(const PiecewiseMaterial& a_h,
                                   const ModalSolution& sol,
                                   const MeasurementField& z) {
  const QuadGrid& g = z.grid;
  const BoundaryShape& shape = sol.shape;
  int m = static_cast<int>(a_h.sectors.size());
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(6 * m);
  // Map each angular grid point to its sector once.
  std::vector<int> sector_of(g.n_phi());
  for (int j = 0; j < g.n_phi(); ++j) {
    double phi = g.phi_points[j];
    int t = 0;
    while (t + 1 < m && !(phi >= a_h.sectors[t].start && phi < a_h.sectors[t].end))
      ++t;
    sector_of[j] = t;
  }
  for (int i = 0; i < g.n_rho(); ++i) {
    double rho = g.rho_points[i];
    double wr = g.rho_weights[i];
    Eigen::VectorXd Uv = sol.U(rho), Up = sol.U_prime(rho);
    for (int j = 0; j < g.n_phi(); ++j) {
      double phi = g.phi_points[j];
      double rt = shape.radius(phi);
      double w = wr * g.phi_weights[j] * std::exp(2.0 * rho) * rt * rt;
      Eigen::Matrix2d gu = sol.gradient_from(Uv, Up, rho, phi);
      double u1 = gu(0, 0), u2 = gu(1, 1), u3 = gu(0, 1) + gu(1, 0);
      double z1 = z.g1x(i, j), z2 = z.g2y(i, j), z3 = z.g1y(i, j) + z.g2x(i, j);
      int t = sector_of[j];
      grad(0 * m + t) += 0.5 * w * (z1 * z1 - u1 * u1);
      grad(1 * m + t) += 0.5 * w * (z2 * z2 - u2 * u2);
      grad(2 * m + t) += 0.5 * w * (z3 * z3 - u3 * u3);
      grad(3 * m + t) += w * (z1 * z2 - u1 * u2);
      grad(4 * m + t) += w * (z1 * z3 - u1 * u3);
      grad(5 * m + t) += w * (z2 * z3 - u2 * u3);
    }
  }
  return grad;
}

// TV seminorm of the m-sector coefficients: cyclic sum of boundary-radius
// weighted jumps, per coefficient channel.
inline double compute_tv(const PiecewiseMaterial& a_h, const BoundaryShape& shape) {
  int m = static_cast<int>(a_h.sectors.size());
  Eigen::VectorXd v = material_to_vector(a_h);
  double tv = 0.0;
  for (int c = 0; c < 6; ++c)
    for (int t = 0; t < m; ++t) {
      double rt = shape.radius(a_h.sectors[t].end == shape.range_end()
                                   ? shape.range_start()
                                   : a_h.sectors[t].end);
      int next = (t + 1) % m;
      tv += rt * std::abs(v(c * m + next) - v(c * m + t));
    }
  return tv;
}

inline double sgn(double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); }

// Formal subgradient of compute_tv; differentiating the two jump terms that
// involve a^t gives +sgn at the trailing boundary and -sgn at the leading
// one, with sgn(0) = 0.
inline Eigen::VectorXd tv_subgradient(const PiecewiseMaterial& a_h,
                                      const BoundaryShape& shape) {
  int m = static_cast<int>(a_h.sectors.size());
  Eigen::VectorXd v = material_to_vector(a_h);
  Eigen::VectorXd sub = Eigen::VectorXd::Zero(6 * m);
  auto radius_at_end = [&](int t) {
    double phi = a_h.sectors[t].end;
    return shape.radius(phi == shape.range_end() ? shape.range_start() : phi);
  };
  for (int c = 0; c < 6; ++c)
    for (int t = 0; t < m; ++t) {
      int prev = (t + m - 1) % m, next = (t + 1) % m;
      sub(c * m + t) =
          sgn(v(c * m + t) - v(c * m + prev)) * radius_at_end(prev) -
          sgn(v(c * m + next) - v(c * m + t)) * radius_at_end(t);
    }
  return sub;
}

struct AdamSchedule {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double tau0 = 0.0;          // set from the initial guess if 0
  double decay_iters = 50.0;  // tau_k = tau0 / (1 + k / decay_iters)
  double decay_factor = 1.0;  // optional geometric factor: tau_k *= factor^k

  double rate(int k) const {
    double tau = tau0 / (1.0 + k / decay_iters);
    if (decay_factor != 1.0) tau *= std::pow(decay_factor, k);
    return tau;
  }
};

struct InverseConfig {
  int m = 16;
  double eta = 1e-7;  // TV weight
  AdamSchedule adam;
  double tol = 1e-5;
  int max_iter = 2000;
  double spd_floor = 1e-6;
  PiecewiseMaterial init;
  int forward_M = 128;
  int forward_order = 1;
};

struct InverseState {
  PiecewiseMaterial a_h;
  Eigen::VectorXd m1, m2;  // Adam first/second moments
  int k = 0;
  struct Record {
    int k;
    double J, J0, tv, grad_inf;
    double l1_rel_error;  // -1 when no truth supplied
  };
  std::vector<Record> history;
};

// Bias-corrected Adam update followed by per-sector SPD projection.
inline void adam_step(InverseState& st, const Eigen::VectorXd& grad,
                      const AdamSchedule& adam, double spd_floor) {
  st.k += 1;
  st.m1 = adam.beta1 * st.m1 + (1.0 - adam.beta1) * grad;
  st.m2 = adam.beta2 * st.m2.array().matrix() +
          (1.0 - adam.beta2) * grad.cwiseProduct(grad);
  double c1 = 1.0 - std::pow(adam.beta1, st.k);
  double c2 = 1.0 - std::pow(adam.beta2, st.k);
  Eigen::VectorXd v = material_to_vector(st.a_h);
  double tau = adam.rate(st.k);
  for (int i = 0; i < v.size(); ++i) {
    double mhat = st.m1(i) / c1;
    double vhat = st.m2(i) / c2;
    v(i) -= tau * mhat / (std::sqrt(vhat) + adam.eps);
  }
  PiecewiseMaterial next = vector_to_material(v, st.a_h);
  for (auto& s : next.sectors) s.tensor = spd_project(s.tensor, spd_floor);
  st.a_h = next;
}

inline double l1_relative_error(const PiecewiseMaterial& a_h,
                                const PiecewiseMaterial& truth_at_midpoints) {
  Eigen::VectorXd v = material_to_vector(a_h);
  int m = static_cast<int>(a_h.sectors.size());
  Eigen::VectorXd w(6 * m);
  for (int t = 0; t < m; ++t) {
    double mid = 0.5 * (a_h.sectors[t].start + a_h.sectors[t].end);
    const AnisoTensor& a = truth_at_midpoints.tensor_at(mid);
    w(0 * m + t) = a.a11;
    w(1 * m + t) = a.a22;
    w(2 * m + t) = a.a33;
    w(3 * m + t) = a.a12;
    w(4 * m + t) = a.a13;
    w(5 * m + t) = a.a23;
  }
  return (v - w).lpNorm<1>() / w.lpNorm<1>();
}

struct InversionProblem {
  DomainSpec domain;
  std::function<Eigen::Vector2d(double)> dirichlet;
  BodyForce body_force;
};

inline ForwardProblem forward_problem_for(const InverseConfig& cfg,
                                          const InversionProblem& pb,
                                          const PiecewiseMaterial& a_h) {
  ForwardProblem fp;
  fp.domain = pb.domain;
  fp.material = a_h;
  fp.dirichlet = pb.dirichlet;
  fp.body_force = pb.body_force;
  fp.M = cfg.forward_M;
  fp.order = cfg.forward_order;
  fp.extra_mesh_nodes = a_h.boundaries();
  return fp;
}

// Full objective J(a_h) = J0 + eta*TV with one forward solve.
inline double evaluate_J(const InverseConfig& cfg, const InversionProblem& pb,
                         const MeasurementField& z,
                         const PiecewiseMaterial& a_h) {
  ModalSolution sol = solve_forward(forward_problem_for(cfg, pb, a_h));
  return compute_J0(a_h, sol, z) +
         cfg.eta * compute_tv(a_h, pb.domain.boundary);
}

// Adam descent on J(a_h) = J0 + eta*TV with exactly one forward solve per
// iteration. Stops when the relative J change or the gradient infinity norm
// (relative to its initial value) drops below tol.
inline InverseState run_inversion(const InverseConfig& cfg,
                                  const InversionProblem& pb,
                                  const MeasurementField& z,
                                  const PiecewiseMaterial* truth = nullptr) {
  InverseState st;
  st.a_h = cfg.init;
  int n = 6 * cfg.m;
  st.m1 = Eigen::VectorXd::Zero(n);
  st.m2 = Eigen::VectorXd::Zero(n);

  AdamSchedule adam = cfg.adam;
  if (adam.tau0 == 0.0)
    adam.tau0 = 0.05 * material_to_vector(cfg.init).mean();

  double prev_J = std::numeric_limits<double>::infinity();
  double grad0_inf = -1.0;

  // Absolute floor for the misfit: the objective is quartic in the data
  // scale, so once J drops below round-off at that scale (exact data with
  // the true coefficients) relative-change tests are meaningless noise.
  double zmax = 0.0;
  for (const auto* col : {&z.z1, &z.z2, &z.g1x, &z.g1y, &z.g2x, &z.g2y})
    zmax = std::max(zmax, col->lpNorm<Eigen::Infinity>());
  double J_floor = 1e-14 * std::pow(zmax, 4);

  for (int iter = 0; iter < cfg.max_iter; ++iter) {
    ModalSolution sol = solve_forward(forward_problem_for(cfg, pb, st.a_h));

    double J0 = compute_J0(st.a_h, sol, z);
    double tv = compute_tv(st.a_h, pb.domain.boundary);
    double J = J0 + cfg.eta * tv;
    Eigen::VectorXd grad = gradient_J0(st.a_h, sol, z) +
                           cfg.eta * tv_subgradient(st.a_h, pb.domain.boundary);
    double ginf = grad.lpNorm<Eigen::Infinity>();
    if (grad0_inf < 0) grad0_inf = ginf;

    st.history.push_back({st.k, J, J0, tv, ginf,
                          truth ? l1_relative_error(st.a_h, *truth) : -1.0});

    if (J0 < J_floor) break;
    if (std::abs(J - prev_J) / std::max(std::abs(J), 1e-30) < cfg.tol) break;
    if (ginf < cfg.tol * grad0_inf) break;
    prev_J = J;

    adam_step(st, grad, adam, cfg.spd_floor);
  }
  return st;
}

}  // namespace dmol
