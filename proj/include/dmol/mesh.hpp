#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "dmol/common.hpp"
#include "dmol/geometry.hpp"

namespace dmol {

// Angular finite-element mesh. Nodes phi_1 < ... < phi_{M+1} span the full
// angular range; periodic meshes identify the two end nodes.
//
// Scalar dof layout: vertex dofs first (periodic: M, slit: M+1), then for
// order 2 the element-midpoint dofs (M). Vector dofs stack the two
// displacement components block-wise: component c, scalar dof i -> c*dofs+i.
struct AngularMesh {
  std::vector<double> nodes;  // M+1 entries
  int order = 1;              // 1 | 2
  PeriodType period_type = PeriodType::Periodic;

  int element_count() const { return static_cast<int>(nodes.size()) - 1; }

  int vertex_dof_count() const {
    return period_type == PeriodType::Periodic ? element_count()
                                               : element_count() + 1;
  }

  int dof_count() const {
    int m = element_count();
    return vertex_dof_count() + (order == 2 ? m : 0);
  }

  double h() const {
    double hmax = 0.0;
    for (int e = 0; e < element_count(); ++e)
      hmax = std::max(hmax, nodes[e + 1] - nodes[e]);
    return hmax;
  }

  int vertex_dof(int node_index) const {
    if (period_type == PeriodType::Periodic && node_index == element_count())
      return 0;
    return node_index;
  }

  int midpoint_dof(int elem) const { return vertex_dof_count() + elem; }

  // Angular positions of the scalar dofs, in dof order.
  std::vector<double> dof_positions() const {
    std::vector<double> pos(nodes.begin(), nodes.begin() + vertex_dof_count());
    if (order == 2)
      for (int e = 0; e < element_count(); ++e)
        pos.push_back(0.5 * (nodes[e] + nodes[e + 1]));
    return pos;
  }

  int element_of(double phi) const {
    if (phi < nodes.front() - 1e-12 || phi > nodes.back() + 1e-12)
      throw std::domain_error("AngularMesh: angle outside range");
    auto it = std::upper_bound(nodes.begin(), nodes.end(), phi);
    int e = static_cast<int>(it - nodes.begin()) - 1;
    return std::clamp(e, 0, element_count() - 1);
  }

  // Local basis values and derivatives at phi: up to 3 (scalar dof, value,
  // derivative) triples on the owning element.
  struct BasisSample {
    int elem = 0;
    int count = 0;
    std::array<int, 3> dofs{};
    std::array<double, 3> val{};
    std::array<double, 3> deriv{};
  };

  BasisSample basis_at(double phi) const { return basis_on(element_of(phi), phi); }

  BasisSample basis_on(int elem, double phi) const {
    BasisSample s;
    s.elem = elem;
    double a = nodes[elem], b = nodes[elem + 1], L = b - a;
    double x = (phi - a) / L;
    if (order == 1) {
      s.count = 2;
      s.dofs = {vertex_dof(elem), vertex_dof(elem + 1), 0};
      s.val = {1.0 - x, x, 0.0};
      s.deriv = {-1.0 / L, 1.0 / L, 0.0};
    } else {
      s.count = 3;
      s.dofs = {vertex_dof(elem), midpoint_dof(elem), vertex_dof(elem + 1)};
      s.val = {(1 - x) * (1 - 2 * x), 4 * x * (1 - x), x * (2 * x - 1)};
      s.deriv = {(4 * x - 3) / L, (4 - 8 * x) / L, (4 * x - 1) / L};
    }
    return s;
  }
};

// Uniform mesh with the nearest nodes snapped onto every required angle
// (material interfaces, boundary-segment breakpoints, caller extras).
inline AngularMesh build_mesh(const DomainSpec& domain, int M, int order,
                              const std::vector<double>& extra_nodes = {}) {
  if (order != 1 && order != 2)
    throw ConfigError("build_mesh: order must be 1 or 2");
  if (M < static_cast<int>(domain.interfaces.size()))
    throw ConfigError("build_mesh: M must be at least the interface count");

  double lo = domain.boundary.range_start(), hi = domain.boundary.range_end();
  AngularMesh mesh;
  mesh.order = order;
  mesh.period_type = domain.boundary.period_type;
  mesh.nodes.resize(M + 1);
  for (int i = 0; i <= M; ++i) mesh.nodes[i] = lo + (hi - lo) * i / M;
  mesh.nodes[M] = hi;

  std::vector<double> required = domain.interfaces;
  for (double b : domain.boundary.breakpoints()) required.push_back(b);
  for (double b : extra_nodes) required.push_back(b);

  double h_unif = (hi - lo) / M;
  for (double theta : required) {
    if (theta <= lo + 1e-12 || theta >= hi - 1e-12) continue;
    int j = static_cast<int>(std::lround((theta - lo) / h_unif));
    j = std::clamp(j, 1, M - 1);
    mesh.nodes[j] = theta;
  }
  std::sort(mesh.nodes.begin(), mesh.nodes.end());

  // Keep element widths within 2x of the uniform width.
  for (int e = 0; e < M; ++e) {
    double w = mesh.nodes[e + 1] - mesh.nodes[e];
    if (w < 1e-12 || w > 2.0 * h_unif + 1e-12)
      throw ConfigError("build_mesh: required angles too clustered for M");
  }
  return mesh;
}

}  // namespace dmol
