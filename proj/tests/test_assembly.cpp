#include <catch2/catch_amalgamated.hpp>

#include "dmol/assembly.hpp"

using namespace dmol;

namespace {

DomainSpec two_phase_star3() {
  DomainSpec d;
  d.boundary = preset_shape("star3");
  d.interfaces = {0.0, kPi};
  return d;
}

PiecewiseMaterial two_phase_material(const DomainSpec& d) {
  return PiecewiseMaterial::over_domain(
      d, {AnisoTensor{8, 6, 4, 1, 1, 1}, AnisoTensor{4, 3, 2, 1, 0.5, 0.5}});
}

}  // namespace

TEST_CASE("mesh construction snaps required angles onto nodes") {
  DomainSpec d = two_phase_star3();
  AngularMesh mesh = build_mesh(d, 16, 1);
  REQUIRE(mesh.element_count() == 16);
  bool found = false;
  for (double n : mesh.nodes) found |= std::abs(n - kPi) < 1e-14;
  REQUIRE(found);
  // crack3piece boundary breakpoints at +-pi/2 must be snapped as well
  DomainSpec c;
  c.boundary = preset_shape("crack3piece");
  c.interfaces = {-kPi};
  AngularMesh cm = build_mesh(c, 16, 2);
  int hits = 0;
  for (double n : cm.nodes)
    if (std::abs(std::abs(n) - kPi / 2) < 1e-14) ++hits;
  REQUIRE(hits == 2);
}

TEST_CASE("dof counts: periodic identifies endpoints, slit keeps both") {
  DomainSpec d = two_phase_star3();
  REQUIRE(build_mesh(d, 12, 1).dof_count() == 12);
  REQUIRE(build_mesh(d, 12, 2).dof_count() == 24);
  DomainSpec c;
  c.boundary = preset_shape("crack3piece");
  c.interfaces = {-kPi};
  REQUIRE(build_mesh(c, 12, 1).dof_count() == 13);
  REQUIRE(build_mesh(c, 12, 2).dof_count() == 25);
}

TEST_CASE("basis functions form a partition of unity") {
  DomainSpec d = two_phase_star3();
  for (int order : {1, 2}) {
    AngularMesh mesh = build_mesh(d, 10, order);
    for (int i = 0; i < 50; ++i) {
      double phi = 2 * kPi * (i + 0.5) / 50;
      auto bs = mesh.basis_at(phi);
      double sum = 0, dsum = 0;
      for (int j = 0; j < bs.count; ++j) {
        sum += bs.val[j];
        dsum += bs.deriv[j];
      }
      REQUIRE(sum == Catch::Approx(1.0).margin(1e-12));
      REQUIRE(dsum == Catch::Approx(0.0).margin(1e-9));
    }
  }
}

TEST_CASE("pencil matrices have the required algebraic structure") {
  DomainSpec d = two_phase_star3();
  PiecewiseMaterial mat = two_phase_material(d);
  for (int order : {1, 2}) {
    AngularMesh mesh = build_mesh(d, 16, order);
    SystemMatrices sys = assemble(mesh, d.boundary, mat);
    int n = sys.size();
    REQUIRE(n == 2 * mesh.dof_count());

    // B1 antisymmetric, B0 and B2 symmetric
    REQUIRE((sys.B1 + sys.B1.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    REQUIRE((sys.B0 - sys.B0.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    REQUIRE((sys.B2 - sys.B2.transpose()).cwiseAbs().maxCoeff() < 1e-12);

    // B2 SPD
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> e2(sys.B2);
    REQUIRE(e2.eigenvalues()(0) > 0.0);

    // B0 negative semi-definite with constants (per component) in its kernel
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> e0(sys.B0);
    REQUIRE(e0.eigenvalues()(n - 1) < 1e-10);
    Eigen::VectorXd ones = Eigen::VectorXd::Zero(n);
    ones.head(n / 2).setOnes();
    REQUIRE((sys.B0 * ones).cwiseAbs().maxCoeff() < 1e-10);
    // constants also null the derivative couplings on the B1 side that pair
    // against d/dphi of the test function
    Eigen::VectorXd ones2 = Eigen::VectorXd::Zero(n);
    ones2.tail(n / 2).setOnes();
    REQUIRE((sys.B0 * ones2).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("assembly rejects meshes that miss an interface") {
  DomainSpec d = two_phase_star3();
  PiecewiseMaterial mat = two_phase_material(d);
  AngularMesh mesh = build_mesh(d, 16, 1);
  // knock the interface node off the interface
  for (auto& n : mesh.nodes)
    if (std::abs(n - kPi) < 1e-14) n += 0.01;
  std::sort(mesh.nodes.begin(), mesh.nodes.end());
  REQUIRE_THROWS_AS(assemble(mesh, d.boundary, mat), NumericalError);
}

TEST_CASE("force projection matches analytic integrals on the disk") {
  // Unit disk, constant force p = (1, 0): G_i = -int rt^2 p . BF_i dphi, and
  // for P1 hat functions on a uniform mesh each entry is -h (component 1)
  // or 0 (component 2).
  DomainSpec d;
  d.boundary = preset_shape("circle");
  d.interfaces = {0.0};
  int M = 16;
  AngularMesh mesh = build_mesh(d, M, 1);
  Eigen::VectorXd G = assemble_force_projection(
      mesh, d.boundary, [](double) { return Eigen::Vector2d(1.0, 0.0); });
  double h = 2 * kPi / M;
  for (int i = 0; i < mesh.dof_count(); ++i) {
    REQUIRE(G(i) == Catch::Approx(-h).margin(1e-12));
    REQUIRE(G(mesh.dof_count() + i) == Catch::Approx(0.0).margin(1e-12));
  }
}
