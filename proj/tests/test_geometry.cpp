#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "dmol/geometry.hpp"

using namespace dmol;

TEST_CASE("preset shapes validate and close up") {
  for (const char* name : {"star5", "star3", "roundedSquare", "circle"}) {
    BoundaryShape s = preset_shape(name);
    REQUIRE_NOTHROW(s.validate());
    REQUIRE(s.period_type == PeriodType::Periodic);
    REQUIRE(s.range_start() == 0.0);
    REQUIRE(s.range_end() == Catch::Approx(2 * kPi));
  }
  BoundaryShape c = preset_shape("crack3piece");
  REQUIRE_NOTHROW(c.validate());
  REQUIRE(c.period_type == PeriodType::Slit);
  REQUIRE(c.range_start() == Catch::Approx(-kPi));
  REQUIRE(c.range_end() == Catch::Approx(kPi));
  REQUIRE_THROWS_AS(preset_shape("nope"), ConfigError);
}

TEST_CASE("slit flanks are straight lines one unit from the origin") {
  // The two crack flanks must trace the straight segment through the lower
  // half-plane with the boundary one unit away: x + y = -1 on the left
  // flank, x - y = -1 on the right flank.
  BoundaryShape c = preset_shape("crack3piece");
  for (int i = 1; i < 20; ++i) {
    double phi = -kPi + (kPi / 2) * i / 20.0;
    auto [x, y] = map_to_cartesian(c, 0.0, phi);
    REQUIRE(x + y == Catch::Approx(-1.0).margin(1e-12));
    auto [xr, yr] = map_to_cartesian(c, 0.0, kPi - (phi + kPi));
    REQUIRE(xr - yr == Catch::Approx(-1.0).margin(1e-12));
  }
}

TEST_CASE("wrap maps angles into the fundamental range") {
  BoundaryShape s = preset_shape("star5");
  REQUIRE(s.wrap(2 * kPi + 0.3) == Catch::Approx(0.3));
  REQUIRE(s.wrap(-0.3) == Catch::Approx(2 * kPi - 0.3));
  REQUIRE(s.radius(s.wrap(7 * kPi + 0.1)) ==
          Catch::Approx(s.radius(kPi + 0.1)));
}

TEST_CASE("inverse-map rows satisfy the chain rule") {
  // Check J = d(rho,phi)/d(x,y) by finite differences of the forward map:
  // jacobian_rows must be the inverse of d(x,y)/d(rho,phi).
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> rd(-3.0, -0.1), pd(0.0, 2 * kPi);
  for (const char* name : {"star5", "roundedSquare"}) {
    BoundaryShape s = preset_shape(name);
    for (int t = 0; t < 50; ++t) {
      double rho = rd(rng), phi = pd(rng), h = 1e-6;
      auto [xp, yp] = map_to_cartesian(s, rho + h, phi);
      auto [xm, ym] = map_to_cartesian(s, rho - h, phi);
      auto [xq, yq] = map_to_cartesian(s, rho, phi + h);
      auto [xn, yn] = map_to_cartesian(s, rho, phi - h);
      Eigen::Matrix2d F;  // d(x,y)/d(rho,phi)
      F << (xp - xm) / (2 * h), (xq - xn) / (2 * h), (yp - ym) / (2 * h),
          (yq - yn) / (2 * h);
      Eigen::Matrix2d J = jacobian_rows(s, rho, phi);
      REQUIRE(((J * F) - Eigen::Matrix2d::Identity()).cwiseAbs().maxCoeff() <
              1e-6);
    }
  }
}

TEST_CASE("map covers the star-shaped region (Monte Carlo area)") {
  // Integrate the area two ways: the exact polar formula for
  // rt = sqrt(2 + cos 5 phi) gives  area = (1/2) int rt^2 = 2 pi,
  // and Monte Carlo point classification through the radius function.
  BoundaryShape s = preset_shape("star5");
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> xy(-2.0, 2.0);
  int inside = 0, n = 200000;
  for (int i = 0; i < n; ++i) {
    double x = xy(rng), y = xy(rng);
    double r = std::hypot(x, y), phi = std::atan2(y, x);
    if (r < s.radius(s.wrap(phi))) ++inside;
  }
  double area = 16.0 * inside / n;
  REQUIRE(area == Catch::Approx(2 * kPi).epsilon(0.01));
}

TEST_CASE("spline segments reproduce smooth radii") {
  std::vector<double> phi, r;
  for (int i = 0; i <= 40; ++i) {
    double p = 2 * kPi * i / 40.0;
    phi.push_back(p);
    r.push_back(std::sqrt(2.0 + std::cos(3.0 * p)));
  }
  BoundarySegment seg = make_spline_segment(phi, r);
  for (int i = 0; i < 100; ++i) {
    double p = 2 * kPi * (i + 0.5) / 100.0;
    REQUIRE(seg.r(p) == Catch::Approx(std::sqrt(2.0 + std::cos(3.0 * p)))
                            .margin(2e-3));
  }
}

TEST_CASE("domain validation rejects malformed interface lists") {
  DomainSpec d;
  d.boundary = preset_shape("circle");
  d.interfaces = {0.0, kPi / 2, kPi};
  REQUIRE_NOTHROW(d.validate());

  DomainSpec bad = d;
  bad.interfaces = {0.1, kPi};
  REQUIRE_THROWS_AS(bad.validate(), ConfigError);  // must start at range start
  bad.interfaces = {0.0, kPi, kPi / 2};
  REQUIRE_THROWS_AS(bad.validate(), ConfigError);  // not increasing
  bad.interfaces = {0.0, 2 * kPi};
  REQUIRE_THROWS_AS(bad.validate(), ConfigError);  // at range end
  bad.interfaces = {};
  REQUIRE_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("validation catches inconsistent derivative data") {
  BoundaryShape s;
  BoundarySegment seg;
  seg.phi_start = 0.0;
  seg.phi_end = 2 * kPi;
  seg.r = [](double p) { return 2.0 + std::sin(p); };
  seg.r_prime = [](double) { return 0.0; };  // wrong on purpose
  s.segments = {seg};
  REQUIRE_THROWS_AS(s.validate(), ConfigError);
}
