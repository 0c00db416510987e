#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <utility>

#include "dmol/common.hpp"

namespace dmol {

enum class PeriodType { Periodic, Slit };

// One smooth piece of the radial boundary description r = rt(phi).
struct BoundarySegment {
  double phi_start = 0.0;
  double phi_end = 0.0;
  std::function<double(double)> r;
  std::function<double(double)> r_prime;
};

// Piecewise-C1 star-shaped boundary, r = rt(phi) about the origin.
// Periodic shapes cover a full turn; slit shapes cover an open angular
// range (phi_min, phi_max) with no wraparound.
struct BoundaryShape {
  std::vector<BoundarySegment> segments;
  PeriodType period_type = PeriodType::Periodic;

  double range_start() const { return segments.front().phi_start; }
  double range_end() const { return segments.back().phi_end; }

  bool contains(double phi) const {
    return phi >= range_start() - 1e-12 && phi <= range_end() + 1e-12;
  }

  // Segment owning phi: half-open [start, end), last segment closed.
  const BoundarySegment& segment_at(double phi) const {
    if (!contains(phi))
      throw std::domain_error("BoundaryShape: angle outside angular range");
    for (std::size_t i = 0; i + 1 < segments.size(); ++i)
      if (phi < segments[i].phi_end) return segments[i];
    return segments.back();
  }

  double radius(double phi) const { return segment_at(phi).r(phi); }
  double radius_prime(double phi) const { return segment_at(phi).r_prime(phi); }

  // Wraps an arbitrary angle into the angular range (periodic shapes only).
  double wrap(double phi) const {
    if (period_type == PeriodType::Slit) return phi;
    double lo = range_start(), span = range_end() - lo;
    double t = std::fmod(phi - lo, span);
    if (t < 0) t += span;
    return lo + t;
  }

  // Interior segment breakpoints (excludes range endpoints).
  std::vector<double> breakpoints() const {
    std::vector<double> out;
    for (std::size_t i = 0; i + 1 < segments.size(); ++i)
      out.push_back(segments[i].phi_end);
    return out;
  }

  double min_radius(int samples = 10000) const {
    double lo = range_start(), hi = range_end();
    double rmin = std::numeric_limits<double>::max();
    for (int i = 0; i <= samples; ++i) {
      double phi = lo + (hi - lo) * i / samples;
      rmin = std::min(rmin, radius(phi));
    }
    return rmin;
  }

  void validate() const {
    if (segments.empty()) throw ConfigError("BoundaryShape: no segments");
    for (std::size_t i = 0; i + 1 < segments.size(); ++i) {
      if (std::abs(segments[i].phi_end - segments[i + 1].phi_start) > 1e-12)
        throw ConfigError("BoundaryShape: segment gap or overlap");
    }
    for (const auto& s : segments)
      if (!(s.phi_end > s.phi_start))
        throw ConfigError("BoundaryShape: empty segment");
    if (min_radius(1000) <= 0.0)
      throw ConfigError("BoundaryShape: radius must stay positive");
    if (period_type == PeriodType::Periodic) {
      double r0 = segments.front().r(range_start());
      double r1 = segments.back().r(range_end());
      if (std::abs(r0 - r1) > 1e-10 * std::max(1.0, std::abs(r0)))
        throw ConfigError("BoundaryShape: periodic closure violated");
    }
    // Central-difference consistency of r_prime within each segment.
    for (const auto& s : segments) {
      double w = s.phi_end - s.phi_start;
      double dh = 1e-6 * w;
      for (int i = 1; i < 100; ++i) {
        double phi = s.phi_start + w * i / 100.0;
        if (phi - dh <= s.phi_start || phi + dh >= s.phi_end) continue;
        double fd = (s.r(phi + dh) - s.r(phi - dh)) / (2 * dh);
        double an = s.r_prime(phi);
        double scale = std::max({1.0, std::abs(fd), std::abs(an)});
        if (std::abs(fd - an) > 1e-6 * scale)
          throw ConfigError("BoundaryShape: r_prime inconsistent with r");
      }
    }
  }
};

// Composite domain: boundary plus sorted material interface angles.
// Subdomain k is the angular sector (theta_k, theta_{k+1}).
struct DomainSpec {
  BoundaryShape boundary;
  std::vector<double> interfaces;  // theta_1 < ... < theta_K, theta_1 = range start

  void validate() const {
    boundary.validate();
    if (interfaces.empty()) throw ConfigError("DomainSpec: needs K >= 1 interfaces");
    if (std::abs(interfaces.front() - boundary.range_start()) > 1e-12)
      throw ConfigError("DomainSpec: first interface must sit at range start");
    for (std::size_t i = 0; i + 1 < interfaces.size(); ++i)
      if (!(interfaces[i] < interfaces[i + 1]))
        throw ConfigError("DomainSpec: interfaces must be strictly increasing");
    if (interfaces.back() >= boundary.range_end() - 1e-12 && interfaces.size() > 1)
      throw ConfigError("DomainSpec: interface at or beyond range end");
  }
};

// (x, y) = e^rho * rt(phi) * (cos phi, sin phi). Boundary points have rho = 0.
inline std::pair<double, double> map_to_cartesian(const BoundaryShape& shape,
                                                  double rho, double phi) {
  if (rho > 1e-14) throw std::domain_error("map_to_cartesian: rho must be <= 0");
  double r = std::exp(rho) * shape.radius(phi);
  return {r * std::cos(phi), r * std::sin(phi)};
}

// Rows (d rho/dx, d rho/dy; d phi/dx, d phi/dy) of the inverse map.
inline Eigen::Matrix2d jacobian_rows(const BoundaryShape& shape, double rho,
                                     double phi) {
  double rt = shape.radius(phi), rp = shape.radius_prime(phi);
  double c = std::cos(phi), s = std::sin(phi);
  double scale = 1.0 / (std::exp(rho) * rt * rt);
  Eigen::Matrix2d J;
  J(0, 0) = scale * (rp * s + rt * c);
  J(0, 1) = scale * (-rp * c + rt * s);
  J(1, 0) = scale * (-rt * s);
  J(1, 1) = scale * (rt * c);
  return J;
}

namespace detail {

// Cubic spline with not-a-knot end conditions; used for tabulated boundaries.
class NotAKnotSpline {
 public:
  NotAKnotSpline(std::vector<double> x, std::vector<double> y)
      : x_(std::move(x)), y_(std::move(y)) {
    int n = static_cast<int>(x_.size());
    if (n < 4) throw ConfigError("spline shape: need at least 4 sample points");
    for (int i = 0; i + 1 < n; ++i)
      if (!(x_[i] < x_[i + 1]))
        throw ConfigError("spline shape: sample angles must increase");
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
    auto h = [&](int i) { return x_[i + 1] - x_[i]; };
    for (int i = 1; i < n - 1; ++i) {
      A(i, i - 1) = h(i - 1);
      A(i, i) = 2.0 * (h(i - 1) + h(i));
      A(i, i + 1) = h(i);
      rhs(i) = 6.0 * ((y_[i + 1] - y_[i]) / h(i) - (y_[i] - y_[i - 1]) / h(i - 1));
    }
    // not-a-knot: third derivative continuous at x1 and x_{n-2}
    A(0, 0) = h(1);
    A(0, 1) = -(h(0) + h(1));
    A(0, 2) = h(0);
    A(n - 1, n - 3) = h(n - 2);
    A(n - 1, n - 2) = -(h(n - 3) + h(n - 2));
    A(n - 1, n - 1) = h(n - 3);
    m_ = A.partialPivLu().solve(rhs);
  }

  double eval(double x) const {
    int i = interval(x);
    double h = x_[i + 1] - x_[i], a = (x_[i + 1] - x) / h, b = (x - x_[i]) / h;
    return a * y_[i] + b * y_[i + 1] +
           ((a * a * a - a) * m_(i) + (b * b * b - b) * m_(i + 1)) * h * h / 6.0;
  }

  double deriv(double x) const {
    int i = interval(x);
    double h = x_[i + 1] - x_[i], a = (x_[i + 1] - x) / h, b = (x - x_[i]) / h;
    return (y_[i + 1] - y_[i]) / h +
           ((3 * b * b - 1) * m_(i + 1) - (3 * a * a - 1) * m_(i)) * h / 6.0;
  }

 private:
  int interval(double x) const {
    auto it = std::upper_bound(x_.begin(), x_.end(), x);
    int i = static_cast<int>(it - x_.begin()) - 1;
    return std::clamp(i, 0, static_cast<int>(x_.size()) - 2);
  }
  std::vector<double> x_, y_;
  Eigen::VectorXd m_;
};

}  // namespace detail

// Boundary segment interpolating tabulated (phi, r) samples with a cubic
// not-a-knot spline; r' is the spline derivative.
inline BoundarySegment make_spline_segment(const std::vector<double>& phi,
                                           const std::vector<double>& r) {
  auto sp = std::make_shared<detail::NotAKnotSpline>(phi, r);
  BoundarySegment seg;
  seg.phi_start = phi.front();
  seg.phi_end = phi.back();
  seg.r = [sp](double p) { return sp->eval(p); };
  seg.r_prime = [sp](double p) { return sp->deriv(p); };
  return seg;
}

// The four boundaries used throughout the experiments.
inline BoundaryShape preset_shape(const std::string& name) {
  BoundaryShape shape;
  if (name == "star5" || name == "star3") {
    double k = (name == "star5") ? 5.0 : 3.0;
    BoundarySegment seg;
    seg.phi_start = 0.0;
    seg.phi_end = 2.0 * kPi;
    seg.r = [k](double p) { return std::sqrt(2.0 + std::cos(k * p)); };
    seg.r_prime = [k](double p) {
      return -k * std::sin(k * p) / (2.0 * std::sqrt(2.0 + std::cos(k * p)));
    };
    shape.segments = {seg};
    shape.period_type = PeriodType::Periodic;
  } else if (name == "roundedSquare") {
    BoundarySegment seg;
    seg.phi_start = 0.0;
    seg.phi_end = 2.0 * kPi;
    auto g = [](double p) {
      double s = std::sin(p), c = std::cos(p);
      return s * s * s * s + c * c * c * c;
    };
    seg.r = [g](double p) { return 1.0 / std::sqrt(g(p)); };
    seg.r_prime = [g](double p) {
      // g' = -sin(4 phi)
      return 0.5 * std::sin(4.0 * p) / std::pow(g(p), 1.5);
    };
    shape.segments = {seg};
    shape.period_type = PeriodType::Periodic;
  } else if (name == "crack3piece") {
    // Slit domain on (-pi, pi): two straight flanks joined by a quartic bulge.
    BoundarySegment left, mid, right;
    left.phi_start = -kPi;
    left.phi_end = -kPi / 2.0;
    left.r = [](double p) { return -1.0 / (std::sin(p) + std::cos(p)); };
    left.r_prime = [](double p) {
      double d = std::sin(p) + std::cos(p);
      return (std::cos(p) - std::sin(p)) / (d * d);
    };
    auto g = [](double p) {
      double s = std::sin(p), c = std::cos(p);
      return s * s * s * s + c * c * c * c;
    };
    mid.phi_start = -kPi / 2.0;
    mid.phi_end = kPi / 2.0;
    mid.r = [g](double p) { return 1.0 / g(p); };
    mid.r_prime = [g](double p) {
      double gg = g(p);
      return std::sin(4.0 * p) / (gg * gg);
    };
    right.phi_start = kPi / 2.0;
    right.phi_end = kPi;
    right.r = [](double p) { return -1.0 / (-std::sin(p) + std::cos(p)); };
    right.r_prime = [](double p) {
      double d = std::sin(p) - std::cos(p);
      return -(std::cos(p) + std::sin(p)) / (d * d);
    };
    shape.segments = {left, mid, right};
    shape.period_type = PeriodType::Slit;
  } else if (name == "circle") {
    BoundarySegment seg;
    seg.phi_start = 0.0;
    seg.phi_end = 2.0 * kPi;
    seg.r = [](double) { return 1.0; };
    seg.r_prime = [](double) { return 0.0; };
    shape.segments = {seg};
    shape.period_type = PeriodType::Periodic;
  } else {
    throw ConfigError("unknown shape preset: " + name);
  }
  return shape;
}

}  // namespace dmol
