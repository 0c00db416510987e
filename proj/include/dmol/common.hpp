#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace dmol {

// Configuration / input validation failures (CLI exit code 2).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Failures of the numerical machinery itself (CLI exit code 3).
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr double kPi = 3.14159265358979323846;

// Gauss-Legendre nodes and weights on [-1, 1], computed by Newton iteration
// on the Legendre recurrence. Deterministic to machine precision.
struct GaussRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

inline GaussRule gauss_legendre(int n) {
  if (n < 1) throw ConfigError("gauss_legendre: order must be >= 1");
  GaussRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(kPi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    rule.nodes[i] = -x;
    rule.nodes[n - 1 - i] = x;
    double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.weights[i] = w;
    rule.weights[n - 1 - i] = w;
  }
  return rule;
}

// Maps a [-1,1] rule onto [a, b].
inline GaussRule gauss_on(double a, double b, int n) {
  GaussRule base = gauss_legendre(n);
  GaussRule out;
  out.nodes.resize(n);
  out.weights.resize(n);
  double mid = 0.5 * (a + b), half = 0.5 * (b - a);
  for (int i = 0; i < n; ++i) {
    out.nodes[i] = mid + half * base.nodes[i];
    out.weights[i] = half * base.weights[i];
  }
  return out;
}

}  // namespace dmol
