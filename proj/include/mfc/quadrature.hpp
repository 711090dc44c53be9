#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "core.hpp"

namespace mfc {

/// Nodes and weights of a one-dimensional rule.
struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;

  std::size_t size() const { return nodes.size(); }

  template <class F>
  double apply(F&& f) const {
    double s = 0.0;
    for (std::size_t i = 0; i < nodes.size(); ++i) s += weights[i] * f(nodes[i]);
    return s;
  }
};

/// Gauss-Legendre rule on [-1, 1] (Newton iteration on the three-term recurrence).
inline QuadratureRule gauss_legendre(std::size_t n) {
  require(n >= 1, "gauss_legendre: order must be positive");
  QuadratureRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  const std::size_t half = (n + 1) / 2;
  for (std::size_t i = 0; i < half; ++i) {
    double z = std::cos(pi * (static_cast<double>(i) + 0.75) / (static_cast<double>(n) + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0;
      double p1 = 0.0;
      for (std::size_t j = 1; j <= n; ++j) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j - 1.0) * z * p1 - (j - 1.0) * p2) / static_cast<double>(j);
      }
      dp = static_cast<double>(n) * (z * p0 - p1) / (z * z - 1.0);
      const double dz = p0 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    // Recompute the derivative at the converged node.
    double p0 = 1.0;
    double p1 = 0.0;
    for (std::size_t j = 1; j <= n; ++j) {
      const double p2 = p1;
      p1 = p0;
      p0 = ((2.0 * j - 1.0) * z * p1 - (j - 1.0) * p2) / static_cast<double>(j);
    }
    dp = static_cast<double>(n) * (z * p0 - p1) / (z * z - 1.0);
    const double w = 2.0 / ((1.0 - z * z) * dp * dp);
    rule.nodes[i] = -z;
    rule.nodes[n - 1 - i] = z;
    rule.weights[i] = w;
    rule.weights[n - 1 - i] = w;
  }
  if (n % 2 == 1) rule.nodes[n / 2] = 0.0;
  return rule;
}

/// Gauss-Hermite rule for the weight exp(-x^2) on the real line.
///
/// Newton iteration on the orthonormal Hermite recurrence with the usual
/// asymptotic starting guesses; stable well past order 200.
inline QuadratureRule gauss_hermite(std::size_t n) {
  require(n >= 1, "gauss_hermite: order must be positive");
  QuadratureRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  const double pim4 = std::pow(pi, -0.25);
  const double dn = static_cast<double>(n);
  const std::size_t m = (n + 1) / 2;
  double z = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    if (i == 0) {
      z = std::sqrt(2.0 * dn + 1.0) - 1.85575 * std::pow(2.0 * dn + 1.0, -1.0 / 6.0);
    } else if (i == 1) {
      z -= 1.14 * std::pow(dn, 0.426) / z;
    } else if (i == 2) {
      z = 1.86 * z - 0.86 * rule.nodes[0];
    } else if (i == 3) {
      z = 1.91 * z - 0.91 * rule.nodes[1];
    } else {
      z = 2.0 * z - rule.nodes[i - 2];
    }
    double pp = 0.0;
    for (int iter = 0; iter < 200; ++iter) {
      double p1 = pim4;
      double p2 = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double p3 = p2;
        p2 = p1;
        const double dj = static_cast<double>(j);
        p1 = z * std::sqrt(2.0 / (dj + 1.0)) * p2 - std::sqrt(dj / (dj + 1.0)) * p3;
      }
      pp = std::sqrt(2.0 * dn) * p2;
      const double z1 = z;
      z = z1 - p1 / pp;
      if (std::abs(z - z1) <= 1e-15 * std::max(1.0, std::abs(z))) break;
    }
    // nodes stored descending for the starting-guess recursion, fixed below
    rule.nodes[i] = z;
    rule.nodes[n - 1 - i] = -z;
    rule.weights[i] = 2.0 / (pp * pp);
    rule.weights[n - 1 - i] = rule.weights[i];
  }
  if (n % 2 == 1) rule.nodes[n / 2] = 0.0;
  // ascending order
  std::vector<double> nodes(rule.nodes.rbegin(), rule.nodes.rend());
  std::vector<double> weights(rule.weights.rbegin(), rule.weights.rend());
  rule.nodes = std::move(nodes);
  rule.weights = std::move(weights);
  return rule;
}

/// Breakpoints R * (k / P)^grading, k = 0..P.
inline std::vector<double> graded_breakpoints(double radius, std::size_t panels, double grading) {
  require(panels >= 1, "graded_breakpoints: need at least one panel");
  require(radius > 0.0 && grading >= 1.0, "graded_breakpoints: radius > 0 and grading >= 1");
  std::vector<double> b(panels + 1);
  for (std::size_t k = 0; k <= panels; ++k) {
    b[k] = radius * std::pow(static_cast<double>(k) / static_cast<double>(panels), grading);
  }
  b.back() = radius;
  return b;
}

/// Composite Gauss-Legendre rule over consecutive breakpoints.
inline QuadratureRule composite_gauss_legendre(const std::vector<double>& breakpoints,
                                               std::size_t nodes_per_panel) {
  const QuadratureRule base = gauss_legendre(nodes_per_panel);
  QuadratureRule rule;
  rule.nodes.reserve((breakpoints.size() - 1) * nodes_per_panel);
  rule.weights.reserve(rule.nodes.capacity());
  for (std::size_t p = 0; p + 1 < breakpoints.size(); ++p) {
    const double a = breakpoints[p];
    const double b = breakpoints[p + 1];
    const double mid = 0.5 * (a + b);
    const double half = 0.5 * (b - a);
    for (std::size_t i = 0; i < base.size(); ++i) {
      rule.nodes.push_back(mid + half * base.nodes[i]);
      rule.weights.push_back(half * base.weights[i]);
    }
  }
  return rule;
}

/// Integral of f over [R, infinity) through the map x = R / u.
template <class F>
double integrate_tail(F&& f, double radius, std::size_t order = 96) {
  const QuadratureRule rule = composite_gauss_legendre(graded_breakpoints(1.0, 8, 2.0), order / 8);
  double s = 0.0;
  for (std::size_t i = 0; i < rule.size(); ++i) {
    const double u = rule.nodes[i];
    s += rule.weights[i] * f(radius / u) * radius / (u * u);
  }
  return s;
}

}  // namespace mfc
