#pragma once

// Reference computations that share no code with the library.

#include <Eigen/Dense>
#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <cmath>
#include <limits>
#include <utility>
#include <vector>

namespace oracle {

inline constexpr double pi = 3.14159265358979323846;

/// Gauss-Hermite nodes and weights (weight e^{-x^2}) from the Jacobi matrix eigenproblem.
inline std::pair<std::vector<double>, std::vector<double>> golub_welsch_hermite(int n) {
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (int i = 1; i < n; ++i) {
    J(i, i - 1) = J(i - 1, i) = std::sqrt(0.5 * i);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  std::vector<double> x(n), w(n);
  for (int i = 0; i < n; ++i) {
    x[i] = es.eigenvalues()(i);
    const double v = es.eigenvectors()(0, i);
    w[i] = std::sqrt(pi) * v * v;
  }
  return {x, w};
}

/// E f(m + sigma Z), Z ~ N(0,1), by a high-order Golub-Welsch rule.
template <class F>
double gaussian_expectation(F&& f, double m, double sigma, int order = 201) {
  static thread_local std::vector<double> xs, ws;
  static thread_local int cached = 0;
  if (cached != order) {
    auto r = golub_welsch_hermite(order);
    xs = r.first;
    ws = r.second;
    cached = order;
  }
  double s = 0.0;
  for (int i = 0; i < order; ++i) s += ws[i] * f(m + std::sqrt(2.0) * sigma * xs[i]);
  return s / std::sqrt(pi);
}

/// Adaptive Gauss-Kronrod integral over [a, b].
template <class F>
double adaptive(F f, double a, double b, double tol = 1e-13) {
  double err = 0.0;
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, a, b, 8, tol, &err);
}

/// Integral over [0, infinity) of an oscillatory but decaying integrand.
///
/// Integrates panel by panel over [0, L] and adds an exp-sinh tail.
template <class F>
double half_line(F f, double panel = 2.0, double L = 2000.0) {
  double s = 0.0;
  for (double a = 0.0; a < L; a += panel) s += adaptive(f, a, a + panel);
  boost::math::quadrature::exp_sinh<double> es;
  s += es.integrate([&](double x) { return f(x + L); });
  return s;
}

/// rho_s^2 between two weighted point sets in one dimension, straight from the frequency integral.
inline double neg_norm_sq_points(const std::vector<double>& x, const std::vector<double>& c, int s) {
  auto integrand = [&](double xi) {
    double re = 0.0, im = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      re += c[i] * std::cos(xi * x[i]);
      im += c[i] * std::sin(xi * x[i]);
    }
    return std::pow(1.0 + xi * xi, -s) * (re * re + im * im);
  };
  return half_line(integrand, 1.0, 2000.0) / pi;
}

/// (T-t)-heat semigroup applied to a function, evaluated at x.
template <class F>
double heat_semigroup(F&& f, double x, double elapsed) {
  if (elapsed <= 0.0) return f(x);
  return gaussian_expectation(f, x, std::sqrt(elapsed));
}

}  // namespace oracle
