#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <string>

namespace mfc {

template <int D>
using Point = std::array<double, D>;

using Complex = std::complex<double>;

/// Product without the inf/nan recovery of std::complex, for inner loops.
inline Complex cmul(const Complex& a, const Complex& b) {
  return {a.real() * b.real() - a.imag() * b.imag(), a.real() * b.imag() + a.imag() * b.real()};
}

inline constexpr double pi = std::numbers::pi;

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A numerical procedure detected a state it cannot continue from.
class SolverError : public Error {
 public:
  using Error::Error;
};

/// Explicit part of a time step would lose positivity.
class CflViolation : public SolverError {
 public:
  CflViolation(const std::string& what, double suggested_dt)
      : SolverError(what), suggested_dt_(suggested_dt) {}
  double suggested_dt() const { return suggested_dt_; }

 private:
  double suggested_dt_;
};

template <int D>
constexpr double dot(const Point<D>& a, const Point<D>& b) {
  double s = 0.0;
  for (int k = 0; k < D; ++k) s += a[k] * b[k];
  return s;
}

template <int D>
constexpr double norm2(const Point<D>& a) {
  return dot<D>(a, a);
}

template <std::size_t N>
std::array<double, N> operator+(std::array<double, N> a, const std::array<double, N>& b) {
  for (std::size_t k = 0; k < N; ++k) a[k] += b[k];
  return a;
}

template <std::size_t N>
std::array<double, N> operator-(std::array<double, N> a, const std::array<double, N>& b) {
  for (std::size_t k = 0; k < N; ++k) a[k] -= b[k];
  return a;
}

template <std::size_t N>
std::array<double, N> operator*(double c, std::array<double, N> a) {
  for (std::size_t k = 0; k < N; ++k) a[k] *= c;
  return a;
}

/// (2 pi)^(-d/2), the normalization of the Fourier basis e(x, xi).
template <int D>
inline double fourier_normalization() {
  return std::pow(2.0 * pi, -0.5 * D);
}

/// Sobolev order 3 + floor(d/2) that embeds into bounded C^2 functions.
constexpr int sobolev_order(int d) { return 3 + d / 2; }

template <int D>
struct SobolevIndex {
  static_assert(D >= 1, "dimension must be positive");
  static constexpr int dimension = D;
  static constexpr int order = sobolev_order(D);
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw InvalidArgument(message);
}

}  // namespace mfc
