#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <utility>
#include <vector>

#include "core.hpp"

namespace mfc {

/// Value, gradient and Laplacian of a function at one point.
template <int D>
struct Jet {
  double value = 0.0;
  Point<D> gradient{};
  double laplacian = 0.0;
};

enum class Growth { bounded, quadratic };

/// Discrete frequency-side representation f(x) = sum_j w_j F_j e(x, xi_j).
///
/// Sobolev norms of f are the same weighted sums with (1 + |xi|^2)^s inserted.
template <int D>
struct SpectralRep {
  std::vector<Point<D>> nodes;
  std::vector<double> weights;
  std::vector<Complex> values;

  std::size_t size() const { return nodes.size(); }

  bool conjugate_symmetric(double tol = 1e-12) const;
  Jet<D> jet(const Point<D>& x) const;
  /// Imaginary part of the reconstruction sum at x; zero for real functions.
  double imag_residual(const Point<D>& x) const;
};

template <int D>
bool SpectralRep<D>::conjugate_symmetric(double tol) const {
  // Node sets are built mirrored: node i pairs with node size-1-i.
  const std::size_t n = nodes.size();
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = n - 1 - i;
    for (int k = 0; k < D; ++k) {
      if (std::abs(nodes[i][k] + nodes[j][k]) > tol * (1.0 + std::abs(nodes[i][k]))) return false;
    }
    if (std::abs(weights[i] - weights[j]) > tol * std::abs(weights[i])) return false;
  }
  return true;
}

template <int D>
Jet<D> SpectralRep<D>::jet(const Point<D>& x) const {
  Jet<D> out;
  const double c = fourier_normalization<D>();
  for (std::size_t j = 0; j < nodes.size(); ++j) {
    const double phase = dot<D>(nodes[j], x);
    const Complex term = weights[j] * cmul(values[j], Complex(std::cos(phase), std::sin(phase)));
    out.value += term.real();
    // d/dx e^{i xi x} = i xi e^{i xi x}; Re(i z) = -Im(z)
    for (int k = 0; k < D; ++k) out.gradient[k] -= nodes[j][k] * term.imag();
    out.laplacian -= norm2<D>(nodes[j]) * term.real();
  }
  out.value *= c;
  for (int k = 0; k < D; ++k) out.gradient[k] *= c;
  out.laplacian *= c;
  return out;
}

template <int D>
double SpectralRep<D>::imag_residual(const Point<D>& x) const {
  double s = 0.0;
  for (std::size_t j = 0; j < nodes.size(); ++j) {
    const double phase = dot<D>(nodes[j], x);
    s += (weights[j] * values[j] * Complex(std::cos(phase), std::sin(phase))).imag();
  }
  return s * fourier_normalization<D>();
}

/// A C^2 function on R^d with analytic first and second order information.
///
/// Immutable; copies share the evaluator and the optional spectrum.
template <int D>
class SmoothFunction {
 public:
  using JetFn = std::function<Jet<D>(const Point<D>&)>;

  SmoothFunction() : SmoothFunction(constant(0.0)) {}

  SmoothFunction(JetFn jet, Growth growth, double growth_constant,
                 std::shared_ptr<const SpectralRep<D>> spectrum = nullptr)
      : jet_(std::move(jet)),
        growth_(growth),
        growth_constant_(growth_constant),
        spectrum_(std::move(spectrum)) {}

  static SmoothFunction constant(double c) {
    auto spec = std::make_shared<SpectralRep<D>>();
    // A constant has no square-integrable spectrum; only zero gets an (empty) one.
    return SmoothFunction([c](const Point<D>&) { return Jet<D>{c, Point<D>{}, 0.0}; },
                          Growth::bounded, std::abs(c), c == 0.0 ? spec : nullptr);
  }

  static SmoothFunction from_spectrum(SpectralRep<D> rep, Growth growth = Growth::bounded) {
    auto shared = std::make_shared<const SpectralRep<D>>(std::move(rep));
    double bound = 0.0;
    for (std::size_t j = 0; j < shared->size(); ++j) bound += shared->weights[j] * std::abs(shared->values[j]);
    bound *= fourier_normalization<D>();
    return SmoothFunction([shared](const Point<D>& x) { return shared->jet(x); }, growth, bound, shared);
  }

  double value(const Point<D>& x) const { return jet_(x).value; }
  Point<D> gradient(const Point<D>& x) const { return jet_(x).gradient; }
  double laplacian(const Point<D>& x) const { return jet_(x).laplacian; }
  Jet<D> jet(const Point<D>& x) const { return jet_(x); }
  double operator()(const Point<D>& x) const { return value(x); }

  Growth growth() const { return growth_; }
  double growth_constant() const { return growth_constant_; }
  bool has_spectrum() const { return spectrum_ != nullptr; }
  const SpectralRep<D>& spectrum() const {
    if (!spectrum_) throw InvalidArgument("function carries no frequency representation");
    return *spectrum_;
  }
  std::shared_ptr<const SpectralRep<D>> spectrum_ptr() const { return spectrum_; }

 private:
  JetFn jet_;
  Growth growth_;
  double growth_constant_;
  std::shared_ptr<const SpectralRep<D>> spectrum_;
};

/// a*f + b*g. The spectrum is combined when both carry one on the same nodes.
template <int D>
SmoothFunction<D> linear_combination(double a, const SmoothFunction<D>& f, double b,
                                     const SmoothFunction<D>& g) {
  std::shared_ptr<const SpectralRep<D>> spec;
  if (f.has_spectrum() && g.has_spectrum()) {
    const auto& sf = f.spectrum();
    const auto& sg = g.spectrum();
    if (sf.size() == 0 || sg.size() == 0 || sf.size() == sg.size()) {
      SpectralRep<D> rep = sf.size() == 0 ? sg : sf;
      for (auto& v : rep.values) v = Complex(0.0);
      for (std::size_t j = 0; j < sf.size(); ++j) rep.values[j] += a * sf.values[j];
      for (std::size_t j = 0; j < sg.size(); ++j) rep.values[j] += b * sg.values[j];
      spec = std::make_shared<const SpectralRep<D>>(std::move(rep));
    }
  }
  const Growth growth = (f.growth() == Growth::quadratic || g.growth() == Growth::quadratic)
                            ? Growth::quadratic
                            : Growth::bounded;
  const double c = std::abs(a) * f.growth_constant() + std::abs(b) * g.growth_constant();
  return SmoothFunction<D>(
      [a, b, f, g](const Point<D>& x) {
        const Jet<D> jf = f.jet(x);
        const Jet<D> jg = g.jet(x);
        Jet<D> out;
        out.value = a * jf.value + b * jg.value;
        for (int k = 0; k < D; ++k) out.gradient[k] = a * jf.gradient[k] + b * jg.gradient[k];
        out.laplacian = a * jf.laplacian + b * jg.laplacian;
        return out;
      },
      growth, c, spec);
}

template <int D>
SmoothFunction<D> scaled(double a, const SmoothFunction<D>& f) {
  return linear_combination<D>(a, f, 0.0, SmoothFunction<D>::constant(0.0));
}

/// q(x) = sqrt(1 + |x|^2), the moment weight behind theta.
template <int D>
SmoothFunction<D> moment_weight() {
  return SmoothFunction<D>(
      [](const Point<D>& x) {
        const double r2 = norm2<D>(x);
        const double q = std::sqrt(1.0 + r2);
        Jet<D> j;
        j.value = q;
        for (int k = 0; k < D; ++k) j.gradient[k] = x[k] / q;
        // div(x/q) = d/q - |x|^2/q^3
        j.laplacian = static_cast<double>(D) / q - r2 / (q * q * q);
        return j;
      },
      Growth::quadratic, 1.0);
}

/// Sampling audit of the growth tag and of the analytic derivatives.
template <int D>
struct SmoothFunctionAudit {
  double max_growth_ratio = 0.0;     ///< max |f| / (1 + |x|^2) / c
  double max_gradient_error = 0.0;   ///< relative, against central differences
  double max_laplacian_error = 0.0;  ///< relative, against central differences
  bool growth_ok = true;
  bool derivatives_ok = true;
};

template <int D>
SmoothFunctionAudit<D> audit_smooth_function(const SmoothFunction<D>& f, std::size_t samples,
                                             double radius, std::uint64_t seed,
                                             double tolerance = 1e-5) {
  SmoothFunctionAudit<D> out;
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> unif(-radius, radius);
  const double h = 1e-4;
  const double hl = 1e-3;
  for (std::size_t s = 0; s < samples; ++s) {
    Point<D> x;
    for (int k = 0; k < D; ++k) x[k] = unif(gen);
    const Jet<D> j = f.jet(x);
    if (f.growth_constant() > 0.0) {
      const double bound = f.growth() == Growth::bounded ? f.growth_constant()
                                                         : f.growth_constant() * (1.0 + norm2<D>(x));
      out.max_growth_ratio = std::max(out.max_growth_ratio, std::abs(j.value) / bound);
    } else if (j.value != 0.0) {
      out.max_growth_ratio = std::numeric_limits<double>::infinity();
    }
    double lap_fd = 0.0;
    double scale = std::abs(j.value);
    for (int k = 0; k < D; ++k) scale = std::max(scale, std::abs(j.gradient[k]));
    scale = std::max({scale, std::abs(j.laplacian), 1e-8});
    for (int k = 0; k < D; ++k) {
      Point<D> xp = x;
      Point<D> xm = x;
      xp[k] += h;
      xm[k] -= h;
      const double fp = f.value(xp);
      const double fm = f.value(xm);
      const double g_fd = (fp - fm) / (2.0 * h);
      out.max_gradient_error = std::max(out.max_gradient_error, std::abs(g_fd - j.gradient[k]) / scale);
      xp[k] = x[k] + hl;
      xm[k] = x[k] - hl;
      lap_fd += (f.value(xp) - 2.0 * j.value + f.value(xm)) / (hl * hl);
    }
    out.max_laplacian_error = std::max(out.max_laplacian_error, std::abs(lap_fd - j.laplacian) / scale);
  }
  out.growth_ok = out.max_growth_ratio <= 1.0 + 1e-12;
  out.derivatives_ok = out.max_gradient_error <= tolerance && out.max_laplacian_error <= tolerance;
  return out;
}

}  // namespace mfc
