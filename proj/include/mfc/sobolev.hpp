#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "core.hpp"
#include "measures.hpp"
#include "quadrature.hpp"
#include "smooth_function.hpp"

namespace mfc {

/// Build options for a frequency quadrature.
///
/// `radius <= 0` selects the smallest radius whose tail bound meets
/// `tolerance`. `panels == 0` picks 32 panels in one dimension and 16 in two.
/// `envelope_sigma > 0` promises that both measures are Gaussian mixtures with
/// every sigma at least this value, which tightens the tail bound.
/// `spatial_extent > 0` promises supports (or means) within that distance of
/// each other and adds panels until the outer panels resolve the oscillation.
struct QuadratureOptions {
  double order = 3.0;
  double tolerance = 1e-5;
  double radius = 0.0;
  std::size_t panels = 0;
  std::size_t nodes_per_panel = 16;
  double grading = 2.0;
  double envelope_sigma = 0.0;
  double spatial_extent = 0.0;
};

/// Nodes and weights for integrals over frequency space against (1 + |xi|^2)^(-s).
///
/// The node set is the tensor product of one mirrored axis rule, stored
/// row-major, so node i and node size-1-i are negatives of each other.
template <int D>
class FrequencyQuadrature {
 public:
  static FrequencyQuadrature build(const QuadratureOptions& opt) {
    require(opt.order > 0.5 * D, "frequency quadrature: order must exceed d/2");
    require(opt.tolerance > 0.0, "frequency quadrature: tolerance must be positive");
    require(opt.nodes_per_panel >= 2, "frequency quadrature: need at least two nodes per panel");
    require(opt.grading >= 1.0, "frequency quadrature: grading must be at least one");
    FrequencyQuadrature q;
    q.order_ = opt.order;
    q.envelope_sigma_ = opt.envelope_sigma;
    q.grading_ = opt.grading;
    q.nodes_per_panel_ = opt.nodes_per_panel;
    q.radius_ = opt.radius > 0.0 ? opt.radius : auto_radius(opt);
    q.tail_sq_ = tail_squared(q.radius_, opt.order, opt.envelope_sigma);
    std::size_t panels = opt.panels > 0 ? opt.panels : (D == 1 ? 32 : 16);
    if (opt.spatial_extent > 0.0) {
      // widest (outermost) panel is about grading*R/P; ask for at least
      // nodes/8 oscillation periods per panel resolved
      const double needed = opt.grading * q.radius_ * opt.spatial_extent /
                            (2.0 * pi * static_cast<double>(opt.nodes_per_panel) / 8.0);
      panels = std::max(panels, static_cast<std::size_t>(std::ceil(needed)));
    }
    q.panels_ = panels;
    const QuadratureRule half =
        composite_gauss_legendre(graded_breakpoints(q.radius_, panels, opt.grading), opt.nodes_per_panel);
    const std::size_t h = half.size();
    q.axis_nodes_.resize(2 * h);
    q.axis_weights_.resize(2 * h);
    for (std::size_t i = 0; i < h; ++i) {
      q.axis_nodes_[h + i] = half.nodes[i];
      q.axis_weights_[h + i] = half.weights[i];
      q.axis_nodes_[h - 1 - i] = -half.nodes[i];
      q.axis_weights_[h - 1 - i] = half.weights[i];
    }
    q.fill_tensor();
    return q;
  }

  static FrequencyQuadrature build(double order, double tolerance = 1e-5) {
    QuadratureOptions opt;
    opt.order = order;
    opt.tolerance = tolerance;
    return build(opt);
  }

  /// Quadrature for the metric order n* of this dimension.
  static FrequencyQuadrature for_metric(double tolerance = 1e-5) {
    return build(static_cast<double>(SobolevIndex<D>::order), tolerance);
  }

  /// (2 pi)^(-d) * 4 * int_{|xi| > R} (1 + |xi|^2)^(-s) [e^{-sigma^2 |xi|^2}] dxi.
  static double tail_squared(double radius, double order, double envelope_sigma = 0.0) {
    const auto weight = [order, envelope_sigma](double r) {
      return std::pow(1.0 + r * r, -order) * std::exp(-envelope_sigma * envelope_sigma * r * r);
    };
    double shell = 0.0;
    if constexpr (D == 1) {
      shell = 2.0 * integrate_tail(weight, radius);
    } else if constexpr (D == 2) {
      shell = 2.0 * pi * integrate_tail([&](double r) { return r * weight(r); }, radius);
    } else {
      static_assert(D <= 2, "frequency quadratures are shipped for d in {1, 2}");
    }
    return 4.0 * std::pow(2.0 * pi, -static_cast<double>(D)) * shell;
  }

  double order() const { return order_; }
  double radius() const { return radius_; }
  std::size_t panels() const { return panels_; }
  std::size_t nodes_per_panel() const { return nodes_per_panel_; }
  double grading() const { return grading_; }
  double envelope_sigma() const { return envelope_sigma_; }
  /// Bound on the truncation error of neg_norm itself (not of its square).
  double tail_bound() const { return std::sqrt(tail_sq_); }
  std::size_t size() const { return nodes_.size(); }
  const std::vector<Point<D>>& nodes() const { return nodes_; }
  const std::vector<double>& weights() const { return weights_; }
  const std::vector<double>& axis_nodes() const { return axis_nodes_; }
  const std::vector<double>& axis_weights() const { return axis_weights_; }
  /// (1 + |xi_j|^2)^(-s) at every node.
  const std::vector<double>& sobolev_weights() const { return sobolev_weights_; }

  /// Integral of (1 + |xi|^2)^(-s) over the box [-R, R]^d by this rule.
  double weight_integral() const {
    double s = 0.0;
    for (std::size_t j = 0; j < size(); ++j) s += weights_[j] * sobolev_weights_[j];
    return s;
  }

  /// Transform of mu at every node.
  std::vector<Complex> transform(const Measure<D>& mu) const { return char_fn_tensor<D>(mu, axis_nodes_); }

  /// Same node set with a different Sobolev order.
  FrequencyQuadrature with_order(double order) const {
    FrequencyQuadrature q = *this;
    q.order_ = order;
    q.tail_sq_ = tail_squared(radius_, order, envelope_sigma_);
    q.fill_tensor();
    return q;
  }

 private:
  static double auto_radius(const QuadratureOptions& opt) {
    const double target = opt.tolerance * opt.tolerance;
    double hi = 1.0;
    while (tail_squared(hi, opt.order, opt.envelope_sigma) > target) {
      hi *= 2.0;
      if (hi > 1e8) throw InvalidArgument("frequency quadrature: tolerance unreachable");
    }
    double lo = hi / 2.0;
    if (tail_squared(lo, opt.order, opt.envelope_sigma) <= target) return lo;
    for (int it = 0; it < 60; ++it) {
      const double mid = 0.5 * (lo + hi);
      (tail_squared(mid, opt.order, opt.envelope_sigma) > target ? lo : hi) = mid;
    }
    return hi;
  }

  void fill_tensor() {
    const std::size_t m = axis_nodes_.size();
    std::size_t total = 1;
    for (int k = 0; k < D; ++k) total *= m;
    nodes_.resize(total);
    weights_.resize(total);
    sobolev_weights_.resize(total);
    for (std::size_t flat = 0; flat < total; ++flat) {
      std::size_t rest = flat;
      double w = 1.0;
      for (int a = D - 1; a >= 0; --a) {
        const std::size_t i = rest % m;
        rest /= m;
        nodes_[flat][a] = axis_nodes_[i];
        w *= axis_weights_[i];
      }
      weights_[flat] = w;
      sobolev_weights_[flat] = std::pow(1.0 + norm2<D>(nodes_[flat]), -order_);
    }
  }

  double order_ = 0.0;
  double radius_ = 0.0;
  double tail_sq_ = 0.0;
  double envelope_sigma_ = 0.0;
  double grading_ = 2.0;
  std::size_t panels_ = 0;
  std::size_t nodes_per_panel_ = 0;
  std::vector<double> axis_nodes_;
  std::vector<double> axis_weights_;
  std::vector<Point<D>> nodes_;
  std::vector<double> weights_;
  std::vector<double> sobolev_weights_;
};

namespace detail {

inline void require_order(double s, double quad_order) {
  if (std::abs(s - quad_order) > 1e-12 * std::max(1.0, std::abs(s))) {
    throw InvalidArgument("neg_norm: quadrature was built for order " + std::to_string(quad_order) +
                          ", requested " + std::to_string(s));
  }
}

}  // namespace detail

/// Negative Sobolev norm from transforms already evaluated on the quadrature nodes.
template <int D>
double neg_norm_from_transforms(const std::vector<Complex>& fmu, const std::vector<Complex>& fnu,
                                const FrequencyQuadrature<D>& quad) {
  require(fmu.size() == quad.size() && fnu.size() == quad.size(), "neg_norm: transform size mismatch");
  double s = 0.0;
  for (std::size_t j = 0; j < quad.size(); ++j) {
    s += quad.weights()[j] * quad.sobolev_weights()[j] * std::norm(fmu[j] - fnu[j]);
  }
  return std::sqrt(s);
}

/// rho_s(mu - nu) by frequency quadrature.
template <int D>
double neg_norm(const Measure<D>& mu, const Measure<D>& nu, double s, const FrequencyQuadrature<D>& quad) {
  detail::require_order(s, quad.order());
  if (&mu == &nu) return 0.0;
  return neg_norm_from_transforms<D>(quad.transform(mu), quad.transform(nu), quad);
}

/// The metric rho = ||.||_{-n*}.
template <int D>
double rho(const Measure<D>& mu, const Measure<D>& nu, const FrequencyQuadrature<D>& quad) {
  return neg_norm<D>(mu, nu, static_cast<double>(SobolevIndex<D>::order), quad);
}

/// Position-space kernel K_s(z) = (2 pi)^(-1) int (1 + xi^2)^(-s) e^{i xi z} dxi in one dimension.
inline double sobolev_kernel_1d(int s, double z) {
  const double a = std::abs(z);
  const double e = std::exp(-a);
  switch (s) {
    case 1:
      return 0.5 * e;
    case 2:
      return (1.0 + a) * e / 4.0;
    case 3:
      return (3.0 + 3.0 * a + a * a) * e / 16.0;
    case 4:
      return (15.0 + 15.0 * a + 6.0 * a * a + a * a * a) * e / 96.0;
    default:
      throw InvalidArgument("sobolev kernel: closed form available for s in {1, 2, 3, 4}");
  }
}

/// rho_s between two empirical measures through the closed-form kernel.
template <int D>
double kernel_norm_empirical(const Measure<D>& mu, const Measure<D>& nu, int s) {
  if (D != 1) throw InvalidArgument("kernel_norm_empirical: only d = 1 is supported");
  if (s < 2 || s > 4) throw InvalidArgument("kernel_norm_empirical: s must be 2, 3 or 4");
  if (!mu.is_empirical() || !nu.is_empirical()) {
    throw InvalidArgument("kernel_norm_empirical: both measures must be empirical");
  }
  std::vector<double> x;
  std::vector<double> c;
  for (std::size_t i = 0; i < mu.empirical().size(); ++i) {
    x.push_back(mu.empirical().points()[i][0]);
    c.push_back(mu.empirical().weights()[i]);
  }
  for (std::size_t i = 0; i < nu.empirical().size(); ++i) {
    x.push_back(nu.empirical().points()[i][0]);
    c.push_back(-nu.empirical().weights()[i]);
  }
  double sum = 0.0;
  const double k0 = sobolev_kernel_1d(s, 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    sum += c[i] * c[i] * k0;
    for (std::size_t j = i + 1; j < x.size(); ++j) sum += 2.0 * c[i] * c[j] * sobolev_kernel_1d(s, x[i] - x[j]);
  }
  return std::sqrt(std::max(sum, 0.0));
}

template <int D>
SmoothFunction<D> linear_derivative_kappa_from_transforms(const std::vector<Complex>& fmu,
                                                          const std::vector<Complex>& fnu,
                                                          const FrequencyQuadrature<D>& quad) {
  SpectralRep<D> rep;
  rep.nodes = quad.nodes();
  rep.weights = quad.weights();
  if (!rep.conjugate_symmetric()) throw InvalidArgument("kappa: quadrature node set is not symmetric");
  rep.values.resize(quad.size());
  for (std::size_t j = 0; j < quad.size(); ++j) rep.values[j] = quad.sobolev_weights()[j] * (fmu[j] - fnu[j]);
  return SmoothFunction<D>::from_spectrum(std::move(rep), Growth::bounded);
}

/// Linear derivative of psi(eta) = rho^2(eta)/2 at eta = mu - nu.
///
/// kappa(x) = sum_j w_j (1 + |xi_j|^2)^(-n*) F(mu - nu)(xi_j) e(x, xi_j), carried
/// with its frequency representation so that pos_norm(kappa) is exact.
template <int D>
SmoothFunction<D> linear_derivative_kappa(const Measure<D>& mu, const Measure<D>& nu,
                                          const FrequencyQuadrature<D>& quad) {
  detail::require_order(static_cast<double>(SobolevIndex<D>::order), quad.order());
  return linear_derivative_kappa_from_transforms<D>(quad.transform(mu), quad.transform(nu), quad);
}

/// ||f||_s from the frequency representation of f.
template <int D>
double pos_norm(const SmoothFunction<D>& f, double s) {
  if (!f.has_spectrum()) throw InvalidArgument("pos_norm: function carries no frequency representation");
  const SpectralRep<D>& rep = f.spectrum();
  double sum = 0.0;
  for (std::size_t j = 0; j < rep.size(); ++j) {
    sum += rep.weights[j] * std::pow(1.0 + norm2<D>(rep.nodes[j]), s) * std::norm(rep.values[j]);
  }
  return std::sqrt(sum);
}

template <int D>
SmoothFunction<D> spectral_transform_values(const std::vector<double>& values, double lo, double hi,
                                            std::size_t n, const FrequencyQuadrature<D>& quad) {
  const double h = (hi - lo) / static_cast<double>(n - 1);
  const double nyquist = pi / h;
  const std::vector<double>& axis = quad.axis_nodes();
  // trapezoid weights along each axis
  std::vector<double> tw(n, h);
  tw.front() = tw.back() = 0.5 * h;
  std::vector<Complex> work(values.begin(), values.end());
  {
    std::size_t flat = 0;
    for (auto& v : work) {
      std::size_t rest = flat++;
      double w = 1.0;
      for (int a = 0; a < D; ++a) {
        w *= tw[rest % n];
        rest /= n;
      }
      v *= w;
    }
  }
  work = detail::separable_transform<D>(std::move(work), n, axis, lo, h);
  SpectralRep<D> rep;
  rep.nodes = quad.nodes();
  rep.weights = quad.weights();
  rep.values.resize(quad.size());
  const double c = fourier_normalization<D>();
  for (std::size_t j = 0; j < quad.size(); ++j) {
    bool inside = true;
    for (int a = 0; a < D; ++a) inside = inside && std::abs(rep.nodes[j][a]) < nyquist;
    rep.values[j] = inside ? c * work[j] : Complex(0.0);
  }
  return SmoothFunction<D>::from_spectrum(std::move(rep), Growth::bounded);
}

/// Transform of a function sampled on a uniform grid, evaluated at the quadrature nodes.
///
/// Uses the trapezoid sum, which is spectrally accurate for smooth functions
/// that vanish near the box faces. Frequencies above the grid Nyquist limit
/// pi/h are aliased and set to zero instead.
template <int D, class F>
SmoothFunction<D> spectral_transform(F&& f, double lo, double hi, std::size_t n,
                                     const FrequencyQuadrature<D>& quad) {
  std::vector<double> values(GridDensity<D>::total_nodes(n));
  const double h = (hi - lo) / static_cast<double>(n - 1);
  std::size_t flat = 0;
  for (auto& v : values) {
    std::size_t rest = flat++;
    Point<D> x;
    for (int a = D - 1; a >= 0; --a) {
      x[a] = lo + h * static_cast<double>(rest % n);
      rest /= n;
    }
    v = f(x);
  }
  return spectral_transform_values<D>(values, lo, hi, n, quad);
}

/// Result of comparing sup-norm C^2 size with the Sobolev norm.
struct EmbeddingReport {
  double c2_norm = 0.0;
  double sobolev_norm = 0.0;
  double ratio = 0.0;
  bool degenerate = false;  ///< both norms zero; ratio is NaN
};

/// max over a sampling grid of |f| + |grad f| + |Laplacian f| against ||f||_{n*}.
template <int D>
EmbeddingReport embedding_check(const SmoothFunction<D>& f, double half_width = 10.0,
                                std::size_t points_per_axis = (D == 1 ? 201 : 41)) {
  require(points_per_axis >= 2, "embedding_check: need at least two sample points per axis");
  EmbeddingReport r;
  std::size_t total = 1;
  for (int k = 0; k < D; ++k) total *= points_per_axis;
  const double h = 2.0 * half_width / static_cast<double>(points_per_axis - 1);
  for (std::size_t flat = 0; flat < total; ++flat) {
    std::size_t rest = flat;
    Point<D> x;
    for (int a = D - 1; a >= 0; --a) {
      x[a] = -half_width + h * static_cast<double>(rest % points_per_axis);
      rest /= points_per_axis;
    }
    const Jet<D> j = f.jet(x);
    double g = 0.0;
    for (int k = 0; k < D; ++k) g += std::abs(j.gradient[k]);
    r.c2_norm = std::max(r.c2_norm, std::abs(j.value) + g + std::abs(j.laplacian));
  }
  r.sobolev_norm = pos_norm<D>(f, static_cast<double>(SobolevIndex<D>::order));
  if (r.c2_norm == 0.0 && r.sobolev_norm == 0.0) {
    r.degenerate = true;
    r.ratio = std::numeric_limits<double>::quiet_NaN();
  } else {
    r.ratio = r.c2_norm / r.sobolev_norm;
  }
  return r;
}

struct WeakStarRow {
  double k = 0.0;
  double rho = 0.0;
  double weakstar_gap = 0.0;
  double theta = 0.0;
};

struct WeakStarReport {
  std::vector<WeakStarRow> rows;
  bool rho_to_zero = false;
  bool gap_to_zero = false;
  bool rho_monotone = false;
  bool trends_agree = false;
  double theta_growth = 1.0;  ///< last theta over first theta
  std::string note;
};

namespace detail {

inline bool tends_to_zero(const std::vector<double>& col) {
  const double first = *std::max_element(col.begin(), col.end());
  if (first == 0.0) return true;
  return col.back() <= 0.1 * first;
}

}  // namespace detail

/// Tracks rho(mu_k - limit) against the worst bounded-test-function gap along a sequence.
template <int D>
WeakStarReport weakstar_probe(const std::vector<Measure<D>>& sequence, const std::vector<double>& labels,
                              const Measure<D>& limit, const FrequencyQuadrature<D>& quad,
                              const std::vector<SmoothFunction<D>>& test_suite) {
  require(!sequence.empty(), "weakstar_probe: empty sequence");
  require(labels.size() == sequence.size(), "weakstar_probe: one label per measure");
  for (const auto& f : test_suite) {
    require(f.growth() == Growth::bounded, "weakstar_probe: test functions must be bounded");
  }
  WeakStarReport rep;
  const auto flim = quad.transform(limit);
  std::vector<double> lim_vals;
  for (const auto& f : test_suite) lim_vals.push_back(integrate<D>(limit, f));
  std::vector<double> rho_col;
  std::vector<double> gap_col;
  for (std::size_t i = 0; i < sequence.size(); ++i) {
    WeakStarRow row;
    row.k = labels[i];
    row.rho = neg_norm_from_transforms<D>(quad.transform(sequence[i]), flim, quad);
    for (std::size_t t = 0; t < test_suite.size(); ++t) {
      row.weakstar_gap = std::max(row.weakstar_gap, std::abs(integrate<D>(sequence[i], test_suite[t]) - lim_vals[t]));
    }
    row.theta = theta<D>(sequence[i]);
    rep.rows.push_back(row);
    rho_col.push_back(row.rho);
    gap_col.push_back(row.weakstar_gap);
  }
  rep.rho_to_zero = detail::tends_to_zero(rho_col);
  rep.gap_to_zero = detail::tends_to_zero(gap_col);
  rep.rho_monotone = true;
  for (std::size_t i = 1; i < rho_col.size(); ++i) rep.rho_monotone = rep.rho_monotone && rho_col[i] <= rho_col[i - 1];
  rep.trends_agree = rep.rho_to_zero == rep.gap_to_zero;
  rep.theta_growth = rep.rows.back().theta / rep.rows.front().theta;
  if (rep.rho_to_zero && rep.theta_growth > 2.0) {
    rep.note = "weak* convergence holds but theta grows along the sequence";
  } else if (rep.trends_agree) {
    rep.note = "rho and the weak* gap move together";
  } else {
    rep.note = "rho and the weak* gap disagree";
  }
  return rep;
}

inline void write_weakstar_csv(const WeakStarReport& rep, std::ostream& out) {
  out << "k,rho,weakstar_gap,theta\n";
  for (const auto& r : rep.rows) {
    out << detail::format_double(r.k) << "," << detail::format_double(r.rho) << ","
        << detail::format_double(r.weakstar_gap) << "," << detail::format_double(r.theta) << "\n";
  }
}

}  // namespace mfc
