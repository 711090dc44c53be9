#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "core.hpp"
#include "quadrature.hpp"
#include "smooth_function.hpp"

namespace mfc {

inline constexpr double mass_tolerance = 1e-12;
inline constexpr double boundary_tolerance = 1e-12;

/// Weighted point cloud sum_i w_i delta_{x_i}.
template <int D>
class EmpiricalMeasure {
 public:
  EmpiricalMeasure(std::vector<Point<D>> points, std::vector<double> weights)
      : points_(std::move(points)), weights_(std::move(weights)) {
    require(!points_.empty(), "empirical measure needs at least one particle");
    require(points_.size() == weights_.size(), "empirical measure: one weight per particle");
    double total = 0.0;
    for (double w : weights_) {
      require(w >= 0.0 && std::isfinite(w), "empirical measure: weights must be finite and nonnegative");
      total += w;
    }
    require(std::abs(total - 1.0) <= mass_tolerance, "empirical measure: weights must sum to one");
  }

  /// Equal weights 1/N.
  static EmpiricalMeasure uniform(std::vector<Point<D>> points) {
    const double w = 1.0 / static_cast<double>(points.size());
    std::vector<double> weights(points.size(), w);
    double total = 0.0;
    for (double v : weights) total += v;
    weights.back() += 1.0 - total;
    return EmpiricalMeasure(std::move(points), std::move(weights));
  }

  static EmpiricalMeasure dirac(const Point<D>& x) { return EmpiricalMeasure({x}, {1.0}); }

  std::size_t size() const { return points_.size(); }
  const std::vector<Point<D>>& points() const { return points_; }
  const std::vector<double>& weights() const { return weights_; }

 private:
  std::vector<Point<D>> points_;
  std::vector<double> weights_;
};

/// Density sampled at the nodes of a uniform grid on [lo, hi]^D.
///
/// Node i sits at lo + i*h with h = (hi - lo)/(n - 1). The measure is the
/// node-based discrete measure h^D sum rho_i delta_{x_i}, so integrals are
/// cell-volume-weighted sums. Values are stored row-major (last axis fastest).
template <int D>
class GridDensity {
 public:
  GridDensity(double lo, double hi, std::size_t n, std::vector<double> density)
      : lo_(lo), hi_(hi), n_(n), density_(std::move(density)) {
    require(hi > lo, "grid density: empty box");
    require(n >= 5, "grid density: need at least five nodes per axis");
    require(density_.size() == total_nodes(n), "grid density: value count does not match n^d");
    double sum = 0.0;
    for (double v : density_) {
      require(v >= 0.0 && std::isfinite(v), "grid density: values must be finite and nonnegative");
      sum += v;
    }
    require(std::abs(sum * cell_volume() - 1.0) <= mass_tolerance, "grid density: mass must be one");
    require(boundary_max() < boundary_tolerance,
            "grid density: density does not decay at the outer two layers; enlarge the box");
  }

  /// Rescales nonnegative values to unit mass before validation.
  static GridDensity normalized(double lo, double hi, std::size_t n, std::vector<double> density) {
    const double h = (hi - lo) / static_cast<double>(n - 1);
    double sum = 0.0;
    for (double v : density) sum += v;
    require(sum > 0.0, "grid density: zero mass");
    const double scale = 1.0 / (sum * std::pow(h, D));
    for (double& v : density) v *= scale;
    return GridDensity(lo, hi, n, std::move(density));
  }

  template <class F>
  static GridDensity sample(double lo, double hi, std::size_t n, F&& density_fn) {
    std::vector<double> values(total_nodes(n));
    for (std::size_t k = 0; k < values.size(); ++k) values[k] = density_fn(node_of(lo, hi, n, k));
    return normalized(lo, hi, n, std::move(values));
  }

  static std::size_t total_nodes(std::size_t n) {
    std::size_t t = 1;
    for (int k = 0; k < D; ++k) t *= n;
    return t;
  }

  double lo() const { return lo_; }
  double hi() const { return hi_; }
  std::size_t n() const { return n_; }
  double spacing() const { return (hi_ - lo_) / static_cast<double>(n_ - 1); }
  double cell_volume() const { return std::pow(spacing(), D); }
  double axis_node(std::size_t i) const { return lo_ + spacing() * static_cast<double>(i); }
  std::size_t size() const { return density_.size(); }
  const std::vector<double>& values() const { return density_; }
  Point<D> node(std::size_t flat) const { return node_of(lo_, hi_, n_, flat); }

  /// Largest density over nodes within two layers of any face.
  double boundary_max() const {
    double m = 0.0;
    for (std::size_t k = 0; k < density_.size(); ++k) {
      std::size_t rest = k;
      bool near = false;
      for (int a = 0; a < D; ++a) {
        const std::size_t i = rest % n_;
        rest /= n_;
        if (i < 2 || i + 2 >= n_) near = true;
      }
      if (near) m = std::max(m, density_[k]);
    }
    return m;
  }

  bool same_grid(const GridDensity& other) const {
    return n_ == other.n_ && lo_ == other.lo_ && hi_ == other.hi_;
  }

 private:
  static Point<D> node_of(double lo, double hi, std::size_t n, std::size_t flat) {
    const double h = (hi - lo) / static_cast<double>(n - 1);
    Point<D> x;
    for (int a = D - 1; a >= 0; --a) {
      x[a] = lo + h * static_cast<double>(flat % n);
      flat /= n;
    }
    return x;
  }

  double lo_;
  double hi_;
  std::size_t n_;
  std::vector<double> density_;
};

template <int D>
struct GaussianComponent {
  double weight = 1.0;
  Point<D> mean{};
  double sigma = 1.0;  ///< covariance sigma^2 * I
};

/// Finite mixture of isotropic Gaussians.
template <int D>
class GaussianMixture {
 public:
  explicit GaussianMixture(std::vector<GaussianComponent<D>> components, std::size_t hermite_order = 64)
      : components_(std::move(components)), hermite_order_(hermite_order) {
    require(!components_.empty(), "gaussian mixture: no components");
    require(hermite_order_ >= 1, "gaussian mixture: hermite order must be positive");
    double total = 0.0;
    for (const auto& c : components_) {
      require(c.weight >= 0.0 && std::isfinite(c.weight), "gaussian mixture: weights must be nonnegative");
      require(c.sigma > 0.0 && std::isfinite(c.sigma), "gaussian mixture: sigma must be positive");
      total += c.weight;
    }
    require(std::abs(total - 1.0) <= mass_tolerance, "gaussian mixture: weights must sum to one");
  }

  static GaussianMixture normal(const Point<D>& mean, double sigma, std::size_t hermite_order = 64) {
    return GaussianMixture({{1.0, mean, sigma}}, hermite_order);
  }

  const std::vector<GaussianComponent<D>>& components() const { return components_; }
  std::size_t hermite_order() const { return hermite_order_; }

  double density(const Point<D>& x) const {
    double s = 0.0;
    for (const auto& c : components_) {
      const double r2 = norm2<D>(x - c.mean);
      s += c.weight * std::exp(-0.5 * r2 / (c.sigma * c.sigma)) /
           std::pow(2.0 * pi * c.sigma * c.sigma, 0.5 * D);
    }
    return s;
  }

 private:
  std::vector<GaussianComponent<D>> components_;
  std::size_t hermite_order_;
};

/// A probability measure in one of the three concrete representations.
template <int D>
class Measure {
 public:
  using Representation = std::variant<EmpiricalMeasure<D>, GridDensity<D>, GaussianMixture<D>>;

  Measure(EmpiricalMeasure<D> m) : rep_(std::move(m)) {}
  Measure(GridDensity<D> m) : rep_(std::move(m)) {}
  Measure(GaussianMixture<D> m) : rep_(std::move(m)) {}

  static constexpr int dimension = D;

  const Representation& representation() const { return rep_; }
  bool is_empirical() const { return std::holds_alternative<EmpiricalMeasure<D>>(rep_); }
  bool is_grid() const { return std::holds_alternative<GridDensity<D>>(rep_); }
  bool is_mixture() const { return std::holds_alternative<GaussianMixture<D>>(rep_); }

  const EmpiricalMeasure<D>& empirical() const { return get<EmpiricalMeasure<D>>("empirical"); }
  const GridDensity<D>& grid() const { return get<GridDensity<D>>("grid density"); }
  const GaussianMixture<D>& mixture() const { return get<GaussianMixture<D>>("gaussian mixture"); }

 private:
  template <class T>
  const T& get(const char* name) const {
    if (const T* p = std::get_if<T>(&rep_)) return *p;
    throw InvalidArgument(std::string("measure is not a ") + name);
  }

  Representation rep_;
};

namespace detail {

/// Calls f(x, w) for every node and weight of the tensor Gauss-Hermite rule of one component.
template <int D, class F>
void for_each_hermite_node(const GaussianComponent<D>& c, const QuadratureRule& gh, F&& f) {
  const std::size_t m = gh.size();
  std::size_t total = 1;
  for (int k = 0; k < D; ++k) total *= m;
  const double scale = std::sqrt(2.0) * c.sigma;
  const double norm = std::pow(pi, -0.5 * D);
  for (std::size_t flat = 0; flat < total; ++flat) {
    std::size_t rest = flat;
    Point<D> x;
    double w = norm;
    for (int k = 0; k < D; ++k) {
      const std::size_t i = rest % m;
      rest /= m;
      x[k] = c.mean[k] + scale * gh.nodes[i];
      w *= gh.weights[i];
    }
    f(x, w);
  }
}

inline const QuadratureRule& cached_hermite(std::size_t order) {
  thread_local std::vector<std::pair<std::size_t, QuadratureRule>> cache;
  for (const auto& entry : cache) {
    if (entry.first == order) return entry.second;
  }
  cache.emplace_back(order, gauss_hermite(order));
  return cache.back().second;
}

}  // namespace detail

/// mu(f) for any callable f : Point<D> -> double.
template <int D, class F>
double integrate(const Measure<D>& mu, F&& f) {
  return std::visit(
      [&](const auto& rep) -> double {
        using T = std::decay_t<decltype(rep)>;
        double s = 0.0;
        if constexpr (std::is_same_v<T, EmpiricalMeasure<D>>) {
          for (std::size_t i = 0; i < rep.size(); ++i) s += rep.weights()[i] * f(rep.points()[i]);
        } else if constexpr (std::is_same_v<T, GridDensity<D>>) {
          for (std::size_t k = 0; k < rep.size(); ++k) {
            if (rep.values()[k] != 0.0) s += rep.values()[k] * f(rep.node(k));
          }
          s *= rep.cell_volume();
        } else {
          const QuadratureRule& gh = detail::cached_hermite(rep.hermite_order());
          for (const auto& c : rep.components()) {
            double part = 0.0;
            detail::for_each_hermite_node<D>(c, gh, [&](const Point<D>& x, double w) { part += w * f(x); });
            s += c.weight * part;
          }
        }
        return s;
      },
      mu.representation());
}

/// Fourier transform F(mu)(xi) = (2 pi)^(-d/2) int e^{-i xi x} mu(dx).
template <int D>
Complex char_fn(const Measure<D>& mu, const Point<D>& xi) {
  const double c = fourier_normalization<D>();
  if (mu.is_mixture()) {
    Complex s(0.0);
    const double r2 = norm2<D>(xi);
    for (const auto& comp : mu.mixture().components()) {
      const double phase = -dot<D>(xi, comp.mean);
      s += comp.weight * std::exp(-0.5 * comp.sigma * comp.sigma * r2) *
           Complex(std::cos(phase), std::sin(phase));
    }
    return c * s;
  }
  double re = 0.0;
  double im = 0.0;
  const auto accumulate = [&](const Point<D>& x, double w) {
    const double phase = dot<D>(xi, x);
    re += w * std::cos(phase);
    im -= w * std::sin(phase);
  };
  if (mu.is_empirical()) {
    const auto& e = mu.empirical();
    for (std::size_t i = 0; i < e.size(); ++i) accumulate(e.points()[i], e.weights()[i]);
  } else {
    const auto& g = mu.grid();
    for (std::size_t k = 0; k < g.size(); ++k) {
      if (g.values()[k] != 0.0) accumulate(g.node(k), g.values()[k] * g.cell_volume());
    }
  }
  return c * Complex(re, im);
}

/// Transform at every point of an arbitrary node list.
template <int D>
std::vector<Complex> char_fn_batch(const Measure<D>& mu, const std::vector<Point<D>>& nodes) {
  std::vector<Complex> out(nodes.size());
  for (std::size_t j = 0; j < nodes.size(); ++j) out[j] = char_fn<D>(mu, nodes[j]);
  return out;
}

/// Transform on the tensor product of one axis node list with itself.
///
/// Output is row-major over the D axes. Grid densities use the separable
/// structure of the phase, which turns an n^D x m^D sum into D passes.
namespace detail {

/// Contract nodal values on the uniform grid lo + i h (n per axis, row-major)
/// against e^{-i xi_a x} along every axis, giving m^D values row-major in the
/// frequency indices.
///
/// Phases are generated by complex stepping and re-anchored on exact sin/cos
/// every 32 nodes, which keeps the rounding drift near 1e-15.
template <int D>
std::vector<Complex> separable_transform(std::vector<Complex> work, std::size_t n, const std::vector<double>& axis,
                                         double lo, double h) {
  const std::size_t m = axis.size();
  std::size_t done = 1;  // product of finished frequency extents
  for (int left = D; left >= 1; --left) {
    // leading index of `work` is a spatial axis still to be contracted
    std::size_t lead = 1;
    for (int k = 1; k < left; ++k) lead *= n;
    std::vector<Complex> next(lead * m * done, Complex(0.0));
    for (std::size_t L = 0; L < lead; ++L) {
      for (std::size_t a = 0; a < m; ++a) {
        const Complex step = std::polar(1.0, -axis[a] * h);
        Complex* dst = &next[(L * m + a) * done];
        Complex cur;
        for (std::size_t i = 0; i < n; ++i) {
          if (i % 32 == 0) cur = std::polar(1.0, -axis[a] * (lo + h * static_cast<double>(i)));
          const Complex* src = &work[(L * n + i) * done];
          for (std::size_t r = 0; r < done; ++r) dst[r] += cmul(cur, src[r]);
          cur = cmul(cur, step);
        }
      }
    }
    work = std::move(next);
    done *= m;
  }
  return work;
}

}  // namespace detail

template <int D>
std::vector<Complex> char_fn_tensor(const Measure<D>& mu, const std::vector<double>& axis) {
  const std::size_t m = axis.size();
  std::size_t total = 1;
  for (int k = 0; k < D; ++k) total *= m;
  if (!mu.is_grid()) {
    std::vector<Complex> out(total);
    for (std::size_t flat = 0; flat < total; ++flat) {
      std::size_t rest = flat;
      Point<D> xi;
      for (int a = D - 1; a >= 0; --a) {
        xi[a] = axis[rest % m];
        rest /= m;
      }
      out[flat] = char_fn<D>(mu, xi);
    }
    return out;
  }
  const auto& g = mu.grid();
  const std::size_t n = g.n();
  std::vector<Complex> work =
      detail::separable_transform<D>(std::vector<Complex>(g.values().begin(), g.values().end()), n, axis, g.lo(),
                                     g.spacing());
  const double c = fourier_normalization<D>() * g.cell_volume();
  for (auto& v : work) v *= c;
  return work;
}

template <int D>
double theta(const Measure<D>& mu) {
  return integrate<D>(mu, [&](const Point<D>& x) { return std::sqrt(1.0 + norm2<D>(x)); });
}

template <int D>
double mass(const Measure<D>& mu) {
  return integrate<D>(mu, [](const Point<D>&) { return 1.0; });
}

template <int D>
double first_absolute_moment(const Measure<D>& mu) {
  return integrate<D>(mu, [](const Point<D>& x) { return std::sqrt(norm2<D>(x)); });
}

template <int D>
double second_moment(const Measure<D>& mu) {
  return integrate<D>(mu, [](const Point<D>& x) { return norm2<D>(x); });
}

template <int D>
Point<D> mean(const Measure<D>& mu) {
  Point<D> m{};
  for (int k = 0; k < D; ++k) m[k] = integrate<D>(mu, [k](const Point<D>& x) { return x[k]; });
  return m;
}

/// Discretizes a mixture onto a grid by sampling its density at the nodes.
template <int D>
GridDensity<D> discretize(const GaussianMixture<D>& mix, double lo, double hi, std::size_t n) {
  return GridDensity<D>::sample(lo, hi, n, [&](const Point<D>& x) { return mix.density(x); });
}

/// Draws one point; grid densities place the draw uniformly in the cell around the chosen node.
template <int D>
class MeasureSampler {
 public:
  explicit MeasureSampler(const Measure<D>& mu) : mu_(mu) {
    if (mu.is_empirical()) {
      const auto& w = mu.empirical().weights();
      pick_ = std::discrete_distribution<std::size_t>(w.begin(), w.end());
    } else if (mu.is_grid()) {
      const auto& w = mu.grid().values();
      pick_ = std::discrete_distribution<std::size_t>(w.begin(), w.end());
    } else {
      std::vector<double> w;
      for (const auto& c : mu.mixture().components()) w.push_back(c.weight);
      pick_ = std::discrete_distribution<std::size_t>(w.begin(), w.end());
    }
  }

  template <class Gen>
  Point<D> operator()(Gen& gen) {
    const std::size_t k = pick_(gen);
    if (mu_.is_empirical()) return mu_.empirical().points()[k];
    if (mu_.is_grid()) {
      const auto& g = mu_.grid();
      Point<D> x = g.node(k);
      std::uniform_real_distribution<double> jitter(-0.5 * g.spacing(), 0.5 * g.spacing());
      for (int a = 0; a < D; ++a) x[a] += jitter(gen);
      return x;
    }
    const auto& c = mu_.mixture().components()[k];
    std::normal_distribution<double> normal(0.0, 1.0);
    Point<D> x = c.mean;
    for (int a = 0; a < D; ++a) x[a] += c.sigma * normal(gen);
    return x;
  }

 private:
  Measure<D> mu_;
  std::discrete_distribution<std::size_t> pick_;
};

// ---------------------------------------------------------------------------
// CSV input and output

namespace detail {

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    cell.erase(0, cell.find_first_not_of(" \t\r"));
    cell.erase(cell.find_last_not_of(" \t\r") + 1);
    out.push_back(cell);
  }
  return out;
}

inline double parse_double(const std::string& s, const std::string& where) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw InvalidArgument(where + ": cannot parse number '" + s + "'");
  }
}

inline std::string format_double(double v) {
  std::ostringstream ss;
  ss << std::setprecision(17) << v;
  return ss.str();
}

}  // namespace detail

/// Columns `w,x1[,x2]` with a header row.
template <int D>
void write_empirical_csv(const EmpiricalMeasure<D>& m, std::ostream& out) {
  out << "w";
  for (int k = 1; k <= D; ++k) out << ",x" << k;
  out << "\n";
  for (std::size_t i = 0; i < m.size(); ++i) {
    out << detail::format_double(m.weights()[i]);
    for (int k = 0; k < D; ++k) out << "," << detail::format_double(m.points()[i][k]);
    out << "\n";
  }
}

template <int D>
EmpiricalMeasure<D> read_empirical_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw InvalidArgument("empirical csv: missing header");
  const auto header = detail::split_csv(line);
  if (header.empty() || header[0] != "w") throw InvalidArgument("empirical csv: header must start with 'w'");
  if (static_cast<int>(header.size()) != D + 1) {
    throw DimensionMismatch("empirical csv: header has " + std::to_string(header.size() - 1) +
                            " coordinates, expected " + std::to_string(D));
  }
  std::vector<Point<D>> points;
  std::vector<double> weights;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = detail::split_csv(line);
    const std::string where = "empirical csv row " + std::to_string(row);
    if (static_cast<int>(cells.size()) != D + 1) throw DimensionMismatch(where + ": wrong column count");
    weights.push_back(detail::parse_double(cells[0], where));
    Point<D> x;
    for (int k = 0; k < D; ++k) x[k] = detail::parse_double(cells[k + 1], where);
    points.push_back(x);
  }
  return EmpiricalMeasure<D>(std::move(points), std::move(weights));
}

/// Header `a,b,n`, one row with those values, then the densities one per row, row-major.
template <int D>
void write_grid_csv(const GridDensity<D>& g, std::ostream& out) {
  out << "a,b,n\n"
      << detail::format_double(g.lo()) << "," << detail::format_double(g.hi()) << "," << g.n() << "\n";
  for (double v : g.values()) out << detail::format_double(v) << "\n";
}

template <int D>
GridDensity<D> read_grid_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || detail::split_csv(line) != std::vector<std::string>{"a", "b", "n"}) {
    throw InvalidArgument("grid csv: header must be 'a,b,n'");
  }
  if (!std::getline(in, line)) throw InvalidArgument("grid csv: missing box row");
  const auto box = detail::split_csv(line);
  if (box.size() != 3) throw InvalidArgument("grid csv: box row needs three values");
  const double a = detail::parse_double(box[0], "grid csv box");
  const double b = detail::parse_double(box[1], "grid csv box");
  const double nd = detail::parse_double(box[2], "grid csv box");
  if (nd < 1.0 || nd != std::floor(nd)) throw InvalidArgument("grid csv: n must be a positive integer");
  const auto n = static_cast<std::size_t>(nd);
  std::vector<double> values;
  std::size_t row = 2;
  while (std::getline(in, line)) {
    ++row;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    values.push_back(detail::parse_double(line, "grid csv row " + std::to_string(row)));
  }
  if (values.size() != GridDensity<D>::total_nodes(n)) {
    throw DimensionMismatch("grid csv: " + std::to_string(values.size()) + " values do not form a " +
                            std::to_string(D) + "-dimensional grid with n = " + std::to_string(n));
  }
  return GridDensity<D>(a, b, n, std::move(values));
}

}  // namespace mfc
