#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <future>
#include <limits>
#include <memory>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "core.hpp"
#include "costs.hpp"
#include "dynamics.hpp"
#include "measures.hpp"
#include "smooth_function.hpp"
#include "sobolev.hpp"
#include "value.hpp"

namespace mfc {

// ---------------------------------------------------------------------------
// Parametric families

/// A finite lattice of Gaussian mixtures indexed by parameter axes.
///
/// Member indices are row-major over the axes. Every extremum reported by this
/// module is relative to such a family.
template <int D>
struct MeasureFamily {
  std::vector<std::string> names;
  std::vector<std::vector<double>> axes;
  std::function<GaussianMixture<D>(const std::vector<double>&)> build;

  std::size_t size() const {
    std::size_t n = 1;
    for (const auto& a : axes) n *= a.size();
    return axes.empty() ? 0 : n;
  }

  std::vector<std::size_t> coords(std::size_t flat) const {
    std::vector<std::size_t> c(axes.size());
    for (std::size_t a = axes.size(); a-- > 0;) {
      c[a] = flat % axes[a].size();
      flat /= axes[a].size();
    }
    return c;
  }

  std::vector<double> params(std::size_t flat) const {
    const auto c = coords(flat);
    std::vector<double> p(c.size());
    for (std::size_t a = 0; a < c.size(); ++a) p[a] = axes[a][c[a]];
    return p;
  }

  GaussianMixture<D> member(std::size_t flat) const { return build(params(flat)); }

  /// True when some parameter sits at the end of its axis (and that axis can move).
  bool on_boundary(std::size_t flat) const {
    const auto c = coords(flat);
    for (std::size_t a = 0; a < c.size(); ++a) {
      if (axes[a].size() > 1 && (c[a] == 0 || c[a] + 1 == axes[a].size())) return true;
    }
    return false;
  }

  std::string describe(std::size_t flat) const {
    const auto p = params(flat);
    std::string s = "member " + std::to_string(flat) + " (";
    for (std::size_t a = 0; a < p.size(); ++a) {
      if (a) s += ", ";
      s += names[a] + "=" + detail::format_double(p[a]);
    }
    return s + ")";
  }

  /// N(m e_1, sigma^2 I) over the lattice means x sigmas.
  static MeasureFamily gaussians(std::vector<double> means, std::vector<double> sigmas) {
    require(!means.empty() && !sigmas.empty(), "family: need at least one mean and one sigma");
    for (double s : sigmas) require(s > 0.0, "family: sigmas must be positive");
    MeasureFamily f;
    f.names = {"mean", "sigma"};
    f.axes = {std::move(means), std::move(sigmas)};
    f.build = [](const std::vector<double>& p) {
      Point<D> m{};
      m[0] = p[0];
      return GaussianMixture<D>::normal(m, p[1]);
    };
    return f;
  }

  /// Four means in [-1, 1] times three sigmas in [0.5, 2].
  static MeasureFamily twelve_gaussians() {
    return gaussians({-1.0, -1.0 / 3.0, 1.0 / 3.0, 1.0}, {0.5, 1.0, 2.0});
  }
};

/// Members discretized on one grid together with their transforms, pairwise rho and theta.
template <int D>
struct FamilyGeometry {
  std::vector<Measure<D>> members;
  std::vector<std::vector<Complex>> transforms;
  std::vector<std::vector<double>> rho;
  std::vector<double> theta;

  static FamilyGeometry build(const MeasureFamily<D>& family, const SpaceTimeGrid<D>& grid,
                              const FrequencyQuadrature<D>& quad) {
    require(std::abs(quad.order() - SobolevIndex<D>::order) < 1e-12, "family geometry: quadrature must use order n*");
    FamilyGeometry g;
    const std::size_t M = family.size();
    for (std::size_t i = 0; i < M; ++i) {
      g.members.push_back(Measure<D>(discretize<D>(family.member(i), grid.lo, grid.hi, grid.nx)));
      g.transforms.push_back(quad.transform(g.members.back()));
      g.theta.push_back(mfc::theta<D>(g.members.back()));
    }
    g.rho.assign(M, std::vector<double>(M, 0.0));
    for (std::size_t i = 0; i < M; ++i) {
      for (std::size_t j = i + 1; j < M; ++j) {
        g.rho[i][j] = g.rho[j][i] = neg_norm_from_transforms<D>(g.transforms[i], g.transforms[j], quad);
      }
    }
    return g;
  }
};

// ---------------------------------------------------------------------------
// Value surfaces

/// v(t_a, mu_i) over a time list and a family, each entry an independent value solve.
template <int D>
struct ValueSurface {
  MeasureFamily<D> family;
  std::vector<double> times;
  SpaceTimeGrid<D> grid;
  std::vector<std::vector<double>> values;  ///< [time][member]

  double at(std::size_t ti, std::size_t mi) const { return values[ti][mi]; }

  double sup_norm() const {
    double s = 0.0;
    for (const auto& row : values) {
      for (double v : row) s = std::max(s, std::abs(v));
    }
    return s;
  }

  ValueSurface shifted(double c) const {
    ValueSurface out = *this;
    for (auto& row : out.values) {
      for (double& v : row) v += c;
    }
    return out;
  }
};

/// Solve v(t, mu) for every time and member on `grid`.
///
/// Throws SolverError naming the member when a fixed point does not converge.
template <int D>
ValueSurface<D> build_value_surface(const CostModel<D>& model, const MeasureFamily<D>& family,
                                    const std::vector<double>& times, const FixedPointConfig& fp,
                                    const SpaceTimeGrid<D>& grid) {
  require(family.size() >= 1 && !times.empty(), "value surface: empty family or time list");
  ValueSurface<D> s;
  s.family = family;
  s.times = times;
  s.grid = grid;
  std::vector<GridDensity<D>> members;
  for (std::size_t i = 0; i < family.size(); ++i) {
    members.push_back(discretize<D>(family.member(i), grid.lo, grid.hi, grid.nx));
  }
  for (double t : times) {
    std::vector<double> row;
    for (std::size_t i = 0; i < members.size(); ++i) {
      const auto est = solve_value<D>(t, Measure<D>(members[i]), model, fp, grid);
      if (!est.converged) {
        throw SolverError("value solve failed for " + family.describe(i) + " at t=" + detail::format_double(t) +
                          ": " + est.note);
      }
      row.push_back(est.v);
    }
    s.values.push_back(std::move(row));
  }
  return s;
}

/// Richardson estimate max |v_h - v_{h/2}| * 4/3 for a second-order scheme.
template <int D>
double richardson_estimate(const ValueSurface<D>& coarse, const ValueSurface<D>& fine) {
  require(coarse.values.size() == fine.values.size() && coarse.family.size() == fine.family.size(),
          "richardson: surfaces cover different points");
  double m = 0.0;
  for (std::size_t a = 0; a < coarse.values.size(); ++a) {
    for (std::size_t i = 0; i < coarse.values[a].size(); ++i) {
      m = std::max(m, std::abs(coarse.values[a][i] - fine.values[a][i]));
    }
  }
  return m * 4.0 / 3.0;
}

// ---------------------------------------------------------------------------
// Lipschitz scan

struct LipschitzRow {
  std::size_t i = 0;
  std::size_t j = 0;
  double rho = 0.0;
  double dv = 0.0;
  double ratio = 0.0;
};

struct LipschitzReport {
  double time = 0.0;
  double max_ratio = 0.0;
  std::vector<LipschitzRow> rows;
};

/// Pairwise |v(t, mu_i) - v(t, mu_j)| / rho(mu_i - mu_j) at one surface time.
template <int D>
LipschitzReport lipschitz_table(const ValueSurface<D>& surface, std::size_t time_index,
                                const FamilyGeometry<D>& geom) {
  const std::size_t M = surface.family.size();
  require(M >= 2, "lipschitz scan: family needs at least two members");
  LipschitzReport rep;
  rep.time = surface.times[time_index];
  for (std::size_t i = 0; i < M; ++i) {
    for (std::size_t j = i + 1; j < M; ++j) {
      LipschitzRow r{i, j, geom.rho[i][j], std::abs(surface.at(time_index, i) - surface.at(time_index, j)), 0.0};
      if (r.rho == 0.0) continue;  // identical members: 0/0
      r.ratio = r.dv / r.rho;
      rep.max_ratio = std::max(rep.max_ratio, r.ratio);
      rep.rows.push_back(r);
    }
  }
  return rep;
}

template <int D>
LipschitzReport lipschitz_scan(const CostModel<D>& model, double t, const MeasureFamily<D>& family,
                               const FrequencyQuadrature<D>& quad, const FixedPointConfig& fp,
                               const SpaceTimeGrid<D>& grid) {
  require(family.size() >= 2, "lipschitz scan: family needs at least two members");
  const auto surface = build_value_surface<D>(model, family, {t}, fp, grid);
  return lipschitz_table<D>(surface, 0, FamilyGeometry<D>::build(family, grid, quad));
}

struct LipschitzRefinement {
  LipschitzReport coarse;
  LipschitzReport fine;
  double relative_change = 0.0;
  bool pass = false;
};

/// Scan on `grid` and on grid.refined(); PASS when max_ratio moves by less than `band`.
template <int D>
LipschitzRefinement lipschitz_refinement(const CostModel<D>& model, double t, const MeasureFamily<D>& family,
                                         const FrequencyQuadrature<D>& quad, const FixedPointConfig& fp,
                                         const SpaceTimeGrid<D>& grid, double band = 0.15) {
  LipschitzRefinement r;
  r.coarse = lipschitz_scan<D>(model, t, family, quad, fp, grid);
  r.fine = lipschitz_scan<D>(model, t, family, quad, fp, grid.refined());
  r.relative_change = std::abs(r.fine.max_ratio - r.coarse.max_ratio) / std::max(r.fine.max_ratio, 1e-300);
  r.pass = std::isfinite(r.coarse.max_ratio) && std::isfinite(r.fine.max_ratio) && r.relative_change < band;
  return r;
}

/// ||u(t, .)||_{n*} for the potential at level k, windowed by h(|x| / R) with R half the box half-width.
///
/// For a mu-linear model v(t, mu) = mu(u(t, .)), so this bounds every Lipschitz ratio
/// of measures that carry no mass beyond R.
template <int D>
double duality_bound(const PotentialField<D>& field, std::size_t k, const FrequencyQuadrature<D>& quad) {
  const auto& g = field.grid();
  const double center = 0.5 * (g.lo + g.hi);
  const double R = 0.25 * (g.hi - g.lo);
  std::vector<double> w(field.u(k).size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    Point<D> x = g.node(i);
    for (int a = 0; a < D; ++a) x[a] -= center;
    w[i] = field.u(k)[i] * RadialCutoff::eval(std::sqrt(norm2<D>(x)) / R)[0];
  }
  const auto f = spectral_transform_values<D>(w, g.lo, g.hi, g.nx, quad);
  return pos_norm<D>(f, static_cast<double>(SobolevIndex<D>::order));
}

// ---------------------------------------------------------------------------
// Test functions

enum class Side { sub, super };

inline const char* side_name(Side s) { return s == Side::sub ? "sub" : "super"; }

/// phi(t, mu) with its time derivative and its linear derivative kappa = d_mu phi(t, mu).
template <int D>
struct TestFunction {
  std::function<double(double, const Measure<D>&)> value;
  std::function<double(double, const Measure<D>&)> time_derivative;
  std::function<SmoothFunction<D>(double, const Measure<D>&)> measure_derivative;

  TestFunction plus_constant(double c) const {
    TestFunction f = *this;
    auto v = value;
    f.value = [v, c](double t, const Measure<D>& mu) { return v(t, mu) + c; };
    return f;
  }

  /// phi + c (T - t).
  TestFunction plus_time_ramp(double c, double horizon) const {
    TestFunction f = *this;
    auto v = value;
    auto dt = time_derivative;
    f.value = [v, c, horizon](double t, const Measure<D>& mu) { return v(t, mu) + c * (horizon - t); };
    f.time_derivative = [dt, c](double t, const Measure<D>& mu) { return dt(t, mu) - c; };
    return f;
  }

  /// phi + sign * w ((t - t_p)^2 + rho^2(mu - mu_p)), sign = +1 for sub and -1 for super.
  ///
  /// Makes (t_p, mu_p) a strict extremum of v - phi when v - phi is nearly flat;
  /// both penalty derivatives vanish at the touching point.
  TestFunction penalized(double tp, const Measure<D>& mup, double weight, Side side,
                         const FrequencyQuadrature<D>& quad) const {
    const double sgn = side == Side::sub ? 1.0 : -1.0;
    auto fp = std::make_shared<const std::vector<Complex>>(quad.transform(mup));
    auto q = std::make_shared<const FrequencyQuadrature<D>>(quad);
    TestFunction f = *this;
    auto v = value;
    auto dt = time_derivative;
    auto dm = measure_derivative;
    f.value = [=](double t, const Measure<D>& mu) {
      const double r = neg_norm_from_transforms<D>(q->transform(mu), *fp, *q);
      return v(t, mu) + sgn * weight * ((t - tp) * (t - tp) + r * r);
    };
    f.time_derivative = [=](double t, const Measure<D>& mu) { return dt(t, mu) + sgn * 2.0 * weight * (t - tp); };
    f.measure_derivative = [=](double t, const Measure<D>& mu) {
      const auto kappa = linear_derivative_kappa_from_transforms<D>(q->transform(mu), *fp, *q);
      return linear_combination<D>(1.0, dm(t, mu), sgn * 2.0 * weight, kappa);
    };
    return f;
  }
};

namespace detail {

/// Multilinear interpolation of nodal values on the grid, clamped to the box.
template <int D>
double interpolate_nodal(const SpaceTimeGrid<D>& g, const std::vector<double>& values, const Point<D>& x) {
  const double h = g.spacing();
  std::array<std::size_t, D> i0;
  std::array<double, D> frac;
  for (int a = 0; a < D; ++a) {
    const double s = std::clamp((x[a] - g.lo) / h, 0.0, static_cast<double>(g.nx - 1));
    i0[a] = std::min(static_cast<std::size_t>(s), g.nx - 2);
    frac[a] = s - static_cast<double>(i0[a]);
  }
  double out = 0.0;
  for (unsigned corner = 0; corner < (1u << D); ++corner) {
    double w = 1.0;
    std::size_t flat = 0;
    for (int a = 0; a < D; ++a) {
      const bool up = (corner >> a) & 1u;
      w *= up ? frac[a] : 1.0 - frac[a];
      flat = flat * g.nx + i0[a] + (up ? 1 : 0);
    }
    if (w != 0.0) out += w * values[flat];
  }
  return out;
}

/// Level bracket (k, k+1, weight of k+1) for time t; exact levels give weight 0.
template <int D>
std::tuple<std::size_t, std::size_t, double> level_bracket(const SpaceTimeGrid<D>& g, double t) {
  const double s = (t - g.t0) / g.dt;
  const double last = static_cast<double>(g.steps());
  require(s > -1e-9 && s < last + 1e-9, "test function: time outside the potential's grid");
  const double r = std::round(s);
  if (std::abs(s - r) < 1e-9) {
    const auto k = static_cast<std::size_t>(r);
    return {k, k, 0.0};
  }
  const auto k = static_cast<std::size_t>(std::floor(s));
  return {k, k + 1, s - static_cast<double>(k)};
}

}  // namespace detail

/// phi(t, mu) = mu(u(t, .)) for a solved potential u, the value of a mu-linear model.
///
/// d_t phi uses centered level differences (one-sided at the ends); d_mu phi is u(t, .)
/// with the grid's discrete gradient and Laplacian interpolated between nodes.
template <int D>
TestFunction<D> potential_test_function(std::shared_ptr<const PotentialField<D>> field) {
  struct Tables {
    std::vector<std::vector<double>> grad[D];
    std::vector<std::vector<double>> lap;
  };
  auto tab = std::make_shared<Tables>();
  const auto& g = field->grid();
  for (std::size_t k = 0; k < field->levels(); ++k) {
    for (int a = 0; a < D; ++a) tab->grad[a].emplace_back(g.nodes());
    tab->lap.emplace_back(g.nodes());
    for (std::size_t i = 0; i < g.nodes(); ++i) {
      const Point<D> gr = field->gradient(k, i);
      for (int a = 0; a < D; ++a) tab->grad[a][k][i] = gr[a];
      tab->lap[k][i] = field->laplacian(k, i);
    }
  }
  const auto u_at = [field](std::size_t k, const Point<D>& x) {
    return detail::interpolate_nodal<D>(field->grid(), field->u(k), x);
  };
  TestFunction<D> f;
  f.value = [field, u_at](double t, const Measure<D>& mu) {
    const auto [k0, k1, w] = detail::level_bracket<D>(field->grid(), t);
    return integrate<D>(mu, [&](const Point<D>& x) { return (1.0 - w) * u_at(k0, x) + w * u_at(k1, x); });
  };
  f.time_derivative = [field, u_at](double t, const Measure<D>& mu) {
    const auto& gr = field->grid();
    auto [k0, k1, w] = detail::level_bracket<D>(gr, t);
    double span = gr.dt;
    if (k0 == k1) {
      k0 = k0 == 0 ? 0 : k0 - 1;
      k1 = std::min(k1 + 1, field->levels() - 1);
      span = gr.dt * static_cast<double>(k1 - k0);
    }
    return integrate<D>(mu, [&](const Point<D>& x) { return (u_at(k1, x) - u_at(k0, x)) / span; });
  };
  double bound = 0.0;
  for (std::size_t k = 0; k < field->levels(); ++k) {
    for (double v : field->u(k)) bound = std::max(bound, std::abs(v));
  }
  f.measure_derivative = [field, tab, bound](double t, const Measure<D>&) {
    const auto [k0, k1, w] = detail::level_bracket<D>(field->grid(), t);
    return SmoothFunction<D>(
        [field, tab, k0, k1, w](const Point<D>& x) {
          const auto& gr = field->grid();
          const auto lerp = [&](const std::vector<std::vector<double>>& a) {
            return (1.0 - w) * detail::interpolate_nodal<D>(gr, a[k0], x) +
                   w * detail::interpolate_nodal<D>(gr, a[k1], x);
          };
          Jet<D> j;
          j.value = (1.0 - w) * detail::interpolate_nodal<D>(gr, field->u(k0), x) +
                    w * detail::interpolate_nodal<D>(gr, field->u(k1), x);
          for (int a = 0; a < D; ++a) j.gradient[a] = lerp(tab->grad[a]);
          j.laplacian = lerp(tab->lap);
          return j;
        },
        Growth::bounded, bound);
  };
  return f;
}

/// Sampled check that d_mu phi(t, mu) carries a growth tag it actually obeys.
struct Membership {
  Growth growth = Growth::bounded;
  double growth_ratio = 0.0;
  bool in_cs = false;
};

template <int D>
Membership test_function_membership(const TestFunction<D>& phi, double t, const Measure<D>& mu, double radius,
                                    std::uint64_t seed = 7) {
  const SmoothFunction<D> kappa = phi.measure_derivative(t, mu);
  const auto audit = audit_smooth_function<D>(kappa, 200, radius, seed);
  return {kappa.growth(), audit.max_growth_ratio, audit.growth_ok};
}

// ---------------------------------------------------------------------------
// Viscosity inequalities

enum class Verdict { pass, fail, inconclusive };

inline const char* verdict_name(Verdict v) {
  switch (v) {
    case Verdict::pass: return "PASS";
    case Verdict::fail: return "FAIL";
    default: return "INCONCLUSIVE";
  }
}

/// slack = -d_t phi + H(mu, d_mu phi) - l at the located extremum of v - phi.
///
/// A subsolution needs slack <= 0 and a supersolution slack >= 0; both are read
/// with `tolerance` of room.
struct ViscosityReport {
  Side side = Side::sub;
  std::size_t time_index = 0;
  std::size_t member = 0;
  double t = 0.0;
  double lhs = 0.0;
  double ell = 0.0;
  double slack = 0.0;
  double tolerance = 0.0;
  Verdict verdict = Verdict::inconclusive;
  std::string note;
};

namespace detail {

/// v - phi at every (time, member) of the surface, [time][member].
template <int D>
std::vector<std::vector<double>> touching_table(const ValueSurface<D>& surface, const FamilyGeometry<D>& geom,
                                                const TestFunction<D>& phi) {
  std::vector<std::vector<double>> d(surface.times.size(), std::vector<double>(surface.family.size()));
  for (std::size_t a = 0; a < surface.times.size(); ++a) {
    for (std::size_t i = 0; i < surface.family.size(); ++i) {
      d[a][i] = surface.at(a, i) - phi.value(surface.times[a], geom.members[i]);
    }
  }
  return d;
}

template <int D>
ViscosityReport check_at_extremum(const ValueSurface<D>& surface, const FamilyGeometry<D>& geom,
                                  const std::vector<std::vector<double>>& table, const TestFunction<D>& phi,
                                  Side side, const CostModel<D>& model, double tolerance) {
  require(tolerance >= 0.0, "viscosity check: tolerance must be nonnegative");
  ViscosityReport rep;
  rep.side = side;
  rep.tolerance = tolerance;
  double best = side == Side::sub ? -std::numeric_limits<double>::infinity()
                                  : std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < table.size(); ++a) {
    for (std::size_t i = 0; i < table[a].size(); ++i) {
      if (side == Side::sub ? table[a][i] > best : table[a][i] < best) {
        best = table[a][i];
        rep.time_index = a;
        rep.member = i;
      }
    }
  }
  rep.t = surface.times[rep.time_index];
  const Measure<D>& mu = geom.members[rep.member];
  rep.lhs = -phi.time_derivative(rep.t, mu) + hamiltonian<D>(mu, phi.measure_derivative(rep.t, mu));
  rep.ell = model.running(rep.t, mu);
  rep.slack = rep.lhs - rep.ell;
  const bool time_edge =
      surface.times.size() > 1 && (rep.time_index == 0 || rep.time_index + 1 == surface.times.size());
  if (time_edge || surface.family.on_boundary(rep.member)) {
    rep.verdict = Verdict::inconclusive;
    rep.note = "extremum on the boundary of the evaluated family";
    return rep;
  }
  const bool ok = side == Side::sub ? rep.slack <= tolerance : rep.slack >= -tolerance;
  rep.verdict = ok ? Verdict::pass : Verdict::fail;
  return rep;
}

}  // namespace detail

/// Locate the max (sub) or min (super) of v - phi over the surface points and
/// evaluate the viscosity inequality there.
template <int D>
ViscosityReport viscosity_check(const ValueSurface<D>& surface, const FamilyGeometry<D>& geom,
                                const TestFunction<D>& phi, Side side, const CostModel<D>& model, double tolerance) {
  return detail::check_at_extremum<D>(surface, geom, detail::touching_table<D>(surface, geom, phi), phi, side, model,
                                      tolerance);
}

/// One sub and one super check per interior (time, member) point, each with phi
/// penalized so that the point is the extremum it should be.
///
/// The penalized tables reuse the family's pairwise rho instead of re-evaluating phi.
template <int D>
std::vector<ViscosityReport> viscosity_sweep(const ValueSurface<D>& surface, const FamilyGeometry<D>& geom,
                                             const TestFunction<D>& phi, const CostModel<D>& model,
                                             const FrequencyQuadrature<D>& quad, double tolerance,
                                             double weight = 1.0) {
  const auto base = detail::touching_table<D>(surface, geom, phi);
  std::vector<ViscosityReport> out;
  for (std::size_t a = 1; a + 1 < surface.times.size(); ++a) {
    for (std::size_t p = 0; p < surface.family.size(); ++p) {
      if (surface.family.on_boundary(p)) continue;
      for (Side side : {Side::sub, Side::super}) {
        const double sgn = side == Side::sub ? 1.0 : -1.0;
        auto table = base;
        for (std::size_t b = 0; b < table.size(); ++b) {
          const double dt = surface.times[b] - surface.times[a];
          for (std::size_t i = 0; i < table[b].size(); ++i) {
            table[b][i] -= sgn * weight * (dt * dt + geom.rho[i][p] * geom.rho[i][p]);
          }
        }
        const auto touched = phi.penalized(surface.times[a], geom.members[p], weight, side, quad);
        auto rep = detail::check_at_extremum<D>(surface, geom, table, touched, side, model, tolerance);
        if (rep.time_index != a || rep.member != p) {
          rep.verdict = Verdict::inconclusive;
          rep.note = "penalized extremum landed elsewhere";
        }
        out.push_back(rep);
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Doubling of variables

struct DoublingConfig {
  std::vector<double> eps = {1e-3, 3e-3, 1e-2, 3e-2, 1e-1};
  std::vector<double> delta = {1e-2, 3e-2, 1e-1};
  double delta_star = 0.1;
  double gamma0 = 0.05;
  int n = 8;
  std::size_t restarts = 3;
  std::uint64_t seed = 1;

  void validate() const {
    require(!eps.empty() && !delta.empty(), "doubling.eps and doubling.delta must be nonempty");
    for (double e : eps) require(e > 0.0 && e <= 1.0, "doubling.eps entries must lie in (0, 1]");
    for (double d : delta) require(d > 0.0 && d <= delta_star, "doubling.delta entries must lie in (0, doubling.delta_star]");
    require(delta_star > 0.0 && delta_star <= 1.0, "doubling.delta_star must lie in (0, 1]");
    require(gamma0 > 0.0, "doubling.gamma0 must be positive");
    require(n >= 1, "doubling.n must be at least one");
    require(!cells().empty(), "doubling: no (eps, delta) pair satisfies eps <= delta");
  }

  /// Evaluated (eps, delta) pairs, eps <= delta, ordered by delta then eps.
  std::vector<std::pair<double, double>> cells() const {
    std::vector<std::pair<double, double>> c;
    for (double d : delta) {
      for (double e : eps) {
        if (e <= d) c.emplace_back(e, d);
      }
    }
    return c;
  }
};

struct DoublingPoint {
  std::size_t t = 0;
  std::size_t mu = 0;
  std::size_t s = 0;
  std::size_t nu = 0;
};

struct DoublingReport {
  double eps = 0.0;
  double delta = 0.0;
  DoublingPoint argmax;
  double t = 0.0;
  double s = 0.0;
  double phi = 0.0;
  double tau = 0.0;
  double rho_eta = 0.0;
  double theta_mu = 0.0;
  double theta_nu = 0.0;
  bool seed = false;  ///< max Phi > 0
  double bound_lhs = 0.0;
  double c_star = 0.0;
  bool bound_holds = false;
  double ratio = 0.0;  ///< rho(eta) / eps
  double c_hat = 0.0;
  bool main1_holds = false;
  double I = 0.0;
  double I_fourier = 0.0;  ///< same quantity from the frequency side
  double J = 0.0;
  double K = 0.0;
  double half_eta_grad = 0.0;  ///< 1/2 eta(|grad kappa|^2)
  bool I_holds = false;
  std::size_t evaluations = 0;
};

struct DoublingSummary {
  std::vector<DoublingReport> cells;
  double c_star = 0.0;
  double c_hat_n = 0.0;  ///< family Lipschitz constant of v over all surface times
  double c_hat = 0.0;    ///< 2 c_hat_n + sqrt(2 c_star)
  double max_ratio_sqrt_delta = 0.0;
  bool all_bound = true;
  bool all_main1 = true;
  bool all_I = true;
};

/// Phi_{eps,delta} over a pair of surfaces on the same family and times.
template <int D>
class DoublingFunctional {
 public:
  DoublingFunctional(const ValueSurface<D>& u, const ValueSurface<D>& v, const FamilyGeometry<D>& geom,
                     double horizon, double gamma0)
      : u_(u), v_(v), geom_(geom), horizon_(horizon), gamma0_(gamma0) {
    require(u.times == v.times && u.family.size() == v.family.size() && geom.members.size() == u.family.size(),
            "doubling: surfaces and geometry disagree on the evaluated points");
  }

  /// u(t, mu) - 2 gamma0 (T - t + 1).
  double u_bar(std::size_t ti, std::size_t mi) const {
    return u_.at(ti, mi) - 2.0 * gamma0_ * (horizon_ - u_.times[ti] + 1.0);
  }

  double operator()(double eps, double delta, const DoublingPoint& p) const {
    const double tau = u_.times[p.t] - v_.times[p.s];
    const double r = geom_.rho[p.mu][p.nu];
    return u_bar(p.t, p.mu) - v_.at(p.s, p.nu) - (tau * tau + r * r) / (2.0 * eps) - delta * geom_.theta[p.mu] -
           eps * geom_.theta[p.nu];
  }

  /// sup |u_bar| + sup |v| over the surfaces.
  double c_star() const {
    double a = 0.0;
    for (std::size_t ti = 0; ti < u_.times.size(); ++ti) {
      for (std::size_t i = 0; i < u_.family.size(); ++i) a = std::max(a, std::abs(u_bar(ti, i)));
    }
    return a + v_.sup_norm();
  }

  std::size_t times() const { return u_.times.size(); }
  std::size_t members() const { return u_.family.size(); }

 private:
  const ValueSurface<D>& u_;
  const ValueSurface<D>& v_;
  const FamilyGeometry<D>& geom_;
  double horizon_;
  double gamma0_;
};

namespace detail {

template <int D>
DoublingPoint maximize_doubling(const DoublingFunctional<D>& Phi, double eps, double delta, std::size_t restarts,
                                std::mt19937_64& gen, std::size_t& evaluations) {
  const std::size_t T = Phi.times();
  const std::size_t M = Phi.members();
  DoublingPoint best;
  double best_val = -std::numeric_limits<double>::infinity();
  const auto eval = [&](const DoublingPoint& p) {
    ++evaluations;
    const double f = Phi(eps, delta, p);
    if (f > best_val) {
      best_val = f;
      best = p;
    }
    return f;
  };
  // first start: best diagonal point, then random starts
  DoublingPoint diag;
  double diag_val = -std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < T; ++a) {
    for (std::size_t i = 0; i < M; ++i) {
      const double f = eval({a, i, a, i});
      if (f > diag_val) {
        diag_val = f;
        diag = {a, i, a, i};
      }
    }
  }
  std::uniform_int_distribution<std::size_t> pick_t(0, T - 1);
  std::uniform_int_distribution<std::size_t> pick_m(0, M - 1);
  for (std::size_t r = 0; r <= restarts; ++r) {
    DoublingPoint p = r == 0 ? diag : DoublingPoint{pick_t(gen), pick_m(gen), pick_t(gen), pick_m(gen)};
    double cur = eval(p);
    for (int sweep = 0; sweep < 1000; ++sweep) {
      const double before = cur;
      for (int block = 0; block < 4; ++block) {
        std::size_t* slot = block == 0 ? &p.t : block == 1 ? &p.mu : block == 2 ? &p.s : &p.nu;
        const std::size_t range = (block == 0 || block == 2) ? T : M;
        std::size_t arg = *slot;
        for (std::size_t c = 0; c < range; ++c) {
          if (c == *slot) continue;
          DoublingPoint q = p;
          std::size_t* qs = block == 0 ? &q.t : block == 1 ? &q.mu : block == 2 ? &q.s : &q.nu;
          *qs = c;
          const double f = eval(q);
          if (f > cur) {
            cur = f;
            arg = c;
          }
        }
        *slot = arg;
      }
      if (!(cur > before)) break;
    }
  }
  return best;
}

}  // namespace detail

/// Maximize Phi_{eps,delta} over the family for every configured cell and evaluate
/// the bound, norm-estimate and I/J/K certificates at each maximizer.
template <int D>
DoublingSummary doubling_experiment(const ValueSurface<D>& u_surface, const ValueSurface<D>& v_surface,
                                    const FamilyGeometry<D>& geom, const CostModel<D>& model_n,
                                    const DoublingConfig& cfg, const FrequencyQuadrature<D>& quad) {
  cfg.validate();
  require(u_surface.times.size() >= 2 || u_surface.family.size() >= 2,
          "doubling: family too small to move any coordinate");
  const DoublingFunctional<D> Phi(u_surface, v_surface, geom, model_n.horizon(), cfg.gamma0);
  DoublingSummary sum;
  sum.c_star = Phi.c_star();
  for (std::size_t a = 0; a < v_surface.times.size(); ++a) {
    if (v_surface.family.size() >= 2) sum.c_hat_n = std::max(sum.c_hat_n, lipschitz_table<D>(v_surface, a, geom).max_ratio);
  }
  sum.c_hat = 2.0 * sum.c_hat_n + std::sqrt(2.0 * sum.c_star);
  const auto cells = cfg.cells();
  const SmoothFunction<D> q = moment_weight<D>();

  const auto run_cell = [&](std::size_t idx) {
    const auto [eps, delta] = cells[idx];
    std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                      static_cast<std::uint32_t>(idx)};
    std::mt19937_64 gen(seq);
    DoublingReport r;
    r.eps = eps;
    r.delta = delta;
    r.argmax = detail::maximize_doubling<D>(Phi, eps, delta, cfg.restarts, gen, r.evaluations);
    const auto& p = r.argmax;
    r.t = u_surface.times[p.t];
    r.s = v_surface.times[p.s];
    r.phi = Phi(eps, delta, p);
    r.seed = r.phi > 0.0;
    r.tau = r.t - r.s;
    r.rho_eta = geom.rho[p.mu][p.nu];
    r.theta_mu = geom.theta[p.mu];
    r.theta_nu = geom.theta[p.nu];
    r.bound_lhs = (r.tau * r.tau + r.rho_eta * r.rho_eta) / (2.0 * eps) + delta * r.theta_mu + eps * r.theta_nu;
    r.c_star = sum.c_star;
    r.bound_holds = r.bound_lhs <= r.c_star;
    r.ratio = r.rho_eta / eps;
    r.c_hat = sum.c_hat;
    r.main1_holds = r.ratio <= sum.c_hat / std::sqrt(delta);

    // second-order terms at the maximizer, kappa = (1/eps) d_mu [rho^2/2](mu - nu)
    const Measure<D>& mu = geom.members[p.mu];
    const Measure<D>& nu = geom.members[p.nu];
    const auto kappa = scaled<D>(1.0 / eps, linear_derivative_kappa_from_transforms<D>(
                                                geom.transforms[p.mu], geom.transforms[p.nu], quad));
    struct Moments {
      double lap_k = 0.0, lap_q = 0.0, grad_plus = 0.0, grad_minus = 0.0, grad_k = 0.0;
    };
    const auto moments = [&](const Measure<D>& m, double plus, double minus) {
      Moments out;
      out.lap_k = integrate<D>(m, [&](const Point<D>& x) { return kappa.jet(x).laplacian; });
      out.lap_q = integrate<D>(m, [&](const Point<D>& x) { return q.jet(x).laplacian; });
      out.grad_plus = integrate<D>(m, [&](const Point<D>& x) {
        const auto jk = kappa.jet(x);
        const auto jq = q.jet(x);
        double s = 0.0;
        for (int a = 0; a < D; ++a) s += (jk.gradient[a] + plus * jq.gradient[a]) * (jk.gradient[a] + plus * jq.gradient[a]);
        return s;
      });
      out.grad_minus = integrate<D>(m, [&](const Point<D>& x) {
        const auto jk = kappa.jet(x);
        const auto jq = q.jet(x);
        double s = 0.0;
        for (int a = 0; a < D; ++a) s += (jk.gradient[a] - minus * jq.gradient[a]) * (jk.gradient[a] - minus * jq.gradient[a]);
        return s;
      });
      out.grad_k = integrate<D>(m, [&](const Point<D>& x) { return norm2<D>(kappa.jet(x).gradient); });
      return out;
    };
    const Moments mm = moments(mu, delta, 0.0);
    const Moments mn = moments(nu, 0.0, eps);
    r.I = 0.5 * ((mm.lap_k + delta * mm.lap_q) - (mn.lap_k - eps * mn.lap_q));
    r.J = 0.5 * (mn.grad_minus - mm.grad_plus);
    r.K = model_n.running(r.t, mu) - model_n.running(r.s, nu);
    r.half_eta_grad = 0.5 * (mm.grad_k - mn.grad_k);
    double spectral = 0.0;
    for (std::size_t j = 0; j < quad.size(); ++j) {
      spectral += quad.weights()[j] * norm2<D>(quad.nodes()[j]) * quad.sobolev_weights()[j] *
                  std::norm(geom.transforms[p.mu][j] - geom.transforms[p.nu][j]);
    }
    r.I_fourier = -spectral / (2.0 * eps) + 0.5 * (delta * mm.lap_q + eps * mn.lap_q);
    r.I_holds = r.I <= delta * D + 1e-8;
    return r;
  };

  std::vector<std::future<DoublingReport>> jobs;
  for (std::size_t i = 0; i < cells.size(); ++i) jobs.push_back(std::async(std::launch::async, run_cell, i));
  for (auto& j : jobs) sum.cells.push_back(j.get());
  for (const auto& r : sum.cells) {
    sum.max_ratio_sqrt_delta = std::max(sum.max_ratio_sqrt_delta, r.ratio * std::sqrt(r.delta));
    sum.all_bound = sum.all_bound && r.bound_holds;
    sum.all_main1 = sum.all_main1 && r.main1_holds;
    sum.all_I = sum.all_I && r.I_holds;
  }
  return sum;
}

/// Largest increase of Phi when delta grows, over all evaluated points and
/// consecutive delta values; nonpositive when Phi is nonincreasing in delta.
template <int D>
double penalty_monotonicity(const DoublingFunctional<D>& Phi, const DoublingConfig& cfg) {
  std::vector<double> deltas = cfg.delta;
  std::sort(deltas.begin(), deltas.end());
  double worst = -std::numeric_limits<double>::infinity();
  for (double eps : cfg.eps) {
    for (std::size_t k = 0; k + 1 < deltas.size(); ++k) {
      for (std::size_t a = 0; a < Phi.times(); ++a) {
        for (std::size_t i = 0; i < Phi.members(); ++i) {
          for (std::size_t b = 0; b < Phi.times(); ++b) {
            for (std::size_t j = 0; j < Phi.members(); ++j) {
              const DoublingPoint p{a, i, b, j};
              worst = std::max(worst, Phi(eps, deltas[k + 1], p) - Phi(eps, deltas[k], p));
            }
          }
        }
      }
    }
  }
  return worst;
}

/// max |Phi(t, mu, t, mu) - (u_bar - v - (delta + eps) theta)(t, mu)| over the diagonal.
template <int D>
double diagonal_identity_error(const DoublingFunctional<D>& Phi, const ValueSurface<D>& v_surface,
                               const FamilyGeometry<D>& geom, const DoublingConfig& cfg) {
  double worst = 0.0;
  for (const auto& [eps, delta] : cfg.cells()) {
    for (std::size_t a = 0; a < Phi.times(); ++a) {
      for (std::size_t i = 0; i < Phi.members(); ++i) {
        const double want = Phi.u_bar(a, i) - v_surface.at(a, i) - (delta + eps) * geom.theta[i];
        worst = std::max(worst, std::abs(Phi(eps, delta, {a, i, a, i}) - want));
      }
    }
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Uniform convergence along the mollification ladder

namespace detail {

/// T sup_t ||l_n(t) - l(t)||_inf + ||g_n - g||_inf, sampled as in approximation_gap.
template <int D>
double horizon_gap(const CostModel<D>& approx, const CostModel<D>& exact) {
  const double radius = 2.0 * std::max(1, approx.mollification()) + 8.0;
  const std::size_t points = D == 1 ? 4001 : 201;
  const double theta_max = std::max(std::abs(exact.time_factor(0.0)), std::abs(exact.time_factor(exact.horizon())));
  double run = 0.0, term = 0.0;
  for (std::size_t i = 0; i < exact.running_terms().size(); ++i) {
    run += exact.running_terms()[i].outer.lipschitz() *
           sup_distance<D>(approx.running_terms()[i].f, exact.running_terms()[i].f, radius, points);
  }
  for (std::size_t i = 0; i < exact.terminal_terms().size(); ++i) {
    term += exact.terminal_terms()[i].outer.lipschitz() *
            sup_distance<D>(approx.terminal_terms()[i].f, exact.terminal_terms()[i].f, radius, points);
  }
  return exact.horizon() * theta_max * run + term;
}

}  // namespace detail

struct ConvergenceRow {
  int n = 0;
  double gap = 0.0;          ///< T ||l_n - l||_inf + ||g_n - g||_inf
  double max_error = 0.0;    ///< max sampled |v_n - v|
  double max_change = 0.0;   ///< max sampled |v_n - v_{previous rung}|
  bool bound_holds = false;  ///< max_error <= gap
};

/// v_n on every rung of the ladder against v of the exact model, at the sampled
/// (time, measure) points. `slack` absorbs the fixed-point tolerance.
template <int D>
std::vector<ConvergenceRow> uniform_convergence_check(const CylindricalCost<D>& cyl, const std::vector<int>& ladder,
                                                      const std::vector<GridDensity<D>>& samples,
                                                      const std::vector<double>& times, const FixedPointConfig& fp,
                                                      const SpaceTimeGrid<D>& grid, double slack = 1e-7) {
  require(ladder.size() >= 3, "convergence: ladder needs at least three rungs");
  require(!samples.empty() && !times.empty(), "convergence: empty sample set");
  const CostModel<D> exact = CostModel<D>::exact(cyl);
  const auto values = [&](const CostModel<D>& m) {
    std::vector<double> out;
    for (double t : times) {
      for (const auto& s : samples) {
        const auto est = solve_value<D>(t, Measure<D>(s), m, fp, grid);
        if (!est.converged) throw SolverError("convergence: value solve failed at t=" + detail::format_double(t) + ": " + est.note);
        out.push_back(est.v);
      }
    }
    return out;
  };
  const std::vector<double> v = values(exact);
  std::vector<ConvergenceRow> rows;
  std::vector<double> previous;
  for (int n : ladder) {
    const CostModel<D> mn = mollify<D>(cyl, n);
    const std::vector<double> vn = values(mn);
    ConvergenceRow r;
    r.n = n;
    r.gap = detail::horizon_gap<D>(mn, exact);
    for (std::size_t k = 0; k < vn.size(); ++k) {
      r.max_error = std::max(r.max_error, std::abs(vn[k] - v[k]));
      if (!previous.empty()) r.max_change = std::max(r.max_change, std::abs(vn[k] - previous[k]));
    }
    r.bound_holds = r.max_error <= r.gap + slack;
    rows.push_back(r);
    previous = vn;
  }
  return rows;
}

// ---------------------------------------------------------------------------
// CSV

inline void write_lipschitz_csv(const LipschitzReport& rep, std::ostream& out) {
  out << "t,i,j,rho,abs_dv,ratio\n";
  for (const auto& r : rep.rows) {
    out << detail::format_double(rep.time) << ',' << r.i << ',' << r.j << ',' << detail::format_double(r.rho) << ','
        << detail::format_double(r.dv) << ',' << detail::format_double(r.ratio) << '\n';
  }
}

inline void write_viscosity_csv(const std::vector<ViscosityReport>& reps, std::ostream& out) {
  out << "side,time_index,member,t,lhs,ell,slack,tolerance,verdict\n";
  for (const auto& r : reps) {
    out << side_name(r.side) << ',' << r.time_index << ',' << r.member << ',' << detail::format_double(r.t) << ','
        << detail::format_double(r.lhs) << ',' << detail::format_double(r.ell) << ','
        << detail::format_double(r.slack) << ',' << detail::format_double(r.tolerance) << ','
        << verdict_name(r.verdict) << '\n';
  }
}

inline void write_doubling_csv(const DoublingReport& r, std::ostream& out) {
  const auto f = [](double x) { return detail::format_double(x); };
  out << "eps,delta,t_index,mu,s_index,nu,t,s,phi,tau,rho_eta,theta_mu,theta_nu,seed,bound_lhs,c_star,bound_holds,"
         "ratio,c_hat,main1_holds,I,I_fourier,J,K,half_eta_grad,I_holds,evaluations\n";
  out << f(r.eps) << ',' << f(r.delta) << ',' << r.argmax.t << ',' << r.argmax.mu << ',' << r.argmax.s << ','
      << r.argmax.nu << ',' << f(r.t) << ',' << f(r.s) << ',' << f(r.phi) << ',' << f(r.tau) << ',' << f(r.rho_eta)
      << ',' << f(r.theta_mu) << ',' << f(r.theta_nu) << ',' << (r.seed ? 1 : 0) << ',' << f(r.bound_lhs) << ','
      << f(r.c_star) << ',' << (r.bound_holds ? 1 : 0) << ',' << f(r.ratio) << ',' << f(r.c_hat) << ','
      << (r.main1_holds ? 1 : 0) << ',' << f(r.I) << ',' << f(r.I_fourier) << ',' << f(r.J) << ',' << f(r.K) << ','
      << f(r.half_eta_grad) << ',' << (r.I_holds ? 1 : 0) << ',' << r.evaluations << '\n';
}

inline void write_convergence_csv(const std::vector<ConvergenceRow>& rows, std::ostream& out) {
  out << "n,gap,max_error,max_change,bound_holds\n";
  for (const auto& r : rows) {
    out << r.n << ',' << detail::format_double(r.gap) << ',' << detail::format_double(r.max_error) << ','
        << detail::format_double(r.max_change) << ',' << (r.bound_holds ? 1 : 0) << '\n';
  }
}

}  // namespace mfc
