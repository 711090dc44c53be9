#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "core.hpp"
#include "measures.hpp"
#include "smooth_function.hpp"

namespace mfc {

/// Time horizon [t0, T] with step dt, times a node-based box [lo, hi]^D with nx nodes per axis.
template <int D>
struct SpaceTimeGrid {
  double t0 = 0.0;
  double horizon = 1.0;
  double dt = 0.005;
  double lo = -20.0;
  double hi = 20.0;
  std::size_t nx = 2401;

  void validate() const {
    require(dt > 0.0 && std::isfinite(dt), "grid.dt must be positive");
    require(horizon > t0, "grid: horizon must exceed the initial time");
    require(hi > lo, "grid.box must be a nonempty interval");
    require(nx >= 5, "grid.nx must be at least five");
    const double k = (horizon - t0) / dt;
    require(std::abs(k - std::round(k)) < 1e-9 * std::max(1.0, k), "grid.dt must divide the time horizon");
  }

  std::size_t steps() const { return static_cast<std::size_t>(std::llround((horizon - t0) / dt)); }
  double time(std::size_t k) const { return k == steps() ? horizon : t0 + dt * static_cast<double>(k); }
  double spacing() const { return (hi - lo) / static_cast<double>(nx - 1); }
  std::size_t nodes() const { return GridDensity<D>::total_nodes(nx); }
  double axis_node(std::size_t i) const { return lo + spacing() * static_cast<double>(i); }

  Point<D> node(std::size_t flat) const {
    Point<D> x;
    for (int a = D - 1; a >= 0; --a) {
      x[a] = axis_node(flat % nx);
      flat /= nx;
    }
    return x;
  }

  bool matches(const GridDensity<D>& g) const { return g.n() == nx && g.lo() == lo && g.hi() == hi; }

  /// Halves dt and the spacing; nodes of this grid stay nodes of the refined one.
  SpaceTimeGrid refined() const {
    SpaceTimeGrid r = *this;
    r.dt = 0.5 * dt;
    r.nx = 2 * nx - 1;
    return r;
  }

  /// Same box and step on a shorter horizon [t0', T].
  SpaceTimeGrid starting_at(double t_start) const {
    SpaceTimeGrid r = *this;
    r.t0 = t_start;
    r.validate();
    return r;
  }
};

/// Shipped default resolution: [-20, 20] with 2401 nodes (h = 1/60) and dt = 0.005 in d=1;
/// [-10, 10] with 101 nodes per axis and dt = 0.01 in d=2.
template <int D>
SpaceTimeGrid<D> default_grid() {
  if constexpr (D == 1) return SpaceTimeGrid<1>{};
  return SpaceTimeGrid<D>{0.0, 1.0, 0.01, -10.0, 10.0, 101};
}

namespace detail {

/// Thomas algorithm for a tridiagonal system; sub[0] and sup[n-1] are ignored.
inline void solve_tridiagonal(const std::vector<double>& sub, std::vector<double> diag, const std::vector<double>& sup,
                              std::vector<double>& rhs) {
  const std::size_t n = diag.size();
  for (std::size_t i = 1; i < n; ++i) {
    const double m = sub[i] / diag[i - 1];
    diag[i] -= m * sup[i - 1];
    rhs[i] -= m * rhs[i - 1];
  }
  rhs[n - 1] /= diag[n - 1];
  for (std::size_t i = n - 1; i-- > 0;) rhs[i] = (rhs[i] - sup[i] * rhs[i + 1]) / diag[i];
}

/// Calls f(start, stride) for every grid line along `axis`.
template <int D, class F>
void for_each_line(std::size_t n, int axis, F&& f) {
  std::size_t stride = 1;
  for (int a = D - 1; a > axis; --a) stride *= n;
  const std::size_t total = GridDensity<D>::total_nodes(n);
  for (std::size_t base = 0; base < total; ++base) {
    if ((base / stride) % n != 0) continue;
    f(base, stride);
  }
}

template <int D>
std::size_t axis_index(std::size_t flat, std::size_t n, int axis) {
  for (int a = D - 1; a > axis; --a) flat /= n;
  return flat % n;
}

template <int D>
std::size_t axis_stride(std::size_t n, int axis) {
  std::size_t s = 1;
  for (int a = D - 1; a > axis; --a) s *= n;
  return s;
}

/// B(z) = z / (e^z - 1).
inline double bernoulli(double z) {
  if (std::abs(z) < 1e-10) return 1.0 - 0.5 * z;
  return z / std::expm1(z);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Control fields

/// Feedback control alpha(t_k, x_i) on the nodes of a SpaceTimeGrid, one level per time step.
template <int D>
class ControlField {
 public:
  ControlField() = default;
  explicit ControlField(SpaceTimeGrid<D> grid)
      : grid_(grid), levels_(grid.steps() + 1, std::vector<Point<D>>(grid.nodes(), Point<D>{})) {}

  static ControlField zero(const SpaceTimeGrid<D>& grid) { return ControlField(grid); }

  template <class F>
  static ControlField from_function(const SpaceTimeGrid<D>& grid, F&& alpha) {
    ControlField c(grid);
    for (std::size_t k = 0; k < c.levels_.size(); ++k) {
      for (std::size_t i = 0; i < grid.nodes(); ++i) c.levels_[k][i] = alpha(grid.time(k), grid.node(i));
    }
    return c;
  }

  const SpaceTimeGrid<D>& grid() const { return grid_; }
  std::size_t levels() const { return levels_.size(); }
  const std::vector<Point<D>>& level(std::size_t k) const { return levels_[k]; }
  std::vector<Point<D>>& level(std::size_t k) { return levels_[k]; }

  /// Multilinear interpolation in x at level k; points outside the box use the nearest face.
  Point<D> at(std::size_t k, const Point<D>& x) const {
    const double h = grid_.spacing();
    std::array<std::size_t, D> i0;
    std::array<double, D> frac;
    for (int a = 0; a < D; ++a) {
      double s = (x[a] - grid_.lo) / h;
      s = std::clamp(s, 0.0, static_cast<double>(grid_.nx - 1));
      std::size_t i = std::min(static_cast<std::size_t>(s), grid_.nx - 2);
      i0[a] = i;
      frac[a] = s - static_cast<double>(i);
    }
    Point<D> out{};
    for (unsigned corner = 0; corner < (1u << D); ++corner) {
      double w = 1.0;
      std::size_t flat = 0;
      for (int a = 0; a < D; ++a) {
        const bool up = (corner >> a) & 1u;
        w *= up ? frac[a] : 1.0 - frac[a];
        flat = flat * grid_.nx + i0[a] + (up ? 1 : 0);
      }
      if (w == 0.0) continue;
      for (int a = 0; a < D; ++a) out[a] += w * levels_[k][flat][a];
    }
    return out;
  }

  /// max over levels and nodes of |alpha - other|.
  double sup_distance(const ControlField& other) const {
    double m = 0.0;
    for (std::size_t k = 0; k < levels_.size(); ++k) {
      for (std::size_t i = 0; i < levels_[k].size(); ++i) {
        m = std::max(m, std::sqrt(norm2<D>(levels_[k][i] - other.levels_[k][i])));
      }
    }
    return m;
  }

  /// (1 - lambda) * this + lambda * other.
  ControlField blend(double lambda, const ControlField& other) const {
    ControlField out = *this;
    for (std::size_t k = 0; k < levels_.size(); ++k) {
      for (std::size_t i = 0; i < levels_[k].size(); ++i) {
        out.levels_[k][i] = (1.0 - lambda) * levels_[k][i] + lambda * other.levels_[k][i];
      }
    }
    return out;
  }

 private:
  SpaceTimeGrid<D> grid_;
  std::vector<std::vector<Point<D>>> levels_;
};

// ---------------------------------------------------------------------------
// Potential field

/// u(t_k, x_i) together with its Cole-Hopf companion phi = e^{-u}.
template <int D>
class PotentialField {
 public:
  PotentialField(SpaceTimeGrid<D> grid, std::vector<std::vector<double>> phi) : grid_(grid), phi_(std::move(phi)) {
    u_.resize(phi_.size());
    for (std::size_t k = 0; k < phi_.size(); ++k) {
      u_[k].resize(phi_[k].size());
      for (std::size_t i = 0; i < phi_[k].size(); ++i) u_[k][i] = -std::log(phi_[k][i]);
    }
  }

  const SpaceTimeGrid<D>& grid() const { return grid_; }
  std::size_t levels() const { return u_.size(); }
  const std::vector<double>& u(std::size_t k) const { return u_[k]; }
  const std::vector<double>& phi(std::size_t k) const { return phi_[k]; }

  /// Centered differences; zero normal derivative on the walls.
  Point<D> gradient(std::size_t k, std::size_t flat) const {
    const std::size_t n = grid_.nx;
    const double h = grid_.spacing();
    Point<D> g{};
    for (int a = 0; a < D; ++a) {
      const std::size_t i = detail::axis_index<D>(flat, n, a);
      if (i == 0 || i + 1 == n) continue;
      const std::size_t s = detail::axis_stride<D>(n, a);
      g[a] = (u_[k][flat + s] - u_[k][flat - s]) / (2.0 * h);
    }
    return g;
  }

  /// Second differences with mirrored ghost nodes on the walls.
  double laplacian(std::size_t k, std::size_t flat) const {
    const std::size_t n = grid_.nx;
    const double h = grid_.spacing();
    double l = 0.0;
    for (int a = 0; a < D; ++a) {
      const std::size_t i = detail::axis_index<D>(flat, n, a);
      const std::size_t s = detail::axis_stride<D>(n, a);
      const double c = u_[k][flat];
      const double left = i == 0 ? u_[k][flat + s] : u_[k][flat - s];
      const double right = i + 1 == n ? u_[k][flat - s] : u_[k][flat + s];
      l += (left - 2.0 * c + right) / (h * h);
    }
    return l;
  }

  /// The Pontryagin feedback alpha* = -grad u.
  ControlField<D> feedback() const {
    ControlField<D> c(grid_);
    for (std::size_t k = 0; k < u_.size(); ++k) {
      for (std::size_t i = 0; i < grid_.nodes(); ++i) c.level(k)[i] = -1.0 * gradient(k, i);
    }
    return c;
  }

  /// Linear interpolation of u(t_k, .) at x (nearest face outside the box).
  double value_at(std::size_t k, const Point<D>& x) const {
    const double h = grid_.spacing();
    std::array<std::size_t, D> i0;
    std::array<double, D> frac;
    for (int a = 0; a < D; ++a) {
      const double s = std::clamp((x[a] - grid_.lo) / h, 0.0, static_cast<double>(grid_.nx - 1));
      i0[a] = std::min(static_cast<std::size_t>(s), grid_.nx - 2);
      frac[a] = s - static_cast<double>(i0[a]);
    }
    double out = 0.0;
    for (unsigned corner = 0; corner < (1u << D); ++corner) {
      double w = 1.0;
      std::size_t flat = 0;
      for (int a = 0; a < D; ++a) {
        const bool up = (corner >> a) & 1u;
        w *= up ? frac[a] : 1.0 - frac[a];
        flat = flat * grid_.nx + i0[a] + (up ? 1 : 0);
      }
      out += w * u_[k][flat];
    }
    return out;
  }

 private:
  SpaceTimeGrid<D> grid_;
  std::vector<std::vector<double>> phi_;
  std::vector<std::vector<double>> u_;
};

/// L_hat at time t, sampled on the grid nodes.
template <int D>
using PotentialSource = std::function<std::vector<double>(double)>;

template <int D>
PotentialSource<D> sample_source(const SpaceTimeGrid<D>& grid, std::function<SmoothFunction<D>(double)> L_hat) {
  return [grid, L_hat](double t) {
    const SmoothFunction<D> f = L_hat(t);
    std::vector<double> v(grid.nodes());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = f.value(grid.node(i));
    return v;
  };
}

namespace detail {

/// One Crank-Nicolson step of d_tau phi = 1/2 phi'' along `axis`, with mirrored walls.
template <int D>
void heat_axis_step(std::vector<double>& phi, std::size_t n, int axis, double dt, double h) {
  const double r = 0.25 * dt / (h * h);  // (dt/2) * (1/2) / h^2
  std::vector<double> sub(n), diag(n), sup(n), rhs(n);
  for_each_line<D>(n, axis, [&](std::size_t base, std::size_t stride) {
    for (std::size_t i = 0; i < n; ++i) {
      const double c = phi[base + i * stride];
      const double left = i == 0 ? phi[base + stride] : phi[base + (i - 1) * stride];
      const double right = i + 1 == n ? phi[base + (n - 2) * stride] : phi[base + (i + 1) * stride];
      rhs[i] = c + r * (left - 2.0 * c + right);
      diag[i] = 1.0 + 2.0 * r;
      sub[i] = i == 0 ? 0.0 : (i + 1 == n ? -2.0 * r : -r);
      sup[i] = i + 1 == n ? 0.0 : (i == 0 ? -2.0 * r : -r);
    }
    solve_tridiagonal(sub, diag, sup, rhs);
    for (std::size_t i = 0; i < n; ++i) phi[base + i * stride] = rhs[i];
  });
}

}  // namespace detail

/// Solves -d_t u - 1/2 Lap u + 1/2 |grad u|^2 = L_hat, u(T) = G_hat through phi = e^{-u}.
///
/// phi solves d_t phi + 1/2 Lap phi = L_hat phi backwards from e^{-G_hat}. Each step is
/// Strang split: half a step of the potential e^{-dt/2 L_hat(t_mid)}, Crank-Nicolson
/// diffusion along every axis, then the other potential half step.
template <int D>
PotentialField<D> solve_eikonal(const PotentialSource<D>& L_hat, const std::vector<double>& G_hat,
                                const SpaceTimeGrid<D>& grid) {
  grid.validate();
  require(G_hat.size() == grid.nodes(), "solve_eikonal: terminal data does not match the grid");
  const std::size_t N = grid.steps();
  const std::size_t n = grid.nx;
  const double h = grid.spacing();
  std::vector<std::vector<double>> phi(N + 1);
  phi[N].resize(G_hat.size());
  for (std::size_t i = 0; i < G_hat.size(); ++i) phi[N][i] = std::exp(-G_hat[i]);
  for (std::size_t k = N; k-- > 0;) {
    const double t_mid = 0.5 * (grid.time(k) + grid.time(k + 1));
    const double step = grid.time(k + 1) - grid.time(k);
    const std::vector<double> L = L_hat ? L_hat(t_mid) : std::vector<double>(grid.nodes(), 0.0);
    std::vector<double> cur = phi[k + 1];
    for (std::size_t i = 0; i < cur.size(); ++i) cur[i] *= std::exp(-0.5 * step * L[i]);
    for (int a = 0; a < D; ++a) detail::heat_axis_step<D>(cur, n, a, step, h);
    for (std::size_t i = 0; i < cur.size(); ++i) {
      cur[i] *= std::exp(-0.5 * step * L[i]);
      if (!(cur[i] > 0.0)) {
        throw SolverError("solve_eikonal: phi lost positivity at t=" + std::to_string(grid.time(k)) + ", x=" +
                          std::to_string(grid.node(i)[0]) + "; reduce grid.dt");
      }
    }
    phi[k] = std::move(cur);
  }
  return PotentialField<D>(grid, std::move(phi));
}

template <int D>
PotentialField<D> solve_eikonal(const std::function<SmoothFunction<D>(double)>& L_hat, const SmoothFunction<D>& G_hat,
                                const SpaceTimeGrid<D>& grid) {
  std::vector<double> g(grid.nodes());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = G_hat.value(grid.node(i));
  return solve_eikonal<D>(L_hat ? sample_source<D>(grid, L_hat) : PotentialSource<D>{}, g, grid);
}

/// max |-d_t u - 1/2 Lap u + 1/2 |grad u|^2 - L_hat| over interior nodes and step midpoints.
///
/// Time derivatives are step differences; spatial terms average the two adjacent levels.
/// Only nodes within `interior` times the box half-width of its center count.
template <int D>
double eikonal_residual(const PotentialField<D>& field, const PotentialSource<D>& L_hat, double interior = 0.5) {
  const auto& grid = field.grid();
  const double center = 0.5 * (grid.lo + grid.hi);
  const double reach = interior * 0.5 * (grid.hi - grid.lo);
  std::vector<std::size_t> inside;
  for (std::size_t i = 0; i < grid.nodes(); ++i) {
    const Point<D> x = grid.node(i);
    bool ok = true;
    for (int a = 0; a < D; ++a) ok = ok && std::abs(x[a] - center) <= reach + 1e-12;
    if (ok) inside.push_back(i);
  }
  double worst = 0.0;
  for (std::size_t k = 0; k + 1 < field.levels(); ++k) {
    const double step = grid.time(k + 1) - grid.time(k);
    const double t_mid = 0.5 * (grid.time(k) + grid.time(k + 1));
    const std::vector<double> L = L_hat ? L_hat(t_mid) : std::vector<double>(grid.nodes(), 0.0);
    for (std::size_t i : inside) {
      const double dt_u = (field.u(k + 1)[i] - field.u(k)[i]) / step;
      const double lap = 0.5 * (field.laplacian(k, i) + field.laplacian(k + 1, i));
      const double g2 = 0.5 * (norm2<D>(field.gradient(k, i)) + norm2<D>(field.gradient(k + 1, i)));
      worst = std::max(worst, std::abs(-dt_u - 0.5 * lap + 0.5 * g2 - L[i]));
    }
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Flows of measures

enum class FlowMode { fokker_planck, particles };

/// Snapshots m(t_k) of a flow, the control that generated it and the solver's bookkeeping.
template <int D>
struct FlowPath {
  FlowMode mode = FlowMode::fokker_planck;
  SpaceTimeGrid<D> grid;
  std::vector<std::size_t> steps;  ///< grid step index of each snapshot
  std::vector<double> times;
  std::vector<Measure<D>> snapshots;
  ControlField<D> control;
  double max_mass_drift = 0.0;        ///< largest |mass - 1| before renormalization
  double max_boundary_density = 0.0;  ///< largest density seen at the outer two layers

  const Measure<D>& initial() const { return snapshots.front(); }
  const Measure<D>& terminal() const { return snapshots.back(); }
  std::size_t size() const { return snapshots.size(); }
};

namespace detail {

/// Scharfetter-Gummel fluxes with D = 1/2 along one axis, Crank-Nicolson in time.
///
/// `drift` holds the axis component of alpha at the step midpoint on every node.
template <int D>
void fokker_planck_axis_step(std::vector<double>& m, const std::vector<double>& drift, std::size_t n, int axis,
                             double dt, double h) {
  const double diff = 0.5;
  const double scale = diff / (h * h);
  std::vector<double> sub(n), diag(n), sup(n), rhs(n), lower(n), upper(n), centre(n);
  for_each_line<D>(n, axis, [&](std::size_t base, std::size_t stride) {
    // row i of A: lower[i] m_{i-1} + centre[i] m_i + upper[i] m_{i+1}
    for (std::size_t i = 0; i < n; ++i) {
      lower[i] = upper[i] = centre[i] = 0.0;
    }
    for (std::size_t i = 0; i + 1 < n; ++i) {
      const double a = 0.5 * (drift[base + i * stride] + drift[base + (i + 1) * stride]);
      const double z = a * h / diff;
      const double bp = bernoulli(-z);  // weight of m_i in the flux J_{i+1/2}
      const double bm = bernoulli(z);   // weight of m_{i+1}
      // J = scale * h * (bp m_i - bm m_{i+1}); dm_i -= J/h, dm_{i+1} += J/h
      centre[i] -= scale * bp;
      upper[i] += scale * bm;
      lower[i + 1] += scale * bp;
      centre[i + 1] -= scale * bm;
    }
    double fastest = 0.0;
    for (std::size_t i = 0; i < n; ++i) fastest = std::max(fastest, std::abs(drift[base + i * stride]));
    if (fastest * dt > h) {
      const double suggested = 0.9 * h / fastest;
      throw CflViolation("solve_fokker_planck: advection Courant number |alpha| dt / h exceeds one; use grid.dt <= " +
                             std::to_string(suggested),
                         suggested);
    }
    for (std::size_t i = 0; i < n; ++i) {
      const double c = m[base + i * stride];
      double r = (1.0 + 0.5 * dt * centre[i]) * c;
      if (i > 0) r += 0.5 * dt * lower[i] * m[base + (i - 1) * stride];
      if (i + 1 < n) r += 0.5 * dt * upper[i] * m[base + (i + 1) * stride];
      rhs[i] = r;
      diag[i] = 1.0 - 0.5 * dt * centre[i];
      sub[i] = -0.5 * dt * lower[i];
      sup[i] = -0.5 * dt * upper[i];
    }
    solve_tridiagonal(sub, diag, sup, rhs);
    for (std::size_t i = 0; i < n; ++i) m[base + i * stride] = rhs[i];
  });
}

}  // namespace detail

/// Forward solve of d_t m = 1/2 Lap m - div(alpha m) on the grid of `alpha`.
///
/// Exponentially fitted (Scharfetter-Gummel) fluxes keep the implicit matrix an M-matrix and
/// reduce to upwinding where the drift dominates; Crank-Nicolson makes the scheme second
/// order in dt. In d=2 the axes are Strang split. Walls carry zero flux, so mass is
/// conserved to rounding; it is still checked every step and renormalized.
///
/// Nonnegativity is asserted after every step (values below -1e-12 times the peak abort,
/// rounding-level negatives are set to zero). The advection Courant number must not exceed one.
template <int D>
FlowPath<D> solve_fokker_planck(const ControlField<D>& alpha, const Measure<D>& mu0, std::size_t stride = 1) {
  const SpaceTimeGrid<D>& grid = alpha.grid();
  grid.validate();
  require(mu0.is_grid(), "solve_fokker_planck: initial measure must be a grid density");
  require(grid.matches(mu0.grid()), "solve_fokker_planck: initial density is not on the control grid");
  require(stride >= 1, "solve_fokker_planck: stride must be positive");
  const std::size_t N = grid.steps();
  const std::size_t n = grid.nx;
  const double h = grid.spacing();
  FlowPath<D> path;
  path.mode = FlowMode::fokker_planck;
  path.grid = grid;
  path.control = alpha;
  path.steps.push_back(0);
  path.times.push_back(grid.time(0));
  path.snapshots.push_back(mu0);
  path.max_boundary_density = mu0.grid().boundary_max();
  std::vector<double> m = mu0.grid().values();
  std::vector<std::vector<double>> drift(D, std::vector<double>(grid.nodes()));
  for (std::size_t k = 0; k < N; ++k) {
    const double step = grid.time(k + 1) - grid.time(k);
    for (std::size_t i = 0; i < grid.nodes(); ++i) {
      for (int a = 0; a < D; ++a) drift[a][i] = 0.5 * (alpha.level(k)[i][a] + alpha.level(k + 1)[i][a]);
    }
    if constexpr (D == 1) {
      detail::fokker_planck_axis_step<D>(m, drift[0], n, 0, step, h);
    } else {
      for (int a = 0; a < D - 1; ++a) detail::fokker_planck_axis_step<D>(m, drift[a], n, a, 0.5 * step, h);
      detail::fokker_planck_axis_step<D>(m, drift[D - 1], n, D - 1, step, h);
      for (int a = D - 2; a >= 0; --a) detail::fokker_planck_axis_step<D>(m, drift[a], n, a, 0.5 * step, h);
    }
    double mass = 0.0, peak = 0.0, lowest = 0.0;
    for (double v : m) {
      mass += v;
      peak = std::max(peak, v);
      lowest = std::min(lowest, v);
    }
    mass *= std::pow(h, D);
    if (lowest < -1e-12 * peak) {
      throw SolverError("solve_fokker_planck: negative density " + std::to_string(lowest) + " at t=" +
                        std::to_string(grid.time(k + 1)));
    }
    for (double& v : m) v = std::max(v, 0.0);
    path.max_mass_drift = std::max(path.max_mass_drift, std::abs(mass - 1.0));
    if ((k + 1) % stride == 0 || k + 1 == N) {
      GridDensity<D> g = GridDensity<D>::normalized(grid.lo, grid.hi, n, m);
      path.max_boundary_density = std::max(path.max_boundary_density, g.boundary_max());
      m = g.values();
      path.steps.push_back(k + 1);
      path.times.push_back(grid.time(k + 1));
      path.snapshots.emplace_back(std::move(g));
    } else {
      for (double& v : m) v /= mass;
    }
  }
  return path;
}

/// Euler-Maruyama for dX = alpha(t, X) dt + dW with N particles drawn from mu0.
///
/// Particles are split into `shards` blocks, each driven by its own mt19937_64 seeded
/// from (seed, shard index), so the result does not depend on how many threads run them.
/// Snapshots are kept every `snapshot_every` steps (0: initial and terminal only).
template <int D>
FlowPath<D> simulate_particles(const ControlField<D>& alpha, const Measure<D>& mu0, std::size_t N, std::uint64_t seed,
                               std::size_t snapshot_every = 0, std::size_t shards = 8) {
  require(N >= 1, "simulate_particles: need at least one particle");
  require(shards >= 1, "simulate_particles: need at least one shard");
  const SpaceTimeGrid<D>& grid = alpha.grid();
  grid.validate();
  const std::size_t steps = grid.steps();
  std::vector<std::size_t> keep;
  for (std::size_t k = 0; k <= steps; ++k) {
    if (k == 0 || k == steps || (snapshot_every > 0 && k % snapshot_every == 0)) keep.push_back(k);
  }
  shards = std::min(shards, N);
  // positions[snapshot][particle]
  std::vector<std::vector<Point<D>>> positions(keep.size(), std::vector<Point<D>>(N));
  auto run_shard = [&](std::size_t s) {
    const std::size_t begin = N * s / shards;
    const std::size_t end = N * (s + 1) / shards;
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(s)};
    std::mt19937_64 gen(seq);
    MeasureSampler<D> sampler(mu0);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<Point<D>> x(end - begin);
    for (auto& p : x) p = sampler(gen);
    std::size_t next = 0;
    for (std::size_t k = 0; k <= steps; ++k) {
      if (next < keep.size() && keep[next] == k) {
        std::copy(x.begin(), x.end(), positions[next].begin() + static_cast<std::ptrdiff_t>(begin));
        ++next;
      }
      if (k == steps) break;
      const double step = grid.time(k + 1) - grid.time(k);
      const double sq = std::sqrt(step);
      for (auto& p : x) {
        const Point<D> a = alpha.at(k, p);
        for (int d = 0; d < D; ++d) p[d] += a[d] * step + sq * normal(gen);
      }
    }
  };
  std::vector<std::future<void>> jobs;
  for (std::size_t s = 0; s < shards; ++s) jobs.push_back(std::async(std::launch::async, run_shard, s));
  for (auto& j : jobs) j.get();
  FlowPath<D> path;
  path.mode = FlowMode::particles;
  path.grid = grid;
  path.control = alpha;
  for (std::size_t j = 0; j < keep.size(); ++j) {
    path.steps.push_back(keep[j]);
    path.times.push_back(grid.time(keep[j]));
    path.snapshots.emplace_back(EmpiricalMeasure<D>::uniform(std::move(positions[j])));
  }
  return path;
}

/// Writes every snapshot in the measures CSV formats plus `manifest.csv` listing snapshot times.
template <int D>
void export_flow_path(const FlowPath<D>& path, const std::filesystem::path& dir, const std::string& prefix = "m") {
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir / (prefix + "_manifest.csv"));
  manifest << "index,step,time,file\n";
  for (std::size_t j = 0; j < path.size(); ++j) {
    const std::string name = prefix + "_" + std::to_string(j) + ".csv";
    std::ofstream out(dir / name);
    if (path.snapshots[j].is_grid()) {
      write_grid_csv<D>(path.snapshots[j].grid(), out);
    } else {
      write_empirical_csv<D>(path.snapshots[j].empirical(), out);
    }
    manifest << j << ',' << path.steps[j] << ',' << detail::format_double(path.times[j]) << ',' << name << '\n';
  }
}

// ---------------------------------------------------------------------------
// Hamiltonian

/// H(mu, kappa) = -1/2 mu(Lap kappa) + 1/2 mu(|grad kappa|^2).
template <int D>
double hamiltonian(const Measure<D>& mu, const SmoothFunction<D>& kappa) {
  const double h = integrate<D>(mu, [&](const Point<D>& x) {
    const Jet<D> j = kappa.jet(x);
    return -0.5 * j.laplacian + 0.5 * norm2<D>(j.gradient);
  });
  if (!std::isfinite(h)) {
    throw InvalidArgument("hamiltonian: mu(|grad kappa|^2) is not finite for this measure and growth class");
  }
  return h;
}

/// The same quantity entirely on the frequency side, for kappa with a spectrum.
///
/// mu(Lap kappa) is a single sum against F(mu); mu(|grad kappa|^2) is the double sum
/// over node pairs against F(mu) at xi_l - xi_j, so no spatial quadrature is involved.
/// Cost is quadratic in the node count and meant for d=1.
template <int D>
double hamiltonian_spectral(const Measure<D>& mu, const SmoothFunction<D>& kappa) {
  const SpectralRep<D>& rep = kappa.spectrum();
  const std::size_t M = rep.size();
  const double c = fourier_normalization<D>();
  double lap = 0.0;
  for (std::size_t j = 0; j < M; ++j) {
    lap += (rep.weights[j] * -norm2<D>(rep.nodes[j]) * rep.values[j] * char_fn<D>(mu, -1.0 * rep.nodes[j])).real();
  }
  double grad = 0.0;
  for (std::size_t j = 0; j < M; ++j) {
    const Complex a = rep.weights[j] * rep.values[j];
    for (std::size_t l = 0; l < M; ++l) {
      const Complex b = rep.weights[l] * std::conj(rep.values[l]);
      grad += (a * b * dot<D>(rep.nodes[j], rep.nodes[l]) * char_fn<D>(mu, rep.nodes[l] - rep.nodes[j])).real();
    }
  }
  grad *= c;
  return -0.5 * lap + 0.5 * grad;
}

}  // namespace mfc
