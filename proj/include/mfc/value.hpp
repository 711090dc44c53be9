#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "core.hpp"
#include "costs.hpp"
#include "dynamics.hpp"
#include "measures.hpp"

namespace mfc {

struct FixedPointConfig {
  double lambda = 0.5;  ///< damping in (0, 1]
  std::size_t max_iter = 60;
  double tol = 1e-8;  ///< stop when sup |alpha_new - alpha| <= tol
  bool fictitious_play = false;

  void validate() const {
    require(lambda > 0.0 && lambda <= 1.0, "fp.lambda must lie in (0, 1]");
    require(max_iter >= 1, "fp.max_iter must be at least one");
    require(tol > 0.0, "fp.tol must be positive");
  }
};

struct IterationRecord {
  std::size_t iteration = 0;
  double cost = 0.0;            ///< J of the pair the iteration started from
  double control_change = 0.0;  ///< sup |Gamma(alpha) - alpha|
};

/// Result of a value solve: v, the pair (alpha*, m*), the potential u behind alpha* and the trace.
template <int D>
struct ValueEstimate {
  double v = 0.0;
  ControlField<D> control;
  FlowPath<D> flow;
  std::shared_ptr<const PotentialField<D>> potential;
  std::vector<IterationRecord> trace;
  bool converged = false;
  bool monotone = true;  ///< trace costs nonincreasing after the first iteration (1e-9 slack)
  double pontryagin_residual = 0.0;
  SpaceTimeGrid<D> grid;
  std::string note;
};

/// Cost terms tabulated on the nodes of one grid, for fast moments and sources.
template <int D>
class CostOnGrid {
 public:
  CostOnGrid(const CostModel<D>& model, const SpaceTimeGrid<D>& grid) : model_(&model), grid_(grid) {
    const auto tab = [&](const auto& terms) {
      std::vector<std::vector<double>> out;
      for (const auto& t : terms) {
        std::vector<double> v(grid.nodes());
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = t.f.value(grid.node(i));
        out.push_back(std::move(v));
      }
      return out;
    };
    running_ = tab(model.running_terms());
    terminal_ = tab(model.terminal_terms());
  }

  std::vector<double> moments(const std::vector<std::vector<double>>& table, const GridDensity<D>& m) const {
    std::vector<double> y(table.size(), 0.0);
    for (std::size_t a = 0; a < table.size(); ++a) {
      double s = 0.0;
      for (std::size_t i = 0; i < m.size(); ++i) s += m.values()[i] * table[a][i];
      y[a] = s * m.cell_volume();
    }
    return y;
  }

  std::vector<double> combine(const std::vector<std::vector<double>>& table, const std::vector<double>& c) const {
    std::vector<double> out(grid_.nodes(), 0.0);
    for (std::size_t a = 0; a < table.size(); ++a) {
      for (std::size_t i = 0; i < out.size(); ++i) out[i] += c[a] * table[a][i];
    }
    return out;
  }

  const std::vector<std::vector<double>>& running() const { return running_; }
  const std::vector<std::vector<double>>& terminal() const { return terminal_; }

  /// L_hat(t) from moments at every grid step, linear in time between steps.
  /// The returned source refers to this table and must not outlive it.
  PotentialSource<D> source(const std::vector<std::vector<double>>& step_moments) const {
    if (running_.empty()) return {};
    return [this, step_moments](double t) {
      const SpaceTimeGrid<D>& grid = grid_;
      const double s = std::clamp((t - grid.t0) / grid.dt, 0.0, static_cast<double>(grid.steps()));
      const std::size_t k = std::min(static_cast<std::size_t>(s), grid.steps() - 1);
      const double w = s - static_cast<double>(k);
      std::vector<double> y(step_moments[k].size());
      for (std::size_t a = 0; a < y.size(); ++a) y[a] = (1 - w) * step_moments[k][a] + w * step_moments[k + 1][a];
      return combine(running_, model_->running_coefficients(t, y));
    };
  }

  std::vector<double> terminal_data(const GridDensity<D>& mT) const {
    if (terminal_.empty()) return std::vector<double>(grid_.nodes(), 0.0);
    return combine(terminal_, model_->terminal_coefficients(moments(terminal_, mT)));
  }

 private:
  const CostModel<D>* model_;
  SpaceTimeGrid<D> grid_;
  std::vector<std::vector<double>> running_;
  std::vector<std::vector<double>> terminal_;
};

namespace detail {

/// m(|alpha(t_k)|^2) for one snapshot.
template <int D>
double control_energy(const Measure<D>& m, const ControlField<D>& alpha, std::size_t k) {
  if (m.is_grid()) {
    const auto& g = m.grid();
    double s = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) s += g.values()[i] * norm2<D>(alpha.level(k)[i]);
    return s * g.cell_volume();
  }
  return integrate<D>(m, [&](const Point<D>& x) { return norm2<D>(alpha.at(k, x)); });
}

/// Trapezoid in time of l(t, m_t) + 1/2 m_t(|alpha|^2) over snapshots [first, last].
template <int D>
double running_integral(const FlowPath<D>& path, const CostModel<D>& model, std::size_t first, std::size_t last) {
  double total = 0.0;
  double prev = 0.0;
  for (std::size_t j = first; j <= last; ++j) {
    const double t = path.times[j];
    const double val = model.running(t, path.snapshots[j]) + 0.5 * control_energy<D>(path.snapshots[j], path.control,
                                                                                       path.steps[j]);
    if (j > first) total += 0.5 * (t - path.times[j - 1]) * (prev + val);
    prev = val;
  }
  return total;
}

}  // namespace detail

/// J = int [l(t, m_t) + 1/2 m_t(|alpha|^2)] dt + g(m_T), trapezoid over the snapshots.
template <int D>
double cost_functional(const FlowPath<D>& path, const CostModel<D>& model) {
  require(path.size() >= 1, "cost_functional: empty flow");
  if (std::abs(path.times.back() - model.horizon()) > 1e-9) {
    throw InvalidArgument("cost_functional: flow ends at t=" + std::to_string(path.times.back()) +
                          " but the cost horizon is " + std::to_string(model.horizon()));
  }
  return detail::running_integral<D>(path, model, 0, path.size() - 1) + model.terminal(path.terminal());
}

/// v(t0, mu0) by the fixed point alpha = Gamma(alpha) = -grad u[m[alpha]].
///
/// alpha_0 = Gamma(0). Iteration k evaluates alpha~ = Gamma(alpha_{k-1}); it stops when
/// sup |alpha~ - alpha_{k-1}| <= tol and otherwise moves alpha_k = (1 - w) alpha_{k-1} + w alpha~
/// with w = lambda, or w = 1/(k+1) under fictitious play. A mu-linear model converges at k = 1.
/// If the iteration does not converge, the iterate with the lowest J is reported and flagged.
template <int D>
ValueEstimate<D> solve_value(double t0, const Measure<D>& mu0, const CostModel<D>& model, const FixedPointConfig& fp,
                             SpaceTimeGrid<D> grid) {
  fp.validate();
  grid.t0 = t0;
  grid.validate();
  require(std::abs(grid.horizon - model.horizon()) < 1e-12, "solve_value: grid and cost model horizons differ");
  require(mu0.is_grid() && grid.matches(mu0.grid()), "solve_value: initial measure must be a density on the grid");
  const CostOnGrid<D> tab(model, grid);

  struct Evaluation {
    FlowPath<D> flow;
    std::shared_ptr<const PotentialField<D>> potential;
    ControlField<D> next;
  };
  const auto gamma = [&](const ControlField<D>& alpha) {
    Evaluation e;
    e.flow = solve_fokker_planck<D>(alpha, mu0, 1);
    std::vector<std::vector<double>> ym;
    if (!tab.running().empty()) {
      for (const auto& s : e.flow.snapshots) ym.push_back(tab.moments(tab.running(), s.grid()));
    }
    if (model.kind() == CostKind::zero) {
      // phi = e^{-u} stays exactly one, so u and alpha vanish without rounding noise
      e.potential = std::make_shared<const PotentialField<D>>(
          grid, std::vector<std::vector<double>>(grid.steps() + 1, std::vector<double>(grid.nodes(), 1.0)));
    } else {
      e.potential = std::make_shared<const PotentialField<D>>(
          solve_eikonal<D>(tab.source(ym), tab.terminal_data(e.flow.terminal().grid()), grid));
    }
    e.next = e.potential->feedback();
    return e;
  };

  ValueEstimate<D> est;
  est.grid = grid;
  ControlField<D> alpha = gamma(ControlField<D>::zero(grid)).next;
  struct Candidate {
    double cost;
    ControlField<D> control;
    FlowPath<D> flow;
    std::shared_ptr<const PotentialField<D>> potential;
    double residual;
  };
  std::optional<Candidate> best;
  for (std::size_t k = 1; k <= fp.max_iter; ++k) {
    Evaluation e = gamma(alpha);
    const double change = alpha.sup_distance(e.next);
    const double J = cost_functional<D>(e.flow, model);
    est.trace.push_back({k, J, change});
    if (k > 1 && J > est.trace[k - 2].cost + 1e-9) est.monotone = false;
    if (!best || J < best->cost) best = Candidate{J, alpha, e.flow, e.potential, change};
    if (change <= fp.tol) {
      est.v = J;
      est.control = alpha;
      est.flow = std::move(e.flow);
      est.potential = e.potential;
      est.pontryagin_residual = change;
      est.converged = true;
      if (!est.monotone) est.note = "cost trace not monotone (diagnostic only)";
      return est;
    }
    const double w = fp.fictitious_play ? 1.0 / static_cast<double>(k + 1) : fp.lambda;
    alpha = alpha.blend(w, e.next);
  }
  est.v = best->cost;
  est.control = best->control;
  est.flow = best->flow;
  est.potential = best->potential;
  est.pontryagin_residual = best->residual;
  est.converged = false;
  est.note = "no convergence within " + std::to_string(fp.max_iter) + " iterations; lowest-J iterate reported";
  return est;
}

/// |v(t0, mu0) - [int_{t0}^{t0+h} (l + 1/2 m(|alpha*|^2)) dt + v(t0 + h, m*(t0 + h))]|.
template <int D>
double dpp_check(double t0, const Measure<D>& mu0, double h, const CostModel<D>& model, const FixedPointConfig& fp,
                 const SpaceTimeGrid<D>& grid) {
  require(h >= 0.0 && t0 + h <= grid.horizon + 1e-12, "dpp_check: t0 + h must not exceed the horizon");
  const ValueEstimate<D> whole = solve_value<D>(t0, mu0, model, fp, grid);
  const double steps = h / grid.dt;
  const auto k = static_cast<std::size_t>(std::llround(steps));
  require(std::abs(steps - static_cast<double>(k)) < 1e-9 * std::max(1.0, steps), "dpp_check: h must be a multiple of grid.dt");
  const FlowPath<D>& path = whole.flow;
  const double running = k == 0 ? 0.0 : detail::running_integral<D>(path, model, 0, k);
  double rest = 0.0;
  if (k == path.size() - 1) {
    rest = model.terminal(path.terminal());
  } else {
    rest = solve_value<D>(path.times[k], path.snapshots[k], model, fp, grid).v;
  }
  return std::abs(whole.v - (running + rest));
}

/// min over a fixed perturbation suite of J(alpha* + delta) - v; nonnegative up to discretization.
///
/// The suite adds +-a and +-a x/(1 + |x|^2) (componentwise) to alpha* for each amplitude a.
template <int D>
double suboptimality_margin(const ValueEstimate<D>& est, const CostModel<D>& model,
                            const std::vector<double>& amplitudes = {0.05, 0.2}) {
  double margin = std::numeric_limits<double>::infinity();
  const auto& grid = est.grid;
  for (double a : amplitudes) {
    for (double sign : {1.0, -1.0}) {
      for (int shape = 0; shape < 2; ++shape) {
        ControlField<D> alpha = est.control;
        for (std::size_t k = 0; k < alpha.levels(); ++k) {
          for (std::size_t i = 0; i < grid.nodes(); ++i) {
            const Point<D> x = grid.node(i);
            for (int d = 0; d < D; ++d) {
              alpha.level(k)[i][d] += sign * a * (shape == 0 ? 1.0 : x[d] / (1.0 + norm2<D>(x)));
            }
          }
        }
        const FlowPath<D> flow = solve_fokker_planck<D>(alpha, est.flow.initial(), 1);
        margin = std::min(margin, cost_functional<D>(flow, model) - est.v);
      }
    }
  }
  return margin;
}

}  // namespace mfc
