#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "certify.hpp"
#include "config.hpp"
#include "core.hpp"
#include "costs.hpp"
#include "dynamics.hpp"
#include "measures.hpp"
#include "sobolev.hpp"
#include "value.hpp"

namespace mfc {

inline constexpr const char* library_version = "0.1.0";

/// One checked statement of a recipe with its verdict and the numbers behind it.
struct Claim {
  std::string name;
  Verdict verdict = Verdict::inconclusive;
  std::string detail;
};

struct RecipeResult {
  std::vector<Claim> claims;
  bool not_converged = false;
};

/// Output directory plus the list of files a recipe wrote into it.
class Artifacts {
 public:
  explicit Artifacts(std::filesystem::path dir) : dir_(std::move(dir)) { std::filesystem::create_directories(dir_); }

  std::ofstream open(const std::string& name) {
    const auto path = dir_ / name;
    std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    if (std::find(files_.begin(), files_.end(), name) == files_.end()) files_.push_back(name);
    return out;
  }

  void record(const std::string& name) {
    if (std::find(files_.begin(), files_.end(), name) == files_.end()) files_.push_back(name);
  }

  const std::filesystem::path& dir() const { return dir_; }
  const std::vector<std::string>& files() const { return files_; }

 private:
  std::filesystem::path dir_;
  std::vector<std::string> files_;
};

namespace detail {

inline std::string fmt(double v) { return format_double(v); }

inline Claim claim(std::string name, bool ok, std::string detail) {
  return {std::move(name), ok ? Verdict::pass : Verdict::fail, std::move(detail)};
}

/// Short decimal form for file names, e.g. 0.001.
inline std::string tag(double v) {
  std::ostringstream ss;
  ss << v;
  return ss.str();
}

inline EmpiricalMeasure<1> random_empirical(std::mt19937_64& gen, std::size_t atoms) {
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<Point<1>> pts(atoms);
  for (auto& p : pts) p[0] = nd(gen);
  return EmpiricalMeasure<1>::uniform(std::move(pts));
}

template <int D>
GaussianMixture<D> random_mixture(std::mt19937_64& gen) {
  std::uniform_real_distribution<double> mean(-2.0, 2.0), sig(0.5, 1.5), w(0.1, 1.0);
  std::uniform_int_distribution<int> count(1, 3);
  const int k = count(gen);
  std::vector<GaussianComponent<D>> comps;
  double total = 0.0;
  for (int i = 0; i < k; ++i) {
    GaussianComponent<D> c;
    c.weight = w(gen);
    for (int a = 0; a < D; ++a) c.mean[a] = mean(gen);
    c.sigma = sig(gen);
    total += c.weight;
    comps.push_back(c);
  }
  for (auto& c : comps) c.weight /= total;
  return GaussianMixture<D>(std::move(comps));
}

/// cos, sin and tanh of x_1: the bounded test functions of the weak* probes.
inline std::vector<SmoothFunction<1>> bounded_test_suite() {
  using J = Jet<1>;
  return {
      SmoothFunction<1>([](const Point<1>& x) { return J{std::cos(x[0]), {-std::sin(x[0])}, -std::cos(x[0])}; },
                        Growth::bounded, 1.0),
      SmoothFunction<1>([](const Point<1>& x) { return J{std::sin(x[0]), {std::cos(x[0])}, -std::sin(x[0])}; },
                        Growth::bounded, 1.0),
      SmoothFunction<1>(
          [](const Point<1>& x) {
            const double t = std::tanh(x[0]);
            return J{t, {1.0 - t * t}, -2.0 * t * (1.0 - t * t)};
          },
          Growth::bounded, 1.0),
  };
}

template <int D>
GridDensity<D> gaussian_on(const SpaceTimeGrid<D>& g, double mean, double sigma) {
  Point<D> m{};
  m[0] = mean;
  return discretize<D>(GaussianMixture<D>::normal(m, sigma), g.lo, g.hi, g.nx);
}

/// Marginal of a grid density along the first axis.
template <int D>
std::vector<double> first_marginal(const GridDensity<D>& g) {
  const std::size_t n = g.n();
  std::vector<double> out(n, 0.0);
  const std::size_t block = g.size() / n;
  const double w = std::pow(g.spacing(), D - 1);
  for (std::size_t i = 0; i < g.size(); ++i) out[i / block] += g.values()[i] * w;
  return out;
}

template <int D>
bool is_mu_linear(const CostModel<D>& m) {
  if (!m.running_terms().empty()) return false;
  for (const auto& t : m.terminal_terms()) {
    if (t.outer.kind == OuterKind::arctan) return false;
  }
  return true;
}

inline Claim tally(const std::string& name, const std::vector<ViscosityReport>& reps, Side side) {
  std::size_t pass = 0, fail = 0, other = 0;
  double worst = 0.0;
  for (const auto& r : reps) {
    if (r.side != side) continue;
    if (r.verdict == Verdict::pass) ++pass;
    if (r.verdict == Verdict::fail) ++fail;
    if (r.verdict == Verdict::inconclusive) ++other;
    if (r.verdict != Verdict::inconclusive) worst = std::max(worst, std::abs(r.slack));
  }
  Claim c{name, fail ? Verdict::fail : (pass ? Verdict::pass : Verdict::inconclusive), ""};
  c.detail = std::to_string(pass) + " pass, " + std::to_string(fail) + " fail, " + std::to_string(other) +
             " inconclusive, max |slack| " + fmt(worst);
  return c;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Recipes

/// Kernel equivalence, the Dirac pair, Parseval for kappa in d=1 and d=2 and the weak* probes.
/// Runs the same checks whatever grid.dim says.
inline RecipeResult run_metric_suite(const RunConfig& cfg, Artifacts& art) {
  using detail::fmt;
  RecipeResult res;
  std::mt19937_64 gen(cfg.seed());
  const auto q1 = cfg.metric_quadrature<1>();

  {
    auto out = art.open("metric_equivalence.csv");
    out << "pair,neg_norm,kernel_norm,abs_diff\n";
    double worst = 0.0;
    const auto pairs = static_cast<std::size_t>(cfg.integer("metric.pairs"));
    const auto atoms = static_cast<std::size_t>(cfg.integer("metric.atoms"));
    for (std::size_t p = 0; p < pairs; ++p) {
      const Measure<1> mu(detail::random_empirical(gen, atoms));
      const Measure<1> nu(detail::random_empirical(gen, atoms));
      const double a = neg_norm<1>(mu, nu, 3.0, q1);
      const double b = kernel_norm_empirical<1>(mu, nu, 3);
      worst = std::max(worst, std::abs(a - b));
      out << p << ',' << fmt(a) << ',' << fmt(b) << ',' << fmt(std::abs(a - b)) << '\n';
    }
    res.claims.push_back(detail::claim("kernel_equivalence", worst <= 1e-8, "max |diff| " + fmt(worst)));
  }
  {
    const Measure<1> d0(EmpiricalMeasure<1>::dirac({0.0})), d1(EmpiricalMeasure<1>::dirac({1.0}));
    const double a = rho<1>(d0, d1, q1);
    const double b = kernel_norm_empirical<1>(d0, d1, 3);
    const double closed = std::sqrt(3.0 / 8.0 - 7.0 / (8.0 * std::exp(1.0)));
    auto out = art.open("metric_dirac.csv");
    out << "rho_quadrature,rho_kernel,rho_closed_form\n" << fmt(a) << ',' << fmt(b) << ',' << fmt(closed) << '\n';
    res.claims.push_back(detail::claim("dirac_pair", std::abs(a - closed) <= 1e-8 && std::abs(b - closed) <= 1e-8,
                                       "rho " + fmt(a) + " against " + fmt(closed)));
  }
  {
    auto out = art.open("parseval.csv");
    out << "dim,pair,rho,kappa_norm,rel_err\n";
    double worst = 0.0;
    const auto pairs = static_cast<std::size_t>(cfg.integer("metric.mixture_pairs"));
    const auto run = [&](auto dim_tag) {
      constexpr int D = decltype(dim_tag)::value;
      const auto q = cfg.metric_quadrature<D>();
      for (std::size_t p = 0; p < pairs; ++p) {
        const Measure<D> mu(detail::random_mixture<D>(gen)), nu(detail::random_mixture<D>(gen));
        const auto fmu = q.transform(mu), fnu = q.transform(nu);
        const double r = neg_norm_from_transforms<D>(fmu, fnu, q);
        const double k = pos_norm<D>(linear_derivative_kappa_from_transforms<D>(fmu, fnu, q),
                                     static_cast<double>(SobolevIndex<D>::order));
        const double rel = r > 0.0 ? std::abs(k / r - 1.0) : std::abs(k);
        worst = std::max(worst, rel);
        out << D << ',' << p << ',' << fmt(r) << ',' << fmt(k) << ',' << fmt(rel) << '\n';
      }
    };
    run(std::integral_constant<int, 1>{});
    run(std::integral_constant<int, 2>{});
    res.claims.push_back(detail::claim("parseval", worst <= 1e-6, "max relative error " + fmt(worst)));
  }
  const auto suite = detail::bounded_test_suite();
  const Measure<1> limit(GaussianMixture<1>::normal({0.0}, 1.0));
  {
    std::vector<Measure<1>> seq;
    std::vector<double> ks;
    for (int k = 1; k <= 64; k *= 2) {
      seq.emplace_back(GaussianMixture<1>::normal({1.0 / k}, 1.0));
      ks.push_back(k);
    }
    auto opt = cfg.quadrature(3.0);
    opt.envelope_sigma = 1.0;
    const auto rep = weakstar_probe<1>(seq, ks, limit, FrequencyQuadrature<1>::build(opt), suite);
    auto out = art.open("weakstar_shift.csv");
    write_weakstar_csv(rep, out);
    auto plot = art.open("plotdata_weakstar_shift.csv");
    plot << "k,rho\n";
    for (const auto& r : rep.rows) plot << fmt(r.k) << ',' << fmt(r.rho) << '\n';
    res.claims.push_back(detail::claim("weakstar_shift", rep.rho_monotone && rep.rho_to_zero && rep.trends_agree,
                                       "rho(k=64) " + fmt(rep.rows.back().rho) + ", " + rep.note));
  }
  {
    std::vector<Measure<1>> seq;
    std::vector<double> ks;
    const int k_max = 32;
    for (int k = 2; k <= k_max; k *= 2) {
      const double w = 1.0 / k;
      seq.emplace_back(GaussianMixture<1>({{1.0 - w, {0.0}, 1.0}, {w, {double(k) * k}, 1.0}}));
      ks.push_back(k);
    }
    auto opt = cfg.quadrature(3.0);
    opt.envelope_sigma = 1.0;
    opt.spatial_extent = double(k_max) * k_max;
    const auto rep = weakstar_probe<1>(seq, ks, limit, FrequencyQuadrature<1>::build(opt), suite);
    auto out = art.open("weakstar_escape.csv");
    write_weakstar_csv(rep, out);
    auto plot = art.open("plotdata_weakstar_escape.csv");
    plot << "k,theta\n";
    for (const auto& r : rep.rows) plot << fmt(r.k) << ',' << fmt(r.theta) << '\n';
    res.claims.push_back(detail::claim("weakstar_escape", rep.rho_to_zero && rep.theta_growth > 2.0,
                                       "rho(k=32) " + fmt(rep.rows.back().rho) + ", theta growth " +
                                           fmt(rep.theta_growth)));
  }
  return res;
}

template <int D>
RecipeResult run_value_solve(const RunConfig& cfg, Artifacts& art) {
  using detail::fmt;
  RecipeResult res;
  const auto grid = cfg.grid<D>();
  const auto model = cfg.cost_model<D>();
  const double t0 = cfg.real("value.t0"), m = cfg.real("value.mean"), s = cfg.real("value.sigma");
  const Measure<D> mu0(detail::gaussian_on<D>(grid, m, s));
  const auto est = solve_value<D>(t0, mu0, model, cfg.fixed_point(), grid);

  auto out = art.open("value.csv");
  out << "t0,mean,sigma,v,converged,iterations,pontryagin_residual,monotone\n";
  out << fmt(t0) << ',' << fmt(m) << ',' << fmt(s) << ',' << fmt(est.v) << ',' << (est.converged ? 1 : 0) << ','
      << est.trace.size() << ',' << fmt(est.pontryagin_residual) << ',' << (est.monotone ? 1 : 0) << '\n';
  auto trace = art.open("trace.csv");
  auto plot = art.open("plotdata_trace.csv");
  trace << "iteration,cost,control_change\n";
  plot << "iteration,cost\n";
  for (const auto& r : est.trace) {
    trace << r.iteration << ',' << fmt(r.cost) << ',' << fmt(r.control_change) << '\n';
    plot << r.iteration << ',' << fmt(r.cost) << '\n';
  }
  auto dens = art.open("plotdata_terminal_density.csv");
  dens << "x,density\n";
  const auto marginal = detail::first_marginal<D>(est.flow.terminal().grid());
  for (std::size_t i = 0; i < marginal.size(); ++i) dens << fmt(grid.axis_node(i)) << ',' << fmt(marginal[i]) << '\n';

  FlowPath<D> thin = est.flow;
  thin.steps.clear();
  thin.times.clear();
  thin.snapshots.clear();
  const std::size_t every = std::max<std::size_t>(1, est.flow.size() / 10);
  for (std::size_t j = 0; j < est.flow.size(); ++j) {
    if (j % every == 0 || j + 1 == est.flow.size()) {
      thin.steps.push_back(est.flow.steps[j]);
      thin.times.push_back(est.flow.times[j]);
      thin.snapshots.push_back(est.flow.snapshots[j]);
    }
  }
  export_flow_path<D>(thin, art.dir() / "flow");
  art.record("flow/m_manifest.csv");
  for (std::size_t j = 0; j < thin.size(); ++j) art.record("flow/m_" + std::to_string(j) + ".csv");

  res.claims.push_back({"fixed_point", est.converged ? Verdict::pass : Verdict::fail,
                        est.converged ? "converged after " + std::to_string(est.trace.size()) + " evaluations"
                                      : est.note});
  res.not_converged = !est.converged;

  const auto n = static_cast<std::size_t>(cfg.integer("particles.n"));
  if (n > 0 && D == 1) {
    const auto path = simulate_particles<D>(est.control, mu0, n, cfg.seed());
    const double r = rho<D>(est.flow.terminal(), path.terminal(), cfg.metric_quadrature<D>());
    auto p = art.open("particles.csv");
    p << "n,seed,rho_terminal\n" << n << ',' << cfg.seed() << ',' << fmt(r) << '\n';
    res.claims.push_back(detail::claim("particles_agree", r <= 5e-3, "rho(m_FP(T) - m_particles(T)) " + fmt(r)));
  } else if (n > 0) {
    res.claims.push_back({"particles_agree", Verdict::inconclusive, "particle comparison runs in d=1 only"});
  }
  return res;
}

template <int D>
RecipeResult run_lipschitz(const RunConfig& cfg, Artifacts& art) {
  using detail::fmt;
  RecipeResult res;
  const auto grid = cfg.grid<D>();
  const auto model = cfg.cost_model<D>();
  const auto fp = cfg.fixed_point();
  const auto family = cfg.family<D>("family");
  const auto quad = cfg.metric_quadrature<D>();
  const double t = cfg.real("lipschitz.t");
  const auto ref = lipschitz_refinement<D>(model, t, family, quad, fp, grid, cfg.real("lipschitz.band"));

  {
    auto out = art.open("lipschitz.csv");
    write_lipschitz_csv(ref.coarse, out);
  }
  {
    auto out = art.open("lipschitz_refined.csv");
    write_lipschitz_csv(ref.fine, out);
  }
  auto plot = art.open("plotdata_lipschitz.csv");
  plot << "rho,abs_dv\n";
  for (const auto& r : ref.coarse.rows) plot << fmt(r.rho) << ',' << fmt(r.dv) << '\n';

  double bound = std::numeric_limits<double>::quiet_NaN();
  if (detail::is_mu_linear<D>(model)) {
    const auto est = solve_value<D>(t, Measure<D>(discretize<D>(family.member(0), grid.lo, grid.hi, grid.nx)), model,
                                    fp, grid);
    bound = duality_bound<D>(*est.potential, 0, quad);
  }
  auto sum = art.open("lipschitz_summary.csv");
  sum << "t,members,max_ratio,max_ratio_refined,relative_change,band,duality_bound\n";
  sum << fmt(t) << ',' << family.size() << ',' << fmt(ref.coarse.max_ratio) << ',' << fmt(ref.fine.max_ratio) << ','
      << fmt(ref.relative_change) << ',' << fmt(cfg.real("lipschitz.band")) << ',' << fmt(bound) << '\n';

  res.claims.push_back(detail::claim("refinement_stable", ref.pass,
                                     "max_ratio " + fmt(ref.coarse.max_ratio) + " -> " + fmt(ref.fine.max_ratio) +
                                         ", relative change " + fmt(ref.relative_change)));
  if (std::isfinite(bound)) {
    res.claims.push_back(detail::claim("duality_bound", ref.coarse.max_ratio <= bound && ref.fine.max_ratio <= bound,
                                       "max_ratio " + fmt(std::max(ref.coarse.max_ratio, ref.fine.max_ratio)) +
                                           " <= ||u(t)||_n* " + fmt(bound)));
  }
  return res;
}

template <int D>
RecipeResult run_viscosity(const RunConfig& cfg, Artifacts& art) {
  using detail::fmt;
  RecipeResult res;
  const auto grid = cfg.grid<D>();
  const auto model = cfg.cost_model<D>();
  const auto fp = cfg.fixed_point();
  const auto family = cfg.family<D>("viscosity");
  const auto times = cfg.reals("viscosity.times");
  const auto quad = cfg.metric_quadrature<D>();
  const auto coarse = build_value_surface<D>(model, family, times, fp, grid);
  const auto fine = build_value_surface<D>(model, family, times, fp, grid.refined());
  const double richardson = richardson_estimate<D>(coarse, fine);
  const double tol = 10.0 * richardson;
  const auto geom = FamilyGeometry<D>::build(family, grid, quad);
  const auto potential = solve_value<D>(grid.t0, geom.members[0], model, fp, grid).potential;
  const auto phi = potential_test_function<D>(potential);
  const auto reps = viscosity_sweep<D>(coarse, geom, phi, model, quad, tol, cfg.real("viscosity.weight"));

  {
    auto out = art.open("viscosity.csv");
    write_viscosity_csv(reps, out);
  }
  auto plot = art.open("plotdata_viscosity.csv");
  plot << "t,slack\n";
  for (const auto& r : reps) plot << fmt(r.t) << ',' << fmt(r.slack) << '\n';
  auto sum = art.open("viscosity_summary.csv");
  sum << "richardson,tolerance,reports\n" << fmt(richardson) << ',' << fmt(tol) << ',' << reps.size() << '\n';
  res.claims.push_back(detail::tally("viscosity_sub", reps, Side::sub));
  res.claims.push_back(detail::tally("viscosity_super", reps, Side::super));
  return res;
}

template <int D>
RecipeResult run_doubling(const RunConfig& cfg, Artifacts& art) {
  using detail::fmt;
  RecipeResult res;
  const auto grid = cfg.grid<D>();
  const auto fp = cfg.fixed_point();
  const auto family = cfg.family<D>("family");
  const auto times = cfg.reals("doubling.times");
  const auto dcfg = cfg.doubling();
  const double gap = cfg.real("doubling.gap");
  const auto quad = cfg.metric_quadrature<D>();
  const auto model_n = mollify<D>(cfg.cylindrical<D>(), dcfg.n);
  const auto v = build_value_surface<D>(model_n, family, times, fp, grid);
  const auto u = v.shifted(gap);
  const auto geom = FamilyGeometry<D>::build(family, grid, quad);
  const auto sum = doubling_experiment<D>(u, v, geom, model_n, dcfg, quad);
  const DoublingFunctional<D> Phi(u, v, geom, model_n.horizon(), dcfg.gamma0);
  const double monotone = penalty_monotonicity<D>(Phi, dcfg);
  const double diagonal = diagonal_identity_error<D>(Phi, v, geom, dcfg);

  std::size_t seeds = 0;
  for (const auto& r : sum.cells) {
    auto out = art.open("doubling_" + detail::tag(r.eps) + "_" + detail::tag(r.delta) + ".csv");
    write_doubling_csv(r, out);
    seeds += r.seed ? 1 : 0;
  }
  for (double delta : dcfg.delta) {
    bool any = false;
    for (const auto& r : sum.cells) any = any || r.delta == delta;
    if (!any) continue;
    auto plot = art.open("plotdata_doubling_rho_eta_" + detail::tag(delta) + ".csv");
    plot << "eps,rho_eta\n";
    for (const auto& r : sum.cells) {
      if (r.delta == delta) plot << fmt(r.eps) << ',' << fmt(r.rho_eta) << '\n';
    }
  }
  auto out = art.open("doubling_summary.csv");
  out << "cells,seeds,c_star,c_hat_n,c_hat,max_ratio_sqrt_delta,all_bound,all_main1,all_I,penalty_monotonicity,"
         "diagonal_identity_error\n";
  out << sum.cells.size() << ',' << seeds << ',' << fmt(sum.c_star) << ',' << fmt(sum.c_hat_n) << ','
      << fmt(sum.c_hat) << ',' << fmt(sum.max_ratio_sqrt_delta) << ',' << (sum.all_bound ? 1 : 0) << ','
      << (sum.all_main1 ? 1 : 0) << ',' << (sum.all_I ? 1 : 0) << ',' << fmt(monotone) << ',' << fmt(diagonal)
      << '\n';

  res.claims.push_back(detail::claim("bound_certificate", sum.all_bound, "c* " + fmt(sum.c_star)));
  res.claims.push_back(detail::claim("norm_estimate", sum.all_main1,
                                     "max ratio*sqrt(delta) " + fmt(sum.max_ratio_sqrt_delta) + " <= c_hat " +
                                         fmt(sum.c_hat)));
  res.claims.push_back(detail::claim("I_bound", sum.all_I, "I <= delta d + 1e-8 in every cell"));
  res.claims.push_back(detail::claim("diagonal_identity", diagonal <= 1e-12, "max error " + fmt(diagonal)));
  res.claims.push_back(detail::claim("penalty_monotone", monotone <= 0.0, "max increase in delta " + fmt(monotone)));
  if (gap > 0.0) {
    bool ok = true;
    for (double delta : dcfg.delta) {
      double tau = std::numeric_limits<double>::infinity(), r_eta = tau;
      std::vector<double> eps = dcfg.eps;
      std::sort(eps.rbegin(), eps.rend());
      for (double e : eps) {
        for (const auto& r : sum.cells) {
          if (r.delta != delta || r.eps != e) continue;
          ok = ok && std::abs(r.tau) <= tau + 1e-15 && r.rho_eta <= r_eta + 1e-15;
          tau = std::abs(r.tau);
          r_eta = r.rho_eta;
        }
      }
    }
    res.claims.push_back(detail::claim("shrinking_gap", ok, "|tau| and rho(eta) nonincreasing as eps decreases"));
  } else {
    res.claims.push_back({"no_seed", seeds == 0 ? Verdict::pass : Verdict::inconclusive,
                          std::to_string(seeds) + " cells with max Phi > 0"});
  }
  return res;
}

template <int D>
RecipeResult run_convergence(const RunConfig& cfg, Artifacts& art) {
  using detail::fmt;
  RecipeResult res;
  const auto grid = cfg.grid<D>();
  const auto means = cfg.reals("convergence.means");
  const auto sigmas = cfg.reals("convergence.sigmas");
  std::vector<GridDensity<D>> samples;
  for (std::size_t i = 0; i < means.size(); ++i) samples.push_back(detail::gaussian_on<D>(grid, means[i], sigmas[i]));
  const auto rows = uniform_convergence_check<D>(cfg.cylindrical<D>(), cfg.integers("convergence.ladder"), samples,
                                                 cfg.reals("convergence.times"), cfg.fixed_point(), grid);
  {
    auto out = art.open("convergence.csv");
    write_convergence_csv(rows, out);
  }
  auto plot = art.open("plotdata_convergence.csv");
  plot << "gap,max_error\n";
  bool bound = true, decreasing = true;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    plot << fmt(rows[k].gap) << ',' << fmt(rows[k].max_error) << '\n';
    bound = bound && rows[k].bound_holds;
    if (k > 0) decreasing = decreasing && rows[k].max_error <= rows[k - 1].max_error + 1e-7;
  }
  res.claims.push_back(detail::claim("gap_bound", bound, "max sampled |v_n - v| <= T||l_n - l|| + ||g_n - g||"));
  res.claims.push_back(detail::claim("decreasing", decreasing,
                                     "last rung error " + fmt(rows.back().max_error)));
  return res;
}

// ---------------------------------------------------------------------------
// Registry and runner

struct Recipe {
  std::string name;
  std::string summary;
  std::string checks;
  std::function<RecipeResult(const RunConfig&, Artifacts&)> run;
};

namespace detail {

template <template <int> class R>
std::function<RecipeResult(const RunConfig&, Artifacts&)> by_dim() {
  return [](const RunConfig& c, Artifacts& a) { return c.dim() == 2 ? R<2>::run(c, a) : R<1>::run(c, a); };
}

template <int D>
struct ValueRecipe {
  static RecipeResult run(const RunConfig& c, Artifacts& a) { return run_value_solve<D>(c, a); }
};
template <int D>
struct LipschitzRecipe {
  static RecipeResult run(const RunConfig& c, Artifacts& a) { return run_lipschitz<D>(c, a); }
};
template <int D>
struct ViscosityRecipe {
  static RecipeResult run(const RunConfig& c, Artifacts& a) { return run_viscosity<D>(c, a); }
};
template <int D>
struct DoublingRecipe {
  static RecipeResult run(const RunConfig& c, Artifacts& a) { return run_doubling<D>(c, a); }
};
template <int D>
struct ConvergenceRecipe {
  static RecipeResult run(const RunConfig& c, Artifacts& a) { return run_convergence<D>(c, a); }
};

}  // namespace detail

inline const std::vector<Recipe>& recipes() {
  static const std::vector<Recipe> all = {
      {"metric_suite", "rho against its closed-form kernel, the Dirac pair, kappa norms and weak* probes",
       "kernel_equivalence dirac_pair parseval weakstar_shift weakstar_escape", run_metric_suite},
      {"value_solve", "fixed-point value v(t0, mu0) with its iteration trace, flow and particle cross-check",
       "fixed_point particles_agree", detail::by_dim<detail::ValueRecipe>()},
      {"lipschitz", "pairwise |v(t,mu) - v(t,nu)| / rho(mu - nu) over a Gaussian family, on two grids",
       "refinement_stable duality_bound", detail::by_dim<detail::LipschitzRecipe>()},
      {"viscosity", "sub and super viscosity inequalities at penalized touching points of a value surface",
       "viscosity_sub viscosity_super", detail::by_dim<detail::ViscosityRecipe>()},
      {"doubling", "doubling-of-variables maximizers and their certificates over an (eps, delta) grid",
       "bound_certificate norm_estimate I_bound diagonal_identity penalty_monotone shrinking_gap",
       detail::by_dim<detail::DoublingRecipe>()},
      {"convergence", "v_n along a mollification ladder against the exact-cost value",
       "gap_bound decreasing", detail::by_dim<detail::ConvergenceRecipe>()},
  };
  return all;
}

inline const Recipe* find_recipe(const std::string& name) {
  for (const auto& r : recipes()) {
    if (r.name == name) return &r;
  }
  return nullptr;
}

inline void list_experiments(std::ostream& out, bool csv) {
  if (csv) {
    out << "name,description,checks\n";
    for (const auto& r : recipes()) out << r.name << ",\"" << r.summary << "\"," << r.checks << '\n';
    return;
  }
  std::size_t w = 0;
  for (const auto& r : recipes()) w = std::max(w, r.name.size());
  for (const auto& r : recipes()) {
    out << r.name << std::string(w + 2 - r.name.size(), ' ') << r.summary << "\n"
        << std::string(w + 2, ' ') << "checks: " << r.checks << '\n';
  }
}

/// Exit codes of a run.
enum ExitCode : int { exit_ok = 0, exit_config = 1, exit_fail = 2, exit_solver = 3 };

struct RunResult {
  int exit_code = exit_ok;
  std::vector<Claim> claims;
  std::vector<std::string> files;
  std::string message;
  double seconds = 0.0;
};

namespace detail {

inline void write_manifest(const RunConfig& cfg, const RunResult& r, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  out << "# mfc run manifest\n";
  out << "experiment = " << cfg.experiment << '\n';
  out << "mfc_version = " << library_version << '\n';
#if defined(__VERSION__)
  out << "compiler = " << __VERSION__ << '\n';
#endif
  out << "cxx_standard = " << __cplusplus << '\n';
  out << "config_source = " << (cfg.source().empty() ? "(defaults)" : cfg.source()) << '\n';
  out << "wall_seconds = " << format_double(r.seconds) << '\n';
  out << "exit_code = " << r.exit_code << '\n';
  if (!r.message.empty()) out << "message = " << r.message << '\n';
  out << "\n[config]\n";
  cfg.write(out);
  out << "\n[claims]\n";
  for (const auto& c : r.claims) out << c.name << " = " << verdict_name(c.verdict) << " ; " << c.detail << '\n';
  out << "\n[files]\n";
  for (const auto& f : r.files) out << f << '\n';
}

}  // namespace detail

/// Validates the configuration, runs `cfg.experiment` into `cfg.out` and writes manifest.txt.
///
/// Exit code 1 for configuration errors, 3 for solver failures or non-convergence,
/// 2 when a claim fails and 0 otherwise.
inline RunResult run_experiment(const RunConfig& cfg, std::ostream& log) {
  RunResult r;
  const Recipe* recipe = find_recipe(cfg.experiment);
  if (!recipe) {
    r.exit_code = exit_config;
    r.message = "unknown experiment '" + cfg.experiment + "' (see 'mfc list')";
    return r;
  }
  try {
    cfg.validate();
  } catch (const InvalidArgument& e) {
    r.exit_code = exit_config;
    r.message = cfg.annotate(e.what());
    return r;
  }
  const auto start = std::chrono::steady_clock::now();
  Artifacts art(cfg.out);
  try {
    const RecipeResult res = recipe->run(cfg, art);
    r.claims = res.claims;
    bool failed = false;
    for (const auto& c : res.claims) failed = failed || c.verdict == Verdict::fail;
    r.exit_code = res.not_converged ? exit_solver : (failed ? exit_fail : exit_ok);
  } catch (const SolverError& e) {
    r.exit_code = exit_solver;
    r.message = e.what();
  } catch (const InvalidArgument& e) {
    r.exit_code = exit_config;
    r.message = cfg.annotate(e.what());
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  r.files = art.files();
  std::sort(r.files.begin(), r.files.end());
  for (const auto& c : r.claims) log << verdict_name(c.verdict) << "  " << c.name << "  " << c.detail << '\n';
  if (!r.message.empty()) log << "error: " << r.message << '\n';
  detail::write_manifest(cfg, r, cfg.out / "manifest.txt");
  return r;
}

}  // namespace mfc
