#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "mfc/dynamics.hpp"
#include "mfc/sobolev.hpp"
#include "oracles.hpp"

namespace {

using mfc::Point;
using P1 = Point<1>;
using Grid1 = mfc::SpaceTimeGrid<1>;

double inv_quad(double x) { return 1.0 / (1.0 + x * x); }

std::vector<double> sample(const Grid1& g, double (*f)(double)) {
  std::vector<double> v(g.nodes());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = f(g.node(i)[0]);
  return v;
}

mfc::Measure<1> gaussian_on(const Grid1& g, double mean, double sigma) {
  return mfc::discretize<1>(mfc::GaussianMixture<1>::normal(P1{mean}, sigma), g.lo, g.hi, g.nx);
}

// u(t, x) = -log E[exp(-f(x + sqrt(T - t) Z))]
double cole_hopf_oracle(double x, double elapsed) {
  return -std::log(oracle::heat_semigroup([](double y) { return std::exp(-inv_quad(y)); }, x, elapsed));
}

TEST(Hamiltonian, ElementaryCases) {
  const mfc::Measure<1> mu = mfc::GaussianMixture<1>::normal(P1{0.0}, 1.0);
  EXPECT_NEAR(mfc::hamiltonian<1>(mu, mfc::SmoothFunction<1>::constant(3.0)), 0.0, 1e-15);
  const mfc::SmoothFunction<1> lin([](const P1& x) { return mfc::Jet<1>{x[0], P1{1.0}, 0.0}; }, mfc::Growth::quadratic,
                                   1.0);
  EXPECT_NEAR(mfc::hamiltonian<1>(mu, lin), 0.5, 1e-14);
  const mfc::SmoothFunction<1> sq([](const P1& x) { return mfc::Jet<1>{x[0] * x[0], P1{2 * x[0]}, 2.0}; },
                                  mfc::Growth::quadratic, 1.0);
  // -1/2 * 2 + 1/2 * E[4 X^2]
  EXPECT_NEAR(mfc::hamiltonian<1>(mu, sq), 1.0, 1e-13);
}

TEST(Hamiltonian, SpatialAndFrequencyPathsAgreeOnKappa) {
  const auto quad = mfc::FrequencyQuadrature<1>::for_metric();
  const mfc::Measure<1> mu = mfc::GaussianMixture<1>({{0.6, P1{-0.5}, 0.8}, {0.4, P1{1.2}, 0.5}});
  const mfc::Measure<1> nu = mfc::GaussianMixture<1>::normal(P1{2.0}, 0.5);
  const auto kappa = mfc::linear_derivative_kappa<1>(mu, nu, quad);
  for (const auto* m : {&mu, &nu}) {
    const double a = mfc::hamiltonian<1>(*m, kappa);
    const double b = mfc::hamiltonian_spectral<1>(*m, kappa);
    EXPECT_NEAR(a, b, 1e-8);
    EXPECT_GT(std::abs(a), 1e-4);
  }
}

TEST(Eikonal, ZeroDataGivesZeroPotential) {
  Grid1 g{0.0, 1.0, 0.05, -10.0, 10.0, 101};
  const auto field = mfc::solve_eikonal<1>(mfc::PotentialSource<1>{}, std::vector<double>(g.nodes(), 0.0), g);
  for (std::size_t k = 0; k < field.levels(); ++k) {
    for (std::size_t i = 0; i < g.nodes(); ++i) {
      EXPECT_NEAR(field.u(k)[i], 0.0, 1e-14);
      EXPECT_NEAR(field.gradient(k, i)[0], 0.0, 1e-13);
    }
  }
}

TEST(Eikonal, ConstantSourceGivesLinearInTime) {
  Grid1 g{0.0, 1.0, 0.05, -10.0, 10.0, 101};
  const double c = 0.7;
  const mfc::PotentialSource<1> L = [&](double) { return std::vector<double>(g.nodes(), c); };
  const auto field = mfc::solve_eikonal<1>(L, std::vector<double>(g.nodes(), 0.0), g);
  for (std::size_t k = 0; k < field.levels(); ++k) {
    for (std::size_t i = 0; i < g.nodes(); i += 10) {
      EXPECT_NEAR(field.u(k)[i], c * (g.horizon - g.time(k)), 1e-13);
      EXPECT_NEAR(-std::log(field.phi(k)[i]), field.u(k)[i], 1e-12);
    }
  }
}

TEST(Eikonal, HeatSemigroupOracleInterior) {
  const Grid1 g = mfc::default_grid<1>();
  const auto field = mfc::solve_eikonal<1>(mfc::PotentialSource<1>{}, sample(g, inv_quad), g);
  double worst = 0.0;
  for (std::size_t k : {std::size_t{0}, g.steps() / 2}) {
    for (std::size_t i = 0; i < g.nodes(); i += 8) {
      const double x = g.node(i)[0];
      if (std::abs(x) > 10.0) continue;
      worst = std::max(worst, std::abs(field.u(k)[i] - cole_hopf_oracle(x, g.horizon - g.time(k))));
    }
  }
  EXPECT_LT(worst, 1e-5);
}

TEST(Eikonal, ResidualShrinksFourfoldUnderRefinement) {
  Grid1 g{0.0, 1.0, 0.02, -12.0, 12.0, 121};
  const auto make_source = [](const Grid1& grid) {
    return mfc::PotentialSource<1>([grid](double t) {
      std::vector<double> v(grid.nodes());
      for (std::size_t i = 0; i < v.size(); ++i) {
        const double x = grid.node(i)[0];
        v[i] = (1.0 + 0.5 * t) * std::exp(-0.5 * (x - 0.3) * (x - 0.3));
      }
      return v;
    });
  };
  std::vector<double> res;
  for (int r = 0; r < 3; ++r) {
    const auto L = make_source(g);
    const auto field = mfc::solve_eikonal<1>(L, sample(g, inv_quad), g);
    res.push_back(mfc::eikonal_residual<1>(field, L));
    g = g.refined();
  }
  EXPECT_NEAR(res[0] / res[1], 4.0, 0.6);
  EXPECT_NEAR(res[1] / res[2], 4.0, 0.6);
}

TEST(Eikonal, RejectsMismatchedTerminalData) {
  const Grid1 g{0.0, 1.0, 0.1, -5.0, 5.0, 51};
  EXPECT_THROW(mfc::solve_eikonal<1>(mfc::PotentialSource<1>{}, std::vector<double>(7, 0.0), g), mfc::InvalidArgument);
  Grid1 bad = g;
  bad.dt = 0.3;
  EXPECT_THROW(bad.validate(), mfc::InvalidArgument);
}

TEST(FokkerPlanck, HeatFlowOfGaussian) {
  const Grid1 g = mfc::default_grid<1>();
  const double s0 = 0.8;
  const auto path = mfc::solve_fokker_planck<1>(mfc::ControlField<1>::zero(g), gaussian_on(g, 0.0, s0));
  const auto& m = path.terminal().grid();
  const double var = s0 * s0 + g.horizon;
  double worst = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    const double x = m.node(i)[0];
    worst = std::max(worst, std::abs(m.values()[i] - std::exp(-0.5 * x * x / var) / std::sqrt(2 * oracle::pi * var)));
  }
  EXPECT_LT(worst, 1e-4);
  EXPECT_LT(path.max_mass_drift, 1e-10);
  EXPECT_EQ(path.size(), g.steps() + 1);
}

TEST(FokkerPlanck, SymmetryIsPreserved) {
  const Grid1 g{0.0, 1.0, 0.01, -14.0, 14.0, 281};
  const mfc::Measure<1> mu0 = mfc::discretize<1>(
      mfc::GaussianMixture<1>({{0.5, P1{-1.5}, 0.6}, {0.5, P1{1.5}, 0.6}}), g.lo, g.hi, g.nx);
  const auto path = mfc::solve_fokker_planck<1>(mfc::ControlField<1>::zero(g), mu0, 25);
  for (const auto& snap : path.snapshots) {
    const auto& v = snap.grid().values();
    double peak = 0.0;
    for (double x : v) peak = std::max(peak, x);
    for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(v[i], v[v.size() - 1 - i], 1e-14 * peak);
  }
}

TEST(FokkerPlanck, OrnsteinUhlenbeckVarianceFollowsMomentOde) {
  // a narrower box keeps the unbounded drift within the Courant limit
  const Grid1 g{0.0, 1.0, 0.005, -8.0, 8.0, 321};
  const auto alpha = mfc::ControlField<1>::from_function(g, [](double, const P1& x) { return P1{-x[0]}; });
  const auto path = mfc::solve_fokker_planck<1>(alpha, gaussian_on(g, 0.0, 1.0), 20);
  // v' = 1 - 2 v, v(0) = 1, by classical RK4 with a fine step
  for (std::size_t j = 0; j < path.size(); ++j) {
    double v = 1.0;
    const int sub = 2000;
    const double hstep = path.times[j] / sub;
    for (int s = 0; s < sub; ++s) {
      const auto F = [](double y) { return 1.0 - 2.0 * y; };
      const double k1 = F(v), k2 = F(v + 0.5 * hstep * k1), k3 = F(v + 0.5 * hstep * k2), k4 = F(v + hstep * k3);
      v += hstep / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
    }
    const double mean = mfc::integrate<1>(path.snapshots[j], [](const P1& x) { return x[0]; });
    const double var = mfc::integrate<1>(path.snapshots[j], [](const P1& x) { return x[0] * x[0]; }) - mean * mean;
    EXPECT_NEAR(var, v, 1e-3) << "t=" << path.times[j];
  }
}

TEST(FokkerPlanck, CourantViolationSuggestsStep) {
  const Grid1 g{0.0, 1.0, 0.05, -10.0, 10.0, 201};
  const auto alpha = mfc::ControlField<1>::from_function(g, [](double, const P1&) { return P1{50.0}; });
  try {
    mfc::solve_fokker_planck<1>(alpha, gaussian_on(g, 0.0, 1.0));
    FAIL() << "expected a Courant violation";
  } catch (const mfc::CflViolation& e) {
    EXPECT_LE(e.suggested_dt() * 50.0, g.spacing());
  }
}

TEST(FokkerPlanck, RejectsInitialDensityOffGrid) {
  const Grid1 g{0.0, 1.0, 0.05, -10.0, 10.0, 201};
  const Grid1 other{0.0, 1.0, 0.05, -10.0, 10.0, 101};
  EXPECT_THROW(mfc::solve_fokker_planck<1>(mfc::ControlField<1>::zero(g), gaussian_on(other, 0.0, 1.0)),
               mfc::InvalidArgument);
}

TEST(FokkerPlanck, TwoDimensionalHeatFlowKeepsProductForm) {
  const mfc::SpaceTimeGrid<2> g = mfc::default_grid<2>();
  const mfc::Measure<2> mu0 = mfc::discretize<2>(mfc::GaussianMixture<2>::normal(Point<2>{0.0, 0.0}, 0.7), g.lo, g.hi, g.nx);
  const auto path = mfc::solve_fokker_planck<2>(mfc::ControlField<2>::zero(g), mu0, g.steps());
  const double var = 0.49 + 1.0;
  const auto& m = path.terminal().grid();
  double worst = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    const auto x = m.node(i);
    const double want = std::exp(-0.5 * (x[0] * x[0] + x[1] * x[1]) / var) / (2 * oracle::pi * var);
    worst = std::max(worst, std::abs(m.values()[i] - want));
  }
  EXPECT_LT(worst, 2e-3);
  EXPECT_LT(path.max_mass_drift, 1e-10);
}

TEST(Particles, BrownianVarianceWithinChiSquareBand) {
  const Grid1 g{0.0, 1.0, 0.01, -20.0, 20.0, 401};
  const std::size_t N = 100000;
  const auto path = mfc::simulate_particles<1>(mfc::ControlField<1>::zero(g), mfc::EmpiricalMeasure<1>::dirac(P1{0.0}),
                                               N, 2024);
  const auto& pts = path.terminal().empirical().points();
  double s = 0.0, s2 = 0.0;
  for (const auto& p : pts) {
    s += p[0];
    s2 += p[0] * p[0];
  }
  const double mean = s / N;
  const double var = s2 / N - mean * mean;
  EXPECT_LE(std::abs(var - 1.0), 3.0 * std::sqrt(2.0 / N));
}

TEST(Particles, ReproducibleAcrossRuns) {
  const Grid1 g{0.0, 1.0, 0.01, -10.0, 10.0, 201};
  const auto alpha = mfc::ControlField<1>::from_function(g, [](double t, const P1& x) { return P1{-x[0] + t}; });
  const mfc::Measure<1> mu0 = gaussian_on(g, 0.0, 1.0);
  for (std::size_t N : {std::size_t{1}, std::size_t{1000}}) {
    const auto a = mfc::simulate_particles<1>(alpha, mu0, N, 77, 10);
    const auto b = mfc::simulate_particles<1>(alpha, mu0, N, 77, 10);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t j = 0; j < a.size(); ++j) {
      const auto& pa = a.snapshots[j].empirical().points();
      const auto& pb = b.snapshots[j].empirical().points();
      for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(pa[i][0], pb[i][0]);
    }
    const auto c = mfc::simulate_particles<1>(alpha, mu0, N, 78, 10);
    EXPECT_NE(c.terminal().empirical().points()[0][0], a.terminal().empirical().points()[0][0]);
  }
}

TEST(Particles, AgreeWithFokkerPlanckInRho) {
  const Grid1 g = mfc::default_grid<1>();
  const auto field = mfc::solve_eikonal<1>(mfc::PotentialSource<1>{}, sample(g, inv_quad), g);
  const auto alpha = field.feedback();
  const mfc::Measure<1> mu0 = gaussian_on(g, 0.5, 1.0);
  const auto fp = mfc::solve_fokker_planck<1>(alpha, mu0, g.steps());
  const auto ps = mfc::simulate_particles<1>(alpha, mu0, 100000, 9);
  const auto quad = mfc::FrequencyQuadrature<1>::for_metric();
  EXPECT_LE(mfc::rho<1>(fp.terminal(), ps.terminal(), quad), 5e-3);
}

TEST(ControlField, InterpolationIsExactForAffineFields) {
  const Grid1 g{0.0, 1.0, 0.5, -4.0, 4.0, 41};
  const auto alpha = mfc::ControlField<1>::from_function(g, [](double, const P1& x) { return P1{2.0 * x[0] - 1.0}; });
  for (double x : {-3.93, -0.01, 0.0, 2.77}) EXPECT_NEAR(alpha.at(1, P1{x})[0], 2.0 * x - 1.0, 1e-13);
  EXPECT_NEAR(alpha.at(1, P1{9.0})[0], 7.0, 1e-13);
  const auto zero = mfc::ControlField<1>::zero(g);
  EXPECT_NEAR(alpha.sup_distance(zero), 9.0, 1e-13);
  EXPECT_NEAR(alpha.blend(0.25, zero).at(0, P1{1.0})[0], 0.75, 1e-13);
}

}  // namespace
