#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "mfc/value.hpp"
#include "oracles.hpp"

namespace {

using mfc::Point;
using P1 = Point<1>;
using Grid1 = mfc::SpaceTimeGrid<1>;

double inv_quad(double x) { return 1.0 / (1.0 + x * x); }

mfc::Measure<1> gaussian_on(const Grid1& g, double mean, double sigma) {
  return mfc::discretize<1>(mfc::GaussianMixture<1>::normal(P1{mean}, sigma), g.lo, g.hi, g.nx);
}

mfc::CostModel<1> terminal_constant(double c) {
  mfc::CylindricalCost<1> cyl;
  cyl.terminal.push_back({mfc::Outer{mfc::OuterKind::constant, c}, mfc::make_inner<1>("gaussian_bump")});
  return mfc::CostModel<1>::exact(cyl);
}

mfc::CostModel<1> terminal_linear() {
  mfc::CylindricalCost<1> cyl;
  cyl.terminal.push_back({mfc::Outer{mfc::OuterKind::linear, 1.0}, mfc::make_inner<1>("inv_quadratic")});
  return mfc::CostModel<1>::exact(cyl);
}

mfc::CostModel<1> cylindrical(double slope) {
  mfc::CylindricalCost<1> cyl;
  cyl.beta = 0.5;
  cyl.running.push_back({mfc::Outer{mfc::OuterKind::arctan, slope}, mfc::make_inner<1>("gaussian_bump", P1{1.0}, 1.0)});
  cyl.terminal.push_back({mfc::Outer{mfc::OuterKind::arctan, slope}, mfc::make_inner<1>("inv_quadratic", P1{-0.5}, 1.0)});
  return mfc::CostModel<1>::exact(cyl);
}

// mu0(-log E exp(-f(x + sqrt(T - t0) Z))) for mu0 = N(m, s^2)
double closed_form_value(double m, double s, double elapsed) {
  return oracle::gaussian_expectation(
      [&](double x) {
        return -std::log(oracle::heat_semigroup([](double y) { return std::exp(-inv_quad(y)); }, x, elapsed));
      },
      m, s);
}

Grid1 coarse() { return Grid1{0.0, 1.0, 0.01, -16.0, 16.0, 641}; }

TEST(CostFunctional, ConstantTerminalCost) {
  const Grid1 g = coarse();
  const auto alpha = mfc::ControlField<1>::from_function(g, [](double t, const P1& x) { return P1{0.3 * t - 0.1 * x[0]}; });
  const auto path = mfc::solve_fokker_planck<1>(alpha, gaussian_on(g, 0.0, 1.0), 1);
  auto model = terminal_constant(1.7);
  // control energy is added on top of g = c; with alpha = 0 only c remains
  const auto still = mfc::solve_fokker_planck<1>(mfc::ControlField<1>::zero(g), gaussian_on(g, 0.0, 1.0), 1);
  EXPECT_DOUBLE_EQ(mfc::cost_functional<1>(still, model), 1.7);
  EXPECT_GT(mfc::cost_functional<1>(path, model), 1.7);
}

TEST(CostFunctional, UnitControlCostsHalfTheHorizon) {
  Grid1 g = coarse();
  g.t0 = 0.25;
  const auto alpha = mfc::ControlField<1>::from_function(g, [](double, const P1&) { return P1{1.0}; });
  const auto path = mfc::solve_fokker_planck<1>(alpha, gaussian_on(g, 0.0, 1.0), 1);
  EXPECT_NEAR(mfc::cost_functional<1>(path, mfc::CostModel<1>::zero(1.0)), 0.5 * 0.75, 1e-12);
}

TEST(CostFunctional, UncontrolledHeatFlowOfMoment) {
  const Grid1 g = mfc::default_grid<1>();
  const auto path = mfc::solve_fokker_planck<1>(mfc::ControlField<1>::zero(g), gaussian_on(g, 0.4, 0.9), 50);
  const double want = oracle::gaussian_expectation(inv_quad, 0.4, std::sqrt(0.81 + 1.0));
  EXPECT_NEAR(mfc::cost_functional<1>(path, terminal_linear()), want, 1e-5);
}

TEST(CostFunctional, HorizonMismatchIsRejected) {
  const Grid1 g = coarse();
  const auto path = mfc::solve_fokker_planck<1>(mfc::ControlField<1>::zero(g), gaussian_on(g, 0.0, 1.0), 10);
  mfc::CylindricalCost<1> cyl;
  cyl.horizon = 2.0;
  EXPECT_THROW(mfc::cost_functional<1>(path, mfc::CostModel<1>::exact(cyl)), mfc::InvalidArgument);
}

TEST(SolveValue, ConstantTerminalCostConvergesImmediately) {
  const Grid1 g = coarse();
  const auto est = mfc::solve_value<1>(0.0, gaussian_on(g, 0.0, 1.0), terminal_constant(2.0), {}, g);
  EXPECT_TRUE(est.converged);
  EXPECT_EQ(est.trace.size(), 1u);
  EXPECT_DOUBLE_EQ(est.v, 2.0);
  EXPECT_LT(est.control.sup_distance(mfc::ControlField<1>::zero(g)), 1e-12);
}

TEST(SolveValue, ClosedFormColeHopfCase) {
  const Grid1 g = mfc::default_grid<1>();
  const auto est = mfc::solve_value<1>(0.0, gaussian_on(g, 0.5, 1.0), terminal_linear(), {}, g);
  EXPECT_TRUE(est.converged);
  EXPECT_EQ(est.trace.size(), 1u);
  EXPECT_NEAR(est.v, closed_form_value(0.5, 1.0, 1.0), 1e-4);
  EXPECT_LE(est.pontryagin_residual, 1e-8);
}

TEST(SolveValue, TinySlopeStaysNearZeroSlopeValue) {
  const Grid1 g = coarse();
  const auto mu0 = gaussian_on(g, 0.2, 0.8);
  const auto flat = mfc::solve_value<1>(0.0, mu0, cylindrical(0.0), {}, g);
  const auto tiny = mfc::solve_value<1>(0.0, mu0, cylindrical(1e-3), {}, g);
  EXPECT_TRUE(flat.converged);
  EXPECT_TRUE(tiny.converged);
  EXPECT_NEAR(flat.v, 0.0, 1e-15);
  EXPECT_LE(std::abs(tiny.v - flat.v), 1e-3 * (g.horizon - g.t0 + 1.0));
}

TEST(SolveValue, CylindricalModelConvergesWithMonotoneTrace) {
  const Grid1 g = coarse();
  const auto model = cylindrical(1.0);
  const auto est = mfc::solve_value<1>(0.0, gaussian_on(g, 0.2, 0.8), model, {}, g);
  EXPECT_TRUE(est.converged) << est.note;
  EXPECT_TRUE(est.monotone);
  EXPECT_GT(est.trace.size(), 1u);
  EXPECT_LE(std::abs(est.v), model.k_star() * (g.horizon - g.t0) + model.k_star());
  // fictitious play reaches the same fixed point
  mfc::FixedPointConfig fict;
  fict.fictitious_play = true;
  fict.max_iter = 400;
  fict.tol = 1e-6;
  const auto other = mfc::solve_value<1>(0.0, gaussian_on(g, 0.2, 0.8), model, fict, g);
  EXPECT_NEAR(other.v, est.v, 1e-6);
}

TEST(SolveValue, PerturbedControlsCostMore) {
  const Grid1 g = coarse();
  const auto model = cylindrical(1.0);
  const auto est = mfc::solve_value<1>(0.0, gaussian_on(g, -0.3, 1.2), model, {}, g);
  EXPECT_GE(mfc::suboptimality_margin<1>(est, model), -1e-6);
}

TEST(SolveValue, ReportsNonConvergence) {
  const Grid1 g = coarse();
  mfc::FixedPointConfig fp;
  fp.max_iter = 2;
  const auto est = mfc::solve_value<1>(0.0, gaussian_on(g, 0.2, 0.8), cylindrical(1.0), fp, g);
  EXPECT_FALSE(est.converged);
  EXPECT_FALSE(est.note.empty());
  EXPECT_EQ(est.trace.size(), 2u);
  EXPECT_LE(est.v, std::min(est.trace[0].cost, est.trace[1].cost));
}

TEST(SolveValue, RejectsBadConfiguration) {
  const Grid1 g = coarse();
  mfc::FixedPointConfig fp;
  fp.lambda = 1.5;
  EXPECT_THROW(mfc::solve_value<1>(0.0, gaussian_on(g, 0.0, 1.0), terminal_linear(), fp, g), mfc::InvalidArgument);
  const Grid1 other{0.0, 1.0, 0.01, -16.0, 16.0, 321};
  EXPECT_THROW(mfc::solve_value<1>(0.0, gaussian_on(other, 0.0, 1.0), terminal_linear(), {}, g), mfc::InvalidArgument);
}

TEST(SolveValue, ResolutionStability) {
  const Grid1 g = coarse();
  const auto model = cylindrical(1.0);
  const auto a = mfc::solve_value<1>(0.0, gaussian_on(g, 0.2, 0.8), model, {}, g);
  const auto b = mfc::solve_value<1>(0.0, gaussian_on(g.refined(), 0.2, 0.8), model, {}, g.refined());
  EXPECT_LE(std::abs(a.v - b.v), 2e-3);
}

TEST(DynamicProgramming, TrivialSplits) {
  const Grid1 g = coarse();
  const auto mu0 = gaussian_on(g, 0.2, 0.8);
  const auto model = cylindrical(1.0);
  EXPECT_EQ(mfc::dpp_check<1>(0.0, mu0, 0.0, model, {}, g), 0.0);
  EXPECT_LE(mfc::dpp_check<1>(0.0, mu0, 1.0, model, {}, g), 1e-10);
}

TEST(DynamicProgramming, ClosedFormHalfHorizon) {
  const Grid1 g = mfc::default_grid<1>();
  EXPECT_LE(mfc::dpp_check<1>(0.0, gaussian_on(g, 0.5, 1.0), 0.5, terminal_linear(), {}, g), 1e-4);
}

}  // namespace
