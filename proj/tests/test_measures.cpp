#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "mfc/measures.hpp"
#include "oracles.hpp"

namespace {

using mfc::Complex;
using M1 = mfc::Measure<1>;
using M2 = mfc::Measure<2>;

const double c1 = 1.0 / std::sqrt(2.0 * oracle::pi);

M1 dirac1(double a) { return mfc::EmpiricalMeasure<1>::dirac({a}); }
M1 normal1(double m, double s) { return mfc::GaussianMixture<1>::normal({m}, s); }

TEST(Integrate, DiracAtOriginGivesOneForMomentWeight) {
  EXPECT_DOUBLE_EQ(mfc::integrate<1>(dirac1(0.0), mfc::moment_weight<1>()), 1.0);
  EXPECT_DOUBLE_EQ(mfc::theta<1>(dirac1(0.0)), 1.0);
  EXPECT_DOUBLE_EQ(mfc::theta<2>(M2(mfc::EmpiricalMeasure<2>::dirac({0.0, 0.0}))), 1.0);
}

TEST(Integrate, UnitVarianceGaussian) {
  EXPECT_NEAR(mfc::integrate<1>(normal1(0.0, 1.0), [](const mfc::Point<1>& x) { return x[0] * x[0]; }), 1.0,
              1e-13);
}

TEST(Integrate, ThetaOfStandardNormalMatchesHighOrderOracle) {
  const double want = oracle::gaussian_expectation([](double x) { return std::sqrt(1.0 + x * x); }, 0.0, 1.0);
  EXPECT_NEAR(mfc::theta<1>(normal1(0.0, 1.0)), want, 1e-8);
  EXPECT_NEAR(mfc::integrate<1>(normal1(0.0, 1.0), mfc::moment_weight<1>()), want, 1e-8);
}

TEST(Theta, DiracAtUnitDistance) {
  EXPECT_DOUBLE_EQ(mfc::theta<1>(dirac1(1.0)), std::sqrt(2.0));
  EXPECT_DOUBLE_EQ(mfc::theta<1>(dirac1(-1.0)), std::sqrt(2.0));
  EXPECT_GE(mfc::theta<1>(normal1(3.0, 0.5)), 1.0);
}

TEST(Mass, EveryRepresentationIsNormalized) {
  const auto mix = mfc::GaussianMixture<1>({{0.3, {-1.0}, 0.7}, {0.7, {2.0}, 1.3}});
  const M1 grid = mfc::discretize(mix, -20.0, 20.0, 401);
  EXPECT_NEAR(mfc::mass<1>(M1(mix)), 1.0, 1e-12);
  EXPECT_NEAR(mfc::mass<1>(grid), 1.0, 1e-12);
  EXPECT_NEAR(mfc::mass<1>(dirac1(4.0)), 1.0, 1e-12);
  const auto mix2 = mfc::GaussianMixture<2>({{0.5, {0.5, -0.5}, 1.0}, {0.5, {-1.0, 0.0}, 0.8}}, 24);
  EXPECT_NEAR(mfc::mass<2>(M2(mix2)), 1.0, 1e-12);
  EXPECT_NEAR(mfc::mass<2>(M2(mfc::discretize(mix2, -12.0, 12.0, 121))), 1.0, 1e-12);
}

TEST(CharFn, DiracAtOrigin) {
  for (double xi : {-3.0, 0.0, 0.5, 17.0}) {
    const Complex v = mfc::char_fn<1>(dirac1(0.0), {xi});
    EXPECT_NEAR(v.real(), c1, 1e-15);
    EXPECT_NEAR(v.imag(), 0.0, 1e-15);
  }
  const Complex v2 = mfc::char_fn<2>(M2(mfc::EmpiricalMeasure<2>::dirac({0.0, 0.0})), {1.0, 2.0});
  EXPECT_NEAR(v2.real(), 1.0 / (2.0 * oracle::pi), 1e-15);
}

TEST(CharFn, GaussianClosedFormAgainstSampling) {
  const double m = 0.4, s = 1.3;
  std::mt19937_64 gen(11);
  std::normal_distribution<double> nd(m, s);
  std::vector<mfc::Point<1>> pts(1000000);
  for (auto& p : pts) p[0] = nd(gen);
  const M1 emp = mfc::EmpiricalMeasure<1>::uniform(std::move(pts));
  for (double xi : {-2.0, -0.5, 0.3, 1.0, 2.5}) {
    const Complex want = c1 * std::exp(Complex(-0.5 * s * s * xi * xi, -xi * m));
    EXPECT_LT(std::abs(mfc::char_fn<1>(normal1(m, s), {xi}) - want), 1e-15);
    // Monte Carlo error is about c1 / sqrt(N)
    EXPECT_LT(std::abs(mfc::char_fn<1>(emp, {xi}) - want), 5.0 * c1 / 1000.0);
  }
}

TEST(CharFn, GridMatchesGaussianClosedForm) {
  const M1 grid = mfc::discretize(mfc::GaussianMixture<1>::normal({0.0}, 1.0), -20.0, 20.0, 401);
  for (double xi = -10.0; xi <= 10.0; xi += 0.25) {
    const Complex want = c1 * std::exp(-0.5 * xi * xi);
    EXPECT_LT(std::abs(mfc::char_fn<1>(grid, {xi}) - want), 1e-6) << xi;
  }
}

TEST(CharFn, ModulusZeroFrequencyAndSymmetry) {
  const auto mix = mfc::GaussianMixture<1>({{0.25, {-1.0}, 0.5}, {0.75, {1.5}, 1.0}});
  std::vector<M1> ms = {M1(mix), M1(mfc::discretize(mix, -15.0, 15.0, 301)),
                        M1(mfc::EmpiricalMeasure<1>({{-0.3}, {2.0}, {5.0}}, {0.2, 0.5, 0.3}))};
  for (const auto& mu : ms) {
    EXPECT_NEAR(std::abs(mfc::char_fn<1>(mu, {0.0}) - c1), 0.0, 1e-12);
    for (double xi : {0.1, 1.0, 4.0, 9.0}) {
      const Complex a = mfc::char_fn<1>(mu, {xi});
      const Complex b = mfc::char_fn<1>(mu, {-xi});
      EXPECT_LE(std::abs(a), c1 + 1e-12);
      EXPECT_NEAR(std::abs(a - std::conj(b)), 0.0, 1e-13);
    }
  }
}

TEST(CharFn, LipschitzInFrequencyWithFirstMoment) {
  const auto mix = mfc::GaussianMixture<1>({{0.4, {-2.0}, 0.6}, {0.6, {1.0}, 1.2}});
  const M1 mu(mix);
  const double m1 = mfc::first_absolute_moment<1>(mu);
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(-8.0, 8.0);
  for (int i = 0; i < 200; ++i) {
    const double a = u(gen), b = u(gen);
    const double lhs = std::abs(mfc::char_fn<1>(mu, {a}) - mfc::char_fn<1>(mu, {b}));
    EXPECT_LE(lhs, c1 * m1 * std::abs(a - b) + 1e-14);
  }
}

TEST(CharFn, TensorPathMatchesPointwise) {
  const std::vector<double> axis = {-3.0, -1.25, -0.5, 0.5, 1.25, 3.0};
  const auto mix = mfc::GaussianMixture<2>({{0.5, {0.5, -0.5}, 1.0}, {0.5, {-1.0, 0.0}, 0.8}});
  const M2 grid(mfc::discretize(mix, -10.0, 10.0, 81));
  const auto t = mfc::char_fn_tensor<2>(grid, axis);
  ASSERT_EQ(t.size(), axis.size() * axis.size());
  for (std::size_t a = 0; a < axis.size(); ++a) {
    for (std::size_t b = 0; b < axis.size(); ++b) {
      const Complex direct = mfc::char_fn<2>(grid, {axis[a], axis[b]});
      EXPECT_LT(std::abs(t[a * axis.size() + b] - direct), 1e-14);
      EXPECT_LT(std::abs(direct - mfc::char_fn<2>(M2(mix), {axis[a], axis[b]})), 1e-6);
    }
  }
}

TEST(Consistency, MixtureAndItsGridAgreeOnBoundedFunctions) {
  const auto mix = mfc::GaussianMixture<1>({{0.3, {-1.0}, 0.7}, {0.7, {2.0}, 1.3}});
  const M1 grid(mfc::discretize(mix, -20.0, 20.0, 401));
  const std::vector<std::function<double(const mfc::Point<1>&)>> suite = {
      [](const mfc::Point<1>& x) { return 1.0 / (1.0 + x[0] * x[0]); },
      [](const mfc::Point<1>& x) { return std::tanh(x[0]); },
      [](const mfc::Point<1>& x) { return std::cos(2.0 * x[0]); },
      [](const mfc::Point<1>& x) { return std::exp(-x[0] * x[0]); },
  };
  for (const auto& f : suite) {
    EXPECT_NEAR(mfc::integrate<1>(M1(mix), f), mfc::integrate<1>(grid, f), 1e-6);
  }
}

TEST(Theta, LowerSemicontinuousUnderTruncation) {
  const auto target = mfc::GaussianMixture<1>::normal({0.0}, 1.0);
  const double th = mfc::theta<1>(M1(target));
  double last = 0.0;
  for (double cut : {2.0, 4.0, 8.0, 12.0, 16.0}) {
    const auto g = mfc::GridDensity<1>::sample(-20.0, 20.0, 401, [&](const mfc::Point<1>& x) {
      return std::abs(x[0]) <= cut ? target.density(x) : 0.0;
    });
    last = mfc::theta<1>(M1(g));
  }
  EXPECT_LE(th, last + 1e-8);
}

TEST(Validation, RejectsBadMeasures) {
  EXPECT_THROW(mfc::EmpiricalMeasure<1>({{0.0}}, {0.5}), mfc::InvalidArgument);
  EXPECT_THROW(mfc::EmpiricalMeasure<1>({{0.0}, {1.0}}, {1.5, -0.5}), mfc::InvalidArgument);
  EXPECT_THROW(mfc::GaussianMixture<1>({{1.0, {0.0}, 0.0}}), mfc::InvalidArgument);
  EXPECT_THROW(mfc::discretize(mfc::GaussianMixture<1>::normal({0.0}, 1.0), -3.0, 3.0, 61), mfc::InvalidArgument);
  EXPECT_THROW(M1(dirac1(0.0)).grid(), mfc::InvalidArgument);
}

TEST(Csv, EmpiricalRoundTrip) {
  const mfc::EmpiricalMeasure<2> e({{0.1, -2.0}, {3.0, 1.0 / 3.0}}, {0.25, 0.75});
  std::stringstream ss;
  mfc::write_empirical_csv(e, ss);
  EXPECT_EQ(ss.str().substr(0, 9), "w,x1,x2\n0");
  const auto back = mfc::read_empirical_csv<2>(ss);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back.points()[1][1], 1.0 / 3.0);
  EXPECT_EQ(back.weights()[0], 0.25);
}

TEST(Csv, EmpiricalDimensionMismatch) {
  std::stringstream ss("w,x1,x2\n1,0,0\n");
  EXPECT_THROW(mfc::read_empirical_csv<1>(ss), mfc::DimensionMismatch);
}

TEST(Csv, GridRoundTrip) {
  const auto g = mfc::discretize(mfc::GaussianMixture<1>::normal({0.5}, 1.0), -15.0, 15.0, 151);
  std::stringstream ss;
  mfc::write_grid_csv(g, ss);
  const auto back = mfc::read_grid_csv<1>(ss);
  EXPECT_TRUE(back.same_grid(g));
  EXPECT_EQ(back.values(), g.values());
  std::stringstream bad("a,b,n\n-1,1,5\n0\n0\n");
  EXPECT_THROW(mfc::read_grid_csv<1>(bad), mfc::DimensionMismatch);
}

TEST(Sampler, MixtureMeanAndVariance) {
  const M1 mu(mfc::GaussianMixture<1>::normal({1.5}, 2.0));
  mfc::MeasureSampler<1> sampler(mu);
  std::mt19937_64 gen(5);
  double s = 0.0, s2 = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double x = sampler(gen)[0];
    s += x;
    s2 += x * x;
  }
  const double m = s / n;
  EXPECT_NEAR(m, 1.5, 5.0 * 2.0 / std::sqrt(n));
  EXPECT_NEAR(s2 / n - m * m, 4.0, 5.0 * 4.0 * std::sqrt(2.0 / n));
}

}  // namespace
