#include <gtest/gtest.h>

#include <cmath>

#include "mfc/quadrature.hpp"
#include "oracles.hpp"

namespace {

TEST(GaussLegendre, IntegratesPolynomialsExactly) {
  const auto rule = mfc::gauss_legendre(16);
  for (int p = 0; p <= 31; ++p) {
    const double got = rule.apply([p](double x) { return std::pow(x, p); });
    const double want = p % 2 == 1 ? 0.0 : 2.0 / (p + 1);
    EXPECT_NEAR(got, want, 1e-14) << "degree " << p;
  }
}

TEST(GaussLegendre, NodesAreMirrored) {
  const auto rule = mfc::gauss_legendre(15);
  for (std::size_t i = 0; i < rule.size(); ++i) {
    EXPECT_DOUBLE_EQ(rule.nodes[i], -rule.nodes[rule.size() - 1 - i]);
    EXPECT_DOUBLE_EQ(rule.weights[i], rule.weights[rule.size() - 1 - i]);
  }
}

TEST(GaussHermite, MatchesGolubWelsch) {
  for (int n : {8, 24, 64, 128}) {
    const auto rule = mfc::gauss_hermite(n);
    const auto [x, w] = oracle::golub_welsch_hermite(n);
    for (int i = 0; i < n; ++i) {
      EXPECT_NEAR(rule.nodes[i], x[i], 1e-10 * std::max(1.0, std::abs(x[i]))) << "n=" << n;
      EXPECT_NEAR(rule.weights[i], w[i], 1e-13) << "n=" << n;
    }
  }
}

TEST(GaussHermite, EvenMoments) {
  const auto rule = mfc::gauss_hermite(64);
  // int x^{2k} e^{-x^2} = Gamma(k + 1/2)
  for (int k = 0; k <= 20; ++k) {
    const double got = rule.apply([k](double x) { return std::pow(x, 2 * k); });
    EXPECT_NEAR(got / std::tgamma(k + 0.5), 1.0, 1e-12) << "k=" << k;
  }
}

TEST(CompositeRule, GradedPanelsCoverInterval) {
  const auto b = mfc::graded_breakpoints(10.0, 8, 2.0);
  ASSERT_EQ(b.size(), 9u);
  EXPECT_DOUBLE_EQ(b.front(), 0.0);
  EXPECT_DOUBLE_EQ(b.back(), 10.0);
  const auto rule = mfc::composite_gauss_legendre(b, 12);
  EXPECT_NEAR(rule.apply([](double x) { return std::exp(-x); }), 1.0 - std::exp(-10.0), 1e-14);
}

TEST(TailIntegral, AgreesWithExpSinh) {
  for (double R : {0.5, 3.0, 40.0}) {
    for (int s : {2, 3, 4}) {
      auto f = [s](double x) { return std::pow(1.0 + x * x, -s); };
      boost::math::quadrature::exp_sinh<double> es;
      const double want = es.integrate([&](double x) { return f(x + R); });
      EXPECT_NEAR(mfc::integrate_tail(f, R) / want, 1.0, 1e-10) << "R=" << R << " s=" << s;
    }
  }
}

TEST(Quadrature, RejectsZeroOrder) {
  EXPECT_THROW(mfc::gauss_legendre(0), mfc::InvalidArgument);
  EXPECT_THROW(mfc::gauss_hermite(0), mfc::InvalidArgument);
}

}  // namespace
