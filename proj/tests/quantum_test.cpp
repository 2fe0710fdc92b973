#include <gtest/gtest.h>

#include <random>

#include "support/oracles.hpp"
#include "tmode/quantum.hpp"
#include "tmode/schmidt.hpp"

using namespace tmode;

namespace {

const std::vector<double> kMeasuredPowerGains{2.1, 1.5, 1.3};
// tanh(2 arccosh sqrt g), evaluated independently
const double kTanh2G[3] = {0.9499177595981665, 0.8660254037844386, 0.7806247497997999};

std::size_t idx(const std::vector<ModeLabel>& l, ModeLabel m) {
  return static_cast<std::size_t>(std::find(l.begin(), l.end(), m) - l.begin());
}

}  // namespace

TEST(Labels, Ordering) {
  std::vector<std::string> names;
  for (const auto& l : covariance_labels(3)) names.push_back(l.name());
  EXPECT_EQ(names, (std::vector<std::string>{"s1", "s2", "s3", "i3", "i2", "i1"}));
}

TEST(AnalyticMoments, VacuumAnyEfficiency) {
  for (double eta : {0.0, 0.3, 1.0}) {
    const auto m = QuadratureModel::uniform({0.0, 0.0}, eta, eta);
    for (auto q : {Quadrature::X, Quadrature::Y}) {
      const auto mo = analytic_moments(m, {Beam::signal, 1}, {Beam::idler, 1}, q);
      EXPECT_EQ(mo.var_m, 1.0);
      EXPECT_EQ(mo.var_n, 1.0);
      EXPECT_EQ(mo.covar, 0.0);
    }
  }
}

TEST(AnalyticMoments, ClosedForm) {
  const double G = 0.8;
  const auto m = QuadratureModel::uniform({G}, 0.6, 0.9);
  const auto x = analytic_moments(m, {Beam::signal, 1}, {Beam::idler, 1}, Quadrature::X);
  const auto y = analytic_moments(m, {Beam::signal, 1}, {Beam::idler, 1}, Quadrature::Y);
  EXPECT_NEAR(x.var_m, 0.6 * (std::cosh(1.6) - 1) + 1, 1e-14);
  EXPECT_NEAR(x.var_n, 0.9 * (std::cosh(1.6) - 1) + 1, 1e-14);
  EXPECT_NEAR(x.covar, std::sqrt(0.54) * std::sinh(1.6), 1e-14);
  EXPECT_EQ(y.covar, -x.covar);
}

TEST(AnalyticMoments, CrossOrderZero) {
  const auto m = QuadratureModel::from_power_gains(kMeasuredPowerGains);
  EXPECT_EQ(analytic_moments(m, {Beam::signal, 1}, {Beam::idler, 2}).covar, 0.0);
  EXPECT_EQ(analytic_moments(m, {Beam::signal, 1}, {Beam::signal, 3}).covar, 0.0);
}

TEST(AnalyticMoments, LosslessCorrelationIsTanh) {
  const auto m = QuadratureModel::from_power_gains(kMeasuredPowerGains);
  for (std::size_t k = 0; k < 3; ++k) {
    const auto x = analytic_moments(m, {Beam::signal, k + 1}, {Beam::idler, k + 1});
    EXPECT_NEAR(x.covar / std::sqrt(x.var_m * x.var_n), kTanh2G[k], 1e-12);
  }
}

TEST(AnalyticMoments, LossyCorrelation) {
  const auto m = QuadratureModel::from_power_gains(kMeasuredPowerGains, 0.777, 0.777);
  const auto x = analytic_moments(m, {Beam::signal, 1}, {Beam::idler, 1});
  EXPECT_NEAR(x.covar / std::sqrt(x.var_m * x.var_n), 0.8717, 1e-4);
}

TEST(AnalyticMoments, LoOverlapActsLikeEfficiency) {
  auto a = QuadratureModel::uniform({0.9}, 0.8, 0.8, 0.5);
  auto b = QuadratureModel::uniform({0.9}, 0.4, 0.4, 1.0);
  const auto ma = analytic_moments(a, {Beam::signal, 1}, {Beam::idler, 1});
  const auto mb = analytic_moments(b, {Beam::signal, 1}, {Beam::idler, 1});
  EXPECT_NEAR(ma.var_m, mb.var_m, 1e-14);
  EXPECT_NEAR(ma.covar, mb.covar, 1e-14);
}

TEST(AnalyticMoments, HeisenbergAndPhysicality) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> G(0, 3), e(0, 1);
  for (int c = 0; c < 1000; ++c) {
    const auto m = QuadratureModel::uniform({G(rng)}, e(rng), e(rng), e(rng));
    for (Beam b : {Beam::signal, Beam::idler}) {
      const double vx = analytic_moments(m, {b, 1}, {b, 1}, Quadrature::X).covar;
      const double vy = analytic_moments(m, {b, 1}, {b, 1}, Quadrature::Y).covar;
      ASSERT_GE(vx * vy, 1.0 - 1e-10);
    }
    const auto x = analytic_moments(m, {Beam::signal, 1}, {Beam::idler, 1});
    ASSERT_LE(std::abs(x.covar) / std::sqrt(x.var_m * x.var_n), 1.0 + 1e-12);
    // EPR-type variances are never below the physical two-mode bound
    const double dx = x.var_m + x.var_n - 2 * x.covar;
    ASSERT_GE(dx, 0.0);
  }
}

TEST(QuadratureModel, Validation) {
  EXPECT_THROW(QuadratureModel::uniform({1.0}, 1.2), std::invalid_argument);
  EXPECT_THROW(QuadratureModel::uniform({-0.1}), std::invalid_argument);
  EXPECT_THROW(QuadratureModel::from_power_gains({0.9}), std::invalid_argument);
  auto m = QuadratureModel::uniform({1.0, 0.5});
  m.lo_overlap_idler.pop_back();
  EXPECT_THROW(m.validate(), std::invalid_argument);
  EXPECT_THROW(QuadratureModel::uniform({1.0}).index({Beam::signal, 0}), std::out_of_range);
}

class Homodyne : public ::testing::Test {
 protected:
  SchmidtDecomposition dec = decompose(fixture::fig2_kernel());
  QuadratureModel model = QuadratureModel::uniform({dec.gain(0), dec.gain(1), dec.gain(2)}, 0.9, 0.8);
  std::vector<SpectralField> basis{dec.psi[0], dec.psi[1], dec.psi[2]};
};

TEST_F(Homodyne, MatchedLoSelectsOneMode) {
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_NEAR(homodyne_variance(model, Beam::signal, basis[k], basis),
                analytic_moments(model, {Beam::signal, k + 1}, {Beam::signal, k + 1}).covar, 1e-10);
  }
}

TEST_F(Homodyne, SuperposedLo) {
  const auto lo = (basis[0] + basis[1]) * cplx(1.0 / std::sqrt(2.0), 0.0);
  const double v1 = analytic_variance(model, {Beam::signal, 1});
  const double v2 = analytic_variance(model, {Beam::signal, 2});
  const double c12 = analytic_moments(model, {Beam::signal, 1}, {Beam::signal, 2}).covar;
  EXPECT_NEAR(homodyne_variance(model, Beam::signal, lo, basis), 0.5 * (v1 + v2) + c12, 1e-10);
}

TEST_F(Homodyne, OrthogonalLoIsVacuum) {
  auto lo = oracle::hermite_gauss(dec.signal_grid, 0, 0.6);
  lo = gram_schmidt_project_out(lo, basis).remainder.normalized();
  EXPECT_NEAR(homodyne_variance(model, Beam::signal, lo, basis), 1.0, 1e-9);
}

TEST_F(Homodyne, PartialOverlapMixesVacuum) {
  auto o = gram_schmidt_project_out(oracle::hermite_gauss(dec.signal_grid, 0, 0.6), basis).remainder.normalized();
  const double a2 = 0.3;
  const auto lo = basis[0] * cplx(std::sqrt(a2), 0) + o * cplx(std::sqrt(1 - a2), 0);
  EXPECT_NEAR(homodyne_variance(model, Beam::signal, lo, basis),
              a2 * analytic_variance(model, {Beam::signal, 1}) + (1 - a2), 1e-9);
}

TEST_F(Homodyne, Errors) {
  EXPECT_THROW(homodyne_variance(model, Beam::signal, basis[0] * cplx(2, 0), basis), std::invalid_argument);
  std::vector<SpectralField> bad{basis[0], basis[0]};
  EXPECT_THROW(homodyne_variance(model, Beam::signal, basis[0], bad), std::invalid_argument);
}

TEST(Covariance, AnalyticMeasuredGains) {
  const auto r = build_covariance_matrix(QuadratureModel::from_power_gains(kMeasuredPowerGains), 3, CovarianceMethod::analytic());
  ASSERT_EQ(r.C_X.rows(), 6);
  EXPECT_EQ(r.sample_count, 0u);
  for (Eigen::Index a = 0; a < 6; ++a) {
    for (Eigen::Index b = 0; b < 6; ++b) {
      if (a == b) {
        EXPECT_EQ(r.C_X(a, b), 1.0);
      } else if (a + b == 5) {
        const std::size_t k = static_cast<std::size_t>(std::min(a, b));
        EXPECT_NEAR(r.C_X(a, b), kTanh2G[k], 1e-12);
        EXPECT_NEAR(r.C_Y(a, b), -kTanh2G[k], 1e-12);
      } else {
        EXPECT_EQ(r.C_X(a, b), 0.0);
        EXPECT_EQ(r.C_Y(a, b), 0.0);
      }
    }
  }
  EXPECT_TRUE(r.C_X.isApprox(r.C_X.transpose()));
}

TEST(Covariance, MonteCarloMatchesAnalytic) {
  const auto model = QuadratureModel::from_power_gains(kMeasuredPowerGains, 0.777, 0.777);
  const auto an = build_covariance_matrix(model, 3, CovarianceMethod::analytic());
  const auto mc = build_covariance_matrix(model, 3, CovarianceMethod::monte_carlo(300000, 20240611));
  EXPECT_EQ(mc.sample_count, 300000u);
  double se_sum = 0;
  int n_off = 0, outside = 0;
  for (Eigen::Index a = 0; a < 6; ++a) {
    EXPECT_NEAR(mc.C_X(a, a), 1.0, 1e-12);
    for (Eigen::Index b = 0; b < 6; ++b) {
      EXPECT_NEAR(mc.C_X(a, b), mc.C_X(b, a), 1e-12);
      ASSERT_LE(std::abs(mc.C_X(a, b)), 1.0);
      if (a == b) continue;
      se_sum += mc.se_X(a, b) + mc.se_Y(a, b);
      n_off += 2;
      if (std::abs(mc.C_X(a, b) - an.C_X(a, b)) > 3 * mc.se_X(a, b)) ++outside;
      if (std::abs(mc.C_Y(a, b) - an.C_Y(a, b)) > 3 * mc.se_Y(a, b)) ++outside;
    }
  }
  // 60 entries; a 3 sigma excursion has ~0.3% chance each
  EXPECT_LE(outside, 2);
  const double mean_se = se_sum / n_off;
  EXPECT_GT(mean_se, 0.005);
  EXPECT_LT(mean_se, 0.02);
}

TEST(Covariance, MonteCarloRate) {
  const auto model = QuadratureModel::from_power_gains({2.1}, 0.8, 0.8);
  auto err = [&](std::size_t n) {
    double s = 0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      const auto r = build_covariance_matrix(model, 1, CovarianceMethod::monte_carlo(n, seed));
      const auto a = build_covariance_matrix(model, 1, CovarianceMethod::analytic());
      s += std::pow(r.C_X(0, 1) - a.C_X(0, 1), 2);
    }
    return std::sqrt(s / 20);
  };
  const double ratio = err(2000) / err(32000);
  EXPECT_NEAR(ratio, 4.0, 1.6);
}

TEST(Covariance, Deterministic) {
  const auto model = QuadratureModel::from_power_gains({2.1, 1.5}, 0.8, 0.7);
  const auto a = build_covariance_matrix(model, 2, CovarianceMethod::monte_carlo(5000, 99));
  const auto b = build_covariance_matrix(model, 2, CovarianceMethod::monte_carlo(5000, 99));
  const auto c = build_covariance_matrix(model, 2, CovarianceMethod::monte_carlo(5000, 100));
  EXPECT_EQ(a.C_X, b.C_X);
  EXPECT_EQ(a.se_Y, b.se_Y);
  EXPECT_NE(a.C_X, c.C_X);
}

TEST(Covariance, SignStructure) {
  const auto r = build_covariance_matrix(QuadratureModel::from_power_gains(kMeasuredPowerGains, 0.8, 0.7), 3,
                                         CovarianceMethod::monte_carlo(30000, 5));
  const auto& l = r.labels;
  for (std::size_t k = 1; k <= 3; ++k) {
    const auto s = static_cast<Eigen::Index>(idx(l, {Beam::signal, k}));
    const auto i = static_cast<Eigen::Index>(idx(l, {Beam::idler, k}));
    EXPECT_GT(r.C_X(s, i), 0.5);
    EXPECT_LT(r.C_Y(s, i), -0.5);
  }
}

TEST(Covariance, Errors) {
  const auto m = QuadratureModel::from_power_gains(kMeasuredPowerGains);
  EXPECT_THROW(build_covariance_matrix(m, 3, CovarianceMethod::monte_carlo(99, 1)), std::invalid_argument);
  EXPECT_THROW(build_covariance_matrix(m, 0, CovarianceMethod::analytic()), std::invalid_argument);
  EXPECT_THROW(build_covariance_matrix(m, 4, CovarianceMethod::analytic()), std::invalid_argument);
}

TEST(Covariance, RenderedTable) {
  const auto r = build_covariance_matrix(QuadratureModel::from_power_gains(kMeasuredPowerGains), 3, CovarianceMethod::analytic());
  const std::string t = render_table(r.C_X, r.labels);
  EXPECT_NE(t.find("s1"), std::string::npos);
  EXPECT_NE(t.find(" 0.95 "), std::string::npos);
  EXPECT_NE(t.find(" 0.78 "), std::string::npos);
  EXPECT_EQ(std::count(t.begin(), t.end(), '\n'), 7);
}

TEST(Duan, VacuumAndLossless) {
  const auto v = duan_criterion(QuadratureModel::uniform({0.0}), 1);
  EXPECT_DOUBLE_EQ(v.I, 2.0);
  EXPECT_DOUBLE_EQ(v.dB, 0.0);
  const auto m = QuadratureModel::from_power_gains(kMeasuredPowerGains);
  const auto d = duan_criterion(m, 1);
  EXPECT_NEAR(d.I, 0.3205263385717345, 1e-12);
  EXPECT_NEAR(d.dB, -7.9517, 1e-4);
  for (std::size_t k = 1; k <= 3; ++k) EXPECT_NEAR(duan_criterion(m, k).I, 2 * std::exp(-2 * m.gains[k - 1]), 1e-12);
}

TEST(Duan, LossMonotone) {
  double prev = 0;
  for (int s = 20; s >= 0; --s) {
    const double eta = 0.05 * s;
    const double I = duan_criterion(QuadratureModel::uniform({0.9, 0.3}, eta, eta), 1).I;
    EXPECT_GE(I, prev - 1e-14);
    prev = I;
  }
  EXPECT_NEAR(prev, 2.0, 1e-9);
}

TEST(Duan, DbConversion) {
  EXPECT_NEAR(duan_from_db(-3.70), 0.85316, 1e-5);
  EXPECT_NEAR(duan_from_db(-2.00), 1.26191, 1e-5);
  EXPECT_NEAR(duan_from_db(-1.60), 1.38366, 1e-5);
  EXPECT_NEAR(duan_from_db(-3.70), 0.85, 0.01);
  EXPECT_NEAR(duan_from_db(-2.00), 1.26, 0.01);
  EXPECT_NEAR(duan_from_db(-1.60), 1.38, 0.01);
}

TEST(Efficiency, CorrectionAndInversion) {
  EXPECT_DOUBLE_EQ(efficiency_correct(-2.3, 1.0), -2.3);
  const double eta = infer_efficiency(-2.56, -3.70);
  EXPECT_NEAR(eta, 0.7766975572816812, 1e-12);
  EXPECT_NEAR(eta, 0.777, 1e-3);
  EXPECT_NEAR(efficiency_correct(-2.56, eta), -3.70, 1e-12);
  EXPECT_NEAR(efficiency_correct(-1.50, eta), -2.0482968879367673, 1e-9);
  EXPECT_NEAR(efficiency_correct(-1.50, 0.777), -2.0472783042322082, 1e-9);
  EXPECT_NEAR(efficiency_correct(-1.50, eta), -2.00, 0.05);
}

TEST(Efficiency, ModelRoundTrip) {
  // lossy model dB corrected with its own eta recovers the lossless dB
  const auto lossless = QuadratureModel::from_power_gains(kMeasuredPowerGains);
  const auto lossy = QuadratureModel::from_power_gains(kMeasuredPowerGains, 0.777, 0.777);
  for (std::size_t k = 1; k <= 3; ++k) {
    EXPECT_NEAR(efficiency_correct(duan_criterion(lossy, k).dB, 0.777), duan_criterion(lossless, k).dB, 1e-10);
  }
}

TEST(Efficiency, Errors) {
  EXPECT_THROW(efficiency_correct(-1.0, 0.0), std::invalid_argument);
  EXPECT_THROW(efficiency_correct(-1.0, 1.1), std::invalid_argument);
  EXPECT_THROW(efficiency_correct(-10.0, 0.5), numerical_error);
  EXPECT_THROW(infer_efficiency(-1.0, -0.5), numerical_error);
}

TEST(CounterStream, Reproducible) {
  CounterStream a(42, 3), b(42, 3), c(42, 4);
  for (int i = 0; i < 100; ++i) {
    const double x = a.normal();
    EXPECT_EQ(x, b.normal());
    EXPECT_NE(x, c.normal());
  }
  CounterStream d(1, 0);
  double s = 0, s2 = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double x = d.normal();
    s += x;
    s2 += x * x;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.01);
}
