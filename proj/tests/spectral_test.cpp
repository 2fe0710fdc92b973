#include <gtest/gtest.h>

#include <random>

#include "support/oracles.hpp"
#include "tmode/schmidt.hpp"
#include "tmode/spectral.hpp"

using namespace tmode;
using oracle::cplx;

TEST(FrequencyGrid, SpacingAndBounds) {
  const FrequencyGrid g(-2.0, 2.0, 5);
  EXPECT_DOUBLE_EQ(g.d_omega(), 1.0);
  EXPECT_DOUBLE_EQ(g.omega(0), -2.0);
  EXPECT_DOUBLE_EQ(g.omega(4), 2.0);
  EXPECT_EQ(g.nearest_index(0.4), 2u);
  EXPECT_EQ(g.nearest_index(-9.0), 0u);
  EXPECT_EQ(g.nearest_index(9.0), 4u);
}

TEST(FrequencyGrid, RejectsInvalid) {
  EXPECT_THROW(FrequencyGrid(0.0, 1.0, 1), std::invalid_argument);
  EXPECT_THROW(FrequencyGrid(1.0, 1.0, 8), std::invalid_argument);
  EXPECT_THROW(FrequencyGrid(2.0, 1.0, 8), std::invalid_argument);
  EXPECT_THROW(FrequencyGrid(0.0, INFINITY, 8), std::invalid_argument);
}

TEST(FrequencyGrid, CompatibilityIsExactEquality) {
  EXPECT_EQ(FrequencyGrid(-1, 1, 9), FrequencyGrid(-1, 1, 9));
  EXPECT_NE(FrequencyGrid(-1, 1, 9), FrequencyGrid(-1, 1, 10));
  EXPECT_NE(FrequencyGrid(-1, 1, 9), FrequencyGrid(-1, 1.5, 9));
}

TEST(InnerProduct, NormalizedFieldHasUnitNorm) {
  const auto f = SpectralField::gaussian(FrequencyGrid::symmetric(6, 200), 0.3, 0.7).normalized();
  const cplx v = inner_product(f, f);
  EXPECT_NEAR(v.real(), 1.0, 1e-10);
  EXPECT_NEAR(v.imag(), 0.0, 1e-10);
}

TEST(InnerProduct, FourPointHandSum) {
  // sum conj(a) b = 1 - i + 2i + 2(1+i) = 3 + 3i, times d_omega = 0.5
  const FrequencyGrid g(0.0, 1.5, 4);
  ComplexVector a(4), b(4);
  a << cplx(1, 0), cplx(0, 1), cplx(2, 0), cplx(1, -1);
  b << cplx(1, 0), cplx(1, 0), cplx(0, 1), cplx(2, 0);
  const cplx v = inner_product(SpectralField(g, a), SpectralField(g, b));
  EXPECT_NEAR(v.real(), 1.5, 1e-15);
  EXPECT_NEAR(v.imag(), 1.5, 1e-15);
}

TEST(InnerProduct, DistinctOracleModesAreOrthogonal) {
  const auto dec = decompose(fixture::fig2_kernel());
  EXPECT_LT(std::abs(inner_product(dec.psi[0], dec.psi[1])), 1e-8);
  EXPECT_LT(std::abs(inner_product(dec.psi[1], dec.psi[2])), 1e-8);
}

TEST(InnerProduct, GridMismatchThrows) {
  const SpectralField a(FrequencyGrid(0, 1, 4));
  const SpectralField b(FrequencyGrid(0, 1, 5));
  EXPECT_THROW(inner_product(a, b), grid_mismatch);
  EXPECT_THROW((void)(a + b), grid_mismatch);
}

TEST(InnerProduct, ConjugateSymmetryAndBruteForceRandomized) {
  std::mt19937_64 rng(11);
  const FrequencyGrid g(-3, 5, 37);
  for (int t = 0; t < 1000; ++t) {
    const auto a = oracle::random_field(g, rng);
    const auto b = oracle::random_field(g, rng);
    const cplx ab = inner_product(a, b);
    const cplx ba = inner_product(b, a);
    ASSERT_NEAR(std::abs(ab - std::conj(ba)), 0.0, 1e-12);
    ASSERT_NEAR(std::abs(ab - oracle::brute_inner(oracle::to_vec(a), oracle::to_vec(b), g.d_omega())), 0.0, 1e-11);
  }
}

TEST(Normalization, ZeroFieldThrows) {
  EXPECT_THROW(SpectralField(FrequencyGrid(0, 1, 4)).normalized(), numerical_error);
}

class GramSchmidt : public ::testing::Test {
 protected:
  SchmidtDecomposition dec = decompose(fixture::fig2_kernel());
};

TEST_F(GramSchmidt, SelfProjectionIsDegenerate) {
  const auto r = gram_schmidt_project_out(dec.psi[0], std::vector<SpectralField>{dec.psi[0]});
  EXPECT_LT(r.remainder.norm(), 1e-10);
  EXPECT_TRUE(r.degenerate);
}

TEST_F(GramSchmidt, RemovesKnownComponentExactly) {
  const auto r = gram_schmidt_project_out(dec.psi[0] + dec.psi[1], std::vector<SpectralField>{dec.psi[0]});
  EXPECT_FALSE(r.degenerate);
  EXPECT_NEAR(std::abs(inner_product(r.remainder.normalized(), dec.psi[1])), 1.0, 1e-10);
  ASSERT_EQ(r.coefficients.size(), 1u);
  EXPECT_NEAR(std::abs(r.coefficients[0] - cplx(1, 0)), 0.0, 1e-10);
}

TEST_F(GramSchmidt, SeedRemainderOrthogonalAndIdempotent) {
  const std::vector<SpectralField> basis{dec.psi[0]};
  const auto once = gram_schmidt_project_out(fixture::fig2_seed(), basis).remainder;
  EXPECT_LT(std::abs(inner_product(dec.psi[0], once)), 1e-10);
  const auto twice = gram_schmidt_project_out(once, basis).remainder;
  EXPECT_LT((once.amplitudes() - twice.amplitudes()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST_F(GramSchmidt, RandomFieldsOrthogonalToEveryBasisMember) {
  std::mt19937_64 rng(5);
  const std::vector<SpectralField> basis(dec.psi.begin(), dec.psi.begin() + 5);
  for (int t = 0; t < 1000; ++t) {
    const auto r = gram_schmidt_project_out(oracle::random_field(dec.signal_grid, rng), basis).remainder;
    for (const auto& b : basis) ASSERT_LT(std::abs(inner_product(b, r)), 1e-8 * r.norm() + 1e-12);
  }
}

TEST_F(GramSchmidt, Errors) {
  const std::vector<SpectralField> basis{dec.psi[0]};
  EXPECT_THROW(gram_schmidt_project_out(SpectralField(dec.signal_grid), basis), std::invalid_argument);
  const SpectralField other = SpectralField::gaussian(FrequencyGrid(0, 1, 16), 0.5, 0.2);
  EXPECT_THROW(gram_schmidt_project_out(other, basis), grid_mismatch);
  const std::vector<SpectralField> skew{dec.psi[0], (dec.psi[0] + dec.psi[1]).normalized()};
  EXPECT_THROW(gram_schmidt_project_out(fixture::fig2_seed(), skew), std::invalid_argument);
}

TEST(Temporal, GaussianWidthIsReciprocal) {
  const auto f = SpectralField::gaussian(FrequencyGrid::symmetric(10, 512), 0.0, 1.0);
  const auto p = to_temporal(f);
  double m0 = 0, m2 = 0;
  for (Eigen::Index j = 0; j < p.values.size(); ++j) {
    const double w = std::norm(p.values(j));
    m0 += w;
    m2 += w * p.times(j) * p.times(j);
  }
  // |a|^2 ~ exp(-w^2): rms 1/sqrt(2); transform-limited rms product is 1/2
  const double rms_t = std::sqrt(m2 / m0);
  EXPECT_NEAR(rms_t, 0.5 / std::sqrt(0.5), 0.01 * rms_t);
  // peak value sqrt(2 pi)
  EXPECT_NEAR(std::abs(p.values(static_cast<Eigen::Index>(p.zero_index()))), std::sqrt(2 * std::numbers::pi), 1e-6);
}

TEST(Temporal, SingleBinIsFlat) {
  const FrequencyGrid g = FrequencyGrid::symmetric(4, 64);
  SpectralField f(g);
  f.amplitudes()(20) = 1.0;
  const auto p = to_temporal(f);
  const double ref = std::abs(p.values(0));
  for (Eigen::Index j = 0; j < p.values.size(); ++j) ASSERT_NEAR(std::abs(p.values(j)), ref, 1e-12);
}

TEST(Temporal, OddSpectrumHasNodeAtZero) {
  const auto p = to_temporal(oracle::hermite_gauss(FrequencyGrid::symmetric(8, 257), 1));
  const double peak = p.values.cwiseAbs().maxCoeff();
  EXPECT_LT(std::abs(p.values(static_cast<Eigen::Index>(p.zero_index()))), 1e-8 * peak);
  EXPECT_DOUBLE_EQ(p.times(static_cast<Eigen::Index>(p.zero_index())), 0.0);
}

TEST(Temporal, ParsevalRandomized) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> n(2, 90);
  for (int t = 0; t < 1000; ++t) {
    const FrequencyGrid g(-1.0 - t * 1e-3, 2.0, static_cast<std::size_t>(n(rng)));
    const auto f = oracle::random_field(g, rng);
    const auto p = to_temporal(f);
    ASSERT_NEAR(p.norm_squared(), f.norm_squared(), 1e-8 * f.norm_squared());
  }
}
