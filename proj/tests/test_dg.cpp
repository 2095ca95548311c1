#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include <random>

#include "maxent/dg.hpp"
#include "oracles.hpp"

using namespace maxent;

namespace {

MomentConstraints pair_constraints(double m1, double m2, double rho) {
  Vector mu(2);
  mu << m1, m2;
  Matrix r(2, 2);
  r << 1, rho, rho, 1;
  return MomentConstraints(mu, r);
}

double inverse_phi(double p) {
  // Bisection on the oracle CDF.
  double lo = -40, hi = 40;
  for (int k = 0; k < 200; ++k) {
    const double mid = 0.5 * (lo + hi);
    (oracle::phi(mid) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// Exchangeable correlation matrix on d sites with decaying off-diagonals.
MomentConstraints decaying_constraints(int d, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> um(0.1, 0.6);
  Vector mu(d);
  for (int i = 0; i < d; ++i) mu(i) = um(rng);
  Matrix r(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) r(i, j) = i == j ? 1.0 : 0.4 * std::exp(-0.3 * std::abs(i - j));
  return MomentConstraints(mu, r);
}

}  // namespace

TEST(FitDg, MedianPairClosedForm) {
  const DGModel m = fit_dg(pair_constraints(0.5, 0.5, 0.5));
  EXPECT_NEAR(m.gamma()(0), 0.0, 1e-15);
  EXPECT_NEAR(m.latent_corr()(0, 1), std::sin(M_PI / 4), 1e-8);
  EXPECT_FALSE(m.repair_log().applied);
}

TEST(FitDg, UncorrelatedGivesIdentity) {
  Vector mu(4);
  mu << 0.1, 0.25, 0.5, 0.9;
  const DGModel m = fit_dg(MomentConstraints(mu, Matrix::Identity(4, 4)));
  EXPECT_EQ(m.latent_corr(), Matrix::Identity(4, 4));
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(m.gamma()(i), inverse_phi(mu(i)), 1e-10);
}

TEST(FitDg, PairEquationSolvedToTolerance) {
  std::mt19937_64 rng(21);
  const MomentConstraints c = decaying_constraints(6, rng);
  const DGModel m = fit_dg(c);
  ASSERT_FALSE(m.repair_log().applied);
  const Vector& mu = c.means();
  for (int i = 0; i < 6; ++i)
    for (int j = i + 1; j < 6; ++j) {
      const double target = c.correlations()(i, j) * std::sqrt(mu(i) * (1 - mu(i)) * mu(j) * (1 - mu(j)));
      const double got = oracle::bvn_simpson(m.gamma()(i), m.gamma()(j), m.latent_corr()(i, j)) -
                         oracle::phi(m.gamma()(i)) * oracle::phi(m.gamma()(j));
      EXPECT_NEAR(got, target, 1e-9);
    }
}

TEST(FitDg, ExactSecondMomentsMatchConstraints) {
  std::mt19937_64 rng(22);
  const MomentConstraints c = decaying_constraints(5, rng);
  const DGModel m = fit_dg(c);
  EXPECT_LT(dg_second_moments(m).max_abs_difference(constraints_to_second_moments(c)), 1e-9);
}

TEST(FitDg, BivariateBoundsAreAttainable) {
  // At λ = ±1 the dichotomized pair reaches the Fréchet bounds.
  for (double m1 : {0.1, 0.3, 0.5})
    for (double m2 : {0.2, 0.6}) {
      const double hi = (std::min(m1, m2) - m1 * m2) / std::sqrt(m1 * (1 - m1) * m2 * (1 - m2));
      const DGModel m = fit_dg(pair_constraints(m1, m2, hi));
      EXPECT_GT(m.latent_corr()(0, 1), 0.999);
    }
}

TEST(FitDg, RejectsInfeasiblePair) {
  EXPECT_THROW(fit_dg(pair_constraints(0.1, 0.5, 0.9)), FeasibilityError);
}

TEST(DgPairCovariance, MonotoneInLatentCorrelation) {
  for (double h : {-2.0, -0.8, 0.0, 0.5, 1.9})
    for (double k : {-1.5, 0.0, 1.2}) {
      double prev = -1.0;
      for (double l = -1.0; l <= 1.0 + 1e-12; l += 0.02) {
        const double v = dg_pair_covariance(h, k, std::min(l, 1.0));
        EXPECT_GE(v, prev - 1e-15);
        prev = v;
      }
    }
}

TEST(RepairPsd, AlreadyValidIsUnchanged) {
  Matrix a(3, 3);
  a << 1, 0.3, 0.1, 0.3, 1, 0.2, 0.1, 0.2, 1;
  const auto [out, log] = repair_psd(a);
  EXPECT_EQ(out, a);
  EXPECT_FALSE(log.applied);
  EXPECT_EQ(log.clipped_eigenvalues, 0u);
  const auto [id, id_log] = repair_psd(Matrix::Identity(4, 4));
  EXPECT_EQ(id, Matrix::Identity(4, 4));
  EXPECT_FALSE(id_log.applied);
}

TEST(RepairPsd, IndefiniteInputBecomesValid) {
  Matrix a = Matrix::Constant(3, 3, -0.9);
  a.diagonal().setOnes();
  // Eigenvalues of an equicorrelation matrix: 1 + 2ρ (once) and 1 − ρ (twice).
  Eigen::SelfAdjointEigenSolver<Matrix> before(a);
  EXPECT_NEAR(before.eigenvalues().minCoeff(), 1 + 2 * -0.9, 1e-12);
  const auto [out, log] = repair_psd(a);
  EXPECT_TRUE(log.applied);
  EXPECT_NEAR(log.min_eigenvalue_before, -0.8, 1e-12);
  EXPECT_EQ(log.clipped_eigenvalues, 1u);
  EXPECT_GT(log.max_abs_change, 0.0);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(out(i, i), 1.0);
  EXPECT_TRUE(out.isApprox(out.transpose(), 0.0));
  Eigen::SelfAdjointEigenSolver<Matrix> after(out);
  EXPECT_GE(after.eigenvalues().minCoeff(), -1e-12);
  // The model accepts the repaired matrix.
  EXPECT_NO_THROW(DGModel(Vector::Zero(3), out));
}

TEST(RepairPsd, FitSurfacesRepair) {
  // Pairwise-valid but jointly impossible: 1 and 2 anti-correlated with each
  // other while both strongly correlated with 0.
  Vector mu = Vector::Constant(3, 0.5);
  Matrix r(3, 3);
  r << 1, 0.9, 0.9, 0.9, 1, -0.9, 0.9, -0.9, 1;
  const DGModel m = fit_dg(MomentConstraints(mu, r));
  EXPECT_TRUE(m.repair_log().applied);
  EXPECT_LT(m.repair_log().min_eigenvalue_before, 0.0);
}

TEST(DgModel, ValidatesLatentMatrix) {
  Matrix bad = Matrix::Identity(2, 2);
  bad(0, 0) = 1.1;
  EXPECT_THROW(DGModel(Vector::Zero(2), bad), InputError);
  Matrix asym = Matrix::Identity(2, 2);
  asym(0, 1) = 0.3;
  EXPECT_THROW(DGModel(Vector::Zero(2), asym), InputError);
  EXPECT_THROW(DGModel(Vector::Zero(3), Matrix::Identity(2, 2)), InputError);
}

TEST(SampleDg, FairCoins) {
  const DGModel m(Vector::Zero(3), Matrix::Identity(3, 3));
  const Vector mean = estimate_moments(sample_dg(m, 1000000, 1)).means();
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(mean(i), 0.5, 0.0016);
}

TEST(SampleDg, PairCorrelationRecovered) {
  const DGModel m = fit_dg(pair_constraints(0.5, 0.5, 0.5));
  const Matrix cov = estimate_moments(sample_dg(m, 1000000, 2)).covariance();
  EXPECT_NEAR(cov(0, 1) / std::sqrt(cov(0, 0) * cov(1, 1)), 0.5, 0.004);
}

TEST(SampleDg, SeedDeterminism) {
  const DGModel m = fit_dg(pair_constraints(0.3, 0.7, 0.2));
  const SampleSet a = sample_dg(m, 10000, 5);
  EXPECT_EQ(a, sample_dg(m, 10000, 5));
  EXPECT_FALSE(a == sample_dg(m, 10000, 6));
  EXPECT_EQ(a.size(), 10000u);
}

TEST(SampleDg, IndependentOfThreadCount) {
  const DGModel m = fit_dg(pair_constraints(0.3, 0.7, 0.2));
  set_max_threads(1);
  const SampleSet a = sample_dg(m, 20000, 5);
  set_max_threads(4);
  const SampleSet b = sample_dg(m, 20000, 5);
  set_max_threads(1);
  EXPECT_EQ(a, b);
}

TEST(SampleDg, RoundTripMomentsAndCovariance) {
  std::mt19937_64 rng(23);
  const MomentConstraints c = decaying_constraints(8, rng);
  const DGModel m = fit_dg(c);
  const SecondMomentMatrix est = estimate_moments(sample_dg(m, 1000000, 3));
  const SecondMomentMatrix truth = constraints_to_second_moments(c);
  for (int i = 0; i < 8; ++i) {
    const double p = c.means()(i);
    EXPECT_NEAR(est(i, i), p, 3 * std::sqrt(p * (1 - p) / 1e6));
  }
  EXPECT_LT((est.covariance() - truth.covariance()).cwiseAbs().maxCoeff(), 0.004);
}

TEST(DgPmfMc, IndependentQuarter) {
  const DGModel m(Vector::Zero(2), Matrix::Identity(2, 2));
  for (std::uint64_t s = 0; s < 4; ++s) {
    const auto b = oracle::bits(s, 2);
    const StateVector x(b.begin(), b.end());
    const auto e = dg_pmf_mc(m, x, 200000, 7 + s);
    EXPECT_NEAR(e.value, 0.25, 3 * std::sqrt(0.25 * 0.75 / 2e5));
    EXPECT_GT(e.std_error, 0.0);
  }
}

TEST(DgPmfMc, CorrelatedOrthant) {
  const DGModel m = fit_dg(pair_constraints(0.4, 0.6, 0.3));
  const double truth = oracle::bvn_simpson(m.gamma()(0), m.gamma()(1), m.latent_corr()(0, 1));
  const auto e = dg_pmf_mc(m, StateVector{1, 1}, 400000, 8);
  EXPECT_NEAR(e.value, truth, 3 * std::sqrt(truth * (1 - truth) / 4e5));
}

TEST(DgPmfMc, IndependenceFactorizes) {
  Vector mu(4);
  mu << 0.2, 0.45, 0.6, 0.8;
  const DGModel m = DGModel::independent(mu);
  for (std::uint64_t s : {0u, 5u, 9u, 15u}) {
    const auto b = oracle::bits(s, 4);
    double p = 1.0;
    for (int i = 0; i < 4; ++i) p *= b[i] ? mu(i) : 1 - mu(i);
    const auto e = dg_pmf_mc(m, StateVector(b.begin(), b.end()), 300000, 10 + s);
    EXPECT_NEAR(e.value, p, 3 * std::sqrt(p * (1 - p) / 3e5));
  }
}

TEST(DgPmfMc, GuardsAndResolutionFloor) {
  const DGModel m(Vector::Zero(2), Matrix::Identity(2, 2));
  EXPECT_THROW(dg_pmf_mc(m, StateVector{0, 1}, 0, 1), UsageError);
  EXPECT_THROW(dg_pmf_mc(m, StateVector{0, 1, 1}, 10, 1), InputError);
  const DGModel rare(Vector::Constant(2, -4.0), Matrix::Identity(2, 2));
  const auto e = dg_pmf_mc(rare, StateVector{1, 1}, 1000, 2);
  EXPECT_TRUE(e.below_resolution);
}

TEST(DgPmfTable, SumsToOneAndMatchesPair) {
  const DGModel m = fit_dg(pair_constraints(0.4, 0.6, 0.3));
  const auto pmf = dg_pmf_table(m, 400000, 9);
  double sum = 0;
  for (double p : pmf) sum += p;
  EXPECT_NEAR(sum, 1.0, 1e-12);
  const double truth = oracle::bvn_simpson(m.gamma()(0), m.gamma()(1), m.latent_corr()(0, 1));
  EXPECT_NEAR(pmf[3], truth, 3 * std::sqrt(truth * (1 - truth) / 4e5));
}
