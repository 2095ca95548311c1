#include <gtest/gtest.h>

#include <limits>
#include <random>

#include "maxent/dg.hpp"
#include "maxent/hazard.hpp"
#include "maxent/ising.hpp"
#include "oracles.hpp"

using namespace maxent;

namespace {

StateVector to_state(const std::vector<int>& v) { return StateVector(v.begin(), v.end()); }

// Standard error of the sample mean of a 0/1 indicator with probability p.
double binomial_se(double p, double n) { return std::sqrt(std::max(p * (1 - p), 1e-12) / n); }

}  // namespace

TEST(GibbsConditional, ZeroCouplingIsFair) {
  const IsingModel m = IsingModel::zeros(4);
  for (std::uint64_t s = 0; s < 16; ++s) {
    const auto x = to_state(oracle::bits(s, 4));
    for (std::size_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(gibbs_conditional(i, x, m), 0.5);
  }
}

TEST(GibbsConditional, SingleSiteMatchesTwoStateEnumeration) {
  for (double a : {-3.0, -0.4, 0.0, 1.7}) {
    Matrix j(1, 1);
    j << a;
    const auto pmf = oracle::boltzmann_pmf(j);
    const StateVector x{0};
    EXPECT_NEAR(gibbs_conditional(0, x, IsingModel(j)), pmf[1], 1e-15);
  }
}

TEST(GibbsConditional, MatchesConditionedPmf) {
  std::mt19937_64 rng(3);
  for (int rep = 0; rep < 10; ++rep) {
    const Matrix j = oracle::random_symmetric(3, -1.5, 1.5, rng);
    const auto pmf = oracle::boltzmann_pmf(j);
    const IsingModel m(j);
    for (std::uint64_t s = 0; s < 8; ++s)
      for (int i = 0; i < 3; ++i) {
        const std::uint64_t on = s | (1u << i), off = s & ~(1u << i);
        const double expect = pmf[on] / (pmf[on] + pmf[off]);
        EXPECT_NEAR(gibbs_conditional(i, to_state(oracle::bits(s, 3)), m), expect, 1e-12);
      }
  }
}

TEST(GibbsConditional, RejectsBadIndex) {
  const StateVector x{0, 1};
  EXPECT_THROW(gibbs_conditional(2, x, IsingModel::zeros(2)), InputError);
}

TEST(GibbsSample, ZeroCouplingMarginals) {
  GibbsConfig cfg;
  cfg.n_samples = 100000;
  cfg.burn_in = 100;
  cfg.seed = 1;
  const SampleSet s = gibbs_sample(IsingModel::zeros(6), cfg);
  ASSERT_EQ(s.size(), 100000u);
  const Vector mu = estimate_moments(s).means();
  for (Eigen::Index i = 0; i < 6; ++i) EXPECT_NEAR(mu(i), 0.5, 0.01);
}

TEST(GibbsSample, MomentsWithinThreeStandardErrors) {
  std::mt19937_64 rng(5);
  const Matrix j = oracle::random_symmetric(5, -0.5, 0.5, rng);
  const Matrix truth = oracle::second_moments(oracle::boltzmann_pmf(j), 5);
  GibbsConfig cfg;
  cfg.n_samples = 200000;
  cfg.burn_in = 1000;
  cfg.seed = 2;
  const Matrix est = gibbs_moments(IsingModel(j), cfg).matrix();
  // Successive sweeps are correlated, so allow a small number of misses.
  int misses = 0;
  for (int a = 0; a < 5; ++a)
    for (int b = a; b < 5; ++b)
      if (std::abs(est(a, b) - truth(a, b)) > 3 * binomial_se(truth(a, b), 2e5)) ++misses;
  EXPECT_LE(misses, 1);
}

TEST(GibbsSample, SeedDeterminism) {
  std::mt19937_64 rng(6);
  const IsingModel m(oracle::random_symmetric(7, -1, 1, rng));
  GibbsConfig cfg;
  cfg.n_samples = 5000;
  cfg.burn_in = 50;
  cfg.thinning = 2;
  cfg.chains = 3;
  cfg.seed = 99;
  EXPECT_EQ(gibbs_sample(m, cfg), gibbs_sample(m, cfg));
  cfg.scan = ScanOrder::random_site;
  EXPECT_EQ(gibbs_sample(m, cfg), gibbs_sample(m, cfg));
  const SampleSet a = gibbs_sample(m, cfg);
  cfg.seed = 100;
  EXPECT_FALSE(a == gibbs_sample(m, cfg));
}

TEST(GibbsSample, MomentsEqualEstimateOfSamples) {
  std::mt19937_64 rng(7);
  const IsingModel m(oracle::random_symmetric(6, -1, 1, rng));
  GibbsConfig cfg;
  cfg.n_samples = 20001;
  cfg.burn_in = 10;
  cfg.chains = 4;
  cfg.seed = 8;
  EXPECT_EQ(gibbs_moments(m, cfg).matrix(), estimate_moments(gibbs_sample(m, cfg)).matrix());
}

TEST(GibbsSample, ConfigValidation) {
  GibbsConfig cfg;
  cfg.n_samples = 0;
  EXPECT_THROW(gibbs_sample(IsingModel::zeros(2), cfg), UsageError);
  cfg.n_samples = 10;
  cfg.thinning = 0;
  EXPECT_THROW(gibbs_sample(IsingModel::zeros(2), cfg), UsageError);
}

TEST(GibbsChain, EnergyTracksQuadraticForm) {
  std::mt19937_64 rng(9);
  const Matrix j = oracle::random_symmetric(9, -1, 1, rng);
  GibbsChain chain(IsingModel(j), 4);
  for (int s = 0; s < 50; ++s) {
    chain.sweep();
    const auto& x = chain.state();
    EXPECT_NEAR(chain.energy(), oracle::quadratic(j, std::vector<int>(x.begin(), x.end())), 1e-10);
  }
}

TEST(GibbsKernel, DetailedBalanceTwoSites) {
  std::mt19937_64 rng(10);
  for (int rep = 0; rep < 5; ++rep) {
    const Matrix j = oracle::random_symmetric(2, -2, 2, rng);
    const auto pmf = oracle::boltzmann_pmf(j);
    const Matrix k = gibbs_sweep_kernel(IsingModel(j));
    Eigen::RowVectorXd p(4);
    for (int s = 0; s < 4; ++s) p(s) = pmf[s];
    EXPECT_LT((p * k - p).cwiseAbs().maxCoeff(), 1e-12);
    for (int a = 0; a < 4; ++a) EXPECT_NEAR(k.row(a).sum(), 1.0, 1e-14);
  }
}

TEST(GibbsKernel, StationaryForLargerModels) {
  std::mt19937_64 rng(11);
  for (int d : {3, 5, 7}) {
    const Matrix j = oracle::random_symmetric(d, -1, 1, rng);
    const auto pmf = oracle::boltzmann_pmf(j);
    const Matrix k = gibbs_sweep_kernel(IsingModel(j));
    Eigen::RowVectorXd p(pmf.size());
    for (std::size_t s = 0; s < pmf.size(); ++s) p(s) = pmf[s];
    EXPECT_LT((p * k - p).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(FitMl, GradientSignReducesResidual) {
  // Two sites: start from zero couplings and take one exact step towards a
  // correlated target; the residual must shrink.
  Matrix t(2, 2);
  t << 0.3, 0.2, 0.2, 0.4;
  TrainConfig cfg;
  cfg.learning_rate = 0.5;
  cfg.max_iters = 2;
  cfg.expectation = ModelExpectation::exact;
  const FitReport r = fit_ml(SecondMomentMatrix(t), cfg, Matrix::Zero(2, 2));
  ASSERT_EQ(r.residual_trace.size(), 2u);
  EXPECT_LT(r.residual_trace[1], r.residual_trace[0]);
  // The first step is exactly J = η (target − ⟨xx'⟩ at J = 0).
  Matrix first_moments(2, 2);
  first_moments << 0.5, 0.25, 0.25, 0.5;
  TrainConfig one = cfg;
  one.max_iters = 1;
  const FitReport s = fit_ml(SecondMomentMatrix(t), one, Matrix::Zero(2, 2));
  EXPECT_LT((s.final_model.coupling() - 0.5 * (t - first_moments)).cwiseAbs().maxCoeff(), 1e-15);
  // Cross-moment below the J = 0 value of 0.25 pushes the coupling negative.
  EXPECT_LT(s.final_model.coupling()(0, 1), 0.0);
}

TEST(FitMl, ExactModeRecoversKnownModel) {
  std::mt19937_64 rng(12);
  const Matrix j = oracle::random_symmetric(3, -1, 1, rng);
  const auto pmf = oracle::boltzmann_pmf(j);
  const SecondMomentMatrix target(oracle::second_moments(pmf, 3));
  TrainConfig cfg;
  cfg.learning_rate = 1.0;
  cfg.max_iters = 20000;
  cfg.moment_tolerance = 1e-9;
  cfg.expectation = ModelExpectation::exact;
  const FitReport r = fit_ml(target, cfg);
  EXPECT_TRUE(r.converged);
  EXPECT_TRUE(r.exact_expectation);
  EXPECT_EQ(r.residual_trace.size(), r.iterations_used);
  const Matrix got = oracle::second_moments(oracle::boltzmann_pmf(r.final_model.coupling()), 3);
  EXPECT_LE((got - target.matrix()).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LE(oracle::total_variation(oracle::boltzmann_pmf(r.final_model.coupling()), pmf), 1e-6);
}

TEST(FitMl, StationaryAtOwnMoments) {
  std::mt19937_64 rng(13);
  const Matrix j = oracle::random_symmetric(4, -1, 1, rng);
  const SecondMomentMatrix own = exact_moments(IsingModel(j));
  TrainConfig cfg;
  cfg.max_iters = 1;
  cfg.moment_tolerance = 1e-300;
  cfg.expectation = ModelExpectation::exact;
  const FitReport r = fit_ml(own, cfg, j);
  EXPECT_EQ(r.final_model.coupling(), j);
}

TEST(FitMl, IndependentTargetGivesLogitDiagonal) {
  Vector mu(4);
  mu << 0.1, 0.3, 0.5, 0.8;
  const MomentConstraints c(mu, Matrix::Identity(4, 4));
  TrainConfig cfg;
  cfg.expectation = ModelExpectation::exact;
  const FitReport r = fit_ml(c, cfg);
  EXPECT_TRUE(r.converged);
  EXPECT_EQ(r.iterations_used, 1u);
  const Matrix& j = r.final_model.coupling();
  for (int a = 0; a < 4; ++a) {
    EXPECT_NEAR(j(a, a), std::log(mu(a) / (1 - mu(a))), 1e-12);
    for (int b = 0; b < 4; ++b)
      if (a != b) EXPECT_EQ(j(a, b), 0.0);
  }
}

TEST(FitMl, IndependentTargetWithGibbsKeepsOffDiagonalSmall) {
  Vector mu(5);
  mu << 0.2, 0.35, 0.5, 0.6, 0.25;
  const MomentConstraints c(mu, Matrix::Identity(5, 5));
  TrainConfig cfg;
  cfg.expectation = ModelExpectation::gibbs;
  cfg.learning_rate = 1.0;
  cfg.max_iters = 400;
  cfg.moment_tolerance = 1e-6;
  cfg.samples_per_iter.n_samples = 20000;
  cfg.samples_per_iter.burn_in = 100;
  cfg.samples_per_iter.seed = 4;
  const FitReport r = fit_ml(constraints_to_second_moments(c), cfg, Matrix(Matrix::Zero(5, 5)));
  const Matrix& j = r.final_model.coupling();
  for (int a = 0; a < 5; ++a) {
    EXPECT_NEAR(j(a, a), std::log(mu(a) / (1 - mu(a))), 0.1);
    for (int b = 0; b < 5; ++b)
      if (a != b) EXPECT_NEAR(j(a, b), 0.0, 0.05);
  }
}

TEST(FitMl, RejectsInfeasibleTarget) {
  Matrix t(2, 2);
  t << 0.2, 0.3, 0.3, 0.4;  // E[X1 X2] above min(μ1, μ2)
  EXPECT_THROW(fit_ml(SecondMomentMatrix(t), TrainConfig{}), FeasibilityError);
}

TEST(FitMl, OverflowReportsIteration) {
  Matrix t(2, 2);
  t << 0.3, 0.2, 0.2, 0.4;
  TrainConfig cfg;
  cfg.learning_rate = 1e308;
  cfg.expectation = ModelExpectation::exact;
  cfg.coupling_limit = std::numeric_limits<double>::max();
  try {
    fit_ml(SecondMomentMatrix(t), cfg, Matrix::Zero(2, 2));
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("iteration"), std::string::npos);
  }
}

TEST(FitMl, SeededRunsAreIdentical) {
  std::mt19937_64 rng(14);
  const Matrix j = oracle::random_symmetric(6, -0.5, 0.5, rng);
  const SecondMomentMatrix target(oracle::second_moments(oracle::boltzmann_pmf(j), 6));
  TrainConfig cfg;
  cfg.expectation = ModelExpectation::gibbs;
  cfg.max_iters = 5;
  cfg.samples_per_iter.n_samples = 2000;
  cfg.samples_per_iter.burn_in = 20;
  cfg.samples_per_iter.seed = 77;
  const FitReport a = fit_ml(target, cfg), b = fit_ml(target, cfg);
  EXPECT_EQ(a.final_model.coupling(), b.final_model.coupling());
  EXPECT_EQ(a.residual_trace, b.residual_trace);
}

TEST(FitMl, TenSiteHazardProtocol) {
  // Ten sites on a line between 2 and 11 km from the epicenter.
  std::vector<Site> sites;
  for (int k = 0; k < 10; ++k) sites.push_back(Site::planar("s" + std::to_string(k), 2.0 + k, 0.0));
  HazardScenario s;
  s.magnitude = 7.0;
  s.epicenter = Site::planar("epi", 0, 0);
  const MomentConstraints c = build_constraints(sites, s);
  TrainConfig cfg;
  cfg.learning_rate = 0.2;
  cfg.max_iters = 2000;
  cfg.moment_tolerance = 1e-12;
  cfg.expectation = ModelExpectation::gibbs;
  cfg.samples_per_iter.n_samples = 100000;
  cfg.samples_per_iter.burn_in = 20000;
  cfg.samples_per_iter.seed = 15;
  const FitReport r = fit_ml(c, cfg);
  const Matrix target = constraints_to_second_moments(c).matrix();
  const Vector mu = target.diagonal();
  const Matrix cov_t = target - mu * mu.transpose();
  const Matrix fitted = oracle::second_moments(oracle::boltzmann_pmf(r.final_model.coupling()), 10);
  const Vector nu = fitted.diagonal();
  const Matrix cov_f = fitted - nu * nu.transpose();
  int within = 0, total = 0;
  for (int a = 0; a < 10; ++a)
    for (int b = a; b < 10; ++b, ++total)
      if (std::abs(cov_f(a, b) - cov_t(a, b)) <= 0.04 * std::abs(cov_t(a, b))) ++within;
  EXPECT_GE(within, 0.9 * total) << within << " of " << total;
}

TEST(FitCd, CdOneRecoversCovariance) {
  std::mt19937_64 rng(16);
  const Matrix j = oracle::random_symmetric(3, -0.8, 0.8, rng);
  const auto pmf = oracle::boltzmann_pmf(j);
  // Data drawn exactly from the enumerated pmf by inverse CDF.
  std::discrete_distribution<int> draw(pmf.begin(), pmf.end());
  SampleSet data(3);
  for (int n = 0; n < 100000; ++n) data.push_back(to_state(oracle::bits(draw(rng), 3)));
  TrainConfig cfg;
  cfg.learning_rate = 0.5;
  cfg.max_iters = 600;
  cfg.moment_tolerance = 1e-12;
  cfg.cd_steps = 1;
  cfg.samples_per_iter.seed = 3;
  const FitReport r = fit_cd(data, cfg);
  EXPECT_FALSE(r.notes.empty());
  const Matrix truth = oracle::second_moments(pmf, 3);
  const Matrix got = oracle::second_moments(oracle::boltzmann_pmf(r.final_model.coupling()), 3);
  const Vector mt = truth.diagonal(), mg = got.diagonal();
  const Matrix ct = truth - mt * mt.transpose(), cg = got - mg * mg.transpose();
  for (int a = 0; a < 3; ++a)
    for (int b = a; b < 3; ++b) EXPECT_NEAR(cg(a, b), ct(a, b), 0.05 * std::abs(ct(a, b)) + 2e-3);
}

TEST(FitCd, ManyStepsApproachesMl) {
  std::mt19937_64 rng(17);
  const Matrix j = oracle::random_symmetric(3, -0.8, 0.8, rng);
  const auto pmf = oracle::boltzmann_pmf(j);
  std::discrete_distribution<int> draw(pmf.begin(), pmf.end());
  SampleSet data(3);
  for (int n = 0; n < 50000; ++n) data.push_back(to_state(oracle::bits(draw(rng), 3)));

  TrainConfig ml;
  ml.learning_rate = 1.0;
  ml.max_iters = 20000;
  ml.moment_tolerance = 1e-10;
  ml.expectation = ModelExpectation::exact;
  const Matrix j_ml = fit_ml(estimate_moments(data), ml).final_model.coupling();

  TrainConfig cd;
  cd.learning_rate = 0.5;
  cd.max_iters = 200;
  cd.moment_tolerance = 1e-12;
  cd.cd_steps = 20;
  cd.samples_per_iter.seed = 5;
  const Matrix j_cd = fit_cd(data, cd).final_model.coupling();
  const Matrix m_ml = oracle::second_moments(oracle::boltzmann_pmf(j_ml), 3);
  const Matrix m_cd = oracle::second_moments(oracle::boltzmann_pmf(j_cd), 3);
  for (int a = 0; a < 3; ++a)
    for (int b = a; b < 3; ++b) EXPECT_NEAR(m_cd(a, b), m_ml(a, b), 0.01 * m_ml(a, b) + 1e-3);
}

TEST(FitCd, AllZeroDataHitsDegenerateGuard) {
  SampleSet data(3);
  for (int n = 0; n < 100; ++n) data.push_back(StateVector{0, 0, 0});
  TrainConfig cfg;
  const FitReport r = fit_cd(data, cfg);
  EXPECT_TRUE(r.degenerate);
  EXPECT_FALSE(r.converged);
  EXPECT_LT(r.final_model.coupling()(0, 0), -20.0);
}

TEST(FitCd, RejectsEmptyData) { EXPECT_THROW(fit_cd(SampleSet(2), TrainConfig{}), InputError); }

TEST(SynthesizeData, IndependentConstraints) {
  Vector mu(3);
  mu << 0.2, 0.5, 0.7;
  const MomentConstraints c(mu, Matrix::Identity(3, 3));
  const SampleSet s = synthesize_data(c, 200000, 1);
  const Matrix m = estimate_moments(s).matrix();
  for (int a = 0; a < 3; ++a)
    for (int b = a; b < 3; ++b) {
      const double p = a == b ? mu(a) : mu(a) * mu(b);
      EXPECT_NEAR(m(a, b), p, 3 * binomial_se(p, 2e5));
    }
}

TEST(SynthesizeData, PairCorrelation) {
  Vector mu(2);
  mu << 0.5, 0.5;
  Matrix rho(2, 2);
  rho << 1, 0.5, 0.5, 1;
  const SampleSet s = synthesize_data(MomentConstraints(mu, rho), 1000000, 2);
  const Matrix cov = estimate_moments(s).covariance();
  EXPECT_NEAR(cov(0, 1) / std::sqrt(cov(0, 0) * cov(1, 1)), 0.5, 0.003);
}

TEST(SynthesizeData, SeedDeterminism) {
  Vector mu(2);
  mu << 0.3, 0.6;
  Matrix rho(2, 2);
  rho << 1, 0.2, 0.2, 1;
  const MomentConstraints c(mu, rho);
  EXPECT_EQ(synthesize_data(c, 1000, 9), synthesize_data(c, 1000, 9));
}
