#pragma once

// Dichotomized Gaussian surrogate: X = 1{Z >= 0}, Z ~ N(γ, Λ) with unit
// latent variances. γ_i = Φ⁻¹(μ_i); each Λ_ij solves
// Φ(γ_i, γ_j; Λ_ij) − Φ(γ_i)Φ(γ_j) = Σ_ij, which is monotone in Λ_ij.

#include <Eigen/Eigenvalues>

#include <cmath>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "maxent/core.hpp"
#include "maxent/normal.hpp"
#include "maxent/random.hpp"

namespace maxent {

/// What repair_psd did to the pairwise latent correlations.
struct RepairLog {
  bool applied = false;
  double min_eigenvalue_before = 0.0;
  double max_abs_change = 0.0;
  std::size_t clipped_eigenvalues = 0;
};

/// Eigenvalues below this are raised to it during repair, which keeps the
/// Cholesky factor of the repaired matrix well defined.
inline constexpr double kRepairEigenFloor = 1e-10;

/// Clip negative eigenvalues, rebuild, rescale to unit diagonal. Input that is
/// already positive semidefinite is returned unchanged with an empty log.
inline std::pair<Matrix, RepairLog> repair_psd(const Matrix& lambda) {
  if (lambda.rows() != lambda.cols()) throw InputError("repair_psd: matrix must be square");
  if (!detail::is_symmetric(lambda, 1e-12)) throw InputError("repair_psd: matrix must be symmetric");
  RepairLog log;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(lambda);
  if (eig.info() != Eigen::Success) throw NumericalError("repair_psd: eigen-decomposition failed");
  log.min_eigenvalue_before = eig.eigenvalues().minCoeff();
  if (log.min_eigenvalue_before >= 0.0) return {lambda, log};

  Vector values = eig.eigenvalues();
  for (Eigen::Index k = 0; k < values.size(); ++k)
    if (values(k) < kRepairEigenFloor) {
      values(k) = kRepairEigenFloor;
      ++log.clipped_eigenvalues;
    }
  const Matrix& v = eig.eigenvectors();
  Matrix rebuilt = v * values.asDiagonal() * v.transpose();
  const Vector scale = rebuilt.diagonal().cwiseSqrt().cwiseInverse();
  Matrix out = scale.asDiagonal() * rebuilt * scale.asDiagonal();
  out = 0.5 * (out + out.transpose()).eval();
  out.diagonal().setOnes();
  log.applied = true;
  log.max_abs_change = (out - lambda).cwiseAbs().maxCoeff();
  return {out, log};
}

class DGModel {
 public:
  /// Builds the sampling factor of `latent_corr`, which must be PSD with unit diagonal.
  DGModel(Vector gamma, Matrix latent_corr, RepairLog log = {})
      : gamma_(std::move(gamma)), lambda_(std::move(latent_corr)), log_(log) {
    const auto d = gamma_.size();
    if (d < 1) throw InputError("dg: dimension must be >= 1");
    if (lambda_.rows() != d || lambda_.cols() != d) throw InputError("dg: latent correlation has the wrong shape");
    if (!detail::is_symmetric(lambda_, 1e-12)) throw InputError("dg: latent correlation is not symmetric");
    for (Eigen::Index i = 0; i < d; ++i) {
      if (std::abs(lambda_(i, i) - 1.0) > 1e-12) throw InputError("dg: latent correlation needs a unit diagonal");
      for (Eigen::Index j = 0; j < d; ++j)
        if (lambda_(i, j) < -1.0 - 1e-12 || lambda_(i, j) > 1.0 + 1e-12)
          throw InputError("dg: latent correlation entry outside [-1, 1]");
    }
    if (gamma_.array().isNaN().any()) throw InputError("dg: NaN threshold");
    Eigen::LLT<Matrix> llt(lambda_);
    if (llt.info() == Eigen::Success) {
      factor_ = llt.matrixL();
      return;
    }
    // Singular but PSD (e.g. perfectly correlated pairs): symmetric square root.
    Eigen::SelfAdjointEigenSolver<Matrix> eig(lambda_);
    if (eig.info() != Eigen::Success || eig.eigenvalues().minCoeff() < -1e-8)
      throw NumericalError("dg: latent correlation is not positive semidefinite");
    factor_ = eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
  }

  /// Independent Bernoulli components with the given failure probabilities (Λ = I).
  static DGModel independent(const Vector& means) {
    Vector gamma(means.size());
    for (Eigen::Index i = 0; i < means.size(); ++i) gamma(i) = normal_quantile(clip_probability(means(i)));
    return DGModel(std::move(gamma), Matrix::Identity(means.size(), means.size()));
  }

  std::size_t dimension() const { return static_cast<std::size_t>(gamma_.size()); }
  const Vector& gamma() const { return gamma_; }
  const Matrix& latent_corr() const { return lambda_; }
  /// F with F F' = Λ; lower triangular unless Λ is singular.
  const Matrix& factor() const { return factor_; }
  const RepairLog& repair_log() const { return log_; }

  /// Marginal failure probabilities Φ(γ_i).
  Vector means() const { return gamma_.unaryExpr([](double g) { return normal_cdf(g); }); }

 private:
  Vector gamma_;
  Matrix lambda_;
  Matrix factor_;
  RepairLog log_;
};

inline constexpr double kLatentTolerance = 1e-10;

/// Ψ(h, k; λ) = Φ(h, k; λ) − Φ(h)Φ(k): covariance of the dichotomized pair.
inline double dg_pair_covariance(double h, double k, double lambda) {
  return bvn_cdf(h, k, lambda) - normal_cdf(h) * normal_cdf(k);
}

struct LatentInfeasibility {
  std::size_t i = 0;
  std::size_t j = 0;
  double target = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

class DGFitError : public InputError {
 public:
  explicit DGFitError(std::vector<LatentInfeasibility> pairs) : InputError(describe(pairs)), pairs_(std::move(pairs)) {}
  const std::vector<LatentInfeasibility>& pairs() const { return pairs_; }

 private:
  static std::string describe(const std::vector<LatentInfeasibility>& p) {
    std::ostringstream os;
    os << "fit_dg: " << p.size() << " pair(s) with covariance outside the attainable range";
    if (!p.empty())
      os << ", first (" << p[0].i << "," << p[0].j << "): " << p[0].target << " not in [" << p[0].lower << ", "
         << p[0].upper << "]";
    return os.str();
  }
  std::vector<LatentInfeasibility> pairs_;
};

/// Bisection for λ with Ψ(h, k; λ) = target on [-1, 1].
inline double solve_latent_correlation(double h, double k, double target) {
  double lo = -1.0, hi = 1.0;
  double f_lo = dg_pair_covariance(h, k, lo) - target;
  double f_hi = dg_pair_covariance(h, k, hi) - target;
  if (std::abs(f_lo) <= kLatentTolerance) return lo;
  if (std::abs(f_hi) <= kLatentTolerance) return hi;
  for (int iter = 0; iter < 200; ++iter) {
    const double mid = 0.5 * (lo + hi);
    const double f = dg_pair_covariance(h, k, mid) - target;
    if (std::abs(f) <= kLatentTolerance || hi - lo < 1e-15) return mid;
    if (f < 0.0) {
      lo = mid;
      f_lo = f;
    } else {
      hi = mid;
      f_hi = f;
    }
  }
  return 0.5 * (lo + hi);
}

/// Fit γ and Λ to the constraints, repairing Λ to PSD when the pairwise
/// solutions are not jointly valid.
inline DGModel fit_dg(const MomentConstraints& c) {
  require_feasible(c);
  const auto d = static_cast<Eigen::Index>(c.dimension());
  Vector mu(d), gamma(d), sd(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    mu(i) = clip_probability(c.means()(i));
    gamma(i) = normal_quantile(mu(i));
    mu(i) = normal_cdf(gamma(i));
    sd(i) = std::sqrt(mu(i) * (1.0 - mu(i)));
  }
  Matrix lambda = Matrix::Identity(d, d);
  std::vector<LatentInfeasibility> bad;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> pairs;
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = i + 1; j < d; ++j)
      if (c.correlations()(i, j) != 0.0) pairs.emplace_back(i, j);
  std::vector<double> solved(pairs.size());
  std::vector<char> ok(pairs.size(), 1);
  std::vector<LatentInfeasibility> why(pairs.size());
  parallel_for(pairs.size(), [&](std::size_t p) {
    const auto [i, j] = pairs[p];
    const double target = c.correlations()(i, j) * sd(i) * sd(j);
    const double lower = dg_pair_covariance(gamma(i), gamma(j), -1.0);
    const double upper = dg_pair_covariance(gamma(i), gamma(j), 1.0);
    if (target < lower - kLatentTolerance || target > upper + kLatentTolerance) {
      ok[p] = 0;
      why[p] = {static_cast<std::size_t>(i), static_cast<std::size_t>(j), target, lower, upper};
      return;
    }
    solved[p] = solve_latent_correlation(gamma(i), gamma(j), target);
  });
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    if (!ok[p]) {
      bad.push_back(why[p]);
      continue;
    }
    const auto [i, j] = pairs[p];
    lambda(i, j) = lambda(j, i) = solved[p];
  }
  if (!bad.empty()) throw DGFitError(std::move(bad));
  auto [repaired, log] = repair_psd(lambda);
  if (log.applied) {
    std::ostringstream os;
    os << "fit_dg: latent correlation not PSD (min eigenvalue " << log.min_eigenvalue_before
       << "); repaired with max entry change " << log.max_abs_change;
    warn(os.str());
  }
  return DGModel(std::move(gamma), std::move(repaired), log);
}

namespace detail {

inline constexpr std::size_t kDgBlock = 4096;

/// Draws samples [block*kDgBlock, ...) of the latent Gaussian and thresholds
/// them; visit(sample_index, x).
template <class Visit>
void dg_block(const DGModel& model, std::uint64_t seed, std::string_view stage, std::size_t block, std::size_t count,
              Visit&& visit) {
  const auto d = static_cast<Eigen::Index>(model.dimension());
  Rng rng(derive_seed(seed, stage, block));
  std::normal_distribution<double> normal;
  Matrix w(d, static_cast<Eigen::Index>(count));
  for (Eigen::Index s = 0; s < w.cols(); ++s)
    for (Eigen::Index i = 0; i < d; ++i) w(i, s) = normal(rng);
  Matrix z = model.factor() * w;
  StateVector x(static_cast<std::size_t>(d));
  for (Eigen::Index s = 0; s < z.cols(); ++s) {
    for (Eigen::Index i = 0; i < d; ++i) x[i] = (z(i, s) + model.gamma()(i)) >= 0.0 ? 1 : 0;
    visit(block * kDgBlock + static_cast<std::size_t>(s), x);
  }
}

template <class Visit>
void dg_draw(const DGModel& model, std::size_t n, std::uint64_t seed, std::string_view stage, Visit&& visit) {
  const std::size_t blocks = (n + kDgBlock - 1) / kDgBlock;
  for (std::size_t b = 0; b < blocks; ++b)
    dg_block(model, seed, stage, b, std::min(kDgBlock, n - b * kDgBlock), visit);
}

}  // namespace detail

/// n independent draws X = 1{Z >= 0}, Z ~ N(γ, Λ).
inline SampleSet sample_dg(const DGModel& model, std::size_t n, std::uint64_t seed) {
  const std::size_t d = model.dimension();
  const std::size_t blocks = (n + detail::kDgBlock - 1) / detail::kDgBlock;
  std::vector<std::uint8_t> flat(n * d);
  parallel_for(blocks, [&](std::size_t b) {
    detail::dg_block(model, seed, "dg_sample", b, std::min(detail::kDgBlock, n - b * detail::kDgBlock),
                     [&](std::size_t s, const StateVector& x) { std::copy(x.begin(), x.end(), flat.begin() + s * d); });
  });
  SampleSet out(d);
  out.reserve(n);
  for (std::size_t s = 0; s < n; ++s) out.push_back(std::span<const std::uint8_t>(flat.data() + s * d, d));
  return out;
}

struct ProbabilityEstimate {
  double value = 0.0;
  double std_error = 0.0;
  std::size_t hits = 0;
  std::size_t n = 0;
  bool below_resolution = false;  // value < 10 / n: too few hits to trust
};

inline ProbabilityEstimate make_probability_estimate(std::size_t hits, std::size_t n) {
  ProbabilityEstimate e;
  e.hits = hits;
  e.n = n;
  e.value = static_cast<double>(hits) / static_cast<double>(n);
  e.std_error = std::sqrt(e.value * (1.0 - e.value) / static_cast<double>(n));
  e.below_resolution = e.value < 10.0 / static_cast<double>(n);
  return e;
}

/// Direct Monte Carlo estimate of q(x) = P(Z ∈ orthant of x).
inline ProbabilityEstimate dg_pmf_mc(const DGModel& model, std::span<const std::uint8_t> x, std::size_t n,
                                     std::uint64_t seed) {
  if (n < 1) throw UsageError("dg_pmf_mc: n must be >= 1");
  if (x.size() != model.dimension()) throw InputError("dg_pmf_mc: state length does not match model dimension");
  std::size_t hits = 0;
  detail::dg_draw(model, n, seed, "dg_pmf", [&](std::size_t, const StateVector& z) {
    if (std::equal(z.begin(), z.end(), x.begin())) ++hits;
  });
  auto e = make_probability_estimate(hits, n);
  if (e.below_resolution) warn("dg_pmf_mc: estimate below the resolution floor 10/n");
  return e;
}

/// Histogram estimate of all 2^d orthant probabilities from one pool of n
/// draws (enumeration order as in core.hpp). Small d only.
inline std::vector<double> dg_pmf_table(const DGModel& model, std::size_t n, std::uint64_t seed) {
  const std::size_t d = model.dimension();
  if (d > kDefaultEnumerationCap) throw InputError("dg_pmf_table: dimension exceeds enumeration cap");
  if (n < 1) throw UsageError("dg_pmf_table: n must be >= 1");
  std::vector<std::uint64_t> counts(std::size_t{1} << d, 0);
  detail::dg_draw(model, n, seed, "dg_pmf_table", [&](std::size_t, const StateVector& z) { ++counts[index_from_state(z)]; });
  std::vector<double> pmf(counts.size());
  for (std::size_t k = 0; k < counts.size(); ++k) pmf[k] = static_cast<double>(counts[k]) / static_cast<double>(n);
  return pmf;
}

/// Exact DG second moments from the fit equations (means Φ(γ), cross terms Φ(γ_i, γ_j; Λ_ij)).
inline SecondMomentMatrix dg_second_moments(const DGModel& model) {
  const auto d = static_cast<Eigen::Index>(model.dimension());
  Matrix m(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    m(i, i) = normal_cdf(model.gamma()(i));
    for (Eigen::Index j = i + 1; j < d; ++j)
      m(i, j) = m(j, i) = bvn_cdf(model.gamma()(i), model.gamma()(j), model.latent_corr()(i, j));
  }
  return SecondMomentMatrix(std::move(m));
}

/// Samples whose moments converge to the constraints: the DG surrogate is used
/// as a data generator for sample-based fitting.
inline SampleSet synthesize_data(const MomentConstraints& c, std::size_t n, std::uint64_t seed) {
  return sample_dg(fit_dg(c), n, derive_seed(seed, "synthesize"));
}

}  // namespace maxent
