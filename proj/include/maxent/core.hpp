#pragma once

// Domain types shared by every module and the exact-enumeration oracle.
//
// State convention: x_i in {0, 1} with 1 = component failed, 0 = working.
// The Ising model is p(x) = exp(x'Jx) / Z(J) with a symmetric J whose diagonal
// carries the first-order terms (x_i^2 = x_i).

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "maxent/error.hpp"

namespace maxent {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// One binary configuration; entry i is 1 when component i failed.
using StateVector = std::vector<std::uint8_t>;

inline constexpr double kProbabilityFloor = 1e-9;
inline constexpr std::size_t kDefaultEnumerationCap = 20;

/// Clamps a failure probability into [1e-9, 1 - 1e-9] before logit/probit transforms.
inline double clip_probability(double p) {
  return std::clamp(p, kProbabilityFloor, 1.0 - kProbabilityFloor);
}

inline double logit(double p) { return std::log(p) - std::log1p(-p); }

inline double logistic(double h) {
  if (h >= 0) return 1.0 / (1.0 + std::exp(-h));
  const double e = std::exp(h);
  return e / (1.0 + e);
}

/// Bits of `index` as a state: bit i -> x_i.
inline StateVector state_from_index(std::uint64_t index, std::size_t d) {
  StateVector x(d);
  for (std::size_t i = 0; i < d; ++i) x[i] = static_cast<std::uint8_t>((index >> i) & 1u);
  return x;
}

inline std::uint64_t index_from_state(std::span<const std::uint8_t> x) {
  std::uint64_t index = 0;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (x[i]) index |= (std::uint64_t{1} << i);
  return index;
}

namespace detail {

inline bool is_symmetric(const Matrix& m, double tol) {
  if (m.rows() != m.cols()) return false;
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = i + 1; j < m.cols(); ++j)
      if (std::abs(m(i, j) - m(j, i)) > tol) return false;
  return true;
}

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace detail

/// Failure probabilities and Pearson correlations of the component states.
///
/// Construction validates shape, symmetry, unit diagonal and ranges. Pairwise
/// feasibility is a separate check (feasibility_check) so that infeasible
/// sets can still be loaded and reported on.
class MomentConstraints {
 public:
  MomentConstraints(Vector means, Matrix correlations)
      : means_(std::move(means)), corr_(std::move(correlations)) {
    const auto d = means_.size();
    if (d < 1) throw InputError("constraints: dimension must be >= 1");
    if (corr_.rows() != d || corr_.cols() != d) {
      std::ostringstream os;
      os << "constraints: correlation matrix is " << corr_.rows() << "x" << corr_.cols() << ", expected " << d
         << "x" << d;
      throw InputError(os.str());
    }
    if (!means_.allFinite() || !corr_.allFinite()) throw InputError("constraints: non-finite entry");
    for (Eigen::Index i = 0; i < d; ++i) {
      if (means_(i) < 0.0 || means_(i) > 1.0) {
        std::ostringstream os;
        os << "constraints: mean " << i << " = " << means_(i) << " outside [0, 1]";
        throw InputError(os.str());
      }
      if (std::abs(corr_(i, i) - 1.0) > 1e-12) {
        std::ostringstream os;
        os << "constraints: correlation diagonal " << i << " = " << corr_(i, i) << ", expected 1";
        throw InputError(os.str());
      }
      corr_(i, i) = 1.0;
    }
    if (!detail::is_symmetric(corr_, 1e-12)) throw InputError("constraints: correlation matrix is not symmetric");
    for (Eigen::Index i = 0; i < d; ++i)
      for (Eigen::Index j = i + 1; j < d; ++j) {
        const double r = corr_(i, j);
        if (r < -1.0 || r > 1.0) {
          std::ostringstream os;
          os << "constraints: correlation (" << i << "," << j << ") = " << r << " outside [-1, 1]";
          throw InputError(os.str());
        }
        corr_(j, i) = r;
      }
    for (Eigen::Index i = 0; i < d; ++i)
      if (means_(i) < kProbabilityFloor || means_(i) > 1.0 - kProbabilityFloor)
        warn("constraints: mean " + std::to_string(i) + " is degenerate (0 or 1); it is clipped before transforms");
  }

  std::size_t dimension() const { return static_cast<std::size_t>(means_.size()); }
  const Vector& means() const { return means_; }
  const Matrix& correlations() const { return corr_; }

  /// Subsystem made of components {0, ..., k-1}.
  MomentConstraints prefix(std::size_t k) const {
    if (k < 1 || k > dimension()) throw InputError("constraints: prefix size out of range");
    const auto n = static_cast<Eigen::Index>(k);
    return MomentConstraints(means_.head(n), corr_.topLeftCorner(n, n));
  }

 private:
  Vector means_;
  Matrix corr_;
};

/// Ising model p(x) ∝ exp(x'Jx). J is stored symmetric.
class IsingModel {
 public:
  explicit IsingModel(Matrix coupling) : j_(std::move(coupling)) {
    if (j_.rows() < 1 || j_.rows() != j_.cols()) throw InputError("ising: coupling must be a non-empty square matrix");
    if (!j_.allFinite()) throw InputError("ising: coupling has a non-finite entry");
    if (!detail::is_symmetric(j_, 0.0)) {
      warn("ising: asymmetric coupling symmetrized as (A + A')/2");
      Matrix sym = 0.5 * (j_ + j_.transpose());
      j_ = std::move(sym);
    }
  }

  static IsingModel zeros(std::size_t d) { return IsingModel(Matrix::Zero(d, d)); }

  std::size_t dimension() const { return static_cast<std::size_t>(j_.rows()); }
  const Matrix& coupling() const { return j_; }
  std::size_t free_parameters() const { return (dimension() * dimension() + dimension()) / 2; }

  /// Tempered copy with coupling J / T.
  IsingModel tempered(double temperature) const { return IsingModel(j_ / temperature); }

 private:
  Matrix j_;
};

/// Matrix of E[X_i X_j]; the diagonal holds the marginal means.
class SecondMomentMatrix {
 public:
  SecondMomentMatrix() = default;
  explicit SecondMomentMatrix(Matrix m) : m_(std::move(m)) {
    if (m_.rows() < 1 || m_.rows() != m_.cols()) throw InputError("second moments: must be a non-empty square matrix");
  }

  std::size_t dimension() const { return static_cast<std::size_t>(m_.rows()); }
  const Matrix& matrix() const { return m_; }
  double operator()(std::size_t i, std::size_t j) const {
    return m_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }
  Vector means() const { return m_.diagonal(); }

  /// Covariance E[X_i X_j] - E[X_i] E[X_j].
  Matrix covariance() const {
    const Vector mu = means();
    return m_ - mu * mu.transpose();
  }

  double max_abs_difference(const SecondMomentMatrix& other) const {
    return (m_ - other.m_).cwiseAbs().maxCoeff();
  }

 private:
  Matrix m_;
};

/// Energy H(x; J) = -x'Jx.
inline double hamiltonian(std::span<const std::uint8_t> x, const IsingModel& model) {
  const auto d = model.dimension();
  if (x.size() != d) throw InputError("hamiltonian: state length does not match model dimension");
  const Matrix& j = model.coupling();
  double e = 0.0;
  for (std::size_t a = 0; a < d; ++a) {
    if (!x[a]) continue;
    for (std::size_t b = 0; b < d; ++b)
      if (x[b]) e += j(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
  }
  return -e;
}

/// Full Boltzmann distribution of a small model; pmf[k] is the probability of
/// state_from_index(k, d).
struct Enumeration {
  std::size_t dimension = 0;
  std::vector<double> pmf;
  double log_partition = 0.0;

  double partition() const { return std::exp(log_partition); }
};

/// Exact pmf over all 2^d states. Memory is 8 * 2^d bytes, which is what
/// bounds `cap` (20 -> 8 MiB).
inline Enumeration enumerate(const IsingModel& model, std::size_t cap = kDefaultEnumerationCap) {
  const std::size_t d = model.dimension();
  if (d > cap || d > 30) {
    std::ostringstream os;
    os << "enumerate: dimension " << d << " exceeds enumeration cap " << std::min<std::size_t>(cap, 30);
    throw InputError(os.str());
  }
  const Matrix& j = model.coupling();
  const std::uint64_t n_states = std::uint64_t{1} << d;

  // Walk states in Gray-code order; flipping site i changes x'Jx by
  // ±(J_ii + 2 Σ_{k≠i} J_ik x_k), which is the running local field.
  std::vector<double> log_weight(n_states);
  std::vector<double> field(d);
  for (std::size_t i = 0; i < d; ++i) field[i] = j(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i));
  std::uint64_t gray = 0;
  double energy = 0.0;  // x'Jx
  log_weight[0] = 0.0;
  for (std::uint64_t step = 1; step < n_states; ++step) {
    const auto site = static_cast<std::size_t>(std::countr_zero(step));
    const bool turning_on = ((gray >> site) & 1u) == 0;
    const double delta = turning_on ? 1.0 : -1.0;
    energy += delta * field[site];
    gray ^= (std::uint64_t{1} << site);
    for (std::size_t k = 0; k < d; ++k)
      if (k != site) field[k] += 2.0 * delta * j(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(site));
    log_weight[gray] = energy;
  }

  const double peak = *std::max_element(log_weight.begin(), log_weight.end());
  double sum = 0.0;
  for (double lw : log_weight) sum += std::exp(lw - peak);
  Enumeration out;
  out.dimension = d;
  out.log_partition = peak + std::log(sum);
  out.pmf.resize(n_states);
  for (std::uint64_t k = 0; k < n_states; ++k) out.pmf[k] = std::exp(log_weight[k] - out.log_partition);
  return out;
}

/// Σ_x p(x) x x' for a pmf laid out in enumeration order.
inline SecondMomentMatrix moments_from_pmf(std::span<const double> pmf, std::size_t d) {
  if (d < 1 || d > 30 || pmf.size() != (std::size_t{1} << d))
    throw InputError("moments_from_pmf: pmf length must be 2^d");
  Matrix m = Matrix::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  std::vector<int> ones;
  ones.reserve(d);
  for (std::size_t k = 0; k < pmf.size(); ++k) {
    const double p = pmf[k];
    if (p == 0.0) continue;
    ones.clear();
    for (std::size_t i = 0; i < d; ++i)
      if ((k >> i) & 1u) ones.push_back(static_cast<int>(i));
    for (std::size_t a = 0; a < ones.size(); ++a)
      for (std::size_t b = a; b < ones.size(); ++b) m(ones[a], ones[b]) += p;
  }
  for (Eigen::Index a = 0; a < m.rows(); ++a)
    for (Eigen::Index b = a + 1; b < m.cols(); ++b) m(b, a) = m(a, b);
  return SecondMomentMatrix(std::move(m));
}

inline SecondMomentMatrix moments_from_pmf(const Enumeration& e) { return moments_from_pmf(e.pmf, e.dimension); }

/// A pair whose implied cross-moment falls outside the Fréchet–Hoeffding band.
struct FeasibilityViolation {
  std::size_t i = 0;
  std::size_t j = 0;
  double moment = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

inline constexpr double kFeasibilitySlack = 1e-12;

namespace detail {

inline double implied_cross_moment(double mi, double mj, double rho) {
  return rho * std::sqrt(mi * (1.0 - mi) * mj * (1.0 - mj)) + mi * mj;
}

inline std::string describe(const std::vector<FeasibilityViolation>& v) {
  std::ostringstream os;
  os << v.size() << " infeasible pair(s)";
  const std::size_t shown = std::min<std::size_t>(v.size(), 5);
  for (std::size_t k = 0; k < shown; ++k)
    os << (k == 0 ? ": " : "; ") << "(" << v[k].i << "," << v[k].j << ") moment " << v[k].moment << " not in ["
       << v[k].lower << ", " << v[k].upper << "]";
  if (shown < v.size()) os << "; ...";
  return os.str();
}

}  // namespace detail

/// Every pair (i < j) whose implied E[X_i X_j] lies outside
/// [max(0, μ_i + μ_j - 1), min(μ_i, μ_j)].
inline std::vector<FeasibilityViolation> feasibility_check(const MomentConstraints& c) {
  std::vector<FeasibilityViolation> out;
  const auto d = c.dimension();
  const Vector& mu = c.means();
  const Matrix& rho = c.correlations();
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = i + 1; j < d; ++j) {
      const auto ii = static_cast<Eigen::Index>(i), jj = static_cast<Eigen::Index>(j);
      const double m = detail::implied_cross_moment(mu(ii), mu(jj), rho(ii, jj));
      const double lo = std::max(0.0, mu(ii) + mu(jj) - 1.0);
      const double hi = std::min(mu(ii), mu(jj));
      if (m < lo - kFeasibilitySlack || m > hi + kFeasibilitySlack) out.push_back({i, j, m, lo, hi});
    }
  return out;
}

class FeasibilityError : public InputError {
 public:
  explicit FeasibilityError(std::vector<FeasibilityViolation> v)
      : InputError("constraints infeasible: " + detail::describe(v)), violations_(std::move(v)) {}
  const std::vector<FeasibilityViolation>& violations() const { return violations_; }

 private:
  std::vector<FeasibilityViolation> violations_;
};

inline void require_feasible(const MomentConstraints& c) {
  auto v = feasibility_check(c);
  if (!v.empty()) throw FeasibilityError(std::move(v));
}

/// E[X_i X_j] = ρ_ij sqrt(μ_i(1-μ_i) μ_j(1-μ_j)) + μ_i μ_j, diagonal μ_i.
inline SecondMomentMatrix constraints_to_second_moments(const MomentConstraints& c) {
  require_feasible(c);
  const auto d = static_cast<Eigen::Index>(c.dimension());
  const Vector& mu = c.means();
  Matrix m(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    m(i, i) = mu(i);
    for (Eigen::Index j = i + 1; j < d; ++j) {
      const double v =
          std::clamp(detail::implied_cross_moment(mu(i), mu(j), c.correlations()(i, j)),
                     std::max(0.0, mu(i) + mu(j) - 1.0), std::min(mu(i), mu(j)));
      m(i, j) = m(j, i) = v;
    }
  }
  return SecondMomentMatrix(std::move(m));
}

/// Inverse of constraints_to_second_moments. Pairs involving a constant
/// component (variance 0) get correlation 0.
inline MomentConstraints second_moments_to_constraints(const SecondMomentMatrix& s) {
  const auto d = static_cast<Eigen::Index>(s.dimension());
  const Matrix& m = s.matrix();
  Vector mu = m.diagonal();
  Matrix rho = Matrix::Identity(d, d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = i + 1; j < d; ++j) {
      const double var = mu(i) * (1.0 - mu(i)) * mu(j) * (1.0 - mu(j));
      const double r = var > 0.0 ? (m(i, j) - mu(i) * mu(j)) / std::sqrt(var) : 0.0;
      rho(i, j) = rho(j, i) = std::clamp(r, -1.0, 1.0);
    }
  return MomentConstraints(std::move(mu), std::move(rho));
}

/// Fixed-size set of states stored row-major, one byte per entry.
class SampleSet {
 public:
  SampleSet() = default;
  explicit SampleSet(std::size_t dimension) : d_(dimension) {
    if (d_ < 1) throw InputError("samples: dimension must be >= 1");
  }

  std::size_t dimension() const { return d_; }
  std::size_t size() const { return d_ == 0 ? 0 : data_.size() / d_; }
  bool empty() const { return data_.empty(); }

  std::span<const std::uint8_t> operator[](std::size_t k) const { return {data_.data() + k * d_, d_}; }

  void push_back(std::span<const std::uint8_t> x) {
    if (x.size() != d_) throw InputError("samples: state length does not match sample dimension");
    for (auto v : x)
      if (v > 1) throw InputError("samples: state entries must be 0 or 1");
    data_.insert(data_.end(), x.begin(), x.end());
  }
  void reserve(std::size_t n) { data_.reserve(n * d_); }
  void append(const SampleSet& other) {
    if (other.d_ != d_) throw InputError("samples: dimension mismatch on append");
    data_.insert(data_.end(), other.data_.begin(), other.data_.end());
  }

  const std::vector<std::uint8_t>& raw() const { return data_; }

  friend bool operator==(const SampleSet&, const SampleSet&) = default;

 private:
  std::size_t d_ = 0;
  std::vector<std::uint8_t> data_;
};

/// Integer co-occurrence counts; the reduction is exact, so the result does
/// not depend on the order samples were added in.
class MomentAccumulator {
 public:
  explicit MomentAccumulator(std::size_t d) : d_(d), counts_(d * d, 0) { ones_.reserve(d); }

  void add(std::span<const std::uint8_t> x) {
    ones_.clear();
    for (std::size_t i = 0; i < d_; ++i)
      if (x[i]) ones_.push_back(i);
    for (std::size_t a = 0; a < ones_.size(); ++a) {
      std::uint64_t* row = counts_.data() + ones_[a] * d_;
      for (std::size_t b = a; b < ones_.size(); ++b) ++row[ones_[b]];
    }
    ++n_;
  }

  void merge(const MomentAccumulator& other) {
    for (std::size_t k = 0; k < counts_.size(); ++k) counts_[k] += other.counts_[k];
    n_ += other.n_;
  }

  std::uint64_t count() const { return n_; }

  SecondMomentMatrix moments() const {
    if (n_ == 0) throw InputError("estimate_moments: empty sample set");
    const auto d = static_cast<Eigen::Index>(d_);
    Matrix m(d, d);
    const double inv = 1.0 / static_cast<double>(n_);
    for (Eigen::Index a = 0; a < d; ++a)
      for (Eigen::Index b = a; b < d; ++b) m(a, b) = m(b, a) = static_cast<double>(counts_[a * d + b]) * inv;
    return SecondMomentMatrix(std::move(m));
  }

 private:
  std::size_t d_;
  std::uint64_t n_ = 0;
  std::vector<std::uint64_t> counts_;
  std::vector<std::size_t> ones_;
};

/// (1/N) Σ x x' over the samples.
inline SecondMomentMatrix estimate_moments(const SampleSet& samples) {
  if (samples.empty()) throw InputError("estimate_moments: empty sample set");
  MomentAccumulator acc(samples.dimension());
  for (std::size_t k = 0; k < samples.size(); ++k) acc.add(samples[k]);
  return acc.moments();
}

}  // namespace maxent
