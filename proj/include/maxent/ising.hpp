#pragma once

// Gibbs sampling for the Ising model and moment-matching parameter
// identification (maximum-likelihood gradient ascent and contrastive
// divergence).

#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "maxent/core.hpp"
#include "maxent/random.hpp"

namespace maxent {

enum class ScanOrder { sequential, random_site };

struct GibbsConfig {
  std::size_t n_samples = 100000;
  std::size_t burn_in = 20000;  // sweeps discarded before the first retained sample
  std::size_t thinning = 1;     // sweeps per retained sample
  ScanOrder scan = ScanOrder::sequential;
  std::uint64_t seed = 0;
  std::size_t chains = 1;  // independent chains, each with its own burn-in

  void validate() const {
    if (n_samples < 1) throw UsageError("gibbs: n_samples must be >= 1");
    if (thinning < 1) throw UsageError("gibbs: thinning must be >= 1");
    if (chains < 1) throw UsageError("gibbs: chains must be >= 1");
  }
};

/// p(X_i = 1 | x_{-i}) = logistic(J_ii + 2 Σ_{j≠i} J_ij x_j).
inline double gibbs_conditional(std::size_t i, std::span<const std::uint8_t> x, const IsingModel& model) {
  const auto d = model.dimension();
  if (i >= d) throw InputError("gibbs_conditional: site index out of range");
  if (x.size() != d) throw InputError("gibbs_conditional: state length does not match model dimension");
  const Matrix& j = model.coupling();
  const auto ii = static_cast<Eigen::Index>(i);
  double field = j(ii, ii);
  for (std::size_t k = 0; k < d; ++k)
    if (k != i && x[k]) field += 2.0 * j(ii, static_cast<Eigen::Index>(k));
  return logistic(field);
}

/// Single-site Gibbs chain with incrementally maintained local fields, so a
/// site update costs O(1) unless the site flips (then O(d)).
class GibbsChain {
 public:
  GibbsChain(const IsingModel& model, std::uint64_t seed, ScanOrder scan = ScanOrder::sequential)
      : j_(model.coupling()), d_(model.dimension()), scan_(scan), rng_(seed), state_(d_, 0), field_(d_) {
    for (auto& v : state_) v = static_cast<std::uint8_t>(rng_() >> 63);
    recompute_fields();
  }

  /// Restarts from `x`, keeping the random stream.
  void reset(std::span<const std::uint8_t> x) {
    if (x.size() != d_) throw InputError("gibbs: state length does not match model dimension");
    state_.assign(x.begin(), x.end());
    recompute_fields();
  }

  void sweep() {
    if (scan_ == ScanOrder::sequential) {
      for (std::size_t i = 0; i < d_; ++i) update(i);
    } else {
      for (std::size_t n = 0; n < d_; ++n) update(static_cast<std::size_t>(uniform01(rng_) * static_cast<double>(d_)));
    }
  }

  const StateVector& state() const { return state_; }
  std::size_t dimension() const { return d_; }

  /// x'Jx of the current state.
  double energy() const {
    // Σ_i x_i (J_ii + Σ_{k≠i} J_ik x_k) = Σ_i x_i (field_i + J_ii) / 2
    double e = 0.0;
    for (std::size_t i = 0; i < d_; ++i)
      if (state_[i]) e += 0.5 * (field_[i] + j_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)));
    return e;
  }

 private:
  void recompute_fields() {
    for (std::size_t i = 0; i < d_; ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      double f = j_(ii, ii);
      for (std::size_t k = 0; k < d_; ++k)
        if (k != i && state_[k]) f += 2.0 * j_(ii, static_cast<Eigen::Index>(k));
      field_[i] = f;
    }
  }

  void update(std::size_t i) {
    const std::uint8_t next = uniform01(rng_) < logistic(field_[i]) ? 1 : 0;
    if (next == state_[i]) return;
    state_[i] = next;
    const double step = next ? 2.0 : -2.0;
    const double* col = j_.data() + static_cast<std::ptrdiff_t>(i * d_);
    const double self = col[i];
    for (std::size_t k = 0; k < d_; ++k) field_[k] += step * col[k];
    field_[i] -= step * self;
  }

  Matrix j_;
  std::size_t d_;
  ScanOrder scan_;
  Rng rng_;
  StateVector state_;
  std::vector<double> field_;
};

namespace detail {

/// Runs cfg.chains chains and hands every retained state to visit(chain, x).
template <class Visit>
void run_gibbs(const IsingModel& model, const GibbsConfig& cfg, std::string_view stage, Visit&& visit) {
  cfg.validate();
  const std::size_t per_chain = (cfg.n_samples + cfg.chains - 1) / cfg.chains;
  parallel_for(cfg.chains, [&](std::size_t c) {
    const std::size_t begin = c * per_chain;
    const std::size_t end = std::min(cfg.n_samples, begin + per_chain);
    if (begin >= end) return;
    GibbsChain chain(model, derive_seed(cfg.seed, stage, c), cfg.scan);
    for (std::size_t s = 0; s < cfg.burn_in; ++s) chain.sweep();
    for (std::size_t n = begin; n < end; ++n) {
      for (std::size_t t = 0; t < cfg.thinning; ++t) chain.sweep();
      visit(c, chain.state());
    }
  });
}

}  // namespace detail

/// n_samples states after burn-in, one per `thinning` sweeps. Chains are
/// concatenated in chain-index order.
inline SampleSet gibbs_sample(const IsingModel& model, const GibbsConfig& cfg) {
  cfg.validate();
  std::vector<SampleSet> per_chain(cfg.chains, SampleSet(model.dimension()));
  detail::run_gibbs(model, cfg, "gibbs", [&](std::size_t c, const StateVector& x) { per_chain[c].push_back(x); });
  SampleSet out(model.dimension());
  out.reserve(cfg.n_samples);
  for (const auto& s : per_chain) out.append(s);
  return out;
}

/// Sample second moments without materializing the samples. Equal to
/// estimate_moments(gibbs_sample(model, cfg)).
inline SecondMomentMatrix gibbs_moments(const IsingModel& model, const GibbsConfig& cfg) {
  cfg.validate();
  std::vector<MomentAccumulator> acc(cfg.chains, MomentAccumulator(model.dimension()));
  detail::run_gibbs(model, cfg, "gibbs", [&](std::size_t c, const StateVector& x) { acc[c].add(x); });
  for (std::size_t c = 1; c < acc.size(); ++c) acc[0].merge(acc[c]);
  return acc[0].moments();
}

/// Transition matrix of one full sweep (sequential scan) over all 2^d states;
/// kernel(a, b) = P(next = b | current = a). Small d only.
inline Matrix gibbs_sweep_kernel(const IsingModel& model) {
  const std::size_t d = model.dimension();
  if (d > 10) throw InputError("gibbs_sweep_kernel: dimension above 10");
  const auto n = static_cast<Eigen::Index>(std::size_t{1} << d);
  Matrix kernel = Matrix::Identity(n, n);
  for (std::size_t i = 0; i < d; ++i) {
    Matrix site = Matrix::Zero(n, n);
    for (Eigen::Index a = 0; a < n; ++a) {
      const StateVector x = state_from_index(static_cast<std::uint64_t>(a), d);
      const double p1 = gibbs_conditional(i, x, model);
      const Eigen::Index on = a | (Eigen::Index{1} << i);
      const Eigen::Index off = a & ~(Eigen::Index{1} << i);
      site(a, on) += p1;
      site(a, off) += 1.0 - p1;
    }
    kernel = kernel * site;
  }
  return kernel;
}

/// How the model expectation ⟨xx'⟩ is obtained inside the ML loop.
enum class ModelExpectation {
  automatic,  ///< enumeration when d <= enumeration_cap, Gibbs otherwise
  exact,
  gibbs,
};

struct TrainConfig {
  double learning_rate = 0.2;
  std::size_t max_iters = 2000;
  double moment_tolerance = 5e-3;  // stop when max |target - model| <= this
  std::size_t cd_steps = 1;
  GibbsConfig samples_per_iter{};
  ModelExpectation expectation = ModelExpectation::automatic;
  std::size_t enumeration_cap = kDefaultEnumerationCap;
  bool decay = false;            // η_τ = η / sqrt(τ + 1) instead of constant η
  double coupling_limit = 25.0;  // degenerate-marginal guard on |J_ij|

  void validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw UsageError("train: learning_rate must be > 0");
    if (max_iters < 1) throw UsageError("train: max_iters must be >= 1");
    if (!(moment_tolerance > 0.0)) throw UsageError("train: moment_tolerance must be > 0");
    if (cd_steps < 1) throw UsageError("train: cd_steps must be >= 1");
    if (!(coupling_limit > 0.0)) throw UsageError("train: coupling_limit must be > 0");
    samples_per_iter.validate();
  }
};

struct FitReport {
  IsingModel final_model = IsingModel::zeros(1);
  std::vector<double> residual_trace;  // max-abs moment residual at the start of each iteration
  std::size_t iterations_used = 0;
  bool converged = false;
  bool degenerate = false;  // stopped by the coupling guard
  bool exact_expectation = false;
  std::string method;
  std::vector<std::string> notes;
};

namespace detail {

inline Matrix independent_coupling(const Vector& means) {
  const auto d = means.size();
  Matrix j = Matrix::Zero(d, d);
  for (Eigen::Index i = 0; i < d; ++i) j(i, i) = logit(clip_probability(means(i)));
  return j;
}

inline void check_target(const SecondMomentMatrix& target, FitReport& report) {
  const Vector mu = target.means();
  for (Eigen::Index i = 0; i < mu.size(); ++i)
    if (mu(i) <= kProbabilityFloor || mu(i) >= 1.0 - kProbabilityFloor) {
      report.notes.push_back("degenerate marginal at component " + std::to_string(i) +
                             "; the matching coupling diverges");
    }
  const Matrix& m = target.matrix();
  if (!m.allFinite()) throw InputError("fit: target moments contain a non-finite entry");
  if (!detail::is_symmetric(m, 1e-12)) throw InputError("fit: target moment matrix is not symmetric");
  std::vector<FeasibilityViolation> bad;
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    if (mu(i) < 0.0 || mu(i) > 1.0) {
      bad.push_back({static_cast<std::size_t>(i), static_cast<std::size_t>(i), mu(i), 0.0, 1.0});
      continue;
    }
    for (Eigen::Index j = i + 1; j < mu.size(); ++j) {
      const double lo = std::max(0.0, mu(i) + mu(j) - 1.0), hi = std::min(mu(i), mu(j));
      if (m(i, j) < lo - kFeasibilitySlack || m(i, j) > hi + kFeasibilitySlack)
        bad.push_back({static_cast<std::size_t>(i), static_cast<std::size_t>(j), m(i, j), lo, hi});
    }
  }
  if (!bad.empty()) throw FeasibilityError(std::move(bad));
}

/// Shared gradient loop: J ← J + η_τ (target − model_moments(J)).
///
/// With p(x) ∝ exp(x'Jx) the log-likelihood gradient is N(⟨xx'⟩_data − ⟨xx'⟩_model),
/// so the likelihood increases along +(data − model); this is the direction
/// that shrinks the moment residual.
template <class ModelMoments>
FitReport gradient_loop(const SecondMomentMatrix& target, const TrainConfig& cfg, Matrix j, ModelMoments&& model_moments,
                        FitReport report) {
  const Matrix& t = target.matrix();
  const auto d = t.rows();
  // Entries touching a component whose target marginal is 0 or 1 can only be
  // matched in the limit |J| → ∞.
  std::vector<bool> pinned(static_cast<std::size_t>(d));
  bool any_pinned = false;
  for (Eigen::Index i = 0; i < d; ++i) {
    pinned[i] = t(i, i) <= kProbabilityFloor || t(i, i) >= 1.0 - kProbabilityFloor;
    any_pinned = any_pinned || pinned[i];
  }
  for (std::size_t tau = 0; tau < cfg.max_iters; ++tau) {
    const SecondMomentMatrix m = model_moments(IsingModel(j), tau);
    const Matrix residual = t - m.matrix();
    const double r = residual.cwiseAbs().maxCoeff();
    if (!std::isfinite(r)) {
      std::ostringstream os;
      os << "fit: non-finite moment residual at iteration " << tau;
      throw NumericalError(os.str());
    }
    report.residual_trace.push_back(r);
    report.iterations_used = tau + 1;
    if (any_pinned) {
      double free_r = 0.0;
      for (Eigen::Index a = 0; a < d; ++a)
        for (Eigen::Index b = a; b < d; ++b)
          if (!pinned[a] && !pinned[b]) free_r = std::max(free_r, std::abs(residual(a, b)));
      if (free_r <= cfg.moment_tolerance) {
        report.degenerate = true;
        report.notes.push_back("stopped at iteration " + std::to_string(tau) +
                               ": only residuals on degenerate marginals remain; their couplings diverge");
        break;
      }
    }
    if (r <= cfg.moment_tolerance) {
      report.converged = true;
      break;
    }
    const double eta = cfg.decay ? cfg.learning_rate / std::sqrt(static_cast<double>(tau) + 1.0) : cfg.learning_rate;
    j += eta * residual;
    if (!j.allFinite()) {
      std::ostringstream os;
      os << "fit: coupling overflow at iteration " << tau;
      throw NumericalError(os.str());
    }
    if (j.cwiseAbs().maxCoeff() > cfg.coupling_limit) {
      report.degenerate = true;
      report.notes.push_back("stopped at iteration " + std::to_string(tau) + ": |J| exceeded coupling_limit " +
                             std::to_string(cfg.coupling_limit) + " (degenerate marginal or unreachable target)");
      break;
    }
  }
  report.final_model = IsingModel(std::move(j));
  return report;
}

inline bool use_exact(const TrainConfig& cfg, std::size_t d) {
  switch (cfg.expectation) {
    case ModelExpectation::exact:
      return true;
    case ModelExpectation::gibbs:
      return false;
    case ModelExpectation::automatic:
      break;
  }
  return d <= cfg.enumeration_cap;
}

}  // namespace detail

/// Model second moments by enumeration.
inline SecondMomentMatrix exact_moments(const IsingModel& model, std::size_t cap = kDefaultEnumerationCap) {
  return moments_from_pmf(enumerate(model, cap));
}

/// Maximum-likelihood fit of J to target second moments by gradient ascent,
/// starting from the independent solution J_ii = logit(μ_i), J_ij = 0.
inline FitReport fit_ml(const SecondMomentMatrix& target, const TrainConfig& cfg,
                        std::optional<Matrix> initial = std::nullopt) {
  cfg.validate();
  const std::size_t d = target.dimension();
  FitReport report;
  report.method = "ising-ml";
  detail::check_target(target, report);
  const bool exact = detail::use_exact(cfg, d);
  if (exact && d > cfg.enumeration_cap) throw InputError("fit_ml: exact expectation requested above enumeration cap");
  report.exact_expectation = exact;
  Matrix j = initial ? *initial : detail::independent_coupling(target.means());
  if (j.rows() != static_cast<Eigen::Index>(d) || j.cols() != static_cast<Eigen::Index>(d))
    throw InputError("fit_ml: initial coupling has the wrong shape");
  auto model_moments = [&](const IsingModel& model, std::size_t tau) {
    if (exact) return exact_moments(model, cfg.enumeration_cap);
    GibbsConfig g = cfg.samples_per_iter;
    g.seed = derive_seed(cfg.samples_per_iter.seed, "fit_ml", tau);
    return gibbs_moments(model, g);
  };
  return detail::gradient_loop(target, cfg, std::move(j), model_moments, std::move(report));
}

inline FitReport fit_ml(const MomentConstraints& c, const TrainConfig& cfg) {
  return fit_ml(constraints_to_second_moments(c), cfg);
}

/// Contrastive divergence CD-n: each iteration restarts one chain at every data
/// sample and advances it cd_steps full sweeps; the moments of those states
/// replace the equilibrium model moments.
inline FitReport fit_cd(const SampleSet& data, const TrainConfig& cfg) {
  cfg.validate();
  if (data.empty()) throw InputError("fit_cd: empty data set");
  const std::size_t d = data.dimension();
  const SecondMomentMatrix target = estimate_moments(data);
  FitReport report;
  report.method = "ising-cd";
  report.notes.push_back("contrastive divergence is biased; the fixed point differs from the ML estimate");
  detail::check_target(target, report);
  auto model_moments = [&](const IsingModel& model, std::size_t tau) {
    const std::size_t blocks = std::max<std::size_t>(1, cfg.samples_per_iter.chains);
    const std::size_t per_block = (data.size() + blocks - 1) / blocks;
    std::vector<MomentAccumulator> acc(blocks, MomentAccumulator(d));
    parallel_for(blocks, [&](std::size_t b) {
      const std::size_t begin = b * per_block;
      const std::size_t end = std::min(data.size(), begin + per_block);
      if (begin >= end) return;
      GibbsChain chain(model, derive_seed(cfg.samples_per_iter.seed, "fit_cd", tau * blocks + b),
                       cfg.samples_per_iter.scan);
      for (std::size_t n = begin; n < end; ++n) {
        chain.reset(data[n]);
        for (std::size_t s = 0; s < cfg.cd_steps; ++s) chain.sweep();
        acc[b].add(chain.state());
      }
    });
    for (std::size_t b = 1; b < blocks; ++b) acc[0].merge(acc[b]);
    return acc[0].moments();
  };
  return detail::gradient_loop(target, cfg, detail::independent_coupling(target.means()), model_moments,
                               std::move(report));
}

}  // namespace maxent
