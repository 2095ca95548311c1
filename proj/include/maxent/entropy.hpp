#pragma once

// Entropy of the Ising and dichotomized Gaussian models, in nats.
//
//   exact     −Σ p log p over the enumerated pmf
//   annealed  H = ⟨−x'Jx⟩ + ln Z, with ln Z telescoped from Z_0 = 2^d over a
//             decreasing temperature ladder ending at T = 1
//   mc        −⟨log q̂(x)⟩ for x drawn from the DG model, q̂ from a separate
//             pool of latent Gaussian draws

#include <cmath>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "maxent/core.hpp"
#include "maxent/dg.hpp"
#include "maxent/ising.hpp"
#include "maxent/random.hpp"

namespace maxent {

enum class EntropyMethod { exact, annealed, mc };

inline const char* to_string(EntropyMethod m) {
  switch (m) {
    case EntropyMethod::exact:
      return "exact";
    case EntropyMethod::annealed:
      return "annealed";
    case EntropyMethod::mc:
      return "mc";
  }
  return "?";
}

struct EntropyEstimate {
  double value = 0.0;  // nats
  double std_error = 0.0;
  EntropyMethod method = EntropyMethod::exact;
  bool reliable = true;
  std::vector<double> step_ratio_variance;  // annealed: variance of the log-ratio estimate per step
  std::vector<std::string> warnings;
};

struct AnnealSchedule {
  std::vector<double> temperatures;  // T_1 > ... > T_N = 1
  std::size_t samples_per_step = 2000;
  std::size_t burn_in = 1000;  // sweeps at each temperature before sampling
  std::uint64_t seed = 0;
  double min_ess_fraction = 0.05;  // per-step degeneracy threshold on ESS / samples

  /// T_n = base^{(span / N)(N − n)}, n = 1..N; the default ladder is 1.6, 20, 100.
  static AnnealSchedule geometric(std::size_t n_steps = 100, double base = 1.6, double span = 20.0) {
    if (n_steps < 1) throw UsageError("anneal: n_steps must be >= 1");
    AnnealSchedule s;
    s.temperatures.resize(n_steps);
    const double n = static_cast<double>(n_steps);
    for (std::size_t k = 1; k <= n_steps; ++k)
      s.temperatures[k - 1] = std::pow(base, (span / n) * (n - static_cast<double>(k)));
    s.temperatures.back() = 1.0;
    return s;
  }

  void validate() const {
    if (temperatures.empty()) throw UsageError("anneal: empty temperature ladder");
    if (temperatures.back() != 1.0) throw UsageError("anneal: the last temperature must be exactly 1");
    for (std::size_t k = 0; k < temperatures.size(); ++k) {
      if (!(temperatures[k] > 0.0)) throw UsageError("anneal: temperatures must be positive");
      if (k > 0 && !(temperatures[k] < temperatures[k - 1]))
        throw UsageError("anneal: temperatures must be strictly decreasing");
    }
    if (samples_per_step < 1) throw UsageError("anneal: samples_per_step must be >= 1");
  }
};

inline double binary_entropy(double p) {
  if (p <= 0.0 || p >= 1.0) return 0.0;
  return -p * std::log(p) - (1.0 - p) * std::log1p(-p);
}

inline double entropy_of_pmf(std::span<const double> pmf) {
  double h = 0.0;
  for (double p : pmf)
    if (p > 0.0) h -= p * std::log(p);
  return h;
}

inline EntropyEstimate ising_entropy_exact(const IsingModel& model, std::size_t cap = kDefaultEnumerationCap) {
  const Enumeration e = enumerate(model, cap);
  EntropyEstimate out;
  out.method = EntropyMethod::exact;
  out.value = entropy_of_pmf(e.pmf);
  return out;
}

/// x'Jx, summed over the failed components only.
inline double quadratic_form(const IsingModel& model, std::span<const std::uint8_t> x) {
  return -hamiltonian(x, model);
}

struct LogPartitionEstimate {
  double value = 0.0;
  double std_error = 0.0;
  std::vector<double> step_ratio_variance;
  std::vector<double> step_ess;
  std::vector<std::string> warnings;
};

/// ln Z ≈ d ln 2 + Σ_n ln(Z_n / Z_{n−1}). Each ratio is the sample mean of
/// exp(x'Jx (1/T_n − 1/T_{n−1})) under the model tempered at T_{n−1}
/// (T_0 = ∞: uniform states). The chain is warm-started across temperatures.
inline LogPartitionEstimate ising_log_partition_annealed(const IsingModel& model, const AnnealSchedule& sched) {
  sched.validate();
  const std::size_t d = model.dimension();
  const std::size_t n_samples = sched.samples_per_step;
  LogPartitionEstimate out;
  out.value = static_cast<double>(d) * std::log(2.0);
  double variance = 0.0;

  StateVector carried;
  std::vector<double> log_w(n_samples);
  for (std::size_t step = 0; step < sched.temperatures.size(); ++step) {
    const double beta_next = 1.0 / sched.temperatures[step];
    const double beta_prev = step == 0 ? 0.0 : 1.0 / sched.temperatures[step - 1];
    GibbsChain chain(IsingModel(model.coupling() * beta_prev), derive_seed(sched.seed, "anneal", step));
    if (!carried.empty()) chain.reset(carried);
    if (step > 0)
      for (std::size_t s = 0; s < sched.burn_in; ++s) chain.sweep();
    for (std::size_t s = 0; s < n_samples; ++s) {
      chain.sweep();
      log_w[s] = (beta_next - beta_prev) * quadratic_form(model, chain.state());
    }
    carried = chain.state();

    // Streaming log-mean-exp and the delta-method variance of the log ratio.
    const double peak = *std::max_element(log_w.begin(), log_w.end());
    double s1 = 0.0, s2 = 0.0;
    for (double lw : log_w) {
      const double w = std::exp(lw - peak);
      s1 += w;
      s2 += w * w;
    }
    const double n = static_cast<double>(n_samples);
    const double mean = s1 / n;
    out.value += peak + std::log(mean);
    const double var_w = std::max(0.0, s2 / n - mean * mean);
    const double var_log = var_w / (n * mean * mean);
    out.step_ratio_variance.push_back(var_log);
    variance += var_log;
    const double ess = s1 * s1 / s2;
    out.step_ess.push_back(ess);
    if (ess < sched.min_ess_fraction * n) {
      std::ostringstream os;
      os << "anneal step " << step + 1 << ": effective sample size " << ess << " of " << n_samples;
      out.warnings.push_back(os.str());
    }
  }
  out.std_error = std::sqrt(variance);
  return out;
}

/// H = ⟨−x'Jx⟩ + ln Z with the energy average taken over n_outer Gibbs samples.
inline EntropyEstimate ising_entropy_annealed(const IsingModel& model, const AnnealSchedule& sched,
                                              std::size_t n_outer, std::size_t outer_burn_in = 20000) {
  if (n_outer < 2) throw UsageError("entropy: n_outer must be >= 2");
  const LogPartitionEstimate log_z = ising_log_partition_annealed(model, sched);
  GibbsChain chain(model, derive_seed(sched.seed, "anneal_energy"));
  for (std::size_t s = 0; s < outer_burn_in; ++s) chain.sweep();
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t s = 0; s < n_outer; ++s) {
    chain.sweep();
    const double e = chain.energy();
    sum += e;
    sum_sq += e * e;
  }
  const double n = static_cast<double>(n_outer);
  const double mean = sum / n;
  const double var = std::max(0.0, (sum_sq - n * mean * mean) / (n - 1.0));
  EntropyEstimate out;
  out.method = EntropyMethod::annealed;
  out.value = log_z.value - mean;
  out.std_error = std::sqrt(var / n + log_z.std_error * log_z.std_error);
  out.step_ratio_variance = log_z.step_ratio_variance;
  out.warnings = log_z.warnings;
  out.reliable = log_z.warnings.empty();
  return out;
}

namespace detail {

inline std::string pack_state(std::span<const std::uint8_t> x) {
  std::string key((x.size() + 7) / 8, '\0');
  for (std::size_t i = 0; i < x.size(); ++i)
    if (x[i]) key[i / 8] = static_cast<char>(key[i / 8] | (1 << (i % 8)));
  return key;
}

}  // namespace detail

/// −⟨log q̂(x)⟩ over n_outer DG draws. q̂ is the indicator average over one
/// pool of n_pmf latent draws shared by every outer sample (the same
/// estimator as dg_pmf_mc, with common random numbers). An outer state that
/// never appears in the pool contributes −log(0.5 / n_pmf) and marks the
/// estimate unreliable.
inline EntropyEstimate dg_entropy_mc(const DGModel& model, std::size_t n_outer, std::size_t n_pmf,
                                     std::uint64_t seed) {
  if (n_outer < 2 || n_pmf < 1) throw UsageError("dg_entropy_mc: n_outer >= 2 and n_pmf >= 1 required");
  std::unordered_map<std::string, std::uint64_t> counts;
  detail::dg_draw(model, n_pmf, seed, "dg_entropy_pool",
                  [&](std::size_t, const StateVector& x) { ++counts[detail::pack_state(x)]; });
  const double pool = static_cast<double>(n_pmf);
  double sum = 0.0, sum_sq = 0.0;
  std::size_t zero_hits = 0, floor_hits = 0;
  detail::dg_draw(model, n_outer, seed, "dg_entropy_outer", [&](std::size_t, const StateVector& x) {
    const auto it = counts.find(detail::pack_state(x));
    const double hits = it == counts.end() ? 0.0 : static_cast<double>(it->second);
    if (hits == 0.0) ++zero_hits;
    if (hits < 10.0) ++floor_hits;
    const double v = -std::log(std::max(hits, 0.5) / pool);
    sum += v;
    sum_sq += v * v;
  });
  const double n = static_cast<double>(n_outer);
  const double mean = sum / n;
  EntropyEstimate out;
  out.method = EntropyMethod::mc;
  out.value = mean;
  out.std_error = std::sqrt(std::max(0.0, (sum_sq - n * mean * mean) / (n - 1.0)) / n);
  if (floor_hits > 0) {
    std::ostringstream os;
    os << floor_hits << " of " << n_outer << " outer states have q̂ below the resolution floor 10/n_pmf";
    out.warnings.push_back(os.str());
  }
  if (zero_hits > 0) {
    std::ostringstream os;
    os << zero_hits << " outer states were never seen in the pmf pool; increase n_pmf";
    out.warnings.push_back(os.str());
    out.reliable = false;
  }
  return out;
}

/// Plug-in entropy of the histogram pmf of n DG draws over all 2^d states.
inline EntropyEstimate dg_entropy_enumerated(const DGModel& model, std::size_t n, std::uint64_t seed) {
  EntropyEstimate out;
  out.method = EntropyMethod::mc;
  out.value = entropy_of_pmf(dg_pmf_table(model, n, seed));
  return out;
}

struct SweepConfig {
  // Enumeration-mode fit for sizes up to train.enumeration_cap; Gibbs-mode
  // fit (the 2000-iteration, η = 0.2 protocol) above it.
  TrainConfig train{.learning_rate = 0.5, .max_iters = 20000, .moment_tolerance = 1e-6};
  TrainConfig gibbs_train{.expectation = ModelExpectation::gibbs};
  std::size_t exact_cap = 14;  // Ising entropy by enumeration up to this size, annealed above
  AnnealSchedule anneal = AnnealSchedule::geometric();
  std::size_t n_outer_ising = 100000;
  std::size_t n_outer_dg = 20000;
  std::size_t n_pmf_dg = 1000000;
  std::uint64_t seed = 0;
};

struct SweepRow {
  std::size_t size = 0;
  EntropyEstimate ising;
  EntropyEstimate dg;
  bool ising_converged = false;
};

/// Ising and DG entropies of the nested subsystems {0..k-1} for each k in sizes.
inline std::vector<SweepRow> entropy_size_sweep(const MomentConstraints& c, std::span<const std::size_t> sizes,
                                                const SweepConfig& cfg) {
  for (auto k : sizes)
    if (k < 1 || k > c.dimension()) throw UsageError("entropy sweep: size outside 1..dimension");
  std::vector<SweepRow> rows(sizes.size());
  for (std::size_t r = 0; r < sizes.size(); ++r) {
    const std::size_t k = sizes[r];
    const MomentConstraints sub = c.prefix(k);
    TrainConfig train = k <= cfg.train.enumeration_cap ? cfg.train : cfg.gibbs_train;
    train.samples_per_iter.seed = derive_seed(cfg.seed, "sweep_fit", k);
    const FitReport fit = fit_ml(sub, train);
    rows[r].size = k;
    rows[r].ising_converged = fit.converged;
    if (k <= cfg.exact_cap) {
      rows[r].ising = ising_entropy_exact(fit.final_model, std::max(cfg.exact_cap, k));
    } else {
      AnnealSchedule a = cfg.anneal;
      a.seed = derive_seed(cfg.seed, "sweep_anneal", k);
      rows[r].ising = ising_entropy_annealed(fit.final_model, a, cfg.n_outer_ising);
    }
    if (!fit.converged) rows[r].ising.warnings.push_back("Ising fit did not reach the moment tolerance");
    rows[r].dg = dg_entropy_mc(fit_dg(sub), cfg.n_outer_dg, cfg.n_pmf_dg, derive_seed(cfg.seed, "sweep_dg", k));
  }
  return rows;
}

}  // namespace maxent
