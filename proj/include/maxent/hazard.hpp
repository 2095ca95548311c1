#pragma once

// Seismic hazard model producing moment constraints for spatially
// distributed components: an attenuation relation for mean log-PGA demand, a
// lognormal fragility curve, and a PGA correlation model split into
// inter-event and distance-dependent intra-event parts.

#include <cmath>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "maxent/core.hpp"
#include "maxent/normal.hpp"

namespace maxent {

enum class CoordinateMode { geographic, planar };

/// A component location: (latitude, longitude) in degrees or (x, y) in km.
struct Site {
  std::string id;
  double a = 0.0;  // latitude or x_km
  double b = 0.0;  // longitude or y_km
  CoordinateMode mode = CoordinateMode::planar;

  static Site planar(std::string id, double x_km, double y_km) {
    return {std::move(id), x_km, y_km, CoordinateMode::planar};
  }
  static Site geographic(std::string id, double lat, double lon) {
    if (lat < -90.0 || lat > 90.0 || lon < -180.0 || lon > 180.0)
      throw InputError("site " + id + ": latitude/longitude out of range");
    return {std::move(id), lat, lon, CoordinateMode::geographic};
  }
};

inline constexpr double kEarthRadiusKm = 6371.0;
inline constexpr double kCalibrationMagnitude = 8.5;

/// Great-circle (haversine) distance for geographic sites, Euclidean for planar.
inline double site_distance(const Site& p, const Site& q) {
  if (p.mode != q.mode) throw InputError("site_distance: mixed coordinate modes (" + p.id + ", " + q.id + ")");
  if (p.mode == CoordinateMode::planar) return std::hypot(p.a - q.a, p.b - q.b);
  constexpr double rad = std::numbers::pi / 180.0;
  const double dlat = (q.a - p.a) * rad;
  const double dlon = (q.b - p.b) * rad;
  const double h = std::sin(dlat / 2) * std::sin(dlat / 2) +
                   std::cos(p.a * rad) * std::cos(q.a * rad) * std::sin(dlon / 2) * std::sin(dlon / 2);
  return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(h)));
}

struct HazardScenario {
  double magnitude = 6.5;
  Site epicenter{};
  double sigma_D_sq = 0.32;             // demand variance
  double sigma_C_sq = 0.48;             // capacity variance
  double mean_capacity = std::log(0.85);  // C̄, log g
  double sigma_eta_sq = 0.07;           // inter-event variance
  double sigma_eps_sq = 0.25;           // intra-event variance

  void validate() const {
    if (!(sigma_D_sq > 0 && sigma_C_sq > 0 && sigma_eta_sq > 0 && sigma_eps_sq > 0))
      throw InputError("scenario: all variances must be positive");
    if (std::abs(sigma_eta_sq + sigma_eps_sq - sigma_D_sq) > 1e-12)
      throw InputError("scenario: sigma_eta_sq + sigma_eps_sq must equal sigma_D_sq");
    if (!std::isfinite(magnitude) || !std::isfinite(mean_capacity)) throw InputError("scenario: non-finite parameter");
  }
};

/// Mean log-PGA demand at epicentral distance r (km).
inline double attenuation(double magnitude, double r_km) {
  if (r_km < 0.0) throw InputError("attenuation: negative distance");
  const double s = r_km * r_km + 1.35 * 1.35;
  return -0.5265 + (-0.3303 + 0.0599 * (magnitude - 4.5)) * std::log(s) - 0.0115 * std::sqrt(s);
}

/// Φ((D̄ − C̄) / sqrt(σ_D² + σ_C²)).
inline double failure_probability(double mean_demand, const HazardScenario& s) {
  return normal_cdf((mean_demand - s.mean_capacity) / std::sqrt(s.sigma_D_sq + s.sigma_C_sq));
}

/// Intra-event residual correlation exp(−0.27 Δ^0.40).
inline double intra_event_corr(double delta_km) {
  if (delta_km < 0.0) throw InputError("intra_event_corr: negative distance");
  return std::exp(-0.27 * std::pow(delta_km, 0.40));
}

/// PGA correlation σ_η²/σ_D² + ρ_εε(Δ) σ_ε²/σ_D².
inline double pga_corr(double delta_km, const HazardScenario& s) {
  return (s.sigma_eta_sq + intra_event_corr(delta_km) * s.sigma_eps_sq) / s.sigma_D_sq;
}

/// Component-state correlation; the capacity term enters only on the diagonal.
inline double component_corr(std::size_t i, std::size_t j, double delta_km, const HazardScenario& s) {
  const double cap = i == j ? s.sigma_C_sq : 0.0;
  return (s.sigma_D_sq * pga_corr(delta_km, s) + cap) / (s.sigma_D_sq + s.sigma_C_sq);
}

/// Means and correlations for components at the given distances. `epicentral`
/// holds r_i; `pairwise(i, j)` returns Δ_ij.
template <class PairDistance>
MomentConstraints build_constraints_from_distances(std::span<const double> epicentral, PairDistance&& pairwise,
                                                   const HazardScenario& s) {
  s.validate();
  if (epicentral.empty()) throw InputError("build_constraints: no components");
  if (s.magnitude > kCalibrationMagnitude) {
    std::ostringstream os;
    os << "magnitude " << s.magnitude << " is above the attenuation model's calibration range (M_w <= "
       << kCalibrationMagnitude << ")";
    warn(os.str());
  }
  const auto d = static_cast<Eigen::Index>(epicentral.size());
  Vector mu(d);
  for (Eigen::Index i = 0; i < d; ++i) mu(i) = failure_probability(attenuation(s.magnitude, epicentral[i]), s);
  Matrix rho = Matrix::Identity(d, d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = i + 1; j < d; ++j)
      rho(i, j) = rho(j, i) =
          component_corr(static_cast<std::size_t>(i), static_cast<std::size_t>(j),
                         pairwise(static_cast<std::size_t>(i), static_cast<std::size_t>(j)), s);
  MomentConstraints c(std::move(mu), std::move(rho));
  require_feasible(c);
  return c;
}

/// Point components at the site locations.
inline MomentConstraints build_constraints(std::span<const Site> sites, const HazardScenario& s) {
  std::vector<double> r(sites.size());
  for (std::size_t i = 0; i < sites.size(); ++i) r[i] = site_distance(sites[i], s.epicenter);
  return build_constraints_from_distances(
      r, [&](std::size_t i, std::size_t j) { return site_distance(sites[i], sites[j]); }, s);
}

}  // namespace maxent
