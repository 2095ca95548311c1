#pragma once

// Trip-completion experiments on a road network whose links fail jointly
// according to a dichotomized Gaussian model of the hazard constraints.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "maxent/core.hpp"
#include "maxent/dg.hpp"
#include "maxent/hazard.hpp"

namespace maxent {

struct Edge {
  std::size_t u = 0;
  std::size_t v = 0;
  std::size_t component = 0;  // row in the hazard constraint system
};

/// Undirected road graph. Each edge is one hazard component; component
/// indices are 0..m-1 in edge order.
class RoadNetwork {
 public:
  RoadNetwork(std::vector<Site> nodes, const std::vector<std::pair<std::string, std::string>>& links)
      : nodes_(std::move(nodes)) {
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      if (!index_.emplace(nodes_[i].id, i).second) throw InputError("network: duplicate node id " + nodes_[i].id);
      if (nodes_[i].mode != nodes_.front().mode) throw InputError("network: mixed coordinate modes");
    }
    edges_.reserve(links.size());
    for (const auto& [a, b] : links) edges_.push_back({node_index(a), node_index(b), edges_.size()});
  }

  std::size_t node_count() const { return nodes_.size(); }
  std::size_t edge_count() const { return edges_.size(); }
  const std::vector<Site>& nodes() const { return nodes_; }
  const std::vector<Edge>& edges() const { return edges_; }

  std::size_t node_index(const std::string& id) const {
    const auto it = index_.find(id);
    if (it == index_.end()) throw InputError("network: unknown node id " + id);
    return it->second;
  }

 private:
  std::vector<Site> nodes_;
  std::vector<Edge> edges_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// rows x cols lattice with `spacing_km` between neighbours, lower-left node at (x0, y0).
inline RoadNetwork make_grid_network(std::size_t rows, std::size_t cols, double spacing_km, double x0 = 0.0,
                                     double y0 = 0.0) {
  if (rows < 1 || cols < 1 || !(spacing_km > 0)) throw UsageError("grid: rows, cols >= 1 and spacing > 0 required");
  auto id = [](std::size_t r, std::size_t c) { return "n" + std::to_string(r) + "_" + std::to_string(c); };
  std::vector<Site> nodes;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      nodes.push_back(Site::planar(id(r, c), x0 + spacing_km * static_cast<double>(c),
                                   y0 + spacing_km * static_cast<double>(r)));
  std::vector<std::pair<std::string, std::string>> links;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c + 1 < cols; ++c) links.emplace_back(id(r, c), id(r, c + 1));
  for (std::size_t r = 0; r + 1 < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) links.emplace_back(id(r, c), id(r + 1, c));
  return RoadNetwork(std::move(nodes), links);
}

/// Where a link sits for the hazard model.
enum class LinkPlacement {
  midpoint,          ///< one point at the link midpoint
  endpoint_average,  ///< distances averaged over the link's end nodes
};

namespace detail {

inline Site midpoint(const Site& p, const Site& q) {
  return {p.id + "~" + q.id, 0.5 * (p.a + q.a), 0.5 * (p.b + q.b), p.mode};
}

}  // namespace detail

/// Hazard constraints with one component per network link.
inline MomentConstraints build_link_constraints(const RoadNetwork& net, const HazardScenario& s,
                                                LinkPlacement placement = LinkPlacement::midpoint) {
  const auto& nodes = net.nodes();
  const auto& edges = net.edges();
  if (edges.empty()) throw InputError("network: no links");
  std::vector<double> r(edges.size());
  if (placement == LinkPlacement::midpoint) {
    std::vector<Site> mids;
    mids.reserve(edges.size());
    for (const auto& e : edges) mids.push_back(detail::midpoint(nodes[e.u], nodes[e.v]));
    return build_constraints(mids, s);
  }
  for (std::size_t k = 0; k < edges.size(); ++k)
    r[k] = 0.5 * (site_distance(nodes[edges[k].u], s.epicenter) + site_distance(nodes[edges[k].v], s.epicenter));
  return build_constraints_from_distances(
      r,
      [&](std::size_t i, std::size_t j) {
        const Edge& a = edges[i];
        const Edge& b = edges[j];
        return 0.25 * (site_distance(nodes[a.u], nodes[b.u]) + site_distance(nodes[a.u], nodes[b.v]) +
                       site_distance(nodes[a.v], nodes[b.u]) + site_distance(nodes[a.v], nodes[b.v]));
      },
      s);
}

struct IpfResult {
  Matrix od;
  std::size_t iterations = 0;
  double error = 0.0;  // Σ_j |target_D_j − Σ_i OD_ij| after the last iteration
  bool converged = false;
};

/// Alternating column/row scaling of `init` toward the target origin (row)
/// and destination (column) totals, stopping when the column error is <= eps0.
/// Marginals whose totals disagree are rescaled (columns to the row total)
/// with a warning unless `strict`, in which case they are rejected.
inline IpfResult ipf_adjust(const Matrix& init, const Vector& target_o, const Vector& target_d, double eps0 = 1e-6,
                            std::size_t max_iters = 10000, bool strict = false) {
  const auto n_rows = init.rows(), n_cols = init.cols();
  if (target_o.size() != n_rows || target_d.size() != n_cols) throw InputError("ipf: target lengths do not match matrix");
  if ((init.array() < 0.0).any() || !init.allFinite()) throw InputError("ipf: init must be finite and non-negative");
  if ((target_o.array() < 0.0).any() || (target_d.array() < 0.0).any())
    throw InputError("ipf: targets must be non-negative");
  if (!(eps0 > 0.0) || max_iters < 1) throw UsageError("ipf: eps0 > 0 and max_iters >= 1 required");
  Vector col_target = target_d;
  const double sum_o = target_o.sum(), sum_d = target_d.sum();
  if (std::abs(sum_o - sum_d) > 1e-9 * std::max({1.0, std::abs(sum_o), std::abs(sum_d)})) {
    std::ostringstream os;
    os << "ipf: origin total " << sum_o << " differs from destination total " << sum_d;
    if (strict || sum_d == 0.0) throw InputError(os.str());
    warn(os.str() + "; destination targets rescaled to the origin total");
    col_target *= sum_o / sum_d;
  }
  for (Eigen::Index i = 0; i < n_rows; ++i)
    if (init.row(i).sum() == 0.0 && target_o(i) > 0.0)
      throw InputError("ipf: row " + std::to_string(i) + " of init is zero but its target is positive");
  for (Eigen::Index j = 0; j < n_cols; ++j)
    if (init.col(j).sum() == 0.0 && col_target(j) > 0.0)
      throw InputError("ipf: column " + std::to_string(j) + " of init is zero but its target is positive");

  IpfResult out;
  out.od = init;
  Matrix& od = out.od;
  for (std::size_t it = 0; it < max_iters; ++it) {
    for (Eigen::Index j = 0; j < n_cols; ++j) {
      const double s = od.col(j).sum();
      if (s > 0.0) od.col(j) *= col_target(j) / s;
    }
    for (Eigen::Index i = 0; i < n_rows; ++i) {
      const double s = od.row(i).sum();
      if (s > 0.0) od.row(i) *= target_o(i) / s;
    }
    double err = 0.0;
    for (Eigen::Index j = 0; j < n_cols; ++j) err += std::abs(col_target(j) - od.col(j).sum());
    out.iterations = it + 1;
    out.error = err;
    if (err <= eps0) {
      out.converged = true;
      break;
    }
  }
  if (!out.converged) warn("ipf: did not reach eps0 within max_iters");
  return out;
}

/// Zone-level demand with the node-to-zone assignment.
struct ODMatrix {
  Matrix demand;                   // zones x zones, non-negative
  std::vector<std::string> zones;  // zone ids in matrix order
  std::unordered_map<std::string, std::string> zone_of_node;

  void validate() const {
    if (demand.rows() != static_cast<Eigen::Index>(zones.size()) || demand.cols() != demand.rows())
      throw InputError("od: demand must be zones x zones");
    if ((demand.array() < 0.0).any()) throw InputError("od: negative demand");
  }
};

struct OdPair {
  std::size_t origin = 0;
  std::size_t destination = 0;
  double weight = 1.0;
};

struct OdExpansion {
  std::vector<OdPair> pairs;
  std::vector<std::size_t> representatives;  // node index per zone
  std::size_t self_pairs = 0;                // origin node == destination node; always completed
};

/// One node pair per zone pair with positive demand, between the nodes
/// nearest each zone's centroid (ties to the lower node index); weight = demand.
inline OdExpansion od_pairs_from_matrix(const ODMatrix& od, const RoadNetwork& net) {
  od.validate();
  const std::size_t n_zones = od.zones.size();
  std::unordered_map<std::string, std::size_t> zone_index;
  for (std::size_t z = 0; z < n_zones; ++z) zone_index.emplace(od.zones[z], z);
  std::vector<std::vector<std::size_t>> members(n_zones);
  for (std::size_t v = 0; v < net.node_count(); ++v) {
    const auto it = od.zone_of_node.find(net.nodes()[v].id);
    if (it == od.zone_of_node.end()) throw InputError("od: node " + net.nodes()[v].id + " has no zone");
    const auto z = zone_index.find(it->second);
    if (z == zone_index.end()) throw InputError("od: node " + net.nodes()[v].id + " maps to unknown zone " + it->second);
    members[z->second].push_back(v);
  }
  OdExpansion out;
  out.representatives.resize(n_zones);
  for (std::size_t z = 0; z < n_zones; ++z) {
    if (members[z].empty()) throw InputError("od: zone " + od.zones[z] + " contains no nodes");
    Site centroid = net.nodes()[members[z].front()];
    centroid.a = centroid.b = 0.0;
    for (auto v : members[z]) {
      centroid.a += net.nodes()[v].a;
      centroid.b += net.nodes()[v].b;
    }
    centroid.a /= static_cast<double>(members[z].size());
    centroid.b /= static_cast<double>(members[z].size());
    std::size_t best = members[z].front();
    double best_d = site_distance(centroid, net.nodes()[best]);
    for (auto v : members[z]) {
      const double dist = site_distance(centroid, net.nodes()[v]);
      if (dist < best_d) {
        best = v;
        best_d = dist;
      }
    }
    out.representatives[z] = best;
  }
  for (std::size_t a = 0; a < n_zones; ++a)
    for (std::size_t b = 0; b < n_zones; ++b) {
      const double w = od.demand(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
      if (w <= 0.0) continue;
      out.pairs.push_back({out.representatives[a], out.representatives[b], w});
      if (out.representatives[a] == out.representatives[b]) ++out.self_pairs;
    }
  return out;
}

class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n), rank_(n, 0) { std::iota(parent_.begin(), parent_.end(), 0); }

  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (rank_[a] < rank_[b]) std::swap(a, b);
    parent_[b] = a;
    if (rank_[a] == rank_[b]) ++rank_[a];
  }

 private:
  std::vector<std::size_t> parent_;
  std::vector<unsigned char> rank_;
};

struct TripOutcome {
  double completion_rate = 0.0;
  double removal_rate = 0.0;
};

/// Fraction of OD pairs (demand-weighted unless `weighted` is false) still
/// connected once the failed links are removed, and the fraction of links failed.
inline TripOutcome trip_completion(const RoadNetwork& net, std::span<const std::uint8_t> failed,
                                   std::span<const OdPair> pairs, bool weighted = true) {
  if (failed.size() != net.edge_count()) throw InputError("trip_completion: failure vector length != edge count");
  if (pairs.empty()) throw InputError("trip_completion: empty OD pair list");
  DisjointSets sets(net.node_count());
  std::size_t n_failed = 0;
  for (const auto& e : net.edges()) {
    if (failed[e.component])
      ++n_failed;
    else
      sets.unite(e.u, e.v);
  }
  double connected = 0.0, total = 0.0;
  for (const auto& p : pairs) {
    const double w = weighted ? p.weight : 1.0;
    total += w;
    if (sets.find(p.origin) == sets.find(p.destination)) connected += w;
  }
  TripOutcome out;
  out.completion_rate = total > 0.0 ? connected / total : 0.0;
  out.removal_rate = static_cast<double>(n_failed) / static_cast<double>(net.edge_count());
  return out;
}

/// Link failures for each replicate, drawn from the DG model.
inline SampleSet sample_failures(const DGModel& model, const RoadNetwork& net, std::size_t n_reps, std::uint64_t seed) {
  if (model.dimension() != net.edge_count()) throw InputError("sample_failures: model dimension != edge count");
  return sample_dg(model, n_reps, seed);
}

enum class CorrelationMode { correlated, independent };

inline const char* to_string(CorrelationMode m) { return m == CorrelationMode::correlated ? "correlated" : "independent"; }

/// Counts on a fixed bins x bins grid over [0, 1]²; x = removal rate, y = completion rate.
struct Histogram2D {
  std::size_t bins = 50;
  std::vector<std::uint64_t> counts = std::vector<std::uint64_t>(bins * bins, 0);

  static std::size_t bin_of(double v, std::size_t bins) {
    const auto b = static_cast<std::size_t>(std::clamp(v, 0.0, 1.0) * static_cast<double>(bins));
    return std::min(b, bins - 1);
  }
  void add(double x, double y) { ++counts[bin_of(x, bins) * bins + bin_of(y, bins)]; }
  std::uint64_t at(std::size_t xb, std::size_t yb) const { return counts[xb * bins + yb]; }
};

struct TripExperimentResult {
  double magnitude = 0.0;
  CorrelationMode mode = CorrelationMode::correlated;
  std::vector<TripOutcome> replicates;
  Histogram2D histogram;
  RepairLog repair_log;

  /// Fraction of replicates with completion rate in [lo, hi].
  double completion_mass(double lo, double hi) const {
    std::size_t n = 0;
    for (const auto& r : replicates)
      if (r.completion_rate >= lo && r.completion_rate <= hi) ++n;
    return replicates.empty() ? 0.0 : static_cast<double>(n) / static_cast<double>(replicates.size());
  }
};

struct PhaseOptions {
  LinkPlacement placement = LinkPlacement::midpoint;
  bool weighted = true;
  std::size_t histogram_bins = 50;
};

/// For each magnitude: hazard constraints on the links, a DG fit (correlated)
/// or Λ = I with the same means (independent), n_reps failure draws and the
/// per-replicate (removal, completion) rates.
inline std::vector<TripExperimentResult> phase_experiment(const RoadNetwork& net, std::span<const OdPair> pairs,
                                                          const HazardScenario& base, std::span<const double> magnitudes,
                                                          std::size_t n_reps, std::uint64_t seed, CorrelationMode mode,
                                                          const PhaseOptions& opt = {}) {
  if (n_reps < 1) throw UsageError("phase: n_reps must be >= 1");
  std::vector<TripExperimentResult> out;
  for (std::size_t m = 0; m < magnitudes.size(); ++m) {
    HazardScenario s = base;
    s.magnitude = magnitudes[m];
    const MomentConstraints c = build_link_constraints(net, s, opt.placement);
    const DGModel model = mode == CorrelationMode::correlated ? fit_dg(c) : DGModel::independent(c.means());
    const SampleSet failures = sample_failures(model, net, n_reps, derive_seed(seed, "phase", m));
    TripExperimentResult r;
    r.magnitude = s.magnitude;
    r.mode = mode;
    r.repair_log = model.repair_log();
    r.histogram = Histogram2D{opt.histogram_bins};
    r.replicates.resize(n_reps);
    parallel_for(n_reps, [&](std::size_t k) { r.replicates[k] = trip_completion(net, failures[k], pairs, opt.weighted); });
    for (const auto& o : r.replicates) r.histogram.add(o.removal_rate, o.completion_rate);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace maxent
