// End-to-end walk through the library on a small synthetic city:
// hazard constraints for a handful of sites, Ising and DG fits with their
// entropies, then trip completion on a grid network in both correlation modes.
//
//   hazard_network_demo [magnitude] [seed]

#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include "maxent/maxent.hpp"

using namespace maxent;

namespace {

void print_row(const char* label, const Vector& v) {
  std::printf("  %-10s", label);
  for (Eigen::Index i = 0; i < v.size(); ++i) std::printf(" %6.3f", v(i));
  std::printf("\n");
}

}  // namespace

int main(int argc, char** argv) {
  const double magnitude = argc > 1 ? std::atof(argv[1]) : 7.0;
  const std::uint64_t seed = argc > 2 ? std::strtoull(argv[2], nullptr, 10) : 1;

  HazardScenario scenario;
  scenario.magnitude = magnitude;
  scenario.epicenter = Site::planar("epicenter", 0.0, 0.0);

  std::vector<Site> sites;
  for (int k = 0; k < 8; ++k) sites.push_back(Site::planar("b" + std::to_string(k), 1.5 * (k % 4) + 1.0, 2.0 * (k / 4)));

  const MomentConstraints c = build_constraints(sites, scenario);
  std::printf("M %.1f, %zu sites\n", magnitude, sites.size());
  print_row("P(fail)", c.means());

  TrainConfig train;
  train.expectation = ModelExpectation::exact;
  train.learning_rate = 0.5;
  train.max_iters = 20000;
  train.moment_tolerance = 1e-8;
  const FitReport ising = fit_ml(c, train);
  const DGModel dg = fit_dg(c);
  std::printf("ising fit: %zu iterations, residual %.2e\n", ising.iterations_used, ising.residual_trace.back());

  const SecondMomentMatrix dg_moments = estimate_moments(sample_dg(dg, 200000, derive_seed(seed, "demo_dg")));
  print_row("DG mean", dg_moments.means());

  const double h_ind = [&] {
    double h = 0;
    for (Eigen::Index i = 0; i < c.means().size(); ++i) h += binary_entropy(c.means()(i));
    return h;
  }();
  const EntropyEstimate h_ising = ising_entropy_exact(ising.final_model);
  const EntropyEstimate h_dg = dg_entropy_enumerated(dg, 1000000, derive_seed(seed, "demo_entropy"));
  std::printf("entropy (nats): independent %.4f  ising %.4f  dg %.4f +- %.4f\n", h_ind, h_ising.value, h_dg.value,
              h_dg.std_error);

  // Trip completion on a 10 x 10 grid with four demand zones.
  constexpr std::size_t n = 10, zones = 2;
  const RoadNetwork net = make_grid_network(n, n, 0.3);
  ODMatrix od;
  for (std::size_t z = 0; z < zones * zones; ++z) od.zones.push_back("z" + std::to_string(z));
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t col = 0; col < n; ++col)
      od.zone_of_node[net.nodes()[r * n + col].id] = od.zones[(r * zones / n) * zones + col * zones / n];
  Matrix init = Matrix::Ones(zones * zones, zones * zones);
  init.diagonal().setZero();
  const Vector totals = Vector::Constant(zones * zones, 50.0);
  od.demand = ipf_adjust(init, totals, totals).od;
  const auto pairs = od_pairs_from_matrix(od, net);

  HazardScenario city = scenario;
  city.epicenter = Site::planar("epicenter", 1.35, 1.35);
  const std::vector<double> mags{magnitude};
  ScopedWarningHandler quiet([](const std::string&) {});
  std::printf("trip completion, %zu links, 1000 replicates\n", net.edges().size());
  for (auto mode : {CorrelationMode::correlated, CorrelationMode::independent}) {
    const auto res = phase_experiment(net, pairs.pairs, city, mags, 1000, derive_seed(seed, "demo_phase"), mode);
    double removal = 0, completion = 0;
    for (const auto& o : res[0].replicates) {
      removal += o.removal_rate;
      completion += o.completion_rate;
    }
    const double k = static_cast<double>(res[0].replicates.size());
    std::printf("  %-11s mean removal %.3f  mean completion %.3f  mass in [0,0.2] %.3f  in [0.8,1] %.3f\n",
                to_string(mode), removal / k, completion / k, res[0].completion_mass(0.0, 0.2),
                res[0].completion_mass(0.8, 1.0));
  }
}
