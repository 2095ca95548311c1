// Batch command-line front end. Every command reads files, writes into the
// --out directory and leaves a manifest.json describing the run.

#include <chrono>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <thread>

#include <CLI11.hpp>
#include <openssl/evp.h>

#include "maxent/maxent.hpp"

#ifndef MAXENT_VERSION
#define MAXENT_VERSION "0.0.0"
#endif

namespace {

using namespace maxent;
using io::json;
namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitInput = 3;
constexpr int kExitNumerical = 4;

std::string sha256_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw InputError("cannot open " + p.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream os;
  for (unsigned i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return os.str();
}

// Digests of a file, or of every regular file in a directory (manifest excluded) in name order.
void add_digests(json& inputs, const fs::path& p) {
  if (fs::is_directory(p)) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(p))
      if (e.is_regular_file() && e.path().filename() != "manifest.json") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) inputs.push_back(json{{"path", f.string()}, {"sha256", sha256_file(f)}});
  } else {
    inputs.push_back(json{{"path", p.string()}, {"sha256", sha256_file(p)}});
  }
}

/// Overlays `file` onto `defaults`, rejecting keys the command does not know.
void merge_config(json& defaults, const json& file, const std::string& where) {
  if (!file.is_object()) throw UsageError(where + ": expected a JSON object");
  for (auto it = file.begin(); it != file.end(); ++it) {
    if (!defaults.contains(it.key())) throw UsageError(where + ": unknown config key '" + it.key() + "'");
    json& slot = defaults[it.key()];
    if (slot.is_object() && it.value().is_object() && !slot.empty())
      merge_config(slot, it.value(), where + "." + it.key());
    else
      slot = it.value();
  }
}

template <class T>
T cfg_get(const json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw UsageError(std::string("config: field '") + key + "': " + e.what());
  }
}

struct Globals {
  std::uint64_t seed = 0;
  unsigned threads = 0;
  std::string out = "out";
  std::string config;
  bool manifest_only = false;
};

struct Run {
  std::string command;
  json config;
  json inputs = json::array();
  json outputs = json::array();
  std::vector<std::string> warnings;
};

GibbsConfig gibbs_from_json(const json& j) {
  GibbsConfig g;
  g.n_samples = cfg_get<std::size_t>(j, "n_samples");
  g.burn_in = cfg_get<std::size_t>(j, "burn_in");
  g.thinning = cfg_get<std::size_t>(j, "thinning");
  g.chains = cfg_get<std::size_t>(j, "chains");
  const auto scan = cfg_get<std::string>(j, "scan");
  if (scan == "sequential")
    g.scan = ScanOrder::sequential;
  else if (scan == "random")
    g.scan = ScanOrder::random_site;
  else
    throw UsageError("config: scan must be 'sequential' or 'random'");
  g.validate();
  return g;
}

json gibbs_defaults() {
  const GibbsConfig g;
  return json{{"n_samples", g.n_samples},
              {"burn_in", g.burn_in},
              {"thinning", g.thinning},
              {"chains", g.chains},
              {"scan", "sequential"}};
}

json train_defaults(const TrainConfig& t = {}) {
  return json{{"learning_rate", t.learning_rate},
              {"max_iters", t.max_iters},
              {"moment_tolerance", t.moment_tolerance},
              {"cd_steps", t.cd_steps},
              {"expectation", t.expectation == ModelExpectation::exact   ? "exact"
                              : t.expectation == ModelExpectation::gibbs ? "gibbs"
                                                                         : "automatic"},
              {"enumeration_cap", t.enumeration_cap},
              {"decay", t.decay},
              {"coupling_limit", t.coupling_limit},
              {"gibbs", gibbs_defaults()}};
}

TrainConfig train_from_json(const json& j, std::uint64_t seed) {
  TrainConfig t;
  t.learning_rate = cfg_get<double>(j, "learning_rate");
  t.max_iters = cfg_get<std::size_t>(j, "max_iters");
  t.moment_tolerance = cfg_get<double>(j, "moment_tolerance");
  t.cd_steps = cfg_get<std::size_t>(j, "cd_steps");
  const auto e = cfg_get<std::string>(j, "expectation");
  if (e == "automatic")
    t.expectation = ModelExpectation::automatic;
  else if (e == "exact")
    t.expectation = ModelExpectation::exact;
  else if (e == "gibbs")
    t.expectation = ModelExpectation::gibbs;
  else
    throw UsageError("config: expectation must be automatic, exact or gibbs");
  t.enumeration_cap = cfg_get<std::size_t>(j, "enumeration_cap");
  t.decay = cfg_get<bool>(j, "decay");
  t.coupling_limit = cfg_get<double>(j, "coupling_limit");
  t.samples_per_iter = gibbs_from_json(j.at("gibbs"));
  t.samples_per_iter.seed = derive_seed(seed, "fit");
  t.validate();
  return t;
}

json anneal_defaults() {
  const AnnealSchedule a;
  return json{{"n_steps", 100}, {"base", 1.6}, {"span", 20.0}, {"samples_per_step", a.samples_per_step},
              {"burn_in", a.burn_in}, {"min_ess_fraction", a.min_ess_fraction}};
}

AnnealSchedule anneal_from_json(const json& j, std::uint64_t seed) {
  AnnealSchedule a = AnnealSchedule::geometric(cfg_get<std::size_t>(j, "n_steps"), cfg_get<double>(j, "base"),
                                               cfg_get<double>(j, "span"));
  a.samples_per_step = cfg_get<std::size_t>(j, "samples_per_step");
  a.burn_in = cfg_get<std::size_t>(j, "burn_in");
  a.min_ess_fraction = cfg_get<double>(j, "min_ess_fraction");
  a.seed = seed;
  a.validate();
  return a;
}

std::vector<double> parse_number_list(const std::string& s, const char* what) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw UsageError(std::string(what) + ": not a number: '" + tok + "'");
    }
  }
  if (out.empty()) throw UsageError(std::string(what) + ": empty list");
  return out;
}

// Command bodies. Each receives the resolved config and returns nothing; it
// records inputs/outputs on `run`.

struct HazardArgs {
  std::string sites, scenario;
};

void cmd_hazard(const HazardArgs& a, const Globals& g, Run& run, bool execute) {
  add_digests(run.inputs, a.sites);
  add_digests(run.inputs, a.scenario);
  const HazardScenario s = io::read_scenario(a.scenario);
  run.config = json{{"scenario", io::scenario_json(s)}};
  if (!execute) return;
  const auto sites = io::read_sites(a.sites);
  const MomentConstraints c = build_constraints(sites, s);
  io::write_constraints(g.out, c, json{{"source", "hazard"}, {"sites", sites.size()}, {"scenario", io::scenario_json(s)}});
  run.outputs = {"means.csv", "corr.csv", "constraints.json"};
}

struct FitArgs {
  std::string constraints, engine, train_config;
};

void cmd_fit(const FitArgs& a, const Globals& g, Run& run, bool execute) {
  if (a.engine != "ising-ml" && a.engine != "ising-cd" && a.engine != "dg")
    throw UsageError("fit: engine must be ising-ml, ising-cd or dg (got '" + a.engine + "')");
  add_digests(run.inputs, a.constraints);
  json cfg = json{{"engine", a.engine}};
  if (a.engine != "dg") {
    cfg["train"] = train_defaults();
    if (a.engine == "ising-cd") cfg["data_samples"] = 100000;
  }
  if (!a.train_config.empty()) {
    add_digests(run.inputs, a.train_config);
    json file = io::read_json(a.train_config);
    if (a.engine == "dg" && !file.empty()) throw UsageError("fit: engine dg takes no training options");
    json train_part = file;
    if (a.engine == "ising-cd" && file.contains("data_samples")) {
      cfg["data_samples"] = file["data_samples"];
      train_part.erase("data_samples");
    }
    if (a.engine != "dg") merge_config(cfg["train"], train_part, a.train_config);
  }
  run.config = cfg;
  TrainConfig train;
  if (a.engine != "dg") train = train_from_json(cfg["train"], g.seed);
  if (!execute) return;

  const MomentConstraints c = io::read_constraints(a.constraints);
  if (a.engine == "dg") {
    const DGModel m = fit_dg(c);
    io::write_dg_model(g.out, m);
    io::write_json(fs::path(g.out) / "fit_report.json",
                   json{{"method", "dg"}, {"converged", true}, {"repair_log", io::repair_log_json(m.repair_log())},
                        {"config", cfg}});
    run.outputs = {"model.json", "gamma.csv", "lambda.csv", "fit_report.json"};
    return;
  }
  FitReport report;
  if (a.engine == "ising-ml") {
    report = fit_ml(c, train);
  } else {
    const auto n = cfg_get<std::size_t>(cfg, "data_samples");
    const SampleSet data = synthesize_data(c, n, derive_seed(g.seed, "fit_data"));
    report = fit_cd(data, train);
  }
  io::write_ising_model(g.out, report.final_model);
  io::write_json(fs::path(g.out) / "fit_report.json", io::fit_report_json(report, cfg));
  run.outputs = {"model.json", "coupling.csv", "fit_report.json"};
}

struct SampleArgs {
  std::string model;
  std::size_t n = 10000;
};

void cmd_sample(const SampleArgs& a, const Globals& g, Run& run, bool execute) {
  add_digests(run.inputs, a.model);
  json cfg = json{{"n", a.n}, {"gibbs", gibbs_defaults()}};
  if (!g.config.empty()) {
    add_digests(run.inputs, g.config);
    merge_config(cfg, io::read_json(g.config), g.config);
  }
  run.config = cfg;
  GibbsConfig gibbs = gibbs_from_json(cfg["gibbs"]);
  gibbs.n_samples = cfg_get<std::size_t>(cfg, "n");
  gibbs.seed = derive_seed(g.seed, "sample");
  if (gibbs.n_samples < 1) throw UsageError("sample: n must be >= 1");
  if (!execute) return;
  const std::string type = io::model_type(a.model);
  const SampleSet s = type == "ising" ? gibbs_sample(io::read_ising_model(a.model), gibbs)
                                      : sample_dg(io::read_dg_model(a.model), gibbs.n_samples, gibbs.seed);
  io::write_samples(fs::path(g.out) / "samples.csv", s, g.seed);
  run.outputs = {"samples.csv"};
}

struct EntropyArgs {
  std::string input, method;
  std::string sizes = "2,3,4,5,6,7,8,9,10,11,12";
  bool bits = false;
};

void cmd_entropy(const EntropyArgs& a, const Globals& g, Run& run, bool execute) {
  if (a.method != "exact" && a.method != "annealed" && a.method != "mc" && a.method != "sweep")
    throw UsageError("entropy: method must be exact, annealed, mc or sweep");
  add_digests(run.inputs, a.input);
  const SweepConfig sweep_defaults;
  json cfg = json{{"method", a.method},
                  {"units", a.bits ? "bits" : "nats"},
                  {"enumeration_cap", kDefaultEnumerationCap},
                  {"anneal", anneal_defaults()},
                  {"n_outer", 100000},
                  {"outer_burn_in", 20000},
                  {"n_pmf", 1000000},
                  {"sizes", a.sizes},
                  {"sweep",
                   json{{"train", train_defaults(sweep_defaults.train)},
                        {"gibbs_train", train_defaults(sweep_defaults.gibbs_train)},
                        {"exact_cap", sweep_defaults.exact_cap},
                        {"n_outer_ising", sweep_defaults.n_outer_ising},
                        {"n_outer_dg", sweep_defaults.n_outer_dg},
                        {"n_pmf_dg", sweep_defaults.n_pmf_dg}}}};
  if (!g.config.empty()) {
    add_digests(run.inputs, g.config);
    merge_config(cfg, io::read_json(g.config), g.config);
  }
  run.config = cfg;
  const auto cap = cfg_get<std::size_t>(cfg, "enumeration_cap");
  const AnnealSchedule anneal = anneal_from_json(cfg["anneal"], derive_seed(g.seed, "entropy_anneal"));
  const double scale = a.bits ? 1.0 / std::numbers::ln2 : 1.0;
  const bool is_model = fs::exists(fs::path(a.input) / "model.json");

  if (a.method == "sweep") {
    if (is_model) throw UsageError("entropy: sweep needs a constraints directory");
    std::vector<std::size_t> sizes;
    for (double v : parse_number_list(cfg_get<std::string>(cfg, "sizes"), "sizes")) {
      if (v < 1 || v != std::floor(v)) throw UsageError("sizes: entries must be positive integers");
      sizes.push_back(static_cast<std::size_t>(v));
    }
    const json& sj = cfg["sweep"];
    SweepConfig sc;
    sc.train = train_from_json(sj["train"], g.seed);
    sc.gibbs_train = train_from_json(sj["gibbs_train"], g.seed);
    sc.exact_cap = cfg_get<std::size_t>(sj, "exact_cap");
    sc.anneal = anneal;
    sc.n_outer_ising = cfg_get<std::size_t>(sj, "n_outer_ising");
    sc.n_outer_dg = cfg_get<std::size_t>(sj, "n_outer_dg");
    sc.n_pmf_dg = cfg_get<std::size_t>(sj, "n_pmf_dg");
    sc.seed = derive_seed(g.seed, "entropy_sweep");
    if (!execute) return;
    const MomentConstraints c = io::read_constraints(a.input);
    const auto rows = entropy_size_sweep(c, sizes, sc);
    io::write_sweep_csv(fs::path(g.out) / "sweep.csv", rows, a.bits);
    json table = json::array();
    for (const auto& r : rows) {
      json ji = io::entropy_json(r.ising), jd = io::entropy_json(r.dg);
      table.push_back(json{{"size", r.size}, {"ising", ji}, {"dg", jd}, {"ising_converged", r.ising_converged}});
    }
    io::write_json(fs::path(g.out) / "entropy.json", json{{"units", cfg["units"]}, {"sweep", table}});
    run.outputs = {"sweep.csv", "entropy.json"};
    return;
  }

  if (!is_model) throw UsageError("entropy: method " + a.method + " needs a model directory");
  const auto n_outer = cfg_get<std::size_t>(cfg, "n_outer");
  const auto n_pmf = cfg_get<std::size_t>(cfg, "n_pmf");
  const std::string type = io::model_type(a.input);
  if (type == "ising" && a.method == "mc") throw UsageError("entropy: method mc applies to dg models");
  if (type == "dg" && a.method == "annealed") throw UsageError("entropy: method annealed applies to ising models");
  EntropyEstimate e;
  if (type == "ising") {
    const IsingModel m = io::read_ising_model(a.input);
    if (a.method == "exact" && m.dimension() > cap)
      throw UsageError("entropy: exact method refused, dimension " + std::to_string(m.dimension()) +
                       " exceeds enumeration cap " + std::to_string(cap) + "; use annealed");
    if (!execute) return;
    e = a.method == "exact" ? ising_entropy_exact(m, cap)
                            : ising_entropy_annealed(m, anneal, n_outer, cfg_get<std::size_t>(cfg, "outer_burn_in"));
  } else {
    const DGModel m = io::read_dg_model(a.input);
    if (a.method == "exact" && m.dimension() > cap)
      throw UsageError("entropy: exact method refused, dimension " + std::to_string(m.dimension()) +
                       " exceeds enumeration cap " + std::to_string(cap) + "; use mc");
    if (!execute) return;
    e = a.method == "exact" ? dg_entropy_enumerated(m, n_pmf, derive_seed(g.seed, "entropy_dg"))
                            : dg_entropy_mc(m, n_outer, n_pmf, derive_seed(g.seed, "entropy_dg"));
  }
  json out = io::entropy_json(e);
  out["value"] = e.value * scale;
  out["std_error"] = e.std_error * scale;
  out["units"] = cfg["units"];
  io::write_json(fs::path(g.out) / "entropy.json", out);
  run.outputs = {"entropy.json"};
}

struct IpfArgs {
  std::string init, targets;
  double eps0 = 1e-6;
  std::size_t max_iters = 10000;
  bool strict = false;
};

void cmd_ipf(const IpfArgs& a, const Globals& g, Run& run, bool execute) {
  add_digests(run.inputs, a.init);
  add_digests(run.inputs, a.targets);
  run.config = json{{"eps0", a.eps0}, {"max_iters", a.max_iters}, {"strict", a.strict}};
  if (!(a.eps0 > 0) || a.max_iters < 1) throw UsageError("ipf: eps0 > 0 and max_iters >= 1 required");
  if (!execute) return;
  const Matrix init = io::read_matrix_csv(a.init);
  const io::OdTargets t = io::read_od_targets(a.targets);
  const IpfResult r = ipf_adjust(init, t.origin, t.destination, a.eps0, a.max_iters, a.strict);
  io::write_matrix_csv(fs::path(g.out) / "od.csv", r.od);
  io::write_json(fs::path(g.out) / "ipf_report.json",
                 json{{"iterations", r.iterations}, {"error", r.error}, {"converged", r.converged}});
  run.outputs = {"od.csv", "ipf_report.json"};
}

struct PhaseArgs {
  std::string nodes, edges, od_targets, zone_map, scenario;
  std::string magnitudes = "5.5,6.0,6.5,7.0,7.5,8.0";
  std::size_t reps = 2000;
  std::string mode = "both";
};

void cmd_phase(const PhaseArgs& a, const Globals& g, Run& run, bool execute) {
  if (a.mode != "correlated" && a.mode != "independent" && a.mode != "both")
    throw UsageError("phase: mode must be correlated, independent or both");
  for (const auto& f : {a.nodes, a.edges, a.od_targets, a.zone_map}) add_digests(run.inputs, f);
  HazardScenario scenario;
  if (!a.scenario.empty()) {
    add_digests(run.inputs, a.scenario);
    scenario = io::read_scenario(a.scenario);
  }
  json cfg = json{{"magnitudes", parse_number_list(a.magnitudes, "magnitudes")},
                  {"reps", a.reps},
                  {"mode", a.mode},
                  {"placement", "midpoint"},
                  {"weighted", true},
                  {"histogram_bins", 50},
                  {"ipf_eps0", 1e-6},
                  {"ipf_max_iters", 10000},
                  {"scenario", io::scenario_json(scenario)}};
  if (!g.config.empty()) {
    add_digests(run.inputs, g.config);
    merge_config(cfg, io::read_json(g.config), g.config);
  }
  run.config = cfg;
  scenario = io::scenario_from_json(cfg["scenario"], "config.scenario");
  PhaseOptions opt;
  const auto placement = cfg_get<std::string>(cfg, "placement");
  if (placement == "midpoint")
    opt.placement = LinkPlacement::midpoint;
  else if (placement == "endpoint_average")
    opt.placement = LinkPlacement::endpoint_average;
  else
    throw UsageError("phase: placement must be midpoint or endpoint_average");
  opt.weighted = cfg_get<bool>(cfg, "weighted");
  opt.histogram_bins = cfg_get<std::size_t>(cfg, "histogram_bins");
  if (opt.histogram_bins < 1) throw UsageError("phase: histogram_bins must be >= 1");
  const auto reps = cfg_get<std::size_t>(cfg, "reps");
  if (reps < 1) throw UsageError("phase: reps must be >= 1");
  const auto magnitudes = cfg_get<std::vector<double>>(cfg, "magnitudes");
  if (!execute) return;

  const RoadNetwork net = io::read_network(a.nodes, a.edges);
  const io::OdTargets targets = io::read_od_targets(a.od_targets);
  ODMatrix od;
  od.zones = targets.zones;
  od.zone_of_node = io::read_zone_map(a.zone_map);
  const auto nz = static_cast<Eigen::Index>(targets.zones.size());
  Matrix init = Matrix::Ones(nz, nz);
  init.diagonal().setZero();
  if (nz == 1) init.setOnes();
  od.demand = ipf_adjust(init, targets.origin, targets.destination, cfg_get<double>(cfg, "ipf_eps0"),
                         cfg_get<std::size_t>(cfg, "ipf_max_iters"))
                  .od;
  const OdExpansion pairs = od_pairs_from_matrix(od, net);
  if (pairs.self_pairs > 0)
    warn(std::to_string(pairs.self_pairs) + " OD pairs have the same origin and destination node");
  io::write_matrix_csv(fs::path(g.out) / "od.csv", od.demand);
  run.outputs.push_back("od.csv");

  std::vector<CorrelationMode> modes;
  if (a.mode != "independent") modes.push_back(CorrelationMode::correlated);
  if (a.mode != "correlated") modes.push_back(CorrelationMode::independent);
  std::ofstream jsonl(fs::path(g.out) / "replicates.jsonl", std::ios::binary);
  if (!jsonl) throw InputError("cannot write replicates.jsonl");
  run.outputs.push_back("replicates.jsonl");
  for (std::size_t mi = 0; mi < modes.size(); ++mi) {
    const auto results = phase_experiment(net, pairs.pairs, scenario, magnitudes, reps,
                                          derive_seed(g.seed, "phase_mode", mi), modes[mi], opt);
    for (const auto& r : results) {
      io::append_experiment_jsonl(jsonl, r);
      char name[96];
      std::snprintf(name, sizeof name, "hist_%s_M%.2f.csv", to_string(r.mode), r.magnitude);
      io::write_histogram_csv(fs::path(g.out) / name, r.histogram);
      run.outputs.push_back(name);
    }
  }
}

struct GridArgs {
  std::size_t rows = 15, cols = 15, zone_rows = 5, zone_cols = 5;
  double spacing = 0.2, zone_total = 100.0;
};

void cmd_grid(const GridArgs& a, const Globals& g, Run& run, bool execute) {
  run.config = json{{"rows", a.rows},           {"cols", a.cols},           {"spacing_km", a.spacing},
                    {"zone_rows", a.zone_rows}, {"zone_cols", a.zone_cols}, {"zone_total", a.zone_total}};
  if (a.zone_rows < 1 || a.zone_cols < 1 || a.zone_rows > a.rows || a.zone_cols > a.cols)
    throw UsageError("grid: zone counts must be between 1 and the grid size");
  if (!(a.zone_total > 0)) throw UsageError("grid: zone_total must be > 0");
  if (!execute) return;
  const RoadNetwork net = make_grid_network(a.rows, a.cols, a.spacing);
  std::unordered_map<std::string, std::string> zones;
  io::OdTargets targets;
  for (std::size_t zr = 0; zr < a.zone_rows; ++zr)
    for (std::size_t zc = 0; zc < a.zone_cols; ++zc) targets.zones.push_back("z" + std::to_string(zr) + "_" + std::to_string(zc));
  for (std::size_t r = 0; r < a.rows; ++r)
    for (std::size_t c = 0; c < a.cols; ++c) {
      const std::size_t zr = r * a.zone_rows / a.rows, zc = c * a.zone_cols / a.cols;
      zones[net.nodes()[r * a.cols + c].id] = targets.zones[zr * a.zone_cols + zc];
    }
  const auto nz = static_cast<Eigen::Index>(targets.zones.size());
  targets.origin = Vector::Constant(nz, a.zone_total);
  targets.destination = Vector::Constant(nz, a.zone_total);
  const fs::path out(g.out);
  io::write_network(out / "nodes.csv", out / "edges.csv", net);
  io::write_zone_map(out / "zone_map.csv", net, zones);
  io::write_od_targets(out / "od_targets.csv", targets);
  run.outputs = {"nodes.csv", "edges.csv", "zone_map.csv", "od_targets.csv"};
}

int exit_code_for(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::usage: return kExitUsage;
    case ErrorKind::input: return kExitInput;
    case ErrorKind::numerical: return kExitNumerical;
  }
  return kExitNumerical;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Maximum-entropy models of correlated binary component failures"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  bool version = false;
  app.add_option("--seed", g.seed, "Top-level random seed");
  app.add_option("--threads", g.threads, "Worker thread cap (default: hardware concurrency)");
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--config", g.config, "JSON config file for the command");
  app.add_flag("--manifest-only", g.manifest_only, "Resolve the config and write the manifest without running");
  app.add_flag("--version", version, "Print version information as JSON and exit");

  HazardArgs hazard;
  auto* c_hazard = app.add_subcommand("hazard", "Moment constraints from a site layout and an earthquake scenario");
  c_hazard->add_option("sites", hazard.sites, "Sites CSV")->required();
  c_hazard->add_option("scenario", hazard.scenario, "Scenario JSON")->required();

  FitArgs fit;
  auto* c_fit = app.add_subcommand("fit", "Fit an Ising or dichotomized Gaussian model to constraints");
  c_fit->add_option("constraints", fit.constraints, "Constraints directory")->required();
  c_fit->add_option("--engine", fit.engine, "ising-ml | ising-cd | dg")->required();
  c_fit->add_option("--train-config", fit.train_config, "JSON training options");

  SampleArgs sample;
  auto* c_sample = app.add_subcommand("sample", "Draw states from a fitted model");
  c_sample->add_option("model", sample.model, "Model directory")->required();
  c_sample->add_option("-n,--n", sample.n, "Number of samples");

  EntropyArgs entropy;
  auto* c_entropy = app.add_subcommand("entropy", "Entropy of a model, or a size sweep over constraints");
  c_entropy->add_option("input", entropy.input, "Model or constraints directory")->required();
  c_entropy->add_option("--method", entropy.method, "exact | annealed | mc | sweep")->required();
  c_entropy->add_option("--sizes", entropy.sizes, "Comma-separated subsystem sizes for sweep");
  c_entropy->add_flag("--bits", entropy.bits, "Report bits instead of nats");

  IpfArgs ipf;
  auto* c_ipf = app.add_subcommand("ipf", "Scale an OD matrix to origin and destination totals");
  c_ipf->add_option("init", ipf.init, "Initial OD matrix CSV")->required();
  c_ipf->add_option("targets", ipf.targets, "OD targets CSV")->required();
  c_ipf->add_option("--eps0", ipf.eps0, "Stopping tolerance on the column error");
  c_ipf->add_option("--max-iters", ipf.max_iters, "Iteration cap");
  c_ipf->add_flag("--strict", ipf.strict, "Reject targets whose totals disagree");

  PhaseArgs phase;
  auto* c_phase = app.add_subcommand("phase", "Trip-completion experiment over a magnitude list");
  c_phase->add_option("nodes", phase.nodes, "Node coordinates CSV")->required();
  c_phase->add_option("edges", phase.edges, "Edge list CSV")->required();
  c_phase->add_option("od_targets", phase.od_targets, "OD targets CSV")->required();
  c_phase->add_option("zone_map", phase.zone_map, "Node to zone CSV")->required();
  c_phase->add_option("--scenario", phase.scenario, "Scenario JSON (epicenter, variances)");
  c_phase->add_option("--magnitudes", phase.magnitudes, "Comma-separated magnitudes");
  c_phase->add_option("--reps", phase.reps, "Replicates per magnitude");
  c_phase->add_option("--mode", phase.mode, "correlated | independent | both");

  GridArgs grid;
  auto* c_grid = app.add_subcommand("grid", "Write a synthetic lattice network with zones and OD targets");
  c_grid->add_option("--rows", grid.rows);
  c_grid->add_option("--cols", grid.cols);
  c_grid->add_option("--spacing", grid.spacing, "Link length in km");
  c_grid->add_option("--zone-rows", grid.zone_rows);
  c_grid->add_option("--zone-cols", grid.zone_cols);
  c_grid->add_option("--zone-total", grid.zone_total, "Origin and destination total per zone");

  // --version is honoured before subcommand validation.
  for (int i = 1; i < argc; ++i)
    if (std::string_view(argv[i]) == "--version") {
      std::cout << json{{"name", "maxent"}, {"version", MAXENT_VERSION}}.dump() << '\n';
      return kExitOk;
    }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }
  (void)version;

  std::mutex warn_mutex;
  Run run;
  ScopedWarningHandler sink([&](const std::string& msg) {
    std::lock_guard lock(warn_mutex);
    std::cerr << "warning: " << msg << '\n';
    run.warnings.push_back(msg);
  });
  const auto start = std::chrono::steady_clock::now();
  try {
    set_max_threads(g.threads > 0 ? g.threads : std::max(1u, std::thread::hardware_concurrency()));
    if ((c_hazard->parsed() || c_fit->parsed() || c_ipf->parsed() || c_grid->parsed()) && !g.config.empty())
      throw UsageError("--config is not used by this command");
    fs::create_directories(g.out);
    const bool execute = !g.manifest_only;
    if (c_hazard->parsed()) {
      run.command = "hazard";
      cmd_hazard(hazard, g, run, execute);
    } else if (c_fit->parsed()) {
      run.command = "fit";
      cmd_fit(fit, g, run, execute);
    } else if (c_sample->parsed()) {
      run.command = "sample";
      cmd_sample(sample, g, run, execute);
    } else if (c_entropy->parsed()) {
      run.command = "entropy";
      cmd_entropy(entropy, g, run, execute);
    } else if (c_ipf->parsed()) {
      run.command = "ipf";
      cmd_ipf(ipf, g, run, execute);
    } else if (c_phase->parsed()) {
      run.command = "phase";
      cmd_phase(phase, g, run, execute);
    } else if (c_grid->parsed()) {
      run.command = "grid";
      cmd_grid(grid, g, run, execute);
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    json manifest{{"command", run.command},
                  {"version", MAXENT_VERSION},
                  {"seed", g.seed},
                  {"config", run.config},
                  {"inputs", run.inputs},
                  {"outputs", run.outputs},
                  {"warnings", run.warnings},
                  {"manifest_only", g.manifest_only},
                  {"duration_seconds", seconds}};
    io::write_json(fs::path(g.out) / "manifest.json", manifest);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumerical;
  }
  return kExitOk;
}
