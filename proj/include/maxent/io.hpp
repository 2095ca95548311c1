#pragma once

// File formats: CSV matrices and tables written at 17 significant digits
// (bit-exact round trip) plus small JSON descriptors.

#include <cstdio>
#include <filesystem>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "maxent/core.hpp"
#include "maxent/dg.hpp"
#include "maxent/entropy.hpp"
#include "maxent/hazard.hpp"
#include "maxent/ising.hpp"
#include "maxent/network.hpp"

namespace maxent::io {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct CsvRow {
  std::size_t line = 0;
  std::vector<std::string> fields;
};

struct CsvTable {
  std::string path;
  std::vector<CsvRow> rows;

  [[noreturn]] void fail(std::size_t line, const std::string& msg) const {
    throw InputError(path + ":" + std::to_string(line) + ": " + msg);
  }
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(trim(std::string_view(line).substr(start, pos - start)));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::ifstream open_in(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw InputError("cannot open " + p.string());
  return in;
}

inline std::ofstream open_out(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw InputError("cannot write " + p.string());
  return out;
}

}  // namespace detail

/// Non-blank lines, split on commas. Lines starting with '#' are skipped.
inline CsvTable read_csv(const fs::path& p) {
  auto in = detail::open_in(p);
  CsvTable t{p.string(), {}};
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    const auto s = detail::trim(line);
    if (s.empty() || s.front() == '#') continue;
    t.rows.push_back({n, detail::split(s)});
  }
  return t;
}

namespace detail {

/// Whole-field parse; subnormals are accepted.
inline std::optional<double> to_double(const std::string& s) {
  if (s.empty()) return std::nullopt;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size()) return std::nullopt;
  return v;
}

}  // namespace detail

inline double parse_double(const CsvTable& t, const CsvRow& r, std::size_t col) {
  if (col >= r.fields.size()) t.fail(r.line, "missing column " + std::to_string(col + 1));
  const auto v = detail::to_double(r.fields[col]);
  if (!v) t.fail(r.line, "not a number: '" + r.fields[col] + "'");
  return *v;
}

inline bool is_header(const CsvRow& r) { return !detail::to_double(r.fields.front()); }

inline Matrix read_matrix_csv(const fs::path& p) {
  const CsvTable t = read_csv(p);
  if (t.rows.empty()) throw InputError(p.string() + ": empty matrix file");
  const std::size_t cols = t.rows.front().fields.size();
  Matrix m(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    if (t.rows[i].fields.size() != cols) t.fail(t.rows[i].line, "expected " + std::to_string(cols) + " columns");
    for (std::size_t j = 0; j < cols; ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = parse_double(t, t.rows[i], j);
  }
  return m;
}

inline void write_matrix_csv(const fs::path& p, const Matrix& m) {
  auto out = detail::open_out(p);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << format_double(m(i, j));
    out << '\n';
  }
}

inline Vector read_vector_csv(const fs::path& p) {
  const Matrix m = read_matrix_csv(p);
  if (m.cols() != 1) throw InputError(p.string() + ": expected a single column");
  return m.col(0);
}

inline void write_vector_csv(const fs::path& p, const Vector& v) { write_matrix_csv(p, Matrix(v)); }

inline json read_json(const fs::path& p) {
  auto in = detail::open_in(p);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw InputError(p.string() + ": " + e.what());
  }
}

inline void write_json(const fs::path& p, const json& j) {
  auto out = detail::open_out(p);
  out << j.dump(2) << '\n';
}

template <class T>
T json_get(const json& j, const char* key, const T& fallback, const std::string& where = "config") {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw UsageError(where + ": field '" + key + "': " + e.what());
  }
}

// Constraints directory: means.csv, corr.csv, constraints.json.

inline void write_constraints(const fs::path& dir, const MomentConstraints& c, const json& provenance = json::object()) {
  fs::create_directories(dir);
  write_vector_csv(dir / "means.csv", c.means());
  write_matrix_csv(dir / "corr.csv", c.correlations());
  write_json(dir / "constraints.json",
             json{{"dimension", c.dimension()}, {"convention", "1=fail"}, {"provenance", provenance}});
}

inline MomentConstraints read_constraints(const fs::path& dir) {
  const json desc = read_json(dir / "constraints.json");
  Vector mu = read_vector_csv(dir / "means.csv");
  Matrix rho = read_matrix_csv(dir / "corr.csv");
  const auto d = json_get<std::size_t>(desc, "dimension", static_cast<std::size_t>(mu.size()), "constraints.json");
  if (d != static_cast<std::size_t>(mu.size()))
    throw InputError((dir / "constraints.json").string() + ": dimension does not match means.csv");
  return MomentConstraints(std::move(mu), std::move(rho));
}

// Model directory: model.json with "type" plus coupling.csv (ising) or
// gamma.csv and lambda.csv (dg).

inline void write_ising_model(const fs::path& dir, const IsingModel& m) {
  fs::create_directories(dir);
  write_matrix_csv(dir / "coupling.csv", m.coupling());
  write_json(dir / "model.json", json{{"type", "ising"}, {"dimension", m.dimension()}, {"convention", "1=fail"}});
}

inline json repair_log_json(const RepairLog& r) {
  return json{{"applied", r.applied},
              {"min_eigenvalue_before", r.min_eigenvalue_before},
              {"max_abs_change", r.max_abs_change},
              {"clipped_eigenvalues", r.clipped_eigenvalues}};
}

inline void write_dg_model(const fs::path& dir, const DGModel& m) {
  fs::create_directories(dir);
  write_vector_csv(dir / "gamma.csv", m.gamma());
  write_matrix_csv(dir / "lambda.csv", m.latent_corr());
  write_json(dir / "model.json", json{{"type", "dg"},
                                      {"dimension", m.dimension()},
                                      {"convention", "1=fail"},
                                      {"repair_log", repair_log_json(m.repair_log())}});
}

inline std::string model_type(const fs::path& dir) {
  const json j = read_json(dir / "model.json");
  const auto t = json_get<std::string>(j, "type", "", "model.json");
  if (t != "ising" && t != "dg") throw InputError((dir / "model.json").string() + ": unknown model type '" + t + "'");
  return t;
}

inline IsingModel read_ising_model(const fs::path& dir) {
  if (model_type(dir) != "ising") throw InputError(dir.string() + ": not an ising model");
  return IsingModel(read_matrix_csv(dir / "coupling.csv"));
}

inline DGModel read_dg_model(const fs::path& dir) {
  const json j = read_json(dir / "model.json");
  if (json_get<std::string>(j, "type", "", "model.json") != "dg") throw InputError(dir.string() + ": not a dg model");
  RepairLog log;
  if (j.contains("repair_log")) {
    const json& r = j["repair_log"];
    log.applied = json_get<bool>(r, "applied", false, "repair_log");
    log.min_eigenvalue_before = json_get<double>(r, "min_eigenvalue_before", 0.0, "repair_log");
    log.max_abs_change = json_get<double>(r, "max_abs_change", 0.0, "repair_log");
    log.clipped_eigenvalues = json_get<std::size_t>(r, "clipped_eigenvalues", 0, "repair_log");
  }
  return DGModel(read_vector_csv(dir / "gamma.csv"), read_matrix_csv(dir / "lambda.csv"), log);
}

// Sample file: "# d=<d> seed=<seed>" then one comma-separated 0/1 row per state.

inline void write_samples(const fs::path& p, const SampleSet& s, std::uint64_t seed) {
  auto out = detail::open_out(p);
  out << "# d=" << s.dimension() << " seed=" << seed << '\n';
  std::string line;
  for (std::size_t k = 0; k < s.size(); ++k) {
    line.clear();
    for (auto x : s[k]) {
      if (!line.empty()) line += ',';
      line += static_cast<char>('0' + x);
    }
    out << line << '\n';
  }
}

inline SampleSet read_samples(const fs::path& p) {
  auto in = detail::open_in(p);
  std::string line;
  std::size_t d = 0;
  if (!std::getline(in, line) || std::sscanf(line.c_str(), "# d=%zu", &d) != 1 || d == 0)
    throw InputError(p.string() + ":1: expected header '# d=<d> seed=<seed>'");
  SampleSet s(d);
  StateVector x(d);
  for (std::size_t n = 2; std::getline(in, line); ++n) {
    const auto t = detail::trim(line);
    if (t.empty()) continue;
    const auto f = detail::split(t);
    if (f.size() != d) throw InputError(p.string() + ":" + std::to_string(n) + ": expected " + std::to_string(d) + " values");
    for (std::size_t i = 0; i < d; ++i) {
      if (f[i] != "0" && f[i] != "1") throw InputError(p.string() + ":" + std::to_string(n) + ": entries must be 0 or 1");
      x[i] = static_cast<std::uint8_t>(f[i][0] - '0');
    }
    s.push_back(x);
  }
  return s;
}

inline json fit_report_json(const FitReport& r, const json& config) {
  return json{{"method", r.method},
              {"converged", r.converged},
              {"degenerate", r.degenerate},
              {"exact_expectation", r.exact_expectation},
              {"iterations_used", r.iterations_used},
              {"final_residual", r.residual_trace.empty() ? 0.0 : r.residual_trace.back()},
              {"residual_trace", r.residual_trace},
              {"notes", r.notes},
              {"config", config}};
}

inline json entropy_json(const EntropyEstimate& e) {
  return json{{"value_nats", e.value},
              {"value_bits", e.value / std::numbers::ln2},
              {"std_error_nats", e.std_error},
              {"method", to_string(e.method)},
              {"reliable", e.reliable},
              {"step_ratio_variance", e.step_ratio_variance},
              {"warnings", e.warnings}};
}

inline void write_sweep_csv(const fs::path& p, const std::vector<SweepRow>& rows, bool bits = false) {
  auto out = detail::open_out(p);
  const double scale = bits ? 1.0 / std::numbers::ln2 : 1.0;
  out << "size,H_ising,H_ising_se,H_dg,H_dg_se\n";
  for (const auto& r : rows)
    out << r.size << ',' << format_double(r.ising.value * scale) << ',' << format_double(r.ising.std_error * scale)
        << ',' << format_double(r.dg.value * scale) << ',' << format_double(r.dg.std_error * scale) << '\n';
}

// Sites: header "id,x_km,y_km" (planar) or "id,lat,lon" (geographic).

inline std::vector<Site> read_sites(const fs::path& p) {
  const CsvTable t = read_csv(p);
  if (t.rows.empty()) throw InputError(p.string() + ": empty sites file");
  const auto& h = t.rows.front();
  CoordinateMode mode;
  if (h.fields == std::vector<std::string>{"id", "x_km", "y_km"})
    mode = CoordinateMode::planar;
  else if (h.fields == std::vector<std::string>{"id", "lat", "lon"})
    mode = CoordinateMode::geographic;
  else
    t.fail(h.line, "header must be 'id,x_km,y_km' or 'id,lat,lon'");
  std::vector<Site> sites;
  for (std::size_t k = 1; k < t.rows.size(); ++k) {
    const auto& r = t.rows[k];
    if (r.fields.size() != 3) t.fail(r.line, "expected 3 columns");
    const double a = parse_double(t, r, 1), b = parse_double(t, r, 2);
    try {
      sites.push_back(mode == CoordinateMode::planar ? Site::planar(r.fields[0], a, b)
                                                     : Site::geographic(r.fields[0], a, b));
    } catch (const InputError& e) {
      t.fail(r.line, e.what());
    }
  }
  if (sites.empty()) throw InputError(p.string() + ": no sites");
  return sites;
}

inline void write_sites(const fs::path& p, const std::vector<Site>& sites) {
  auto out = detail::open_out(p);
  const bool planar = sites.empty() || sites.front().mode == CoordinateMode::planar;
  out << (planar ? "id,x_km,y_km\n" : "id,lat,lon\n");
  for (const auto& s : sites) out << s.id << ',' << format_double(s.a) << ',' << format_double(s.b) << '\n';
}

inline json site_json(const Site& s) {
  if (s.mode == CoordinateMode::planar) return json{{"x_km", s.a}, {"y_km", s.b}};
  return json{{"lat", s.a}, {"lon", s.b}};
}

inline json scenario_json(const HazardScenario& s) {
  return json{{"magnitude", s.magnitude},         {"epicenter", site_json(s.epicenter)},
              {"sigma_D_sq", s.sigma_D_sq},       {"sigma_C_sq", s.sigma_C_sq},
              {"mean_capacity", s.mean_capacity}, {"sigma_eta_sq", s.sigma_eta_sq},
              {"sigma_eps_sq", s.sigma_eps_sq}};
}

/// Omitted fields take the defaults. The epicenter is {"x_km","y_km"} or {"lat","lon"}.
inline HazardScenario scenario_from_json(const json& j, const std::string& where = "scenario") {
  if (!j.is_object()) throw InputError(where + ": expected a JSON object");
  HazardScenario s;
  s.magnitude = json_get(j, "magnitude", s.magnitude, where);
  s.sigma_D_sq = json_get(j, "sigma_D_sq", s.sigma_D_sq, where);
  s.sigma_C_sq = json_get(j, "sigma_C_sq", s.sigma_C_sq, where);
  s.mean_capacity = json_get(j, "mean_capacity", s.mean_capacity, where);
  s.sigma_eta_sq = json_get(j, "sigma_eta_sq", s.sigma_eta_sq, where);
  s.sigma_eps_sq = json_get(j, "sigma_eps_sq", s.sigma_eps_sq, where);
  if (j.contains("epicenter")) {
    const json& e = j["epicenter"];
    if (e.contains("lat") || e.contains("lon"))
      s.epicenter = Site::geographic("epicenter", json_get(e, "lat", 0.0, where), json_get(e, "lon", 0.0, where));
    else
      s.epicenter = Site::planar("epicenter", json_get(e, "x_km", 0.0, where), json_get(e, "y_km", 0.0, where));
  }
  try {
    s.validate();
  } catch (const InputError& e) {
    throw InputError(where + ": " + e.what());
  }
  return s;
}

inline HazardScenario read_scenario(const fs::path& p) { return scenario_from_json(read_json(p), p.string()); }

// Network: edges CSV "u,v" over node ids from a sites-format file.

inline RoadNetwork read_network(const fs::path& nodes_file, const fs::path& edges_file) {
  std::vector<Site> nodes = read_sites(nodes_file);
  const CsvTable t = read_csv(edges_file);
  std::vector<std::pair<std::string, std::string>> links;
  for (std::size_t k = 0; k < t.rows.size(); ++k) {
    const auto& r = t.rows[k];
    if (k == 0 && r.fields == std::vector<std::string>{"u", "v"}) continue;
    if (r.fields.size() != 2) t.fail(r.line, "expected 2 columns (u,v)");
    links.emplace_back(r.fields[0], r.fields[1]);
  }
  try {
    return RoadNetwork(std::move(nodes), links);
  } catch (const InputError& e) {
    throw InputError(edges_file.string() + ": " + e.what());
  }
}

inline void write_network(const fs::path& nodes_file, const fs::path& edges_file, const RoadNetwork& net) {
  write_sites(nodes_file, net.nodes());
  auto out = detail::open_out(edges_file);
  out << "u,v\n";
  for (const auto& e : net.edges()) out << net.nodes()[e.u].id << ',' << net.nodes()[e.v].id << '\n';
}

struct OdTargets {
  std::vector<std::string> zones;
  Vector origin;
  Vector destination;
};

/// CSV "zone,target_O,target_D".
inline OdTargets read_od_targets(const fs::path& p) {
  const CsvTable t = read_csv(p);
  OdTargets out;
  std::vector<double> o, d;
  for (std::size_t k = 0; k < t.rows.size(); ++k) {
    const auto& r = t.rows[k];
    if (k == 0 && is_header(CsvRow{r.line, {r.fields.size() > 1 ? r.fields[1] : r.fields[0]}})) continue;
    if (r.fields.size() != 3) t.fail(r.line, "expected 3 columns (zone,target_O,target_D)");
    out.zones.push_back(r.fields[0]);
    o.push_back(parse_double(t, r, 1));
    d.push_back(parse_double(t, r, 2));
  }
  if (out.zones.empty()) throw InputError(p.string() + ": no zones");
  out.origin = Eigen::Map<Vector>(o.data(), static_cast<Eigen::Index>(o.size()));
  out.destination = Eigen::Map<Vector>(d.data(), static_cast<Eigen::Index>(d.size()));
  return out;
}

inline void write_od_targets(const fs::path& p, const OdTargets& t) {
  auto out = detail::open_out(p);
  out << "zone,target_O,target_D\n";
  for (std::size_t z = 0; z < t.zones.size(); ++z)
    out << t.zones[z] << ',' << format_double(t.origin(static_cast<Eigen::Index>(z))) << ','
        << format_double(t.destination(static_cast<Eigen::Index>(z))) << '\n';
}

/// CSV "node,zone".
inline std::unordered_map<std::string, std::string> read_zone_map(const fs::path& p) {
  const CsvTable t = read_csv(p);
  std::unordered_map<std::string, std::string> out;
  for (std::size_t k = 0; k < t.rows.size(); ++k) {
    const auto& r = t.rows[k];
    if (k == 0 && r.fields == std::vector<std::string>{"node", "zone"}) continue;
    if (r.fields.size() != 2) t.fail(r.line, "expected 2 columns (node,zone)");
    if (!out.emplace(r.fields[0], r.fields[1]).second) t.fail(r.line, "node " + r.fields[0] + " listed twice");
  }
  return out;
}

inline void write_zone_map(const fs::path& p, const RoadNetwork& net,
                           const std::unordered_map<std::string, std::string>& zones) {
  auto out = detail::open_out(p);
  out << "node,zone\n";
  for (const auto& n : net.nodes()) out << n.id << ',' << zones.at(n.id) << '\n';
}

inline void write_histogram_csv(const fs::path& p, const Histogram2D& h) {
  auto out = detail::open_out(p);
  out << "removal_lo,removal_hi,completion_lo,completion_hi,count\n";
  const double w = 1.0 / static_cast<double>(h.bins);
  for (std::size_t x = 0; x < h.bins; ++x)
    for (std::size_t y = 0; y < h.bins; ++y)
      out << format_double(x * w) << ',' << format_double((x + 1) * w) << ',' << format_double(y * w) << ','
          << format_double((y + 1) * w) << ',' << h.at(x, y) << '\n';
}

inline void append_experiment_jsonl(std::ostream& out, const TripExperimentResult& r) {
  for (std::size_t k = 0; k < r.replicates.size(); ++k)
    out << json{{"magnitude", r.magnitude},
                {"mode", to_string(r.mode)},
                {"replicate", k},
                {"removal_rate", r.replicates[k].removal_rate},
                {"completion_rate", r.replicates[k].completion_rate}}
               .dump()
        << '\n';
}

}  // namespace maxent::io
