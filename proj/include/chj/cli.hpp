#pragma once

// Configuration and run orchestration behind the chj command-line tool.
// Needs Boost.PropertyTree (INI reader) and nlohmann/json on the include path.

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cinttypes>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "chj/connect.hpp"
#include "chj/homotopy.hpp"
#include "chj/semigroup.hpp"

#ifndef CHJ_VERSION
#define CHJ_VERSION "0.0.0"
#endif

namespace chj::cli {

using Flat = std::map<std::string, std::string>;

/// Every accepted key with its default. Keys without a dot live at the top of
/// the file; "section.key" lives in [section].
inline const Flat& defaults() {
  static const Flat table{
      {"model", "moebius"},
      {"dim", "1"},
      {"n", "200"},
      {"dt", "0.01"},
      {"t_final", "10"},
      {"snapshot_every", "10"},
      {"initial", "0"},
      {"reference", ""},
      {"output", "out"},
      {"seed", "1"},
      {"moebius.epsilon", "1"},
      {"moebius.a_infinity", "4"},
      {"moebius.p_bound", "10"},
      {"monotone.lambda", "1"},
      {"monotone.equilibrium", "cos(2*pi*q)"},
      {"monotone.p_bound", "10"},
      {"mechanical.c", "0"},
      {"mechanical.amplitude", "0"},
      {"mechanical.p_bound", "10"},
      {"scheme.v_max", "5"},
      {"scheme.quadrature", "trapezoid"},
      {"scheme.barrier", "1e6"},
      {"tolerances.fixed_point", "1e-6"},
      {"tolerances.certify", "0.05"},
      {"tolerances.omega", "1e-3"},
      {"tolerances.hypothesis", "0.01"},
      {"flow.q", "0"},
      {"flow.p", "0"},
      {"flow.u", "0"},
      {"action.q0", "0"},
      {"action.u0", "0"},
      {"action.direction", "backward"},
      {"connect.method", "graph1"},
      {"connect.targets", ""},
      {"connect.times", "2,4,8"},
      {"connect.horizon", "30"},
      {"connect.attractor_radius", "0.3"},
      {"connect.tail_window", "2"},
      {"connect.cluster_radius", "0.05"},
      {"deformation.sub", ""},
      {"deformation.super", ""},
      {"deformation.super_lift", "0.2"},
      {"deformation.samples", "64"},
      {"deformation.margin", "1e-10"},
      {"oracle.w0", "0"},
  };
  return table;
}

/// Initial data, reference or deformation start: a constant, the cosine
/// family A*cos(2*pi*q)+B (summed over coordinates when dim = 2), or a grid CSV.
struct DataSpec {
  enum class Kind { constant, cosine, file };
  Kind kind = Kind::constant;
  double value = 0.0;
  double amplitude = 1.0;
  double offset = 0.0;
  std::string path;
  std::string text;
};

struct RunConfig {
  std::string model = "moebius";
  std::size_t dim = 1;
  std::size_t n = 200;
  double dt = 1e-2;
  double t_final = 10.0;
  std::size_t snapshot_every = 10;
  DataSpec initial;
  std::optional<DataSpec> reference;
  std::string output = "out";
  std::uint64_t seed = 1;

  double epsilon = 1.0, a_infinity = 4.0;
  double lambda = 1.0;
  DataSpec equilibrium;
  double c = 0.0, amplitude = 0.0;
  double p_bound = 10.0;

  SchemeOptions scheme;
  double fixed_point_tol = 1e-6, certify_tol = 5e-2, omega_tol = 1e-3, hypothesis_tol = 1e-2;

  std::vector<double> flow_q, flow_p;
  double flow_u = 0.0;
  std::vector<double> action_q0;
  double action_u0 = 0.0;
  Orientation direction = Orientation::backward;

  std::string method = "graph1";
  std::vector<std::vector<double>> targets;  // empty: 8 evenly spaced nodes
  std::vector<double> times;
  double horizon = 30.0, attractor_radius = 0.3, tail_window = 2.0, cluster_radius = 5e-2;

  std::optional<DataSpec> sub_start, super_start;
  double super_lift = 0.2;
  int deformation_samples = 64;
  double deformation_margin = 1e-10;

  double w0_u = 0.0, w0_p = 0.0;

  Flat effective;  // every key after defaults were filled in
};

// ---------------------------------------------------------------------------
// Reading

namespace detail {

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  std::string t = s.substr(a, b - a + 1);
  if (t.size() >= 2 && (t.front() == '"' || t.front() == '\'') && t.back() == t.front()) {
    t = t.substr(1, t.size() - 2);
  }
  return t;
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(s);
  while (std::getline(is, item, sep)) out.push_back(trim(item));
  return out;
}

inline std::set<std::string> sections() {
  std::set<std::string> s;
  for (const auto& [key, value] : defaults()) {
    const auto dot = key.find('.');
    if (dot != std::string::npos) s.insert(key.substr(0, dot));
  }
  return s;
}

}  // namespace detail

/// Reads an INI file into flat "section.key" form. Structural problems (missing
/// file, syntax, nesting) are reported here; key names are checked by parse_config.
inline Flat read_config_file(const std::string& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("config file not found: " + path);
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::read_ini(path, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError("config file " + path + ": " + e.message() + " (line " +
                      std::to_string(e.line()) + ")");
  }
  const auto known_sections = detail::sections();
  Flat flat;
  for (const auto& [name, node] : tree) {
    if (!node.empty() || known_sections.count(name)) {
      for (const auto& [key, leaf] : node) flat[name + "." + key] = detail::trim(leaf.data());
    } else {
      flat[name] = detail::trim(node.data());
    }
  }
  return flat;
}

/// Applies "key=value" overrides on top of file values.
inline void apply_overrides(Flat& flat, const std::vector<std::string>& assignments) {
  for (const auto& a : assignments) {
    const auto eq = a.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ConfigError("override '" + a + "' is not of the form key=value");
    }
    flat[detail::trim(a.substr(0, eq))] = detail::trim(a.substr(eq + 1));
  }
}

namespace detail {

class Reader {
public:
  explicit Reader(const Flat& f) : flat_(f) {}

  const std::string& text(const std::string& key) const { return flat_.at(key); }

  double number(const std::string& key) {
    const auto& s = text(key);
    try {
      std::size_t used = 0;
      const double x = std::stod(s, &used);
      if (used == s.size() && std::isfinite(x)) return x;
    } catch (const std::exception&) {
    }
    problem(key + ": expected a number, got '" + s + "'");
    return std::numeric_limits<double>::quiet_NaN();
  }

  long long integer(const std::string& key) {
    const auto& s = text(key);
    try {
      std::size_t used = 0;
      const long long x = std::stoll(s, &used);
      if (used == s.size()) return x;
    } catch (const std::exception&) {
    }
    problem(key + ": expected an integer, got '" + s + "'");
    return 0;
  }

  std::vector<double> list(const std::string& key, const std::string& s, char sep = ',') {
    std::vector<double> out;
    for (const auto& item : split(s, sep)) {
      try {
        std::size_t used = 0;
        const double x = std::stod(item, &used);
        if (used == item.size() && std::isfinite(x)) {
          out.push_back(x);
          continue;
        }
      } catch (const std::exception&) {
      }
      problem(key + ": '" + item + "' is not a number");
    }
    return out;
  }

  std::vector<double> list(const std::string& key) { return list(key, text(key)); }

  double positive(const std::string& key) {
    const double x = number(key);
    if (!(x > 0.0) && std::isfinite(x)) problem(key + ": must be positive, got " + text(key));
    return x;
  }

  std::optional<DataSpec> data(const std::string& key, bool allow_empty = false) {
    const auto& s = text(key);
    if (s.empty()) {
      if (!allow_empty) problem(key + ": data specification is empty");
      return std::nullopt;
    }
    static const std::string num = R"([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)";
    static const std::regex constant("^" + num + "$");
    static const std::regex cosine("^(?:(" + num + R"()\*)?cos(?:\(2\*pi\*q\))?(?:([-+](?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?))?$)");
    std::string compact;
    for (char ch : s)
      if (!std::isspace(static_cast<unsigned char>(ch))) compact += ch;
    DataSpec d;
    d.text = s;
    std::smatch m;
    if (std::regex_match(compact, constant)) {
      d.kind = DataSpec::Kind::constant;
      d.value = std::stod(compact);
    } else if (std::regex_match(compact, m, cosine)) {
      d.kind = DataSpec::Kind::cosine;
      d.amplitude = m[1].matched ? std::stod(m[1].str()) : 1.0;
      d.offset = m[2].matched ? std::stod(m[2].str()) : 0.0;
    } else if (std::filesystem::exists(s)) {
      d.kind = DataSpec::Kind::file;
      d.path = s;
    } else {
      problem(key + ": '" + s + "' is neither a number, the form A*cos(2*pi*q)+B, nor an existing CSV file");
    }
    return d;
  }

  void problem(std::string msg) { problems_.push_back(std::move(msg)); }
  const std::vector<std::string>& problems() const { return problems_; }

private:
  const Flat& flat_;
  std::vector<std::string> problems_;
};

}  // namespace detail

/// Validates the flat key table and fills in defaults. Every unknown key and
/// every invalid value is listed in a single ConfigError.
inline RunConfig parse_config(const Flat& given) {
  std::vector<std::string> unknown;
  for (const auto& [key, value] : given)
    if (!defaults().count(key)) unknown.push_back(key);

  Flat flat = defaults();
  for (const auto& [key, value] : given)
    if (defaults().count(key)) flat[key] = value;

  RunConfig cfg;
  cfg.effective = flat;
  detail::Reader r(flat);
  for (const auto& key : unknown) r.problem("unknown key '" + key + "'");

  cfg.model = r.text("model");
  if (cfg.model != "moebius" && cfg.model != "monotone" && cfg.model != "mechanical") {
    r.problem("model: expected moebius, monotone or mechanical, got '" + cfg.model + "'");
  }
  const auto dim = r.integer("dim");
  if (dim != 1 && dim != 2) r.problem("dim: only 1 and 2 are supported");
  cfg.dim = dim == 2 ? 2 : 1;
  if (cfg.model == "moebius" && dim == 2) r.problem("dim: the moebius model lives on the circle (dim = 1)");
  const auto n = r.integer("n");
  if (n < 3) r.problem("n: need at least 3 nodes per axis");
  cfg.n = n < 3 ? 3 : static_cast<std::size_t>(n);
  cfg.dt = r.positive("dt");
  cfg.t_final = r.number("t_final");
  if (cfg.t_final < 0.0) r.problem("t_final: must be non-negative");
  const auto every = r.integer("snapshot_every");
  if (every < 1) r.problem("snapshot_every: must be at least 1");
  cfg.snapshot_every = every < 1 ? 1 : static_cast<std::size_t>(every);
  if (auto d = r.data("initial")) cfg.initial = *d;
  cfg.reference = r.data("reference", true);
  cfg.output = r.text("output");
  const auto seed = r.integer("seed");
  cfg.seed = static_cast<std::uint64_t>(seed);

  cfg.epsilon = r.positive("moebius.epsilon");
  cfg.a_infinity = r.number("moebius.a_infinity");
  if (cfg.model == "moebius" && !(cfg.a_infinity > 1.0 + cfg.epsilon)) {
    r.problem("moebius.a_infinity: must exceed 1 + epsilon");
  }
  cfg.lambda = r.positive("monotone.lambda");
  if (auto d = r.data("monotone.equilibrium")) {
    cfg.equilibrium = *d;
    if (d->kind == DataSpec::Kind::file && cfg.model == "monotone") {
      r.problem("monotone.equilibrium: must be analytic (constant or cosine family)");
    }
  }
  cfg.c = r.number("mechanical.c");
  cfg.amplitude = r.number("mechanical.amplitude");
  if (defaults().count(cfg.model + ".p_bound")) cfg.p_bound = r.positive(cfg.model + ".p_bound");

  cfg.scheme.v_max = r.positive("scheme.v_max");
  const auto quad = r.text("scheme.quadrature");
  if (quad == "trapezoid") cfg.scheme.quadrature = Quadrature::trapezoid;
  else if (quad == "arrival") cfg.scheme.quadrature = Quadrature::arrival;
  else r.problem("scheme.quadrature: expected trapezoid or arrival, got '" + quad + "'");
  cfg.scheme.barrier = r.positive("scheme.barrier");

  cfg.fixed_point_tol = r.positive("tolerances.fixed_point");
  cfg.certify_tol = r.positive("tolerances.certify");
  cfg.omega_tol = r.positive("tolerances.omega");
  cfg.hypothesis_tol = r.positive("tolerances.hypothesis");

  if (cfg.dt > 0.0 && cfg.scheme.v_max > 0.0) {
    const double reach = cfg.dt * static_cast<double>(cfg.n) * cfg.scheme.v_max;
    if (reach < 1.0 - 1e-9) {
      r.problem("dt*n*v_max = " + format_number(reach) +
                " < 1: the velocity window does not reach a neighbor");
    } else if (2.0 * std::floor(reach + 1e-9) + 1.0 > static_cast<double>(cfg.n)) {
      r.problem("dt*n*v_max = " + format_number(reach) + ": the velocity window wraps around the torus");
    }
  }

  auto point = [&](const std::string& key, const std::string& text) {
    auto v = r.list(key, text);
    if (v.size() == 1) v.assign(cfg.dim, v.front());
    if (v.size() != cfg.dim) {
      r.problem(key + ": expected " + std::to_string(cfg.dim) + " coordinate(s), got '" + text + "'");
      v.assign(cfg.dim, 0.0);
    }
    return v;
  };
  cfg.flow_q = point("flow.q", r.text("flow.q"));
  cfg.flow_p = point("flow.p", r.text("flow.p"));
  cfg.flow_u = r.number("flow.u");
  cfg.action_q0 = point("action.q0", r.text("action.q0"));
  cfg.action_u0 = r.number("action.u0");
  const auto dir = r.text("action.direction");
  if (dir == "backward") cfg.direction = Orientation::backward;
  else if (dir == "forward") cfg.direction = Orientation::forward;
  else r.problem("action.direction: expected backward or forward, got '" + dir + "'");

  cfg.method = r.text("connect.method");
  if (cfg.method != "graph1" && cfg.method != "graph2") {
    r.problem("connect.method: expected graph1 or graph2, got '" + cfg.method + "'");
  }
  if (!r.text("connect.targets").empty()) {
    for (const auto& item : detail::split(r.text("connect.targets"), ';')) {
      cfg.targets.push_back(point("connect.targets", item));
    }
  }
  cfg.times = r.list("connect.times");
  for (double t : cfg.times)
    if (!(t > 0.0)) r.problem("connect.times: every time must be positive");
  cfg.horizon = r.positive("connect.horizon");
  cfg.attractor_radius = r.positive("connect.attractor_radius");
  cfg.tail_window = r.positive("connect.tail_window");
  cfg.cluster_radius = r.positive("connect.cluster_radius");

  cfg.sub_start = r.data("deformation.sub", true);
  cfg.super_start = r.data("deformation.super", true);
  cfg.super_lift = r.number("deformation.super_lift");
  const auto samples = r.integer("deformation.samples");
  if (samples < 10) r.problem("deformation.samples: need at least 10");
  cfg.deformation_samples = static_cast<int>(samples);
  cfg.deformation_margin = r.positive("deformation.margin");

  const auto w0 = r.list("oracle.w0");
  if (w0.empty() || w0.size() > 2) r.problem("oracle.w0: expected 'u' or 'u,p'");
  else {
    cfg.w0_u = w0[0];
    cfg.w0_p = w0.size() == 2 ? w0[1] : 0.0;
  }

  if (!r.problems().empty()) {
    std::string msg = "invalid configuration:";
    for (const auto& p : r.problems()) msg += "\n  " + p;
    throw ConfigError(msg);
  }
  return cfg;
}

/// 64-bit FNV-1a over the sorted "key=value" lines of the effective
/// configuration. The output directory is left out.
inline std::uint64_t config_hash(const RunConfig& cfg) {
  std::uint64_t h = 14695981039346656037ull;
  for (const auto& [key, value] : cfg.effective) {
    if (key == "output") continue;
    for (char ch : key + "=" + value + "\n") {
      h ^= static_cast<unsigned char>(ch);
      h *= 1099511628211ull;
    }
  }
  return h;
}

inline std::string hash_string(std::uint64_t h) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
  return buf;
}

// ---------------------------------------------------------------------------
// Building library objects

template <std::size_t dim>
AnalyticFunction<dim> analytic(const DataSpec& d) {
  if (d.kind == DataSpec::Kind::constant) return constant_function<dim>(d.value);
  if (d.kind == DataSpec::Kind::cosine) return cosine_function<dim>(d.amplitude, d.offset);
  throw ConfigError("'" + d.text + "' is a file, an analytic function is required");
}

template <std::size_t dim>
GridField<dim> field(const DataSpec& d, const Grid<dim>& grid) {
  if (d.kind != DataSpec::Kind::file) return analytic<dim>(d).sample(grid);
  std::ifstream is(d.path);
  if (!is) throw ConfigError("cannot open " + d.path);
  auto f = read_csv<dim>(is);
  if (!(f.grid() == grid)) {
    throw ConfigError(d.path + ": grid does not match dim/n of the configuration");
  }
  return f;
}

template <std::size_t dim>
LegendrianGraph<dim> graph(const DataSpec& d, const Grid<dim>& grid) {
  if (d.kind == DataSpec::Kind::file) return LegendrianGraph<dim>(field(d, grid));
  return LegendrianGraph<dim>(grid, analytic<dim>(d));
}

template <std::size_t dim>
HamiltonianModel<dim> build_model(const RunConfig& cfg) {
  HamiltonianModel<dim> m;
  if (cfg.model == "monotone") {
    m = make_monotone_manufactured<dim>(cfg.lambda, analytic<dim>(cfg.equilibrium));
  } else if (cfg.model == "mechanical") {
    m = make_mechanical<dim>(cfg.c, cfg.amplitude);
  } else if constexpr (dim == 1) {
    m = make_moebius(cfg.epsilon, cfg.a_infinity);
  } else {
    throw ConfigError("moebius model requires dim = 1");
  }
  m.p_bound = cfg.p_bound;
  return m;
}

/// Reference solution u_-: the configured one, else the model's equilibrium.
template <std::size_t dim>
std::optional<LegendrianGraph<dim>> reference_graph(const RunConfig& cfg,
                                                    const HamiltonianModel<dim>& m,
                                                    const Grid<dim>& grid) {
  if (cfg.reference) return graph(*cfg.reference, grid);
  if (m.equilibrium) return LegendrianGraph<dim>(grid, *m.equilibrium);
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Running

using nlohmann::json;

struct Outcome {
  int exit_code = 0;
  json summary;
};

namespace detail {

template <std::size_t dim>
json point_json(const PhasePoint<dim>& s) {
  json q = json::array(), p = json::array();
  for (std::size_t k = 0; k < dim; ++k) {
    q.push_back(s.q[k]);
    p.push_back(s.p[k]);
  }
  return {{"q", q}, {"p", p}, {"u", s.u}};
}

inline json number_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot write " + path.string());
  os << text;
}

template <std::size_t dim>
TorusPoint<dim> torus(const std::vector<double>& x) {
  Vec<dim> v{};
  for (std::size_t k = 0; k < dim; ++k) v[k] = x[k];
  return TorusPoint<dim>(v);
}

template <std::size_t dim>
void structural(json& hyp, const HamiltonianModel<dim>& m) {
  LatticeSpec spec;
  spec.p_extent = 3.0;
  hyp["convexity"] = convexity_check(m, spec).ok ? "holds" : "fails";
  hyp["superlinearity"] = superlinearity_check(m, spec).ok ? "holds" : "fails";
}

template <std::size_t dim>
std::vector<TorusPoint<dim>> connect_targets(const RunConfig& cfg, const Grid<dim>& grid) {
  std::vector<TorusPoint<dim>> out;
  for (const auto& t : cfg.targets) out.push_back(torus<dim>(t));
  if (out.empty()) {
    for (std::size_t k = 0; k < 8; ++k) out.push_back(grid.node(k * grid.size() / 8));
  }
  return out;
}

template <std::size_t dim>
int run_evolve(const RunConfig& cfg, const HamiltonianModel<dim>& m, const Grid<dim>& grid,
               const std::filesystem::path& dir, json& s) {
  const auto u0 = field(cfg.initial, grid);
  const auto ref = reference_graph(cfg, m, grid);
  std::optional<GridField<dim>> reference;
  if (ref) reference = ref->generator();
  const auto run = evolve(m, u0, cfg.t_final, cfg.dt, cfg.snapshot_every, cfg.scheme, reference);

  std::ostringstream csv;
  csv << "t,index";
  for (std::size_t k = 0; k < dim; ++k) csv << ",q" << k;
  csv << ",value\n";
  for (const auto& snap : run.snapshots) {
    for (std::size_t i = 0; i < grid.size(); ++i) {
      csv << format_number(snap.t) << ',' << i;
      const auto q = grid.node(i);
      for (std::size_t k = 0; k < dim; ++k) csv << ',' << format_number(q[k]);
      csv << ',' << format_number(snap.field[i]) << "\n";
    }
  }
  write_text(dir / "evolve.csv", csv.str());

  const auto fp = detect_fixed_point(run, default_window(run.snapshots.size()), cfg.fixed_point_tol);
  const auto& last = run.last();
  double lo = last[0], hi = last[0];
  for (std::size_t i = 0; i < last.size(); ++i) {
    lo = std::min(lo, last[i]);
    hi = std::max(hi, last[i]);
  }
  s["results"] = {{"converged", fp.converged},
                  {"residual", fp.residual},
                  {"limit_min", lo},
                  {"limit_max", hi},
                  {"snapshots", run.snapshots.size()},
                  {"sup_distance_to_reference",
                   reference ? json(sup_distance(last, *reference)) : json(nullptr)}};
  s["hypotheses"]["convergence"] = fp.converged ? "holds" : "fails";
  return 0;
}

template <std::size_t dim>
int run_flow(const RunConfig& cfg, const HamiltonianModel<dim>& m, const std::filesystem::path& dir,
             json& s) {
  PhasePoint<dim> start{torus<dim>(cfg.flow_q), {}, cfg.flow_u};
  for (std::size_t k = 0; k < dim; ++k) start.p[k] = cfg.flow_p[k];
  const auto traj = flow(m, start, cfg.t_final, cfg.dt);
  std::ostringstream csv;
  write_trajectory_csv(csv, traj, m);
  write_text(dir / "flow.csv", csv.str());
  s["results"] = {{"start", point_json(start)},
                  {"end", point_json(traj.back().sigma)},
                  {"samples", traj.size()},
                  {"H_start", m.H(start)},
                  {"H_end", m.H(traj.back().sigma)},
                  {"contact_identity_residual", contact_identity_residual(traj, m)}};
  return 0;
}

template <std::size_t dim>
int run_action(const RunConfig& cfg, const HamiltonianModel<dim>& m, const Grid<dim>& grid,
               const std::filesystem::path& dir, json& s) {
  const auto q0 = torus<dim>(cfg.action_q0);
  const auto table = cfg.direction == Orientation::backward
                         ? backward_action(m, q0, cfg.action_u0, cfg.t_final, grid, cfg.dt, cfg.scheme)
                         : forward_action(m, q0, cfg.action_u0, cfg.t_final, grid, cfg.dt, cfg.scheme);
  std::ostringstream csv;
  write_action_csv(csv, table);
  write_text(dir / "action.csv", csv.str());
  std::size_t hits = 0, reachable = 0;
  for (auto h : table.window_boundary_hits) hits += h;
  for (std::size_t i = 0; i < grid.size(); ++i) reachable += table.reachable(table.steps(), i);
  s["results"] = {{"direction", cfg.direction == Orientation::backward ? "backward" : "forward"},
                  {"steps", table.steps()},
                  {"reachable_nodes", reachable},
                  {"window_boundary_hits", hits},
                  {"value_at_q0", table.final_layer()[grid.nearest_node(q0)]}};
  if (hits > 0) s["warnings"].push_back("velocity window too small: argmin hit the window boundary");
  return 0;
}

template <std::size_t dim>
int run_connect(const RunConfig& cfg, const HamiltonianModel<dim>& m, const Grid<dim>& grid,
                const std::filesystem::path& dir, json& s) {
  const auto ref = reference_graph(cfg, m, grid);
  if (!ref) throw ConfigError("connect: no reference u_- (set 'reference' or use a model with an equilibrium)");
  const auto u0 = graph(cfg.initial, grid);
  ConnectOptions opt;
  opt.scheme = cfg.scheme;
  opt.certify_tol = cfg.certify_tol;
  opt.omega_tol = cfg.omega_tol;
  opt.tail_window = cfg.tail_window;
  opt.cluster_radius = cfg.cluster_radius;
  opt.hypothesis_tol = cfg.hypothesis_tol;

  ConnectingOrbitReport<dim> r;
  try {
    if (cfg.method == "graph1") {
      r = connect_graph1(m, u0, *ref, connect_targets(cfg, grid), cfg.times, cfg.horizon, cfg.dt, opt);
      s["hypotheses"]["convergence1"] = "holds";
    } else {
      r = connect_graph2(m, u0, *ref, cfg.attractor_radius, cfg.horizon, cfg.dt, opt);
      s["hypotheses"]["liminf (1)"] = "holds";
      s["hypotheses"]["equality (2)"] = "holds";
    }
  } catch (const HypothesisError& e) {
    const std::string what = e.what();
    if (what.find("(convergence1)") != std::string::npos) s["hypotheses"]["convergence1"] = "fails";
    if (what.find("hypothesis (1)") != std::string::npos) s["hypotheses"]["liminf (1)"] = "fails";
    if (what.find("hypothesis (2)") != std::string::npos) {
      s["hypotheses"]["liminf (1)"] = "holds";
      s["hypotheses"]["equality (2)"] = "fails";
    }
    throw;
  }

  std::ostringstream traj;
  if (!r.trajectory.samples.empty()) write_trajectory_csv(traj, r.trajectory, m);
  write_text(dir / "connect.csv", traj.str());
  std::ostringstream pts;
  pts << "target_index,time";
  for (std::size_t k = 0; k < dim; ++k) pts << ",target_q" << k;
  for (std::size_t k = 0; k < dim; ++k) pts << ",start_q" << k;
  for (std::size_t k = 0; k < dim; ++k) pts << ",start_p" << k;
  pts << ",start_u,distance,residual\n";
  const std::size_t per_target = cfg.method == "graph1" ? std::max<std::size_t>(1, cfg.times.size()) : 1;
  for (std::size_t j = 0; j < r.approx_points.size(); ++j) {
    const auto& a = r.approx_points[j];
    pts << j / per_target << ',' << format_number(a.time);
    for (std::size_t k = 0; k < dim; ++k) pts << ',' << format_number(a.target.q[k]);
    for (std::size_t k = 0; k < dim; ++k) pts << ',' << format_number(a.start.q[k]);
    for (std::size_t k = 0; k < dim; ++k) pts << ',' << format_number(a.start.p[k]);
    pts << ',' << format_number(a.start.u) << ',' << format_number(a.distance) << ','
        << format_number(a.residual) << "\n";
  }
  write_text(dir / "connect_points.csv", pts.str());

  json distances = json::array();
  for (const auto& a : r.approx_points) distances.push_back(a.distance);
  double tail = 0.0;
  for (const auto& [t, d] : r.dist_profile)
    if (t >= r.horizon - cfg.tail_window - 1e-12) tail = std::max(tail, d);
  s["results"] = {{"method", r.method},
                  {"sigma0", point_json(r.sigma0)},
                  {"distances", distances},
                  {"final_distance", r.dist_profile.empty() ? json(nullptr) : json(r.dist_profile.back().second)},
                  {"tail_max_distance", r.dist_profile.empty() ? json(nullptr) : json(tail)},
                  {"lift_gap", r.lift_gap},
                  {"start_clusters", r.start_clusters},
                  {"entry_time", number_or_null(r.entry_time)},
                  {"certified", r.certified},
                  {"failure", r.failure}};
  if (r.certified) return 0;
  // No entry within the horizon is inconclusive rather than a refutation.
  if (r.failure.rfind("no approximating point", 0) == 0) {
    s["status"] = "inconclusive";
    return 41;
  }
  s["status"] = "not certified";
  return 40;
}

template <std::size_t dim>
int run_check_deformation(const RunConfig& cfg, const HamiltonianModel<dim>& m,
                          const Grid<dim>& grid, json& s) {
  const auto ref = reference_graph(cfg, m, grid);
  if (!ref) throw ConfigError("check-deformation: no reference u_- (set 'reference')");
  const auto u0 = field(cfg.initial, grid);
  const auto& um = ref->generator();
  auto start = [&](const std::optional<DataSpec>& spec, bool lower) {
    if (spec) return field(*spec, grid);
    std::vector<double> v(grid.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
      v[i] = lower ? std::min(u0[i], um[i]) : std::max(u0[i], um[i]) + cfg.super_lift;
    }
    return GridField<dim>(grid, std::move(v));
  };
  std::map<std::string, DeformationPath<dim>> paths{
      {"sub", linear_deformation(start(cfg.sub_start, true), um, cfg.deformation_samples, "sub")},
      {"super", linear_deformation(start(cfg.super_start, false), um, cfg.deformation_samples, "super")}};
  const auto report = check_theorem_conditions(m, u0, um, paths, cfg.deformation_margin);
  json conditions;
  for (const auto& [key, c] : report.conditions) {
    json entry{{"verdict", to_string(c.verdict)},
               {"ordering_ok", c.ordering_ok},
               {"sign_ok", c.sign_ok},
               {"detail", c.detail}};
    if (c.witness) {
      json q = json::array();
      const auto node = grid.node(c.witness->node);
      for (std::size_t k = 0; k < dim; ++k) q.push_back(node[k]);
      entry["witness"] = {{"q", q}, {"s", c.witness->s}, {"margin", c.witness->margin}};
    } else {
      entry["witness"] = nullptr;
    }
    conditions[key] = entry;
    s["hypotheses"]["(" + key + ")"] = to_string(c.verdict);
  }
  s["results"] = {{"conditions", conditions}, {"u_minus_gradient", report.u_minus_gradient}};
  return 0;
}

inline int run_oracle(const RunConfig& cfg, const std::filesystem::path& dir, json& s,
                      std::ostream& out) {
  const auto m = make_moebius(cfg.epsilon, cfg.a_infinity);
  Trajectory<1> traj;
  traj.step_size = cfg.dt;
  traj.model = "moebius oracle";
  const std::size_t full = static_cast<std::size_t>(std::floor(cfg.t_final / cfg.dt + 1e-9));
  std::vector<double> times;
  for (std::size_t k = 0; k <= full; ++k) times.push_back(static_cast<double>(k) * cfg.dt);
  if (cfg.t_final - times.back() > 1e-12 * std::max(1.0, cfg.t_final)) times.push_back(cfg.t_final);
  const double q0 = cfg.flow_q[0];
  MoebiusState last{cfg.w0_u, cfg.w0_p, 0.0};
  for (double t : times) {
    last = moebius_oracle(cfg.w0_u, cfg.w0_p, t);
    const double x = q0 + last.q_shift;
    TrajectorySample<1> sample{t, {TorusPoint<1>(x), {last.p}, last.u}, {}};
    sample.winding[0] = static_cast<int>(std::floor(x));
    traj.samples.push_back(sample);
  }
  std::ostringstream csv;
  write_trajectory_csv(csv, traj, m);
  write_text(dir / "oracle-moebius.csv", csv.str());
  char line[128];
  std::snprintf(line, sizeof line, "u=%.10f p=%.10f q_shift=%.10f\n", last.u, last.p, last.q_shift);
  out << line;
  s["results"] = {{"t", cfg.t_final}, {"u", last.u}, {"p", last.p}, {"q_shift", last.q_shift}};
  return 0;
}

template <std::size_t dim>
int dispatch(const std::string& sub, const RunConfig& cfg, const std::filesystem::path& dir,
             json& s, std::ostream& out) {
  const auto m = build_model<dim>(cfg);
  const Grid<dim> grid(static_cast<int>(cfg.n));
  structural(s["hypotheses"], m);
  if (sub == "evolve") return run_evolve(cfg, m, grid, dir, s);
  if (sub == "flow") return run_flow(cfg, m, dir, s);
  if (sub == "action") return run_action(cfg, m, grid, dir, s);
  if (sub == "connect") return run_connect(cfg, m, grid, dir, s);
  if (sub == "check-deformation") return run_check_deformation(cfg, m, grid, s);
  throw ConfigError("unknown subcommand '" + sub + "'");
}

inline const char* kind_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::config: return "config";
    case ErrorKind::numerics: return "numerics";
    case ErrorKind::hypothesis: return "hypothesis";
    case ErrorKind::certification: return "certification";
    case ErrorKind::internal: return "internal";
  }
  return "internal";
}

}  // namespace detail

inline const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names{"evolve", "flow", "action", "connect",
                                              "check-deformation", "oracle-moebius"};
  return names;
}

/// Runs one subcommand, writes its artifacts and "<subcommand>.json" into
/// cfg.output and returns the process exit code. The summary is written on
/// failure too.
inline Outcome run(const std::string& sub, const RunConfig& cfg, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  Outcome o;
  auto& s = o.summary;
  s["version"] = CHJ_VERSION;
  s["subcommand"] = sub;
  s["config_hash"] = hash_string(config_hash(cfg));
  s["config"] = cfg.effective;
  s["hypotheses"] = json::object();
  s["status"] = "ok";
  const std::filesystem::path dir(cfg.output);
  try {
    std::filesystem::create_directories(dir);
  } catch (const std::exception& e) {
    err << "error: cannot create output directory " << dir << ": " << e.what() << "\n";
    o.exit_code = exit_code(ErrorKind::config);
    return o;
  }
  try {
    if (sub == "oracle-moebius") {
      o.exit_code = detail::run_oracle(cfg, dir, s, out);
    } else if (cfg.dim == 2) {
      o.exit_code = detail::dispatch<2>(sub, cfg, dir, s, out);
    } else {
      o.exit_code = detail::dispatch<1>(sub, cfg, dir, s, out);
    }
  } catch (const Error& e) {
    o.exit_code = exit_code(e.kind());
    s["status"] = "error";
    s["error"] = {{"kind", detail::kind_name(e.kind())}, {"message", e.what()}};
    err << "error (" << detail::kind_name(e.kind()) << "): " << e.what() << "\n";
  } catch (const std::exception& e) {
    o.exit_code = exit_code(ErrorKind::internal);
    s["status"] = "error";
    s["error"] = {{"kind", "internal"}, {"message", e.what()}};
    err << "error (internal): " << e.what() << "\n";
  }
  s["exit_code"] = o.exit_code;
  try {
    detail::write_text(dir / (sub + ".json"), s.dump(2) + "\n");
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    if (o.exit_code == 0) o.exit_code = exit_code(ErrorKind::config);
  }
  return o;
}

}  // namespace chj::cli
