#pragma once

// Connecting orbits from Lambda_0 = j^1 u0 to Lambda_- = j^1 u_-, built from
// minimizing curves of the discrete action and certified by re-integrating
// the contact flow.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "chj/action.hpp"
#include "chj/characteristics.hpp"
#include "chj/error.hpp"
#include "chj/geometry.hpp"
#include "chj/hamiltonian.hpp"
#include "chj/semigroup.hpp"

namespace chj {

struct ConnectOptions {
  SchemeOptions scheme;
  double certify_tol = 5e-2;     // grid curve vs re-integrated characteristic
  double omega_tol = 1e-3;       // distance to Lambda_- on the tail window
  double tail_window = 2.0;
  double cluster_radius = 5e-2;  // start points closer than this are identified
  double hypothesis_tol = 1e-2;
};

template <std::size_t dim>
struct LiftedCharacteristic {
  MinimizingCurve<dim> curve;
  PhasePoint<dim> lifted_start;  // (q(0), dL/dv(q(0), v(0), u0(q(0))), u0(q(0)))
  PhasePoint<dim> graph_start;   // (q(0), Du0(q(0)), u0(q(0))) on Lambda_0
  Trajectory<dim> ode;           // flow of lifted_start, one sample per grid layer
  double residual = 0.0;         // max over layers of |q_grid - q_ode| and |u_grid - u_ode|
};

/// Backtraces the minimizing curve ending near q_end at layer `layer` of a
/// table propagated from u0, lifts its start and re-integrates the flow.
template <std::size_t dim>
LiftedCharacteristic<dim> lift_characteristic(const ActionTable<dim>& table,
                                              const HamiltonianModel<dim>& m,
                                              const LegendrianGraph<dim>& u0,
                                              const TorusPoint<dim>& q_end, std::size_t layer,
                                              double certify_tol) {
  LiftedCharacteristic<dim> out;
  out.curve = backtrace(table, m, q_end, layer);
  const auto& q0 = out.curve.positions.front();
  const double u_start = u0.value_at(q0);
  out.lifted_start = {q0, lagrangian_dv(m, q0, out.curve.velocities.front(), u_start), u_start};
  out.graph_start = {q0, u0.gradient_at_point(q0), u_start};
  const double t = static_cast<double>(out.curve.size() - 1) * table.dt;
  out.ode = flow(m, out.lifted_start, t, table.dt);
  const std::size_t count = std::min(out.ode.size(), out.curve.size());
  for (std::size_t k = 0; k < count; ++k) {
    const auto x = out.ode.samples[k].unwrapped_q();
    for (int c = 0; c < dim; ++c) {
      out.residual = std::max(out.residual, std::abs(x[c] - out.curve.unwrapped[k][c]));
    }
    out.residual = std::max(out.residual,
                            std::abs(out.ode.samples[k].sigma.u - out.curve.values[k]));
  }
  if (out.residual > certify_tol) {
    throw CertificationError("characteristic lift failed: grid curve and flow differ by " +
                                 format_number(out.residual),
                             out.residual);
  }
  return out;
}

/// Convenience form: propagates u0 for time t and lifts the curve ending at q_end.
template <std::size_t dim>
LiftedCharacteristic<dim> minimizing_characteristic(const HamiltonianModel<dim>& m,
                                                    const LegendrianGraph<dim>& u0,
                                                    const TorusPoint<dim>& q_end, double t,
                                                    double dt, const ConnectOptions& opt = {}) {
  const auto steps = detail::step_count(t, dt);
  const auto table = propagate(m, u0.generator(), steps, dt, opt.scheme);
  return lift_characteristic(table, m, u0, q_end, steps, opt.certify_tol);
}

template <std::size_t dim>
struct ApproxPoint {
  PhasePoint<dim> target;  // point of Lambda_- approximated
  double time = 0.0;
  PhasePoint<dim> start;   // on Lambda_0
  double distance = 0.0;   // flow image of start at `time` vs target
  double residual = 0.0;   // certification residual of the characteristic
};

template <std::size_t dim>
struct ConnectingOrbitReport {
  std::string method;
  PhasePoint<dim> sigma0;
  double horizon = 0.0;
  Trajectory<dim> trajectory;
  std::vector<std::pair<double, double>> dist_profile;  // (t, graph distance to Lambda_-)
  std::vector<ApproxPoint<dim>> approx_points;
  std::vector<PhasePoint<dim>> starts;  // raw start points, in probing order
  std::size_t start_clusters = 0;
  double lift_gap = 0.0;                // lifted start vs graph start
  double entry_time = std::numeric_limits<double>::quiet_NaN();
  bool certified = false;
  std::string failure;                  // empty unless construction or certification stopped
};

namespace detail {

template <std::size_t dim>
std::size_t count_clusters(const std::vector<PhasePoint<dim>>& pts, double radius) {
  std::vector<PhasePoint<dim>> reps;
  for (const auto& p : pts) {
    const bool known = std::any_of(reps.begin(), reps.end(),
                                   [&](const auto& r) { return phase_distance(p, r) < radius; });
    if (!known) reps.push_back(p);
  }
  return reps.size();
}

template <std::size_t dim>
double lift_distance(const PhasePoint<dim>& s, const PhasePoint<dim>& target) {
  double d = periodic_distance(s.q, target.q);
  Vec<dim> dp;
  for (int k = 0; k < dim; ++k) dp[k] = s.p[k] - target.p[k];
  d = std::max(d, norm<dim>(dp));
  return std::max(d, std::abs(s.u - target.u));
}

template <std::size_t dim>
void flow_and_profile(ConnectingOrbitReport<dim>& report, const HamiltonianModel<dim>& m,
                      const LegendrianGraph<dim>& u_minus, double dt) {
  try {
    report.trajectory = flow(m, report.sigma0, report.horizon, dt);
  } catch (const NumericsError& e) {
    report.failure = e.what();
    return;
  }
  for (const auto& s : report.trajectory.samples) {
    report.dist_profile.emplace_back(s.t, u_minus.distance(s.sigma));
  }
}

template <std::size_t dim>
SemigroupRun<dim> run_from_table(const ActionTable<dim>& table, const HamiltonianModel<dim>& m,
                                 std::size_t cadence) {
  SemigroupRun<dim> run{m, table.options, Orientation::backward, table.dt, {}, std::nullopt};
  for (std::size_t k = 0; k <= table.steps(); ++k) {
    if (k % cadence == 0 || k == table.steps()) {
      run.snapshots.push_back({static_cast<double>(k) * table.dt, table.layers[k], std::nullopt});
    }
  }
  return run;
}

}  // namespace detail

/// True when every trajectory sample on [horizon - tail_window, horizon] lies
/// within tol of Lambda_-.
template <std::size_t dim>
bool certify_omega(const ConnectingOrbitReport<dim>& report, double tail_window, double tol) {
  if (!report.failure.empty() || report.dist_profile.empty()) return false;
  const double from = report.horizon - tail_window;
  for (const auto& [t, d] : report.dist_profile) {
    if (t >= from - 1e-12 && !(d < tol)) return false;
  }
  return true;
}

/// Construction through minimizers ending at fixed targets q_bar for growing
/// times t_n. Requires the discrete semigroup from u0 to settle on u_-.
template <std::size_t dim>
ConnectingOrbitReport<dim> connect_graph1(const HamiltonianModel<dim>& m,
                                          const LegendrianGraph<dim>& u0,
                                          const LegendrianGraph<dim>& u_minus,
                                          const std::vector<TorusPoint<dim>>& targets,
                                          std::vector<double> times, double horizon, double dt,
                                          const ConnectOptions& opt = {}) {
  if (targets.empty()) throw ConfigError("connect: at least one target point is required");
  if (times.empty()) throw ConfigError("connect: at least one time t_n is required");
  std::sort(times.begin(), times.end());
  if (!(times.front() > 0.0)) throw ConfigError("connect: times t_n must be positive");
  if (!(horizon >= times.back())) throw ConfigError("connect: horizon shorter than the last t_n");
  if (!(u0.grid() == u_minus.grid())) throw ConfigError("connect: grid mismatch");

  const auto steps = detail::step_count(times.back(), dt);
  const auto table = propagate(m, u0.generator(), steps, dt, opt.scheme);
  const auto cadence = std::max<std::size_t>(1, steps / 50);
  const auto run = detail::run_from_table(table, m, cadence);
  const auto fixed = detect_fixed_point(run, default_window(run.snapshots.size()), opt.hypothesis_tol);
  const double to_limit = sup_distance(run.last(), u_minus.generator());
  if (!fixed.converged || !(to_limit < opt.hypothesis_tol)) {
    throw HypothesisError("hypothesis (convergence1) fails: sup distance to u_- is " +
                          format_number(to_limit) + " at t=" + format_number(times.back()));
  }

  ConnectingOrbitReport<dim> report;
  report.method = "graph1";
  report.horizon = horizon;
  std::vector<PhasePoint<dim>> primary;
  PhasePoint<dim> lifted_last;
  for (std::size_t j = 0; j < targets.size(); ++j) {
    const auto& qbar = targets[j];
    const PhasePoint<dim> target{qbar, u_minus.gradient_at_point(qbar), u_minus.value_at(qbar)};
    for (double t : times) {
      const auto lc = lift_characteristic(table, m, u0, qbar, detail::step_count(t, dt),
                                          opt.certify_tol);
      report.approx_points.push_back(
          {target, t, lc.graph_start, detail::lift_distance(lc.ode.back().sigma, target),
           lc.residual});
      report.starts.push_back(lc.graph_start);
      if (j == 0) {
        primary.push_back(lc.graph_start);
        lifted_last = lc.lifted_start;
      }
    }
  }
  report.start_clusters = detail::count_clusters(report.starts, opt.cluster_radius);
  report.sigma0 = primary.back();
  report.lift_gap = phase_distance(lifted_last, report.sigma0);
  if (primary.size() >= 2 &&
      !(phase_distance(primary[primary.size() - 2], primary.back()) < opt.cluster_radius)) {
    report.failure = "start points did not stabilize as t_n grew";
    return report;
  }
  detail::flow_and_profile(report, m, u_minus, dt);
  report.certified = certify_omega(report, opt.tail_window, opt.omega_tol);
  if (report.failure.empty() && !report.certified) {
    report.failure = "flow did not stay within " + format_number(opt.omega_tol) +
                     " of Lambda_- on the tail window";
  }
  return report;
}

/// Construction through the points where T_t u0 - u_- is smallest. Requires
/// liminf T_t u0 >= u_- with equality somewhere.
template <std::size_t dim>
ConnectingOrbitReport<dim> connect_graph2(const HamiltonianModel<dim>& m,
                                          const LegendrianGraph<dim>& u0,
                                          const LegendrianGraph<dim>& u_minus,
                                          double attractor_radius, double horizon, double dt,
                                          const ConnectOptions& opt = {}) {
  if (!(attractor_radius > 0.0)) throw ConfigError("connect: attractor radius must be positive");
  if (!(u0.grid() == u_minus.grid())) throw ConfigError("connect: grid mismatch");
  const auto steps = detail::step_count(horizon, dt);
  if (steps < 2) throw ConfigError("connect: horizon must span at least two steps");
  const auto table = propagate(m, u0.generator(), steps, dt, opt.scheme);
  const auto run = detail::run_from_table(table, m, 1);
  const auto low = liminf_profile(run, default_window(run.snapshots.size()));
  const auto& um = u_minus.generator();

  double worst_gap = std::numeric_limits<double>::infinity();
  std::size_t worst_node = 0;
  for (std::size_t i = 0; i < um.size(); ++i) {
    const double gap = low[i] - um[i];
    if (gap < worst_gap) {
      worst_gap = gap;
      worst_node = i;
    }
  }
  if (worst_gap < -opt.hypothesis_tol) {
    throw HypothesisError("hypothesis (1) fails: liminf of T_t u0 is below u_- by " +
                          format_number(-worst_gap) + " at node " + std::to_string(worst_node));
  }
  if (worst_gap > opt.hypothesis_tol) {
    throw HypothesisError("hypothesis (2) fails: liminf of T_t u0 stays above u_- by " +
                          format_number(worst_gap));
  }

  ConnectingOrbitReport<dim> report;
  report.method = "graph2";
  report.horizon = horizon;
  std::size_t entry = 0;
  for (std::size_t k = 1; k <= steps && entry == 0; ++k) {
    const auto& layer = table.layers[k];
    std::size_t node = 0;
    for (std::size_t i = 1; i < um.size(); ++i) {
      if (layer[i] - um[i] < layer[node] - um[node]) node = i;
    }
    const PhasePoint<dim> sigma{table.grid.node(node), gradient_at(layer, node), layer[node]};
    report.starts.push_back(sigma);
    if (u_minus.distance(sigma) < attractor_radius) {
      entry = k;
      const auto lc = lift_characteristic(table, m, u0, sigma.q, k, opt.certify_tol);
      const double t = static_cast<double>(k) * dt;
      report.entry_time = t;
      report.sigma0 = lc.graph_start;
      report.lift_gap = phase_distance(lc.lifted_start, lc.graph_start);
      report.approx_points.push_back(
          {sigma, t, lc.graph_start, u_minus.distance(lc.ode.back().sigma), lc.residual});
    }
  }
  report.start_clusters = detail::count_clusters(report.starts, opt.cluster_radius);
  if (entry == 0) {
    report.failure = "no approximating point entered the attractor neighbourhood";
    return report;
  }
  detail::flow_and_profile(report, m, u_minus, dt);
  if (!report.failure.empty()) return report;
  const double at_entry = report.dist_profile[std::min(entry, report.dist_profile.size() - 1)].second;
  const bool entered = at_entry < attractor_radius;
  report.certified = entered && certify_omega(report, opt.tail_window, opt.omega_tol);
  if (!entered) {
    report.failure = "flow of sigma0 is outside the attractor neighbourhood at the entry time";
  } else if (!report.certified) {
    report.failure = "flow did not stay within " + format_number(opt.omega_tol) +
                     " of Lambda_- on the tail window";
  }
  return report;
}

}  // namespace chj
