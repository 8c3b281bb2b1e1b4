#pragma once

// Discrete backward/forward solution semigroups. T^-_dt is one sweep of the
// action kernel over arbitrary initial data; T^-_t is its K-fold iterate.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "chj/action.hpp"
#include "chj/geometry.hpp"
#include "chj/hamiltonian.hpp"

namespace chj {

template <std::size_t dim>
GridField<dim> step_backward(const HamiltonianModel<dim>& m, const GridField<dim>& v, double dt,
                             const SchemeOptions& opt = {}) {
  auto next = backward_kernel(m, v, dt, opt);
  return GridField<dim>(v.grid(), std::move(next.values), true, opt.barrier);
}

template <std::size_t dim>
GridField<dim> negated(const GridField<dim>& f) {
  std::vector<double> v(f.values().begin(), f.values().end());
  for (auto& x : v) x = -x;
  return GridField<dim>(f.grid(), std::move(v), true, f.barrier());
}

/// T^+_dt v = -T^-_dt(-v) for the reversed model.
template <std::size_t dim>
GridField<dim> step_forward(const HamiltonianModel<dim>& m, const GridField<dim>& v, double dt,
                            const SchemeOptions& opt = {}) {
  return negated(step_backward(reversed(m), negated(v), dt, opt));
}

struct SnapshotMonitor {
  double sup_distance;  // to the reference field
  double min_gap;       // min of (field - reference)
  double max_gap;
};

template <std::size_t dim>
struct Snapshot {
  double t;
  GridField<dim> field;
  std::optional<SnapshotMonitor> monitor;
};

template <std::size_t dim>
struct SemigroupRun {
  HamiltonianModel<dim> model;
  SchemeOptions options;
  Orientation orientation = Orientation::backward;
  double dt = 0.0;
  std::vector<Snapshot<dim>> snapshots;  // snapshots[0] is the initial data at t = 0
  std::optional<GridField<dim>> reference;

  const GridField<dim>& initial() const { return snapshots.front().field; }
  const GridField<dim>& last() const { return snapshots.back().field; }

  GridField<dim> step(const GridField<dim>& v) const {
    return orientation == Orientation::backward ? step_backward(model, v, dt, options)
                                                : step_forward(model, v, dt, options);
  }
};

namespace detail {

template <std::size_t dim>
SnapshotMonitor monitor(const GridField<dim>& f, const GridField<dim>& ref) {
  SnapshotMonitor mon{0.0, std::numeric_limits<double>::infinity(),
                      -std::numeric_limits<double>::infinity()};
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double gap = f[i] - ref[i];
    mon.sup_distance = std::max(mon.sup_distance, std::abs(gap));
    mon.min_gap = std::min(mon.min_gap, gap);
    mon.max_gap = std::max(mon.max_gap, gap);
  }
  return mon;
}

template <std::size_t dim>
SemigroupRun<dim> iterate(SemigroupRun<dim> run, const GridField<dim>& v, std::size_t steps,
                          std::size_t snapshot_every) {
  if (snapshot_every == 0) throw ConfigError("evolve: snapshot cadence must be positive");
  auto record = [&](double t, const GridField<dim>& f) {
    Snapshot<dim> s{t, f, std::nullopt};
    if (run.reference) s.monitor = monitor(f, *run.reference);
    run.snapshots.push_back(std::move(s));
  };
  record(0.0, v);
  GridField<dim> current = v;
  for (std::size_t k = 1; k <= steps; ++k) {
    current = run.step(current);
    if (k % snapshot_every == 0 || k == steps) record(static_cast<double>(k) * run.dt, current);
  }
  return run;
}

}  // namespace detail

/// T^-_t v for t = 0, dt, ..., t_final, keeping every `snapshot_every`-th field
/// (and always the last one).
template <std::size_t dim>
SemigroupRun<dim> evolve(const HamiltonianModel<dim>& m, const GridField<dim>& v, double t_final,
                         double dt, std::size_t snapshot_every = 1, const SchemeOptions& opt = {},
                         std::optional<GridField<dim>> reference = std::nullopt) {
  SemigroupRun<dim> run{m, opt, Orientation::backward, dt, {}, std::move(reference)};
  return detail::iterate(std::move(run), v, detail::step_count(t_final, dt), snapshot_every);
}

/// T^+_t v through the reversal identity T^+_t v = -(T^-_t of the reversed model)(-v).
template <std::size_t dim>
SemigroupRun<dim> evolve_forward(const HamiltonianModel<dim>& m, const GridField<dim>& v,
                                 double t_final, double dt, std::size_t snapshot_every = 1,
                                 const SchemeOptions& opt = {},
                                 std::optional<GridField<dim>> reference = std::nullopt) {
  SemigroupRun<dim> run{m, opt, Orientation::forward, dt, {}, std::move(reference)};
  return detail::iterate(std::move(run), v, detail::step_count(t_final, dt), snapshot_every);
}

template <std::size_t dim>
struct FixedPointResult {
  bool converged;
  GridField<dim> limit;
  double residual;  // sup distance moved by one further step
};

/// Declares convergence when consecutive snapshots among the trailing `window`
/// ones differ by less than `tol` in sup norm.
template <std::size_t dim>
FixedPointResult<dim> detect_fixed_point(const SemigroupRun<dim>& run, std::size_t window,
                                         double tol) {
  if (window < 2 || run.snapshots.size() < 2) {
    throw ConfigError("detect_fixed_point: need at least two snapshots in the window");
  }
  window = std::min(window, run.snapshots.size());
  const std::size_t first = run.snapshots.size() - window;
  double worst = 0.0;
  for (std::size_t k = first + 1; k < run.snapshots.size(); ++k) {
    worst = std::max(worst, sup_distance(run.snapshots[k].field, run.snapshots[k - 1].field));
  }
  const auto& limit = run.last();
  const double residual = sup_distance(run.step(limit), limit);
  return {worst < tol, limit, residual};
}

/// Default trailing window: the last 20% of the snapshots (at least two).
inline std::size_t default_window(std::size_t snapshots) {
  return std::max<std::size_t>(2, (snapshots + 4) / 5);
}

/// Node-wise minimum over the trailing `window` snapshots.
template <std::size_t dim>
GridField<dim> liminf_profile(const SemigroupRun<dim>& run, std::size_t window) {
  if (window == 0 || window > run.snapshots.size()) {
    throw ConfigError("liminf_profile: window outside the recorded snapshots");
  }
  const std::size_t first = run.snapshots.size() - window;
  std::vector<double> v(run.last().values().begin(), run.last().values().end());
  for (std::size_t k = first; k < run.snapshots.size(); ++k) {
    const auto& f = run.snapshots[k].field;
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::min(v[i], f[i]);
  }
  return GridField<dim>(run.last().grid(), std::move(v), true, run.last().barrier());
}

template <std::size_t dim>
struct SubsolutionReport {
  bool ok;                // H(q, Dv, v) <= 0 (or < -1e-10 when strict) at every node
  GridField<dim> margin;  // H(q, Dv(q), v(q)) with centered differences
  std::vector<std::size_t> ambiguous;  // nodes where one-sided differences flip the sign
  bool dynamic_ok;        // one backward step never decreases v
  bool dynamic_strict;    // one backward step strictly increases v everywhere
  double min_increase;    // min over nodes of step(v) - v
};

inline constexpr double kStrictMargin = 1e-10;

/// Graph-point sign test of the stationary equation plus the dynamical test
/// v <= T^-_dt v.
template <std::size_t dim>
SubsolutionReport<dim> subsolution_check(const HamiltonianModel<dim>& m, const GridField<dim>& v,
                                         bool strict, double dt, const SchemeOptions& opt = {}) {
  if (v.has_barrier()) throw ConfigError("subsolution_check: barrier data is not differentiable");
  const auto& grid = v.grid();
  const double limit = strict ? -kStrictMargin : 0.0;
  std::vector<double> margin(grid.size());
  std::vector<std::size_t> ambiguous;
  bool ok = true;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto q = grid.node(i);
    margin[i] = m.H(q, gradient_at(v, i, Difference::centered), v[i]);
    const bool pass = strict ? margin[i] < limit : margin[i] <= limit;
    ok = ok && pass;
    for (auto scheme : {Difference::forward, Difference::backward}) {
      const double one_sided = m.H(q, gradient_at(v, i, scheme), v[i]);
      const bool one_pass = strict ? one_sided < limit : one_sided <= limit;
      if (one_pass != pass) {
        ambiguous.push_back(i);
        break;
      }
    }
  }
  const auto stepped = step_backward(m, v, dt, opt);
  double min_increase = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < grid.size(); ++i) min_increase = std::min(min_increase, stepped[i] - v[i]);
  return {ok,
          GridField<dim>(grid, std::move(margin)),
          std::move(ambiguous),
          min_increase >= 0.0,
          min_increase > 0.0,
          min_increase};
}

}  // namespace chj
