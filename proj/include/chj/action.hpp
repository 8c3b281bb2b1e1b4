#pragma once

// Implicitly defined action functions on a periodic grid.
//
// The backward action h_{q0,u0}(q, t) is the smallest value of
//     u0 + int_0^t L(gamma, gamma', h(gamma, tau)) dtau
// over curves from q0 to q. On the grid, one step of length dt moves from a
// source node to a destination node inside the velocity window; the running
// cost is evaluated at the unknown new value, which makes every node update a
// scalar fixed-point problem.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "chj/error.hpp"
#include "chj/geometry.hpp"
#include "chj/hamiltonian.hpp"
#include "chj/parallel.hpp"

namespace chj {

/// Where the running cost of one step is evaluated.
enum class Quadrature {
  arrival,    // L(q_to, v, u_new): fully implicit, first order in dt
  trapezoid,  // mean of L(q_from, v, u_from) and L(q_to, v, u_new)
};

struct SchemeOptions {
  double v_max = 5.0;
  Quadrature quadrature = Quadrature::trapezoid;
  double barrier = kBarrier;
  double tolerance = 1e-12;
  int max_iterations = 100;
};

struct StepSolution {
  double value;
  int iterations;
};

namespace detail {

/// Solves x = base + weight * cost(x) for the scalar x.
template <typename Cost>
StepSolution solve_implicit(double base, double weight, Cost&& cost, const SchemeOptions& opt) {
  auto residual = [&](double x) { return x - base - weight * cost(x); };

  double x = base;
  double prev_step = std::numeric_limits<double>::infinity();
  double damping = 1.0;
  for (int it = 1; it <= opt.max_iterations; ++it) {
    const double target = base + weight * cost(x);
    if (!std::isfinite(target)) break;
    const double step = target - x;
    if (std::abs(step) <= opt.tolerance * std::max(1.0, std::abs(x))) return {target, it};
    if (std::abs(step) > prev_step) {
      damping *= 0.5;
      if (damping < 1e-3) break;
    }
    prev_step = std::abs(step);
    x += damping * step;
  }

  // Bisection on the residual, which is increasing whenever the step is
  // well posed (weight * dcost/dx < 1).
  double span = std::abs(weight * cost(base)) + 1.0;
  double lo = base - span, hi = base + span;
  bool bracketed = false;
  for (int k = 0; k < 60; ++k) {
    const double rl = residual(lo), rh = residual(hi);
    if (std::isfinite(rl) && std::isfinite(rh) && rl <= 0.0 && rh >= 0.0) {
      bracketed = true;
      break;
    }
    span *= 2.0;
    lo = base - span;
    hi = base + span;
  }
  if (!bracketed) throw NumericsError("dt too large for u-Lipschitz constant");
  int it = opt.max_iterations;
  while (hi - lo > opt.tolerance * std::max(1.0, std::abs(lo))) {
    const double mid = 0.5 * (lo + hi);
    (residual(mid) <= 0.0 ? lo : hi) = mid;
    if (++it > opt.max_iterations + 400) break;
  }
  const double root = 0.5 * (lo + hi);
  const double probe = 1e-6 * std::max(1.0, std::abs(root));
  const double slope = (cost(root + probe) - cost(root - probe)) / (2.0 * probe);
  if (!(weight * slope < 1.0)) throw NumericsError("dt too large for u-Lipschitz constant");
  return {root, it};
}

}  // namespace detail

/// One implicit step of the action: the value reached at q_to after time dt when
/// leaving q_from with value u_from along the straight (shortest periodic) segment.
template <std::size_t dim>
StepSolution implicit_step_value(const HamiltonianModel<dim>& m, const TorusPoint<dim>& q_from,
                                 double u_from, const TorusPoint<dim>& q_to, double dt,
                                 const SchemeOptions& opt = {}) {
  Vec<dim> v = displacement(q_from, q_to);
  for (auto& c : v) c /= dt;
  double base = u_from, weight = dt;
  if (opt.quadrature == Quadrature::trapezoid) {
    base += 0.5 * dt * lagrangian(m, q_from, v, u_from);
    weight = 0.5 * dt;
  }
  if (m.u_independent) return {base + weight * lagrangian(m, q_to, v, 0.0), 1};
  return detail::solve_implicit(
      base, weight, [&](double u) { return lagrangian(m, q_to, v, u); }, opt);
}

/// Integer offsets (in cells) of every source inside the velocity window,
/// i.e. |offset| * h <= v_max * dt, in a fixed order.
template <std::size_t dim>
std::vector<std::array<std::int64_t, dim>> window_offsets(const Grid<dim>& grid, double dt,
                                                          double v_max) {
  const double reach = v_max * dt / grid.spacing();
  const auto r = static_cast<std::int64_t>(std::floor(reach + 1e-9));
  if (r < 1) {
    throw ConfigError("velocity window does not reach a neighbor (v_max*dt*n = " +
                      format_number(reach) + " < 1)");
  }
  if (2 * r + 1 > grid.n()) {
    throw ConfigError("velocity window wraps around the torus (v_max*dt too large for n)");
  }
  std::vector<std::array<std::int64_t, dim>> offsets;
  std::array<std::int64_t, dim> o;
  o.fill(-r);
  while (true) {
    double s = 0.0;
    for (auto c : o) s += static_cast<double>(c * c);
    if (std::sqrt(s) <= reach + 1e-9) offsets.push_back(o);
    int k = 0;
    while (k < dim && ++o[k] > r) {
      o[k] = -r;
      ++k;
    }
    if (k == dim) break;
  }
  return offsets;
}

/// One application of the discrete backward operator to a (possibly barrier)
/// field, with argmin bookkeeping.
template <std::size_t dim>
struct KernelStep {
  std::vector<double> values;
  std::vector<std::int32_t> source;  // -1 where every candidate was a barrier
  std::size_t window_boundary_hits = 0;
};

template <std::size_t dim>
KernelStep<dim> backward_kernel(const HamiltonianModel<dim>& m, const GridField<dim>& prev,
                                double dt, const SchemeOptions& opt) {
  const auto& grid = prev.grid();
  const auto offsets = window_offsets(grid, dt, opt.v_max);
  const double reach = opt.v_max * dt / grid.spacing();
  KernelStep<dim> out;
  out.values.assign(grid.size(), opt.barrier);
  out.source.assign(grid.size(), -1);
  std::vector<unsigned char> on_boundary(grid.size(), 0);

  parallel_for(grid.size(), [&](std::size_t j) {
    const auto dest = grid.unflatten(j);
    const auto q_to = grid.node(j);
    double best = std::numeric_limits<double>::infinity();
    std::int64_t best_src = -1;
    double best_len = 0.0;
    for (const auto& o : offsets) {
      auto src = dest;
      for (int k = 0; k < dim; ++k) src[k] -= o[k];
      const std::size_t i = grid.flatten(src);
      if (is_barrier(prev[i], opt.barrier)) continue;
      const double w = implicit_step_value(m, grid.node(i), prev[i], q_to, dt, opt).value;
      if (w < best || (w == best && static_cast<std::int64_t>(i) < best_src)) {
        best = w;
        best_src = static_cast<std::int64_t>(i);
        double s = 0.0;
        for (auto c : o) s += static_cast<double>(c * c);
        best_len = std::sqrt(s);
      }
    }
    if (best_src >= 0) {
      if (!std::isfinite(best)) throw NumericsError("non-finite action value at node " + std::to_string(j));
      out.values[j] = std::min(best, opt.barrier);
      out.source[j] = static_cast<std::int32_t>(best_src);
      on_boundary[j] = best_len > reach - 1.0 ? 1 : 0;
    }
  });
  for (auto b : on_boundary) out.window_boundary_hits += b;
  return out;
}

// ---------------------------------------------------------------------------
// Action tables

enum class Orientation { backward, forward };

template <std::size_t dim>
struct ActionTable {
  Grid<dim> grid;
  double dt;
  std::vector<GridField<dim>> layers;                   // layer k holds time k*dt
  std::vector<std::vector<std::int32_t>> backpointers;  // [k][j]: source of node j in layer k-1
  std::vector<std::size_t> window_boundary_hits;        // per layer, layer 0 unused
  SchemeOptions options;
  Orientation orientation = Orientation::backward;
  std::string model;

  std::size_t steps() const { return layers.size() - 1; }
  const GridField<dim>& final_layer() const { return layers.back(); }

  bool reachable(std::size_t k, std::size_t node) const {
    const double v = layers[k][node];
    return orientation == Orientation::backward ? !is_barrier(v, options.barrier)
                                                : !is_barrier(-v, options.barrier);
  }
};

namespace detail {

inline std::size_t step_count(double t, double dt) {
  if (!(dt > 0.0) || !(t >= 0.0)) throw ConfigError("action: need t >= 0 and dt > 0");
  const double k = t / dt;
  const auto steps = static_cast<std::size_t>(std::llround(k));
  if (std::abs(k - static_cast<double>(steps)) > 1e-8 * std::max(1.0, k)) {
    throw ConfigError("t=" + format_number(t) + " is not a multiple of dt=" + format_number(dt));
  }
  return steps;
}

template <std::size_t dim>
GridField<dim> dirac_layer(const Grid<dim>& grid, const TorusPoint<dim>& q0, double u0,
                           double barrier) {
  std::vector<double> v(grid.size(), barrier);
  v[grid.nearest_node(q0)] = u0;
  return GridField<dim>(grid, std::move(v), true, barrier);
}

}  // namespace detail

/// Iterates the backward kernel `steps` times from `initial`, recording every
/// layer and the argmin source of every node.
template <std::size_t dim>
ActionTable<dim> propagate(const HamiltonianModel<dim>& m, const GridField<dim>& initial,
                           std::size_t steps, double dt, const SchemeOptions& opt = {}) {
  ActionTable<dim> table{initial.grid(), dt, {}, {}, {}, opt, Orientation::backward, m.name};
  table.layers.reserve(steps + 1);
  table.layers.push_back(initial);
  table.backpointers.emplace_back();
  table.window_boundary_hits.push_back(0);
  for (std::size_t k = 0; k < steps; ++k) {
    auto next = backward_kernel(m, table.layers.back(), dt, opt);
    table.layers.emplace_back(initial.grid(), std::move(next.values), true, opt.barrier);
    table.backpointers.push_back(std::move(next.source));
    table.window_boundary_hits.push_back(next.window_boundary_hits);
  }
  return table;
}

/// Backward action h_{q0,u0}(., k dt) for k = 0..t/dt. The point initial
/// condition is the value u0 at the node nearest q0 and the barrier elsewhere.
template <std::size_t dim>
ActionTable<dim> backward_action(const HamiltonianModel<dim>& m, const TorusPoint<dim>& q0,
                                 double u0, double t, const Grid<dim>& grid, double dt,
                                 const SchemeOptions& opt = {}) {
  const std::size_t steps = detail::step_count(t, dt);
  auto table = propagate(m, detail::dirac_layer(grid, q0, u0, opt.barrier), steps, dt, opt);

  // Every node within k window radii of q0 must have been reached.
  // In dim >= 2 the lattice ball is shrunk by one cell to stay inside the
  // Minkowski sum of the window offsets.
  const double cells = std::floor(opt.v_max * dt / grid.spacing() + 1e-9) - (dim > 1 ? 1.0 : 0.0);
  const double radius = static_cast<double>(steps) * cells * grid.spacing();
  const auto start = grid.node(grid.nearest_node(q0));
  std::vector<std::size_t> unreachable;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!table.reachable(steps, i) && periodic_distance(start, grid.node(i)) <= radius - 1e-12) {
      unreachable.push_back(i);
    }
  }
  if (!unreachable.empty()) {
    std::string list;
    for (std::size_t k = 0; k < std::min<std::size_t>(unreachable.size(), 10); ++k)
      list += (k ? "," : "") + std::to_string(unreachable[k]);
    throw NumericsError("unreachable nodes inside the reachable radius: " + list +
                        (unreachable.size() > 10 ? ",..." : ""));
  }
  return table;
}

/// Forward action h^{q0,u0}, computed as -h_{q0,-u0} of the reversed model.
/// Unreachable nodes carry -barrier.
template <std::size_t dim>
ActionTable<dim> forward_action(const HamiltonianModel<dim>& m, const TorusPoint<dim>& q0,
                                double u0, double t, const Grid<dim>& grid, double dt,
                                const SchemeOptions& opt = {}) {
  auto table = backward_action(reversed(m), q0, -u0, t, grid, dt, opt);
  for (auto& layer : table.layers) {
    std::vector<double> v(layer.values().begin(), layer.values().end());
    for (auto& x : v) x = -x;
    layer = GridField<dim>(grid, std::move(v), true, opt.barrier);
  }
  table.orientation = Orientation::forward;
  table.model = m.name;
  return table;
}

/// Direct sup-form dynamic programming for the forward action. Quadratic in the
/// window size and written independently of the reversal route; meant for
/// validating forward_action on small grids.
template <std::size_t dim>
ActionTable<dim> forward_action_direct(const HamiltonianModel<dim>& m, const TorusPoint<dim>& q0,
                                       double u0, double t, const Grid<dim>& grid, double dt,
                                       const SchemeOptions& opt = {}) {
  const std::size_t steps = detail::step_count(t, dt);
  const auto offsets = window_offsets(grid, dt, opt.v_max);
  ActionTable<dim> table{grid, dt, {}, {}, {}, opt, Orientation::forward, m.name};
  std::vector<double> layer(grid.size(), -opt.barrier);
  layer[grid.nearest_node(q0)] = u0;
  table.layers.emplace_back(grid, layer, true, opt.barrier);
  table.backpointers.emplace_back();
  table.window_boundary_hits.push_back(0);
  for (std::size_t k = 0; k < steps; ++k) {
    std::vector<double> next(grid.size(), -opt.barrier);
    std::vector<std::int32_t> src(grid.size(), -1);
    for (std::size_t j = 0; j < grid.size(); ++j) {
      const auto qj = grid.node(j);
      for (const auto& o : offsets) {
        // The forward-time curve leaves q_j and arrives at q_i after dt.
        auto mi = grid.unflatten(j);
        for (int c = 0; c < dim; ++c) mi[c] += o[c];
        const std::size_t i = grid.flatten(mi);
        if (is_barrier(-layer[i], opt.barrier)) continue;
        const auto qi = grid.node(i);
        Vec<dim> v = displacement(qj, qi);
        for (auto& c : v) c /= dt;
        double base = layer[i], weight = dt;
        if (opt.quadrature == Quadrature::trapezoid) {
          base -= 0.5 * dt * lagrangian(m, qi, v, layer[i]);
          weight = 0.5 * dt;
        }
        const double w = detail::solve_implicit(
                             base, -weight, [&](double u) { return lagrangian(m, qj, v, u); }, opt)
                             .value;
        if (w > next[j] || (w == next[j] && static_cast<std::int32_t>(i) < src[j])) {
          next[j] = w;
          src[j] = static_cast<std::int32_t>(i);
        }
      }
    }
    layer = next;
    table.layers.emplace_back(grid, next, true, opt.barrier);
    table.backpointers.push_back(std::move(src));
    table.window_boundary_hits.push_back(0);
  }
  return table;
}

// ---------------------------------------------------------------------------
// Minimizing curves

template <std::size_t dim>
struct MinimizingCurve {
  std::vector<double> times;
  std::vector<std::size_t> nodes;
  std::vector<TorusPoint<dim>> positions;
  std::vector<Vec<dim>> unwrapped;   // positions lifted to R^dim, starting at positions[0]
  std::vector<Vec<dim>> velocities;  // velocities[k] drives step k -> k+1; last entry repeats
  std::vector<double> values;
  std::vector<Vec<dim>> momenta;     // dL/dv(q_k, v_k, u_k)

  std::size_t size() const { return times.size(); }
};

/// Follows the argmin sources back from the node nearest q_end in layer
/// `layer` (default: the last one) to layer 0.
template <std::size_t dim>
MinimizingCurve<dim> backtrace(const ActionTable<dim>& table, const HamiltonianModel<dim>& m,
                               const TorusPoint<dim>& q_end,
                               std::size_t layer = static_cast<std::size_t>(-1)) {
  if (table.orientation != Orientation::backward) {
    throw Error(ErrorKind::internal, "backtrace needs a backward action table");
  }
  const auto& grid = table.grid;
  const std::size_t steps = std::min(layer, table.steps());
  std::size_t node = grid.nearest_node(q_end);
  if (!table.reachable(steps, node)) {
    throw NumericsError("backtrace: no finite value at the end point");
  }
  std::vector<std::size_t> nodes(steps + 1);
  nodes[steps] = node;
  for (std::size_t k = steps; k > 0; --k) {
    const auto src = table.backpointers[k][node];
    if (src < 0 || !table.reachable(k - 1, static_cast<std::size_t>(src))) {
      throw Error(ErrorKind::internal,
                  "broken backpointer chain at layer " + std::to_string(k) + ", node " +
                      std::to_string(node));
    }
    node = static_cast<std::size_t>(src);
    nodes[k - 1] = node;
  }

  MinimizingCurve<dim> curve;
  curve.nodes = nodes;
  Vec<dim> x = grid.node(nodes[0]).coords();
  for (std::size_t k = 0; k <= steps; ++k) {
    const auto q = grid.node(nodes[k]);
    if (k > 0) {
      const auto d = displacement(grid.node(nodes[k - 1]), q);
      for (int c = 0; c < dim; ++c) x[c] += d[c];
    }
    curve.times.push_back(static_cast<double>(k) * table.dt);
    curve.positions.push_back(q);
    curve.unwrapped.push_back(x);
    curve.values.push_back(table.layers[k][nodes[k]]);
  }
  for (std::size_t k = 0; k < steps; ++k) {
    auto v = displacement(curve.positions[k], curve.positions[k + 1]);
    for (auto& c : v) c /= table.dt;
    curve.velocities.push_back(v);
  }
  curve.velocities.push_back(steps > 0 ? curve.velocities.back() : Vec<dim>{});
  for (std::size_t k = 0; k <= steps; ++k) {
    curve.momenta.push_back(lagrangian_dv(m, curve.positions[k], curve.velocities[k], curve.values[k]));
  }
  return curve;
}

/// Largest defect of the one-step relation u_{k+1} = u_k + dt * (quadrature of L)
/// along a backtraced curve.
template <std::size_t dim>
double curve_step_residual(const MinimizingCurve<dim>& curve, const HamiltonianModel<dim>& m,
                           double dt, Quadrature rule) {
  double worst = 0.0;
  for (std::size_t k = 0; k + 1 < curve.size(); ++k) {
    const auto& v = curve.velocities[k];
    const double arrive = lagrangian(m, curve.positions[k + 1], v, curve.values[k + 1]);
    const double inc = rule == Quadrature::arrival
                           ? dt * arrive
                           : 0.5 * dt * (lagrangian(m, curve.positions[k], v, curve.values[k]) + arrive);
    worst = std::max(worst, std::abs(curve.values[k + 1] - curve.values[k] - inc));
  }
  return worst;
}

/// Long-format export "k,index,value,backpointer"; unreachable values are
/// written as the barrier (negated for forward tables).
template <std::size_t dim>
void write_action_csv(std::ostream& os, const ActionTable<dim>& table) {
  os << "k,index,value,backpointer\n";
  for (std::size_t k = 0; k < table.layers.size(); ++k) {
    for (std::size_t i = 0; i < table.grid.size(); ++i) {
      const int bp = k == 0 ? -1 : table.backpointers[k][i];
      os << k << ',' << i << ',' << format_number(table.layers[k][i]) << ',' << bp << "\n";
    }
  }
}

}  // namespace chj
