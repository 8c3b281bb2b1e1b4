#pragma once

// Characteristics of the contact Hamiltonian system
//
//   q' = dH/dp,   p' = -dH/dq - (dH/du) p,   u' = <p, dH/dp> - H,
//
// integrated with fixed-step classical RK4, plus Legendrian graph lifts,
// omega-limit estimation and the closed-form Moebius oracle.

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "chj/error.hpp"
#include "chj/geometry.hpp"
#include "chj/hamiltonian.hpp"
#include "chj/parallel.hpp"

namespace chj {

template <std::size_t dim>
struct TrajectorySample {
  double t;
  PhasePoint<dim> sigma;
  std::array<int, dim> winding{};  // full turns made by each coordinate of q

  /// q lifted to R^dim (continuous along the trajectory).
  Vec<dim> unwrapped_q() const {
    Vec<dim> x;
    for (int k = 0; k < dim; ++k) x[k] = sigma.q[k] + winding[k];
    return x;
  }
};

template <std::size_t dim>
struct Trajectory {
  std::vector<TrajectorySample<dim>> samples;
  double step_size = 0.0;
  std::string model;

  const TrajectorySample<dim>& back() const { return samples.back(); }
  std::size_t size() const { return samples.size(); }
};

/// Right-hand side of the characteristic system at an unwrapped state.
template <std::size_t dim>
struct ContactVectorField {
  const HamiltonianModel<dim>& model;

  struct State {
    Vec<dim> q;
    Vec<dim> p;
    double u;
  };

  State operator()(const State& s) const {
    const TorusPoint<dim> q(s.q);
    const auto hp = model.dh_dp(q, s.p, s.u);
    const auto hq = model.dh_dq(q, s.p, s.u);
    const double hu = model.dh_du(q, s.p, s.u);
    const double h = model.H(q, s.p, s.u);
    State d;
    for (int k = 0; k < dim; ++k) {
      d.q[k] = hp[k];
      d.p[k] = -hq[k] - hu * s.p[k];
    }
    d.u = dot<dim>(s.p, hp) - h;
    return d;
  }
};

namespace detail {

template <std::size_t dim>
typename ContactVectorField<dim>::State axpy(const typename ContactVectorField<dim>::State& x,
                                             double a,
                                             const typename ContactVectorField<dim>::State& y) {
  typename ContactVectorField<dim>::State r;
  for (int k = 0; k < dim; ++k) {
    r.q[k] = x.q[k] + a * y.q[k];
    r.p[k] = x.p[k] + a * y.p[k];
  }
  r.u = x.u + a * y.u;
  return r;
}

template <std::size_t dim>
TrajectorySample<dim> make_sample(double t, const typename ContactVectorField<dim>::State& s) {
  TrajectorySample<dim> sample;
  sample.t = t;
  sample.sigma.q = TorusPoint<dim>(s.q);
  sample.sigma.p = s.p;
  sample.sigma.u = s.u;
  for (int k = 0; k < dim; ++k) sample.winding[k] = static_cast<int>(std::floor(s.q[k]));
  return sample;
}

}  // namespace detail

/// Fixed-step RK4 from sigma0 over [0, t_final]. The last step is shortened if
/// t_final is not a multiple of dt.
template <std::size_t dim>
Trajectory<dim> flow(const HamiltonianModel<dim>& m, const PhasePoint<dim>& sigma0,
                     double t_final, double dt) {
  if (!(dt > 0.0)) throw ConfigError("flow: dt must be positive");
  if (!(t_final >= 0.0)) throw ConfigError("flow: t_final must be non-negative");
  using State = typename ContactVectorField<dim>::State;
  const ContactVectorField<dim> field{m};
  State s{sigma0.q.coords(), sigma0.p, sigma0.u};

  Trajectory<dim> traj;
  traj.step_size = dt;
  traj.model = m.name;
  const auto steps = static_cast<std::size_t>(std::ceil(t_final / dt - 1e-9));
  traj.samples.reserve(steps + 1);
  traj.samples.push_back(detail::make_sample<dim>(0.0, s));

  for (std::size_t k = 0; k < steps; ++k) {
    const double t0 = static_cast<double>(k) * dt;
    const double h = std::min(dt, t_final - t0);
    const State k1 = field(s);
    const State k2 = field(detail::axpy<dim>(s, 0.5 * h, k1));
    const State k3 = field(detail::axpy<dim>(s, 0.5 * h, k2));
    const State k4 = field(detail::axpy<dim>(s, h, k3));
    for (int c = 0; c < dim; ++c) {
      s.q[c] += h / 6.0 * (k1.q[c] + 2.0 * k2.q[c] + 2.0 * k3.q[c] + k4.q[c]);
      s.p[c] += h / 6.0 * (k1.p[c] + 2.0 * k2.p[c] + 2.0 * k3.p[c] + k4.p[c]);
    }
    s.u += h / 6.0 * (k1.u + 2.0 * k2.u + 2.0 * k3.u + k4.u);

    const double t = (k + 1 == steps) ? t_final : t0 + h;
    bool finite = std::isfinite(s.u);
    for (int c = 0; c < dim; ++c) finite = finite && std::isfinite(s.q[c]) && std::isfinite(s.p[c]);
    if (!finite) throw NumericsError("blow-up detected at t=" + format_number(t));
    for (int c = 0; c < dim; ++c) {
      if (std::abs(s.p[c]) > m.p_bound) {
        throw NumericsError("left momentum box at t=" + format_number(t));
      }
    }
    traj.samples.push_back(detail::make_sample<dim>(t, s));
  }
  return traj;
}

// ---------------------------------------------------------------------------
// Moebius oracle

struct MoebiusState {
  double u;
  double p;
  double q_shift;  // integral of q' = 2p over [0, t]
};

/// Closed-form flow of p^2 + u^2 - 1 in the complex coordinate w = u + i p:
/// w(t) = (w0 cosh t + sinh t) / (w0 sinh t + cosh t), evaluated after
/// multiplying through by 2 e^{-t} so that w0 = -1 stays exact for large t.
inline MoebiusState moebius_oracle(double u0, double p0, double t) {
  const std::complex<double> w0(u0, p0);
  const double e = std::exp(-2.0 * t);
  const std::complex<double> den = (1.0 + w0) + (1.0 - w0) * e;
  const double scale = std::abs(1.0 + w0) + std::abs(1.0 - w0) * e;
  if (std::abs(den) <= 1e-12 * scale) {
    throw NumericsError("orbit escapes to infinity (incomplete flow) at t=" + format_number(t));
  }
  const std::complex<double> w = ((1.0 + w0) - (1.0 - w0) * e) / den;
  // q' = 2 Im w and w = d/dt log(w0 sinh t + cosh t), so q(t) - q(0) is twice
  // the argument of that denominator, which has the same argument as den.
  return {w.real(), w.imag(), 2.0 * std::atan2(den.imag(), den.real())};
}

// ---------------------------------------------------------------------------
// Legendrian graphs

/// 1-jet graph {(q, du(q), u(q))} of a grid function, optionally backed by
/// closed-form value and gradient for off-node queries.
template <std::size_t dim>
class LegendrianGraph {
public:
  explicit LegendrianGraph(GridField<dim> generator)
    : generator_(std::move(generator)) {
    gradient_.resize(generator_.size());
    for (std::size_t i = 0; i < generator_.size(); ++i) gradient_[i] = gradient_at(generator_, i);
  }

  LegendrianGraph(const Grid<dim>& grid, const AnalyticFunction<dim>& f)
    : generator_(f.sample(grid)), analytic_(f) {
    gradient_.resize(generator_.size());
    for (std::size_t i = 0; i < generator_.size(); ++i) gradient_[i] = f.gradient(grid.node(i));
  }

  const GridField<dim>& generator() const { return generator_; }
  const Grid<dim>& grid() const { return generator_.grid(); }
  const Vec<dim>& gradient(std::size_t i) const { return gradient_[i]; }
  bool analytic() const { return analytic_.has_value(); }

  PhasePoint<dim> lift(std::size_t i) const {
    return {grid().node(i), gradient_[i], generator_[i]};
  }

  double value_at(const TorusPoint<dim>& q) const {
    return analytic_ ? analytic_->value(q) : interp(generator_, q);
  }

  Vec<dim> gradient_at_point(const TorusPoint<dim>& q) const {
    if (analytic_) return analytic_->gradient(q);
    Vec<dim> g{};
    // Multilinear interpolation of the stored nodal gradients.
    const int n = grid().n();
    typename Grid<dim>::MultiIndex base;
    Vec<dim> frac;
    for (int k = 0; k < dim; ++k) {
      const double s = q[k] * n;
      const double fl = std::floor(s);
      frac[k] = s - fl;
      base[k] = static_cast<std::int64_t>(fl);
    }
    for (unsigned corner = 0; corner < (1u << dim); ++corner) {
      auto mi = base;
      double w = 1.0;
      for (int k = 0; k < dim; ++k) {
        if (corner & (1u << k)) {
          mi[k] += 1;
          w *= frac[k];
        } else {
          w *= 1.0 - frac[k];
        }
      }
      if (w == 0.0) continue;
      const auto& gn = gradient_[grid().flatten(mi)];
      for (int k = 0; k < dim; ++k) g[k] += w * gn[k];
    }
    return g;
  }

  /// Graph distance max(|p - du(q)|, |u - u(q)|) from a phase point.
  double distance(const PhasePoint<dim>& s) const {
    const auto g = gradient_at_point(s.q);
    Vec<dim> dp;
    for (int k = 0; k < dim; ++k) dp[k] = s.p[k] - g[k];
    return std::max(norm<dim>(dp), std::abs(s.u - value_at(s.q)));
  }

private:
  GridField<dim> generator_;
  std::vector<Vec<dim>> gradient_;
  std::optional<AnalyticFunction<dim>> analytic_;
};

/// Images of every node lift of `graph` under the time-t flow, in node order.
template <std::size_t dim>
std::vector<PhasePoint<dim>> flow_graph(const HamiltonianModel<dim>& m,
                                        const LegendrianGraph<dim>& graph, double t, double dt) {
  const std::size_t n = graph.grid().size();
  std::vector<PhasePoint<dim>> images(n);
  if (t == 0.0) {
    for (std::size_t i = 0; i < n; ++i) images[i] = graph.lift(i);
    return images;
  }
  parallel_for(n, [&](std::size_t i) {
    try {
      images[i] = flow(m, graph.lift(i), t, dt).back().sigma;
    } catch (const NumericsError& e) {
      throw NumericsError("node " + std::to_string(i) + ": " + e.what());
    }
  });
  return images;
}

// ---------------------------------------------------------------------------
// Omega-limit estimation

template <std::size_t dim>
double phase_distance(const PhasePoint<dim>& a, const PhasePoint<dim>& b) {
  double s = std::pow(periodic_distance(a.q, b.q), 2);
  for (int k = 0; k < dim; ++k) s += (a.p[k] - b.p[k]) * (a.p[k] - b.p[k]);
  s += (a.u - b.u) * (a.u - b.u);
  return std::sqrt(s);
}

template <std::size_t dim>
struct OmegaCluster {
  PhasePoint<dim> representative;  // latest window sample in the cluster
  std::size_t size = 0;
  bool in_region = false;  // representative inside the model's convex region
};

template <std::size_t dim>
struct OmegaLimitResult {
  std::vector<OmegaCluster<dim>> clusters;
  std::vector<TrajectorySample<dim>> window;  // raw samples on [T - W, T]
  std::optional<double> max_target_distance;
  bool u_monotone_decreasing = false;  // over the whole trajectory
  bool u_monotone_increasing = false;
};

struct OmegaOptions {
  double cluster_radius = 1e-3;
};

/// Samples the orbit of sigma0 on [T - W, T] and groups the window samples by
/// single linkage at `cluster_radius` in phase space.
template <std::size_t dim>
OmegaLimitResult<dim> omega_limit(const HamiltonianModel<dim>& m, const PhasePoint<dim>& sigma0,
                                  double horizon, double window, double dt,
                                  const LegendrianGraph<dim>* target = nullptr,
                                  const OmegaOptions& options = {}) {
  if (!(horizon > window && window > 0.0)) {
    throw ConfigError("omega_limit: need horizon > window > 0");
  }
  const Trajectory<dim> traj = flow(m, sigma0, horizon, dt);

  OmegaLimitResult<dim> result;
  for (const auto& s : traj.samples)
    if (s.t >= horizon - window - 1e-12) result.window.push_back(s);

  result.u_monotone_decreasing = true;
  result.u_monotone_increasing = true;
  for (std::size_t k = 1; k < traj.size(); ++k) {
    const double du = traj.samples[k].sigma.u - traj.samples[k - 1].sigma.u;
    if (du >= 0.0) result.u_monotone_decreasing = false;
    if (du <= 0.0) result.u_monotone_increasing = false;
  }

  const std::size_t n = result.window.size();
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) {
      if (phase_distance(result.window[a].sigma, result.window[b].sigma) <= options.cluster_radius) {
        const auto ra = find(a), rb = find(b);
        if (ra != rb) parent[std::max(ra, rb)] = std::min(ra, rb);
      }
    }
  }
  std::vector<int> slot(n, -1);
  for (std::size_t a = 0; a < n; ++a) {
    const auto root = find(a);
    if (slot[root] < 0) {
      slot[root] = static_cast<int>(result.clusters.size());
      result.clusters.emplace_back();
    }
    auto& c = result.clusters[slot[root]];
    c.representative = result.window[a].sigma;
    ++c.size;
  }
  for (auto& c : result.clusters) {
    c.in_region = m.in_convex_region(c.representative.q, c.representative.p, c.representative.u);
  }

  if (target) {
    double worst = 0.0;
    for (const auto& s : result.window) worst = std::max(worst, target->distance(s.sigma));
    result.max_target_distance = worst;
  }
  return result;
}

// ---------------------------------------------------------------------------
// Contact identity: along the flow dH/dt = -(dH/du) H, so
// H(t) = H(0) exp(-int_0^t dH/du).

namespace detail {

/// Integral over [t[k-1], t[k]] of the cubic through four neighbouring samples
/// (fewer when the trajectory is short), by two-point Gauss-Legendre.
inline double local_cubic_integral(const std::vector<double>& t, const std::vector<double>& f,
                                   std::size_t k) {
  const std::size_t n = t.size();
  const std::size_t width = std::min<std::size_t>(4, n);
  const std::size_t first =
      std::min(k >= 2 ? k - 2 : 0, n - width);
  auto interpolant = [&](double x) {
    double sum = 0.0;
    for (std::size_t i = first; i < first + width; ++i) {
      double w = 1.0;
      for (std::size_t j = first; j < first + width; ++j)
        if (j != i) w *= (x - t[j]) / (t[i] - t[j]);
      sum += w * f[i];
    }
    return sum;
  };
  const double a = t[k - 1], b = t[k];
  const double mid = 0.5 * (a + b), half = 0.5 * (b - a), g = half / std::sqrt(3.0);
  return half * (interpolant(mid - g) + interpolant(mid + g));
}

}  // namespace detail

template <std::size_t dim>
double contact_identity_residual(const Trajectory<dim>& traj, const HamiltonianModel<dim>& m) {
  if (traj.samples.empty()) return 0.0;
  std::vector<double> t, hu;
  for (const auto& s : traj.samples) {
    t.push_back(s.t);
    hu.push_back(m.dh_du(s.sigma.q, s.sigma.p, s.sigma.u));
  }
  const double h0 = m.H(traj.samples.front().sigma);
  double integral = 0.0;
  double worst = 0.0;
  for (std::size_t k = 1; k < traj.size(); ++k) {
    integral += detail::local_cubic_integral(t, hu, k);
    worst = std::max(worst, std::abs(m.H(traj.samples[k].sigma) - h0 * std::exp(-integral)));
  }
  return worst;
}

/// Trajectory CSV: "t,q...,p...,u,H", one row per sample, q wrapped to [0, 1).
template <std::size_t dim>
void write_trajectory_csv(std::ostream& os, const Trajectory<dim>& traj,
                          const HamiltonianModel<dim>& m) {
  os << "t";
  for (int k = 0; k < dim; ++k) os << ",q" << k;
  for (int k = 0; k < dim; ++k) os << ",p" << k;
  os << ",u,H\n";
  for (const auto& s : traj.samples) {
    os << format_number(s.t);
    for (int k = 0; k < dim; ++k) os << ',' << format_number(s.sigma.q[k]);
    for (int k = 0; k < dim; ++k) os << ',' << format_number(s.sigma.p[k]);
    os << ',' << format_number(s.sigma.u) << ',' << format_number(m.H(s.sigma)) << "\n";
  }
}

}  // namespace chj
