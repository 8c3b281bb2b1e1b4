#pragma once

// Contact Hamiltonians H(q, p, u) on J^1 T^d, their Legendre-dual Lagrangians,
// the reversal H(q, -p, -u), and the built-in model gallery.

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <utility>

#include "chj/error.hpp"
#include "chj/geometry.hpp"

namespace chj {

template <std::size_t dim>
struct PhasePoint {
  TorusPoint<dim> q;
  Vec<dim> p{};
  double u = 0.0;
};

/// Smooth function on the torus with analytic first and second derivatives.
template <std::size_t dim>
struct AnalyticFunction {
  std::string name;
  std::function<double(const TorusPoint<dim>&)> value;
  std::function<Vec<dim>(const TorusPoint<dim>&)> gradient;
  // Hessian applied to a vector: D^2 f(q) * w.
  std::function<Vec<dim>(const TorusPoint<dim>&, const Vec<dim>&)> hessian_times;

  GridField<dim> sample(const Grid<dim>& grid) const {
    return GridField<dim>::from_function(grid, value);
  }
};

template <std::size_t dim>
AnalyticFunction<dim> constant_function(double c) {
  AnalyticFunction<dim> f;
  f.name = "const(" + format_number(c) + ")";
  f.value = [c](const TorusPoint<dim>&) { return c; };
  f.gradient = [](const TorusPoint<dim>&) { return Vec<dim>{}; };
  f.hessian_times = [](const TorusPoint<dim>&, const Vec<dim>&) { return Vec<dim>{}; };
  return f;
}

/// amplitude * sum_k cos(2 pi q_k) + offset.
template <std::size_t dim>
AnalyticFunction<dim> cosine_function(double amplitude = 1.0, double offset = 0.0) {
  constexpr double two_pi = 2.0 * M_PI;
  AnalyticFunction<dim> f;
  f.name = "cos";
  f.value = [=](const TorusPoint<dim>& q) {
    double s = offset;
    for (int k = 0; k < dim; ++k) s += amplitude * std::cos(two_pi * q[k]);
    return s;
  };
  f.gradient = [=](const TorusPoint<dim>& q) {
    Vec<dim> g;
    for (int k = 0; k < dim; ++k) g[k] = -amplitude * two_pi * std::sin(two_pi * q[k]);
    return g;
  };
  f.hessian_times = [=](const TorusPoint<dim>& q, const Vec<dim>& w) {
    Vec<dim> r;
    for (int k = 0; k < dim; ++k) r[k] = -amplitude * two_pi * two_pi * std::cos(two_pi * q[k]) * w[k];
    return r;
  };
  return f;
}

/// Evaluator bundle for a contact Hamiltonian. Every evaluator is a pure function,
/// so a model can be shared freely between threads.
template <std::size_t dim>
struct HamiltonianModel {
  using Point = TorusPoint<dim>;
  using Scalar = std::function<double(const Point&, const Vec<dim>&, double)>;
  using Vector = std::function<Vec<dim>(const Point&, const Vec<dim>&, double)>;

  std::string name;
  Scalar hamiltonian;
  Vector dh_dq;
  Vector dh_dp;
  Scalar dh_du;

  // Optional closed-form Lagrangian L(q, v, u) and its velocity gradient.
  Scalar lagrangian;
  Vector dl_dv;

  bool q_independent = false;
  bool u_independent = false;
  bool monotone_in_u = false;

  // Half-width of the momentum box used by the numerical Legendre transform
  // and by the flow's escape check.
  double p_bound = 10.0;

  // Region of phase space where the model claims (H2). Empty means everywhere.
  std::function<bool(const Point&, const Vec<dim>&, double)> convex_region;

  // Analytic solution of H(q, du, u) = 0 the model was built around, if any.
  std::optional<AnalyticFunction<dim>> equilibrium;

  double H(const Point& q, const Vec<dim>& p, double u) const { return hamiltonian(q, p, u); }
  double H(const PhasePoint<dim>& s) const { return hamiltonian(s.q, s.p, s.u); }

  bool in_convex_region(const Point& q, const Vec<dim>& p, double u) const {
    return !convex_region || convex_region(q, p, u);
  }
};

// ---------------------------------------------------------------------------
// Legendre transform

template <std::size_t dim>
struct LegendreResult {
  double value;     // L(q, v, u)
  Vec<dim> momentum;  // maximizer p*, which is also dL/dv(q, v, u)
};

namespace detail {

template <std::size_t dim>
double legendre_objective(const HamiltonianModel<dim>& m, const TorusPoint<dim>& q,
                          const Vec<dim>& v, double u, const Vec<dim>& p) {
  return dot<dim>(p, v) - m.H(q, p, u);
}

template <std::size_t dim>
bool on_box_boundary(const Vec<dim>& p, double bound) {
  for (double c : p)
    if (std::abs(c) >= bound * (1.0 - 1e-9)) return true;
  return false;
}

/// Golden-section maximization along one coordinate of p, others held fixed.
template <std::size_t dim>
void golden_axis(const HamiltonianModel<dim>& m, const TorusPoint<dim>& q, const Vec<dim>& v,
                 double u, Vec<dim>& p, int axis) {
  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  double lo = -m.p_bound, hi = m.p_bound;
  auto f = [&](double x) {
    Vec<dim> trial = p;
    trial[axis] = x;
    return legendre_objective(m, q, v, u, trial);
  };
  double x1 = hi - phi * (hi - lo), x2 = lo + phi * (hi - lo);
  double f1 = f(x1), f2 = f(x2);
  while (hi - lo > 1e-11) {
    if (f1 < f2) {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + phi * (hi - lo);
      f2 = f(x2);
    } else {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - phi * (hi - lo);
      f1 = f(x1);
    }
  }
  p[axis] = 0.5 * (lo + hi);
}

/// Solves the dim x dim system A x = b by Gaussian elimination with pivoting.
template <std::size_t dim>
std::optional<Vec<dim>> solve_small(std::array<Vec<dim>, dim> a, Vec<dim> b) {
  for (int col = 0; col < dim; ++col) {
    int pivot = col;
    for (int r = col + 1; r < dim; ++r)
      if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
    if (std::abs(a[pivot][col]) < 1e-300) return std::nullopt;
    std::swap(a[col], a[pivot]);
    std::swap(b[col], b[pivot]);
    for (int r = col + 1; r < dim; ++r) {
      const double factor = a[r][col] / a[col][col];
      for (int c = col; c < dim; ++c) a[r][c] -= factor * a[col][c];
      b[r] -= factor * b[col];
    }
  }
  Vec<dim> x;
  for (int r = dim - 1; r >= 0; --r) {
    double s = b[r];
    for (int c = r + 1; c < dim; ++c) s -= a[r][c] * x[c];
    x[r] = s / a[r][r];
  }
  return x;
}

}  // namespace detail

/// Maximizes <p, v> - H(q, p, u) over the box |p_k| <= p_bound. Newton on the
/// strictly concave objective with a finite-difference Hessian of dH/dp; cyclic
/// golden-section search if Newton stalls.
template <std::size_t dim>
LegendreResult<dim> legendre_transform(const HamiltonianModel<dim>& m, const TorusPoint<dim>& q,
                                       const Vec<dim>& v, double u) {
  constexpr double tol = 1e-10;
  Vec<dim> p{};
  bool converged = false;
  for (int iter = 0; iter < 60; ++iter) {
    const Vec<dim> hp = m.dh_dp(q, p, u);
    Vec<dim> residual;
    for (int k = 0; k < dim; ++k) residual[k] = v[k] - hp[k];
    if (norm<dim>(residual) < tol) {
      converged = true;
      break;
    }
    std::array<Vec<dim>, dim> hess;
    for (int k = 0; k < dim; ++k) {
      const double step = 1e-6 * std::max(1.0, std::abs(p[k]));
      Vec<dim> up = p, down = p;
      up[k] += step;
      down[k] -= step;
      const Vec<dim> gu = m.dh_dp(q, up, u), gd = m.dh_dp(q, down, u);
      for (int r = 0; r < dim; ++r) hess[r][k] = (gu[r] - gd[r]) / (2.0 * step);
    }
    const auto delta = detail::solve_small<dim>(hess, residual);
    if (!delta) break;
    // Backtrack until the concave objective increases.
    const double f0 = detail::legendre_objective(m, q, v, u, p);
    double scale = 1.0;
    Vec<dim> next;
    bool accepted = false;
    for (int b = 0; b < 40; ++b) {
      for (int k = 0; k < dim; ++k)
        next[k] = std::clamp(p[k] + scale * (*delta)[k], -m.p_bound, m.p_bound);
      if (detail::legendre_objective(m, q, v, u, next) >= f0 - 1e-14) {
        accepted = true;
        break;
      }
      scale *= 0.5;
    }
    if (!accepted) break;
    p = next;
  }
  if (!converged) {
    for (int sweep = 0; sweep < 50; ++sweep) {
      const Vec<dim> before = p;
      for (int k = 0; k < dim; ++k) detail::golden_axis(m, q, v, u, p, k);
      Vec<dim> change;
      for (int k = 0; k < dim; ++k) change[k] = p[k] - before[k];
      if (norm<dim>(change) < tol) break;
    }
  }
  if (detail::on_box_boundary<dim>(p, m.p_bound)) {
    throw NumericsError("p_bound too small for requested velocity (model " + m.name + ")");
  }
  return {detail::legendre_objective(m, q, v, u, p), p};
}

/// L(q, v, u) = sup_p { <p, v> - H(q, p, u) }; closed form when the model has one.
template <std::size_t dim>
double lagrangian(const HamiltonianModel<dim>& m, const TorusPoint<dim>& q, const Vec<dim>& v,
                  double u) {
  if (m.lagrangian) return m.lagrangian(q, v, u);
  return legendre_transform(m, q, v, u).value;
}

/// dL/dv(q, v, u), i.e. the momentum conjugate to velocity v.
template <std::size_t dim>
Vec<dim> lagrangian_dv(const HamiltonianModel<dim>& m, const TorusPoint<dim>& q,
                       const Vec<dim>& v, double u) {
  if (m.dl_dv) return m.dl_dv(q, v, u);
  return legendre_transform(m, q, v, u).momentum;
}

/// The model H(q, -p, -u). Its Lagrangian is L(q, -v, -u).
template <std::size_t dim>
HamiltonianModel<dim> reversed(const HamiltonianModel<dim>& m) {
  using Point = TorusPoint<dim>;
  auto neg = [](Vec<dim> v) {
    for (auto& c : v) c = -c;
    return v;
  };
  HamiltonianModel<dim> r = m;
  r.name = "reversed(" + m.name + ")";
  r.hamiltonian = [m, neg](const Point& q, const Vec<dim>& p, double u) {
    return m.hamiltonian(q, neg(p), -u);
  };
  r.dh_dq = [m, neg](const Point& q, const Vec<dim>& p, double u) {
    return m.dh_dq(q, neg(p), -u);
  };
  r.dh_dp = [m, neg](const Point& q, const Vec<dim>& p, double u) {
    return neg(m.dh_dp(q, neg(p), -u));
  };
  r.dh_du = [m, neg](const Point& q, const Vec<dim>& p, double u) {
    return -m.dh_du(q, neg(p), -u);
  };
  if (m.lagrangian) {
    r.lagrangian = [m, neg](const Point& q, const Vec<dim>& v, double u) {
      return m.lagrangian(q, neg(v), -u);
    };
  }
  if (m.dl_dv) {
    r.dl_dv = [m, neg](const Point& q, const Vec<dim>& v, double u) {
      return neg(m.dl_dv(q, neg(v), -u));
    };
  }
  if (m.convex_region) {
    r.convex_region = [m, neg](const Point& q, const Vec<dim>& p, double u) {
      return m.convex_region(q, neg(p), -u);
    };
  }
  r.monotone_in_u = false;
  if (m.equilibrium) {
    // -u_- solves the reversed stationary equation.
    auto e = *m.equilibrium;
    AnalyticFunction<dim> f;
    f.name = "-" + e.name;
    f.value = [e](const Point& q) { return -e.value(q); };
    f.gradient = [e, neg](const Point& q) { return neg(e.gradient(q)); };
    f.hessian_times = [e, neg](const Point& q, const Vec<dim>& w) {
      return neg(e.hessian_times(q, w));
    };
    r.equilibrium = f;
  }
  return r;
}

// ---------------------------------------------------------------------------
// Model gallery

/// Cutoff a(s): s - 1 on [0, 1 + eps], then an exponential approach to
/// a_infinity - 1 with matching value and slope at s = 1 + eps.
struct MoebiusCutoff {
  double epsilon;
  double a_infinity;

  double gap() const { return a_infinity - 1.0 - epsilon; }

  double value(double s) const {
    const double s0 = 1.0 + epsilon;
    if (s <= s0) return s - 1.0;
    return (a_infinity - 1.0) - gap() * std::exp(-(s - s0) / gap());
  }

  double slope(double s) const {
    const double s0 = 1.0 + epsilon;
    if (s <= s0) return 1.0;
    return std::exp(-(s - s0) / gap());
  }
};

/// Contact Moebius model on J^1 S^1: H = a(p^2 + u^2), which equals p^2 + u^2 - 1
/// on the disk p^2 + u^2 <= 1 + epsilon. The closed-form Lagrangian is
/// v^2/4 - a(u^2), the conjugate of p^2 + a(u^2); both Hamiltonians agree on
/// the disk, where the Lagrangian reduces to v^2/4 - u^2 + 1.
inline HamiltonianModel<1> make_moebius(double epsilon = 1.0, double a_infinity = 4.0) {
  if (!(epsilon > 0.0)) throw ConfigError("moebius: epsilon must be positive");
  if (!(a_infinity > 1.0 + epsilon)) {
    throw ConfigError("moebius: a_infinity must exceed 1 + epsilon for a monotone cutoff");
  }
  using Point = TorusPoint<1>;
  const MoebiusCutoff a{epsilon, a_infinity};
  HamiltonianModel<1> m;
  m.name = "moebius";
  m.hamiltonian = [a](const Point&, const Vec<1>& p, double u) {
    return a.value(p[0] * p[0] + u * u);
  };
  m.dh_dq = [](const Point&, const Vec<1>&, double) { return Vec<1>{0.0}; };
  m.dh_dp = [a](const Point&, const Vec<1>& p, double u) {
    return Vec<1>{2.0 * p[0] * a.slope(p[0] * p[0] + u * u)};
  };
  m.dh_du = [a](const Point&, const Vec<1>& p, double u) {
    return 2.0 * u * a.slope(p[0] * p[0] + u * u);
  };
  m.lagrangian = [a](const Point&, const Vec<1>& v, double u) {
    return 0.25 * v[0] * v[0] - a.value(u * u);
  };
  m.dl_dv = [](const Point&, const Vec<1>& v, double) { return Vec<1>{0.5 * v[0]}; };
  m.q_independent = true;
  m.convex_region = [epsilon](const Point&, const Vec<1>& p, double u) {
    return p[0] * p[0] + u * u <= 1.0 + epsilon;
  };
  m.equilibrium = constant_function<1>(1.0);
  return m;
}

/// Monotone model manufactured around a smooth u_-:
///   H = lambda (u - u_-(q)) + |p|^2 / 2 - |du_-(q)|^2 / 2,
/// so that H(q, du_-(q), u_-(q)) = 0 and dH/du = lambda.
template <std::size_t dim>
HamiltonianModel<dim> make_monotone_manufactured(double lambda, AnalyticFunction<dim> u_minus) {
  if (!(lambda > 0.0)) throw ConfigError("monotone: lambda must be positive");
  using Point = TorusPoint<dim>;
  HamiltonianModel<dim> m;
  m.name = "monotone";
  const auto f = u_minus;
  m.hamiltonian = [lambda, f](const Point& q, const Vec<dim>& p, double u) {
    const auto g = f.gradient(q);
    return lambda * (u - f.value(q)) + 0.5 * dot<dim>(p, p) - 0.5 * dot<dim>(g, g);
  };
  m.dh_dq = [lambda, f](const Point& q, const Vec<dim>&, double) {
    const auto g = f.gradient(q);
    const auto hg = f.hessian_times(q, g);
    Vec<dim> r;
    for (int k = 0; k < dim; ++k) r[k] = -lambda * g[k] - hg[k];
    return r;
  };
  m.dh_dp = [](const Point&, const Vec<dim>& p, double) { return p; };
  m.dh_du = [lambda](const Point&, const Vec<dim>&, double) { return lambda; };
  m.lagrangian = [lambda, f](const Point& q, const Vec<dim>& v, double u) {
    const auto g = f.gradient(q);
    return 0.5 * dot<dim>(v, v) + 0.5 * dot<dim>(g, g) - lambda * (u - f.value(q));
  };
  m.dl_dv = [](const Point&, const Vec<dim>& v, double) { return v; };
  m.monotone_in_u = true;
  m.equilibrium = u_minus;
  return m;
}

/// Classical mechanical Hamiltonian |p|^2/2 + amplitude * sum_k cos(2 pi q_k) - c.
template <std::size_t dim>
HamiltonianModel<dim> make_mechanical(double c, double amplitude = 0.0) {
  using Point = TorusPoint<dim>;
  const auto potential = cosine_function<dim>(amplitude);
  HamiltonianModel<dim> m;
  m.name = "mechanical";
  m.hamiltonian = [=](const Point& q, const Vec<dim>& p, double) {
    return 0.5 * dot<dim>(p, p) + potential.value(q) - c;
  };
  m.dh_dq = [=](const Point& q, const Vec<dim>&, double) { return potential.gradient(q); };
  m.dh_dp = [](const Point&, const Vec<dim>& p, double) { return p; };
  m.dh_du = [](const Point&, const Vec<dim>&, double) { return 0.0; };
  m.lagrangian = [=](const Point& q, const Vec<dim>& v, double) {
    return 0.5 * dot<dim>(v, v) - potential.value(q) + c;
  };
  m.dl_dv = [](const Point&, const Vec<dim>& v, double) { return v; };
  m.q_independent = amplitude == 0.0;
  m.u_independent = true;
  return m;
}

/// Same model with the closed-form Lagrangian removed, forcing the numerical
/// Legendre transform. Used to cross-check the two routes.
template <std::size_t dim>
HamiltonianModel<dim> without_closed_form_lagrangian(HamiltonianModel<dim> m) {
  m.lagrangian = nullptr;
  m.dl_dv = nullptr;
  m.name += "/numeric-L";
  return m;
}

// ---------------------------------------------------------------------------
// Structural checks on a sample lattice

struct LatticeSpec {
  int q_points = 5;
  int p_points = 9;
  int u_points = 9;
  double p_extent = 1.0;
  double u_min = -1.0;
  double u_max = 1.0;
};

template <std::size_t dim>
struct LatticeCheck {
  bool ok = true;
  int points_checked = 0;
  double worst = 0.0;  // smallest curvature / slope increment seen
  PhasePoint<dim> where;
};

namespace detail {

template <std::size_t dim, typename Fn>
void for_each_lattice_point(const LatticeSpec& spec, Fn&& fn) {
  const Grid<dim> qgrid(std::max(2, spec.q_points));
  for (std::size_t qi = 0; qi < qgrid.size(); ++qi) {
    const auto q = qgrid.node(qi);
    for (int ui = 0; ui < spec.u_points; ++ui) {
      const double u = spec.u_min + (spec.u_max - spec.u_min) * ui / std::max(1, spec.u_points - 1);
      const Grid<dim> pgrid(std::max(2, spec.p_points));
      for (std::size_t pi = 0; pi < pgrid.size(); ++pi) {
        const auto m = pgrid.unflatten(pi);
        Vec<dim> p;
        for (int k = 0; k < dim; ++k)
          p[k] = -spec.p_extent + 2.0 * spec.p_extent * m[k] / std::max(1, spec.p_points - 1);
        fn(q, p, u);
      }
    }
  }
}

}  // namespace detail

/// (H2) on a lattice: the smallest eigenvalue of the finite-difference Hessian of
/// H in p must be positive at every lattice point inside the model's region.
template <std::size_t dim>
LatticeCheck<dim> convexity_check(const HamiltonianModel<dim>& m, const LatticeSpec& spec) {
  LatticeCheck<dim> result;
  result.worst = std::numeric_limits<double>::infinity();
  const double step = 1e-3;
  detail::for_each_lattice_point<dim>(spec, [&](const TorusPoint<dim>& q, const Vec<dim>& p,
                                                double u) {
    // The stencil must stay inside the region too.
    for (int k = 0; k < dim; ++k) {
      Vec<dim> up = p, down = p;
      up[k] += step;
      down[k] -= step;
      if (!m.in_convex_region(q, up, u) || !m.in_convex_region(q, down, u)) return;
    }
    if (!m.in_convex_region(q, p, u)) return;
    // Exact smallest eigenvalue for dim <= 2; diagonal minimum otherwise.
    std::array<Vec<dim>, dim> hess;
    for (int k = 0; k < dim; ++k) {
      Vec<dim> up = p, down = p;
      up[k] += step;
      down[k] -= step;
      const auto gu = m.dh_dp(q, up, u), gd = m.dh_dp(q, down, u);
      for (int r = 0; r < dim; ++r) hess[r][k] = (gu[r] - gd[r]) / (2.0 * step);
    }
    double smallest;
    if constexpr (dim == 1) {
      smallest = hess[0][0];
    } else if constexpr (dim == 2) {
      const double tr = hess[0][0] + hess[1][1];
      const double off = 0.5 * (hess[0][1] + hess[1][0]);
      const double det = hess[0][0] * hess[1][1] - off * off;
      smallest = 0.5 * tr - std::sqrt(std::max(0.0, 0.25 * tr * tr - det));
    } else {
      smallest = std::numeric_limits<double>::infinity();
      for (int k = 0; k < dim; ++k) smallest = std::min(smallest, hess[k][k]);
    }
    ++result.points_checked;
    if (smallest < result.worst) {
      result.worst = smallest;
      result.where = {q, p, u};
    }
    if (!(smallest > 0.0)) result.ok = false;
  });
  return result;
}

/// Superlinearity proxy: along rays p = r e_k, r >= 1, H / r must increase
/// between consecutive lattice radii that stay inside the model's region.
template <std::size_t dim>
LatticeCheck<dim> superlinearity_check(const HamiltonianModel<dim>& m, const LatticeSpec& spec) {
  LatticeCheck<dim> result;
  result.worst = std::numeric_limits<double>::infinity();
  const Grid<dim> qgrid(std::max(2, spec.q_points));
  const int radii = std::max(3, spec.p_points);
  for (std::size_t qi = 0; qi < qgrid.size(); ++qi) {
    const auto q = qgrid.node(qi);
    for (int ui = 0; ui < spec.u_points; ++ui) {
      const double u = spec.u_min + (spec.u_max - spec.u_min) * ui / std::max(1, spec.u_points - 1);
      for (int k = 0; k < dim; ++k) {
        for (double sign : {-1.0, 1.0}) {
          double prev = std::numeric_limits<double>::quiet_NaN();
          for (int ri = 0; ri < radii; ++ri) {
            const double r = 1.0 + (std::max(spec.p_extent, 1.0) - 1.0) * ri / (radii - 1);
            Vec<dim> p{};
            p[k] = sign * r;
            if (!m.in_convex_region(q, p, u)) break;
            const double ratio = m.H(q, p, u) / r;
            if (!std::isnan(prev)) {
              ++result.points_checked;
              const double inc = ratio - prev;
              if (inc < result.worst) {
                result.worst = inc;
                result.where = {q, p, u};
              }
              if (!(inc > 0.0)) result.ok = false;
            }
            prev = ratio;
          }
        }
      }
    }
  }
  return result;
}

}  // namespace chj
