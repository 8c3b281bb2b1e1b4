#pragma once

// Sub/super-deformations V(q, s) of u_- and the hypotheses of the two
// convergence theorems built on them.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "chj/error.hpp"
#include "chj/geometry.hpp"
#include "chj/hamiltonian.hpp"

namespace chj {

/// One-parameter family V(., s), s in [0, 1], evaluated at grid nodes.
template <std::size_t dim>
struct DeformationPath {
  std::string name;
  Grid<dim> grid{2};
  int samples = 64;  // uniform s-grid k / samples, k = 0..samples
  std::function<double(std::size_t node, double s)> value;
  // Optional closed-form d/dq V(., s) at a node; centered differences otherwise.
  std::function<Vec<dim>(std::size_t node, double s)> gradient;

  GridField<dim> slice(double s) const {
    std::vector<double> v(grid.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = value(i, s);
    return GridField<dim>(grid, std::move(v));
  }
};

/// V(q, s) = (1 - s) start(q) + s end(q).
template <std::size_t dim>
DeformationPath<dim> linear_deformation(const GridField<dim>& start, const GridField<dim>& end,
                                        int samples = 64, std::string name = "linear") {
  if (!(start.grid() == end.grid())) throw ConfigError("linear_deformation: grid mismatch");
  DeformationPath<dim> path;
  path.name = std::move(name);
  path.grid = start.grid();
  path.samples = samples;
  path.value = [start, end](std::size_t i, double s) { return (1.0 - s) * start[i] + s * end[i]; };
  return path;
}

/// Path given by samples values[k][node] at s = k / (values.size() - 1), linear in s in between.
template <std::size_t dim>
DeformationPath<dim> sampled_deformation(const Grid<dim>& grid,
                                         std::vector<std::vector<double>> values,
                                         std::string name = "sampled") {
  if (values.size() < 2) throw ConfigError("sampled_deformation: need at least two s-samples");
  for (const auto& row : values)
    if (row.size() != grid.size()) throw ConfigError("sampled_deformation: row size mismatch");
  DeformationPath<dim> path;
  path.name = std::move(name);
  path.grid = grid;
  path.samples = static_cast<int>(values.size()) - 1;
  path.value = [values = std::move(values)](std::size_t i, double s) {
    const double x = std::clamp(s, 0.0, 1.0) * static_cast<double>(values.size() - 1);
    const auto k = std::min(static_cast<std::size_t>(x), values.size() - 2);
    const double f = x - static_cast<double>(k);
    return (1.0 - f) * values[k][i] + f * values[k + 1][i];
  };
  return path;
}

enum class DeformationKind { sub, super };

struct Witness {
  std::size_t node = 0;
  double s = 0.0;
  double margin = 0.0;  // value of H at the worst sample
};

struct DeformationCheck {
  bool ok = false;
  bool endpoint_ok = false;  // V(., 1) = u_- to 1e-12
  Witness worst;
  std::size_t points_checked = 0;
};

inline constexpr double kDeformationMargin = 1e-10;

namespace detail {

/// s-samples on [0, 1): the uniform grid without its endpoint plus a geometric
/// sequence accumulating at 1.
inline std::vector<double> deformation_s_samples(int samples) {
  std::vector<double> s;
  for (int k = 0; k < samples; ++k) s.push_back(static_cast<double>(k) / samples);
  for (int j = 1; j <= 20; ++j) s.push_back(1.0 - std::ldexp(1.0 / samples, -j));
  return s;
}

template <std::size_t dim>
Vec<dim> path_gradient(const DeformationPath<dim>& path, const GridField<dim>& slice,
                       std::size_t i, double s) {
  return path.gradient ? path.gradient(i, s) : gradient_at(slice, i);
}

inline bool sign_ok(DeformationKind kind, double h, double margin) {
  return kind == DeformationKind::sub ? h < -margin : h > margin;
}

// Larger is worse for sub (H must be negative), smaller is worse for super.
inline bool worse(DeformationKind kind, double a, double b) {
  return kind == DeformationKind::sub ? a > b : a < b;
}

}  // namespace detail

/// Checks H(q, DV(q, s), V(q, s)) < -margin (sub) or > margin (super) at every
/// node for every s-sample in [0, 1), and V(., 1) = u_-.
template <std::size_t dim>
DeformationCheck check_deformation(const HamiltonianModel<dim>& m, const DeformationPath<dim>& path,
                                   const GridField<dim>& u_minus, DeformationKind kind,
                                   double margin = kDeformationMargin) {
  if (path.samples < 10) throw ConfigError("deformation check needs at least 10 s-samples");
  if (!(path.grid == u_minus.grid())) throw ConfigError("deformation check: grid mismatch");
  DeformationCheck result;
  result.endpoint_ok = true;
  for (std::size_t i = 0; i < u_minus.size(); ++i) {
    if (std::abs(path.value(i, 1.0) - u_minus[i]) > 1e-12) result.endpoint_ok = false;
  }
  bool signs = true;
  bool first = true;
  for (double s : detail::deformation_s_samples(path.samples)) {
    const auto slice = path.slice(s);
    for (std::size_t i = 0; i < slice.size(); ++i) {
      const double h = m.H(path.grid.node(i), detail::path_gradient(path, slice, i, s), slice[i]);
      ++result.points_checked;
      if (first || detail::worse(kind, h, result.worst.margin)) {
        result.worst = {i, s, h};
        first = false;
      }
      signs = signs && detail::sign_ok(kind, h, margin);
    }
  }
  result.ok = signs && result.endpoint_ok;
  return result;
}

template <std::size_t dim>
DeformationCheck check_sub_deformation(const HamiltonianModel<dim>& m,
                                       const DeformationPath<dim>& path,
                                       const GridField<dim>& u_minus,
                                       double margin = kDeformationMargin) {
  return check_deformation(m, path, u_minus, DeformationKind::sub, margin);
}

template <std::size_t dim>
DeformationCheck check_super_deformation(const HamiltonianModel<dim>& m,
                                         const DeformationPath<dim>& path,
                                         const GridField<dim>& u_minus,
                                         double margin = kDeformationMargin) {
  return check_deformation(m, path, u_minus, DeformationKind::super, margin);
}

// ---------------------------------------------------------------------------
// Theorem hypotheses

enum class Verdict { holds, fails, not_checkable };

inline const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::holds: return "holds";
    case Verdict::fails: return "fails";
    case Verdict::not_checkable: return "not checkable";
  }
  return "?";
}

struct ConditionReport {
  Verdict verdict = Verdict::not_checkable;
  bool ordering_ok = false;
  bool sign_ok = false;
  std::optional<Witness> witness;  // worst sign sample
  std::string detail;
};

struct TheoremReport {
  // Keys: "a", "b", "c" (smooth deformations) and "a'", "b'", "c'" (0-jet variants).
  std::map<std::string, ConditionReport> conditions;
  std::string u_minus_gradient;  // "analytic" or "centered differences"
};

namespace detail {

inline constexpr double kOrderTolerance = 1e-12;

template <std::size_t dim, typename Pred>
bool nodewise(std::size_t n, Pred&& pred) {
  for (std::size_t i = 0; i < n; ++i)
    if (!pred(i)) return false;
  return true;
}

/// Sign test of the mixed expression H(q, du_-(q), V(q, s)) over s in [0, 1).
template <std::size_t dim>
DeformationCheck mixed_sign_check(const HamiltonianModel<dim>& m, const DeformationPath<dim>& path,
                                  const std::vector<Vec<dim>>& du_minus, DeformationKind kind,
                                  double margin) {
  DeformationCheck r;
  r.endpoint_ok = true;
  bool signs = true, first = true;
  for (double s : deformation_s_samples(path.samples)) {
    for (std::size_t i = 0; i < path.grid.size(); ++i) {
      const double h = m.H(path.grid.node(i), du_minus[i], path.value(i, s));
      ++r.points_checked;
      if (first || worse(kind, h, r.worst.margin)) {
        r.worst = {i, s, h};
        first = false;
      }
      signs = signs && sign_ok(kind, h, margin);
    }
  }
  r.ok = signs;
  return r;
}

/// Sign test on the single slice V(., 0).
template <std::size_t dim>
DeformationCheck slice0_sign_check(const HamiltonianModel<dim>& m, const DeformationPath<dim>& path,
                                   DeformationKind kind, double margin) {
  DeformationCheck r;
  r.endpoint_ok = true;
  const auto slice = path.slice(0.0);
  bool signs = true, first = true;
  for (std::size_t i = 0; i < slice.size(); ++i) {
    const double h = m.H(path.grid.node(i), path_gradient(path, slice, i, 0.0), slice[i]);
    ++r.points_checked;
    if (first || worse(kind, h, r.worst.margin)) {
      r.worst = {i, 0.0, h};
      first = false;
    }
    signs = signs && sign_ok(kind, h, margin);
  }
  r.ok = signs;
  return r;
}

inline ConditionReport conclude(bool ordering, bool sign, const Witness& w, std::string detail) {
  ConditionReport r;
  r.ordering_ok = ordering;
  r.sign_ok = sign;
  r.witness = w;
  r.verdict = ordering && sign ? Verdict::holds : Verdict::fails;
  if (ordering && !sign) detail += "; ordering ok, sign fails";
  if (!ordering && sign) detail += "; sign ok, ordering fails";
  r.detail = std::move(detail);
  return r;
}

}  // namespace detail

/// Evaluates conditions (a)-(c) and (a')-(c') for the data (H, u0, u_-) with the
/// candidate paths named "sub" and "super".
template <std::size_t dim>
TheoremReport check_theorem_conditions(const HamiltonianModel<dim>& m, const GridField<dim>& u0,
                                       const GridField<dim>& u_minus,
                                       const std::map<std::string, DeformationPath<dim>>& paths,
                                       double margin = kDeformationMargin) {
  if (!(u0.grid() == u_minus.grid())) throw ConfigError("theorem check: grid mismatch");
  const auto& grid = u0.grid();
  const std::size_t n = grid.size();
  using detail::kOrderTolerance;

  TheoremReport report;
  std::vector<Vec<dim>> du_minus(n);
  if (m.equilibrium) {
    report.u_minus_gradient = "analytic";
    for (std::size_t i = 0; i < n; ++i) du_minus[i] = m.equilibrium->gradient(grid.node(i));
  } else {
    report.u_minus_gradient = "centered differences";
    for (std::size_t i = 0; i < n; ++i) du_minus[i] = gradient_at(u_minus, i);
  }

  const DeformationPath<dim>* sub = paths.count("sub") ? &paths.at("sub") : nullptr;
  const DeformationPath<dim>* super = paths.count("super") ? &paths.at("super") : nullptr;
  auto missing = [](const char* which) {
    ConditionReport r;
    r.detail = std::string("no '") + which + "' path supplied";
    return r;
  };

  auto ends_at_u_minus = [&](const DeformationPath<dim>& p) {
    return detail::nodewise<dim>(n, [&](std::size_t i) {
      return std::abs(p.value(i, 1.0) - u_minus[i]) <= kOrderTolerance;
    });
  };
  auto below = [&](const DeformationPath<dim>& p) {  // V(., 0) <= u0 <= u_-
    return detail::nodewise<dim>(n, [&](std::size_t i) {
      return p.value(i, 0.0) <= u0[i] + kOrderTolerance && u0[i] <= u_minus[i] + kOrderTolerance;
    });
  };
  auto above = [&](const DeformationPath<dim>& p) {  // V(., 0) >= u0 >= u_-
    return detail::nodewise<dim>(n, [&](std::size_t i) {
      return p.value(i, 0.0) >= u0[i] - kOrderTolerance && u0[i] >= u_minus[i] - kOrderTolerance;
    });
  };
  auto sandwich = [&](const DeformationPath<dim>& lo, const DeformationPath<dim>& hi) {
    return detail::nodewise<dim>(n, [&](std::size_t i) {
      return lo.value(i, 0.0) <= std::min(u0[i], u_minus[i]) + kOrderTolerance &&
             std::max(u0[i], u_minus[i]) <= hi.value(i, 0.0) + kOrderTolerance;
    });
  };
  auto worst_of = [](const DeformationCheck& a, const DeformationCheck& b) {
    // Report the failing side first, else the side with the smaller slack.
    if (!a.ok) return a.worst;
    if (!b.ok) return b.worst;
    return std::abs(a.worst.margin) <= std::abs(b.worst.margin) ? a.worst : b.worst;
  };

  // (a), (b), (c): genuine deformations.
  std::optional<DeformationCheck> sub_check, super_check;
  if (sub) sub_check = check_deformation(m, *sub, u_minus, DeformationKind::sub, margin);
  if (super) super_check = check_deformation(m, *super, u_minus, DeformationKind::super, margin);

  if (sub) {
    report.conditions["a"] = detail::conclude(below(*sub), sub_check->ok, sub_check->worst,
                                              "sub-deformation with V(.,0) <= u0 <= u_-");
  } else {
    report.conditions["a"] = missing("sub");
  }
  if (super) {
    report.conditions["b"] = detail::conclude(above(*super), super_check->ok, super_check->worst,
                                              "super-deformation with V(.,0) >= u0 >= u_-");
  } else {
    report.conditions["b"] = missing("super");
  }
  if (sub && super) {
    report.conditions["c"] = detail::conclude(
        sandwich(*sub, *super), sub_check->ok && super_check->ok,
        worst_of(*sub_check, *super_check),
        "sub and super deformations sandwiching min/max of u0 and u_-");
  } else {
    report.conditions["c"] = missing(sub ? "super" : "sub");
  }

  // (a'), (b'), (c'): sign of the slice V(., 0) and of H(q, du_-, V(q, s)).
  auto zero_jet = [&](const DeformationPath<dim>& p, DeformationKind kind) {
    const auto s0 = detail::slice0_sign_check(m, p, kind, margin);
    const auto mixed = detail::mixed_sign_check(m, p, du_minus, kind, margin);
    DeformationCheck r;
    r.ok = s0.ok && mixed.ok;
    r.worst = !s0.ok ? s0.worst : mixed.worst;
    return r;
  };
  if (sub) {
    const auto z = zero_jet(*sub, DeformationKind::sub);
    report.conditions["a'"] =
        detail::conclude(below(*sub) && ends_at_u_minus(*sub), z.ok, z.worst,
                         "H|V(.,0) < 0 and H(q, du_-, V(q,s)) < 0 with V(.,0) <= u0 <= u_-");
  } else {
    report.conditions["a'"] = missing("sub");
  }
  if (super) {
    const auto z = zero_jet(*super, DeformationKind::super);
    report.conditions["b'"] =
        detail::conclude(above(*super) && ends_at_u_minus(*super), z.ok, z.worst,
                         "H|V(.,0) > 0 and H(q, du_-, V(q,s)) > 0 with V(.,0) >= u0 >= u_-");
  } else {
    report.conditions["b'"] = missing("super");
  }
  if (sub && super) {
    const auto zl = zero_jet(*sub, DeformationKind::sub);
    const auto zh = zero_jet(*super, DeformationKind::super);
    report.conditions["c'"] = detail::conclude(
        sandwich(*sub, *super), zl.ok && zh.ok, worst_of(zl, zh),
        "0-jet sub and super families sandwiching min/max of u0 and u_-");
  } else {
    report.conditions["c'"] = missing(sub ? "super" : "sub");
  }
  return report;
}

}  // namespace chj
