#pragma once

// Flat-torus arithmetic, uniform periodic grids and multilinear interpolation.
//
// Every coordinate lives on the unit circle R/Z. A Grid<dim> places n nodes per
// axis at i/n; node indices are flattened with axis 0 varying fastest.

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "chj/error.hpp"

namespace chj {

template <std::size_t dim>
using Vec = std::array<double, dim>;

/// Sentinel standing in for +infinity in Dirac-type initial data.
inline constexpr double kBarrier = 1e6;

inline bool is_barrier(double value, double barrier = kBarrier) { return value >= barrier; }

/// Representative of x in [0, 1).
inline double wrap_unit(double x) {
  double r = x - std::floor(x);
  if (r >= 1.0) r = 0.0;
  return r;
}

/// Signed shortest displacement from a to b on R/Z, in [-1/2, 1/2).
inline double periodic_delta(double a, double b) {
  double d = wrap_unit(b - a);
  if (d >= 0.5) d -= 1.0;
  return d;
}

template <std::size_t dim>
double norm(const Vec<dim>& v) {
  double s = 0.0;
  for (double c : v) s += c * c;
  return std::sqrt(s);
}

template <std::size_t dim>
double dot(const Vec<dim>& a, const Vec<dim>& b) {
  double s = 0.0;
  for (int k = 0; k < dim; ++k) s += a[k] * b[k];
  return s;
}

template <std::size_t dim>
class TorusPoint {
public:
  TorusPoint() { coords_.fill(0.0); }

  explicit TorusPoint(const Vec<dim>& coords) : coords_(coords) {
    for (auto& c : coords_) c = wrap_unit(c);
  }

  /// Convenience for the one-dimensional torus.
  explicit TorusPoint(double x)
    requires(dim == 1)
    : coords_{wrap_unit(x)} {}

  double operator[](int k) const { return coords_[k]; }
  const Vec<dim>& coords() const { return coords_; }

  /// Point reached by moving along the displacement `shift`.
  TorusPoint moved(const Vec<dim>& shift) const {
    Vec<dim> c = coords_;
    for (int k = 0; k < dim; ++k) c[k] += shift[k];
    return TorusPoint(c);
  }

private:
  Vec<dim> coords_;
};

/// Shortest displacement b - a on the torus, componentwise in [-1/2, 1/2).
template <std::size_t dim>
Vec<dim> displacement(const TorusPoint<dim>& a, const TorusPoint<dim>& b) {
  Vec<dim> d;
  for (int k = 0; k < dim; ++k) d[k] = periodic_delta(a[k], b[k]);
  return d;
}

template <std::size_t dim>
double periodic_distance(const TorusPoint<dim>& a, const TorusPoint<dim>& b) {
  double s = 0.0;
  for (int k = 0; k < dim; ++k) {
    const double d = std::abs(a[k] - b[k]);
    const double m = std::min(d, 1.0 - d);
    s += m * m;
  }
  return std::sqrt(s);
}

template <std::size_t dim>
class Grid {
public:
  using MultiIndex = std::array<std::int64_t, dim>;

  explicit Grid(int n) : n_(n) {
    if (n < 2) throw ConfigError("grid needs at least 2 points per axis, got " + std::to_string(n));
    size_ = 1;
    for (int k = 0; k < dim; ++k) size_ *= static_cast<std::size_t>(n);
  }

  int n() const { return n_; }
  double spacing() const { return 1.0 / n_; }
  std::size_t size() const { return size_; }

  MultiIndex unflatten(std::size_t index) const {
    MultiIndex m;
    for (int k = 0; k < dim; ++k) {
      m[k] = static_cast<std::int64_t>(index % n_);
      index /= n_;
    }
    return m;
  }

  /// Flattens a multi-index, wrapping every component modulo n.
  std::size_t flatten(const MultiIndex& m) const {
    std::size_t index = 0;
    for (int k = dim - 1; k >= 0; --k) {
      std::int64_t c = m[k] % n_;
      if (c < 0) c += n_;
      index = index * n_ + static_cast<std::size_t>(c);
    }
    return index;
  }

  TorusPoint<dim> node(std::size_t index) const {
    const auto m = unflatten(index);
    Vec<dim> c;
    for (int k = 0; k < dim; ++k) c[k] = static_cast<double>(m[k]) / n_;
    return TorusPoint<dim>(c);
  }

  /// Neighbor of `index` shifted by `offset` cells along `axis`, wrapping around.
  std::size_t shifted(std::size_t index, int axis, std::int64_t offset) const {
    auto m = unflatten(index);
    m[axis] += offset;
    return flatten(m);
  }

  std::size_t nearest_node(const TorusPoint<dim>& q) const {
    MultiIndex m;
    for (int k = 0; k < dim; ++k) m[k] = static_cast<std::int64_t>(std::llround(q[k] * n_));
    return flatten(m);
  }

  bool operator==(const Grid& other) const { return n_ == other.n_; }

private:
  int n_;
  std::size_t size_;
};

/// Scalar function sampled on every node of a periodic grid. Immutable once built.
template <std::size_t dim>
class GridField {
public:
  GridField(Grid<dim> grid, std::vector<double> values, bool allow_barrier = false,
            double barrier = kBarrier)
    : grid_(grid), values_(std::move(values)), barrier_(barrier) {
    if (values_.size() != grid_.size()) {
      throw ConfigError("field has " + std::to_string(values_.size()) + " values, grid has " +
                        std::to_string(grid_.size()) + " nodes");
    }
    for (std::size_t i = 0; i < values_.size(); ++i) {
      if (!std::isfinite(values_[i])) {
        throw NumericsError("non-finite field value at node " + std::to_string(i));
      }
      if (!allow_barrier && is_barrier(values_[i], barrier_)) {
        throw NumericsError("barrier value at node " + std::to_string(i) +
                            " in a field not flagged as barrier data");
      }
    }
  }

  static GridField constant(Grid<dim> grid, double c) {
    return GridField(grid, std::vector<double>(grid.size(), c));
  }

  template <typename Fn>
  static GridField from_function(Grid<dim> grid, Fn&& fn) {
    std::vector<double> v(grid.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = fn(grid.node(i));
    return GridField(grid, std::move(v));
  }

  const Grid<dim>& grid() const { return grid_; }
  std::span<const double> values() const { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }
  std::size_t size() const { return values_.size(); }
  double barrier() const { return barrier_; }
  bool is_barrier_at(std::size_t i) const { return is_barrier(values_[i], barrier_); }

  bool has_barrier() const {
    for (double v : values_)
      if (is_barrier(v, barrier_)) return true;
    return false;
  }

  double min() const {
    double m = std::numeric_limits<double>::infinity();
    for (double v : values_) m = std::min(m, v);
    return m;
  }

  double max() const {
    double m = -std::numeric_limits<double>::infinity();
    for (double v : values_) m = std::max(m, v);
    return m;
  }

private:
  Grid<dim> grid_;
  std::vector<double> values_;
  double barrier_;
};

/// Multilinear periodic interpolation. Returns the barrier value if any of the
/// 2^dim surrounding nodes carries it; otherwise the result lies between the
/// smallest and largest surrounding node value.
template <std::size_t dim>
double interp(const GridField<dim>& f, const TorusPoint<dim>& q) {
  const auto& grid = f.grid();
  const int n = grid.n();
  typename Grid<dim>::MultiIndex base;
  Vec<dim> frac;
  for (int k = 0; k < dim; ++k) {
    const double s = q[k] * n;
    double fl = std::floor(s);
    frac[k] = s - fl;
    base[k] = static_cast<std::int64_t>(fl);
  }
  double result = 0.0;
  for (unsigned corner = 0; corner < (1u << dim); ++corner) {
    auto m = base;
    double weight = 1.0;
    for (int k = 0; k < dim; ++k) {
      if (corner & (1u << k)) {
        m[k] += 1;
        weight *= frac[k];
      } else {
        weight *= 1.0 - frac[k];
      }
    }
    if (weight == 0.0) continue;
    const double v = f[grid.flatten(m)];
    if (is_barrier(v, f.barrier())) return f.barrier();
    result += weight * v;
  }
  return result;
}

/// Largest |f(i') - f(i)| / h over axis-neighbors i, i'.
template <std::size_t dim>
double lipschitz_estimate(const GridField<dim>& f) {
  const auto& grid = f.grid();
  double lip = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    for (int k = 0; k < dim; ++k) {
      const double d = std::abs(f[grid.shifted(i, k, 1)] - f[i]);
      lip = std::max(lip, d / grid.spacing());
    }
  }
  return lip;
}

struct FieldMetrics {
  double sup_norm;
  double lip;
};

/// Sup norm and Lipschitz estimate of f - g.
template <std::size_t dim>
FieldMetrics field_metrics(const GridField<dim>& f, const GridField<dim>& g) {
  if (!(f.grid() == g.grid())) {
    throw ConfigError("field_metrics: grid mismatch (n=" + std::to_string(f.grid().n()) +
                      " vs n=" + std::to_string(g.grid().n()) + ")");
  }
  std::vector<double> diff(f.size());
  double sup = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    diff[i] = f[i] - g[i];
    sup = std::max(sup, std::abs(diff[i]));
  }
  GridField<dim> d(f.grid(), std::move(diff), true, std::numeric_limits<double>::infinity());
  return {sup, lipschitz_estimate(d)};
}

template <std::size_t dim>
double sup_distance(const GridField<dim>& f, const GridField<dim>& g) {
  return field_metrics(f, g).sup_norm;
}

/// Node-wise combination of two fields on the same grid.
template <std::size_t dim, typename Op>
GridField<dim> combine(const GridField<dim>& f, const GridField<dim>& g, Op op) {
  if (!(f.grid() == g.grid())) throw ConfigError("combine: grid mismatch");
  std::vector<double> v(f.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = op(f[i], g[i]);
  return GridField<dim>(f.grid(), std::move(v));
}

enum class Difference { centered, forward, backward };

/// Finite-difference gradient at a node.
template <std::size_t dim>
Vec<dim> gradient_at(const GridField<dim>& f, std::size_t i,
                     Difference scheme = Difference::centered) {
  const auto& grid = f.grid();
  const double h = grid.spacing();
  Vec<dim> g;
  for (int k = 0; k < dim; ++k) {
    const double up = f[grid.shifted(i, k, 1)];
    const double down = f[grid.shifted(i, k, -1)];
    switch (scheme) {
      case Difference::centered: g[k] = (up - down) / (2.0 * h); break;
      case Difference::forward: g[k] = (up - f[i]) / h; break;
      case Difference::backward: g[k] = (f[i] - down) / h; break;
    }
  }
  return g;
}

/// Centered-difference gradient interpolated to an arbitrary point.
template <std::size_t dim>
Vec<dim> interp_gradient(const GridField<dim>& f, const TorusPoint<dim>& q) {
  const auto& grid = f.grid();
  Vec<dim> result{};
  const int n = grid.n();
  typename Grid<dim>::MultiIndex base;
  Vec<dim> frac;
  for (int k = 0; k < dim; ++k) {
    const double s = q[k] * n;
    const double fl = std::floor(s);
    frac[k] = s - fl;
    base[k] = static_cast<std::int64_t>(fl);
  }
  for (unsigned corner = 0; corner < (1u << dim); ++corner) {
    auto m = base;
    double weight = 1.0;
    for (int k = 0; k < dim; ++k) {
      if (corner & (1u << k)) {
        m[k] += 1;
        weight *= frac[k];
      } else {
        weight *= 1.0 - frac[k];
      }
    }
    if (weight == 0.0) continue;
    const auto g = gradient_at(f, grid.flatten(m));
    for (int k = 0; k < dim; ++k) result[k] += weight * g[k];
  }
  return result;
}

// ---------------------------------------------------------------------------
// CSV: header "# dim=<d> n=<n>", then one row "index,coord...,value" per node.

inline std::string format_number(double x) {
  std::ostringstream os;
  os << std::setprecision(17) << x;
  return os.str();
}

template <std::size_t dim>
void write_csv(std::ostream& os, const GridField<dim>& f) {
  const auto& grid = f.grid();
  os << "# dim=" << dim << " n=" << grid.n() << "\n";
  for (std::size_t i = 0; i < f.size(); ++i) {
    os << i;
    const auto q = grid.node(i);
    for (int k = 0; k < dim; ++k) os << ',' << format_number(q[k]);
    os << ',' << format_number(f[i]) << "\n";
  }
}

template <std::size_t dim>
GridField<dim> read_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw ConfigError("grid field CSV: empty input");
  int file_dim = 0, n = 0;
  if (std::sscanf(line.c_str(), "# dim=%d n=%d", &file_dim, &n) != 2) {
    throw ConfigError("grid field CSV: malformed header '" + line + "'");
  }
  if (file_dim != dim) {
    throw ConfigError("grid field CSV: file has dim=" + std::to_string(file_dim) +
                      ", expected " + std::to_string(dim));
  }
  Grid<dim> grid(n);
  std::vector<double> values(grid.size());
  std::vector<bool> seen(grid.size(), false);
  std::size_t rows = 0;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream row(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(row, cell, ',')) cells.push_back(cell);
    if (cells.size() != static_cast<std::size_t>(dim) + 2) {
      throw ConfigError("grid field CSV: row '" + line + "' has " +
                        std::to_string(cells.size()) + " columns");
    }
    const auto index = static_cast<std::size_t>(std::stoull(cells.front()));
    if (index >= grid.size() || seen[index]) {
      throw ConfigError("grid field CSV: bad or repeated index " + cells.front());
    }
    seen[index] = true;
    values[index] = std::stod(cells.back());
    ++rows;
  }
  if (rows != grid.size()) {
    throw ConfigError("grid field CSV: expected " + std::to_string(grid.size()) + " rows, got " +
                      std::to_string(rows));
  }
  return GridField<dim>(grid, std::move(values), true);
}

}  // namespace chj
