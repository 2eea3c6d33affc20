#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <memory>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "hylo/errors.hpp"

namespace hylo {

using cplx = std::complex<double>;

enum class GridKind { cartesian, cylindrical };
enum class Boundary { periodic, dirichlet_zero };

struct AxisSpec {
  double lo = 0.0;
  double hi = 0.0;
  int points = 0;
  Boundary bc = Boundary::periodic;
};

/// Discretization descriptor. Cartesian grids are 1..3-dimensional;
/// cylindrical grids have exactly two axes (r, x3) with r in (0, R) and
/// dirichlet-zero at the outer radius.
struct GridSpec {
  GridKind kind = GridKind::cartesian;
  std::vector<AxisSpec> axes;
};

/// Per-axis geometry. Periodic axes are node-centered (x_i = lo + i*dx,
/// dx = L/n, the hi endpoint excluded). Dirichlet-zero axes are
/// cell-centered (x_i = lo + (i+1/2)*dx) so midpoint quadrature is exact and
/// the zero boundary sits half a cell outside the first/last samples.
/// The cylindrical r axis is the cell-centered case with lo = 0.
struct AxisGeom {
  double lo, hi, dx;
  int n;
  Boundary bc;
  bool radial;            // cylindrical r axis
  std::vector<double> x;  // node coordinates
  std::vector<double> w;  // 1-D quadrature weight per node
  // Face conductances for the flux-form second-difference operator.
  // Periodic: fc[i] belongs to the face between nodes i-1 (mod n) and i.
  // Dirichlet: fc[0]/fc[n] are the wall links (zero flux on the cylinder
  // axis), fc[i] for 0<i<n the interior faces. The 1-D operator is
  //   (L f)_i * w[i] = flux_out - flux_in,  flux = fc * (f_right - f_left),
  // which makes L symmetric w.r.t. the quadrature inner product by
  // construction.
  std::vector<double> fc;
};

class Grid {
 public:
  explicit Grid(GridSpec spec) : spec_(std::move(spec)) {
    validate(spec_);
    const std::size_t na = spec_.axes.size();
    axes_.resize(na);
    for (std::size_t a = 0; a < na; ++a) build_axis(a);
    strides_.assign(na, 1);
    for (std::size_t a = na; a-- > 1;)
      strides_[a - 1] = strides_[a] * static_cast<std::size_t>(axes_[a].n);
    size_ = strides_[0] * static_cast<std::size_t>(axes_[0].n);
    build_weights();
  }

  const GridSpec& spec() const { return spec_; }
  GridKind kind() const { return spec_.kind; }
  std::size_t naxes() const { return axes_.size(); }
  const AxisGeom& axis(std::size_t a) const { return axes_[a]; }
  std::size_t stride(std::size_t a) const { return strides_[a]; }
  std::size_t size() const { return size_; }
  const std::vector<double>& weights() const { return wflat_; }
  double volume() const { return volume_; }
  double min_dx() const {
    double m = axes_[0].dx;
    for (const auto& ax : axes_) m = std::min(m, ax.dx);
    return m;
  }
  bool fully_periodic() const {
    for (const auto& ax : axes_)
      if (ax.bc != Boundary::periodic) return false;
    return true;
  }

  void unflatten(std::size_t flat, std::vector<int>& idx) const {
    idx.resize(axes_.size());
    for (std::size_t a = 0; a < axes_.size(); ++a) {
      idx[a] = static_cast<int>(flat / strides_[a]);
      flat %= strides_[a];
    }
  }

 private:
  static void validate(const GridSpec& s) {
    if (s.axes.empty() || s.axes.size() > 3)
      throw ConfigError("grid: need 1..3 axes, got " +
                        std::to_string(s.axes.size()));
    if (s.kind == GridKind::cylindrical) {
      if (s.axes.size() != 2)
        throw ConfigError("grid: cylindrical kind requires exactly 2 axes "
                          "(r, x3)");
      if (s.axes[0].lo != 0.0)
        throw ConfigError("grid: axis 0 (r) must start at 0");
      if (s.axes[0].bc != Boundary::dirichlet_zero)
        throw ConfigError("grid: axis 0 (r) must be dirichlet-zero at the "
                          "outer radius");
    }
    for (std::size_t a = 0; a < s.axes.size(); ++a) {
      const auto& ax = s.axes[a];
      if (ax.points < 4)
        throw ConfigError("grid: axis " + std::to_string(a) +
                          " needs at least 4 points, got " +
                          std::to_string(ax.points));
      if (!(ax.hi > ax.lo))
        throw ConfigError("grid: axis " + std::to_string(a) +
                          " has empty extent");
    }
  }

  void build_axis(std::size_t a) {
    const AxisSpec& s = spec_.axes[a];
    AxisGeom& g = axes_[a];
    g.lo = s.lo;
    g.hi = s.hi;
    g.n = s.points;
    g.bc = s.bc;
    g.radial = (spec_.kind == GridKind::cylindrical && a == 0);
    g.dx = (s.hi - s.lo) / s.points;
    g.x.resize(g.n);
    g.w.resize(g.n);
    const bool centered = (g.bc == Boundary::dirichlet_zero);
    for (int i = 0; i < g.n; ++i)
      g.x[i] = g.lo + (centered ? (i + 0.5) : double(i)) * g.dx;
    if (g.radial) {
      const double two_pi = 2.0 * std::numbers::pi;
      for (int i = 0; i < g.n; ++i) g.w[i] = two_pi * g.x[i] * g.dx;
      g.fc.resize(g.n + 1);
      g.fc[0] = 0.0;  // no flux through the axis
      for (int i = 1; i < g.n; ++i) g.fc[i] = two_pi * i;
      // outer wall: half-cell distance from the last node to r = R
      g.fc[g.n] = two_pi * g.hi / (g.dx / 2.0);
    } else if (g.bc == Boundary::periodic) {
      for (int i = 0; i < g.n; ++i) g.w[i] = g.dx;
      g.fc.assign(g.n, 1.0 / g.dx);
    } else {
      for (int i = 0; i < g.n; ++i) g.w[i] = g.dx;
      g.fc.resize(g.n + 1);
      g.fc[0] = 2.0 / g.dx;
      for (int i = 1; i < g.n; ++i) g.fc[i] = 1.0 / g.dx;
      g.fc[g.n] = 2.0 / g.dx;
    }
  }

  void build_weights() {
    wflat_.resize(size_);
    std::vector<int> idx;
    for (std::size_t f = 0; f < size_; ++f) {
      unflatten(f, idx);
      double w = 1.0;
      for (std::size_t a = 0; a < axes_.size(); ++a) w *= axes_[a].w[idx[a]];
      wflat_[f] = w;
    }
    volume_ = 0.0;
    for (double w : wflat_) volume_ += w;
  }

  GridSpec spec_;
  std::vector<AxisGeom> axes_;
  std::vector<std::size_t> strides_;
  std::size_t size_ = 0;
  std::vector<double> wflat_;
  double volume_ = 0.0;
};

using GridPtr = std::shared_ptr<const Grid>;

inline GridPtr build_grid(const GridSpec& spec) {
  return std::make_shared<const Grid>(spec);
}

/// Sampled function on a grid; flat row-major storage.
template <typename T>
struct Field {
  GridPtr grid;
  std::vector<T> v;

  Field() = default;
  explicit Field(GridPtr g, T fill = T{})
      : grid(std::move(g)), v(grid->size(), fill) {}

  std::size_t size() const { return v.size(); }
  T& operator[](std::size_t i) { return v[i]; }
  const T& operator[](std::size_t i) const { return v[i]; }
};

using RealField = Field<double>;
using ComplexField = Field<cplx>;

/// Hamiltonian pair (psi, psi_hat) on one shared grid.
struct NKGState {
  ComplexField psi;
  ComplexField psi_hat;
};

inline bool finite(double x) { return std::isfinite(x); }
inline bool finite(const cplx& z) {
  return std::isfinite(z.real()) && std::isfinite(z.imag());
}

template <typename T>
bool all_finite(const Field<T>& f) {
  for (const auto& s : f.v)
    if (!finite(s)) return false;
  return true;
}

inline bool all_finite(const NKGState& u) {
  return all_finite(u.psi) && all_finite(u.psi_hat);
}

namespace detail {

/// Blocked pairwise reduction; fixed association order independent of the
/// caller, so sums are bit-reproducible and accumulate O(log n) rounding.
template <class Term>
double pairwise_reduce(std::size_t lo, std::size_t hi, const Term& term) {
  if (hi - lo <= 64) {
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) s += term(i);
    return s;
  }
  const std::size_t mid = lo + (hi - lo) / 2;
  return pairwise_reduce(lo, mid, term) + pairwise_reduce(mid, hi, term);
}

/// Visits every grid line along `axis`: fn(base_offset, stride, w_perp)
/// where w_perp is the product of the other axes' 1-D weights.
template <class Fn>
void for_each_line(const Grid& g, std::size_t axis, const Fn& fn) {
  const std::size_t na = g.naxes();
  std::vector<std::size_t> idx(na, 0);
  for (;;) {
    std::size_t base = 0;
    double wp = 1.0;
    for (std::size_t b = 0; b < na; ++b) {
      if (b == axis) continue;
      base += idx[b] * g.stride(b);
      wp *= g.axis(b).w[idx[b]];
    }
    fn(base, g.stride(axis), wp);
    bool advanced = false;
    for (std::size_t b = na; b-- > 0;) {
      if (b == axis) continue;
      if (++idx[b] < static_cast<std::size_t>(g.axis(b).n)) {
        advanced = true;
        break;
      }
      idx[b] = 0;
    }
    if (!advanced) break;
  }
}

}  // namespace detail

/// Quadrature: sum of samples times grid weights (pairwise order).
inline double integrate(const RealField& f) {
  const auto& w = f.grid->weights();
  return detail::pairwise_reduce(0, f.size(),
                                 [&](std::size_t i) { return w[i] * f.v[i]; });
}

/// Quadrature of a real-valued pointwise expression of the samples,
/// e.g. integrate(psi, [](cplx z){ return std::norm(z); }).
template <typename T, class Fn>
double integrate(const Field<T>& f, const Fn& expr) {
  const auto& w = f.grid->weights();
  return detail::pairwise_reduce(
      0, f.size(), [&](std::size_t i) { return w[i] * expr(f.v[i]); });
}

/// Weighted L2 inner product of real fields.
inline double dot(const RealField& a, const RealField& b) {
  const auto& w = a.grid->weights();
  return detail::pairwise_reduce(
      0, a.size(), [&](std::size_t i) { return w[i] * a.v[i] * b.v[i]; });
}

/// Re <a, b> with the sesquilinear weighted product.
inline double dot(const ComplexField& a, const ComplexField& b) {
  const auto& w = a.grid->weights();
  return detail::pairwise_reduce(0, a.size(), [&](std::size_t i) {
    return w[i] * (a.v[i].real() * b.v[i].real() +
                   a.v[i].imag() * b.v[i].imag());
  });
}

/// Full complex weighted inner product, conjugate-linear in `a`.
inline cplx cdot(const ComplexField& a, const ComplexField& b) {
  const auto& w = a.grid->weights();
  const double re = detail::pairwise_reduce(0, a.size(), [&](std::size_t i) {
    return w[i] * (a.v[i].real() * b.v[i].real() +
                   a.v[i].imag() * b.v[i].imag());
  });
  const double im = detail::pairwise_reduce(0, a.size(), [&](std::size_t i) {
    return w[i] * (a.v[i].real() * b.v[i].imag() -
                   a.v[i].imag() * b.v[i].real());
  });
  return {re, im};
}

template <typename T>
double norm_l2(const Field<T>& f) {
  return std::sqrt(std::max(0.0, dot(f, f)));
}

/// Cyclic shift by whole cells; nonzero shifts are only defined along
/// periodic axes.
template <typename T>
Field<T> shift(const Field<T>& f, const std::vector<int>& cells) {
  const Grid& g = *f.grid;
  if (cells.size() != g.naxes())
    throw UsageError("shift: need one offset per axis");
  for (std::size_t a = 0; a < g.naxes(); ++a)
    if (cells[a] != 0 && g.axis(a).bc != Boundary::periodic)
      throw UsageError("shift: axis " + std::to_string(a) +
                       " is not periodic");
  Field<T> out(f.grid);
  std::vector<int> idx;
  for (std::size_t i = 0; i < f.size(); ++i) {
    g.unflatten(i, idx);
    std::size_t j = 0;
    for (std::size_t a = 0; a < g.naxes(); ++a) {
      const int n = g.axis(a).n;
      int k = (idx[a] + cells[a]) % n;
      if (k < 0) k += n;
      j += static_cast<std::size_t>(k) * g.stride(a);
    }
    out.v[j] = f.v[i];
  }
  return out;
}

// ---- state algebra -------------------------------------------------------
// Uniform vector-space interface over RealField and NKGState so descent
// loops can be written once.

template <typename T>
void axpy(double alpha, const Field<T>& x, Field<T>& y) {
  for (std::size_t i = 0; i < y.size(); ++i) y.v[i] += alpha * x.v[i];
}

template <typename T>
void scale(Field<T>& x, double alpha) {
  for (auto& s : x.v) s *= alpha;
}

inline void axpy(double alpha, const NKGState& x, NKGState& y) {
  axpy(alpha, x.psi, y.psi);
  axpy(alpha, x.psi_hat, y.psi_hat);
}

inline void scale(NKGState& x, double alpha) {
  scale(x.psi, alpha);
  scale(x.psi_hat, alpha);
}

inline double state_dot(const RealField& a, const RealField& b) {
  return dot(a, b);
}
inline double state_dot(const ComplexField& a, const ComplexField& b) {
  return dot(a, b);
}
inline double state_dot(const NKGState& a, const NKGState& b) {
  return dot(a.psi, b.psi) + dot(a.psi_hat, b.psi_hat);
}

template <class State>
double state_norm(const State& s) {
  return std::sqrt(std::max(0.0, state_dot(s, s)));
}

inline bool state_finite(const RealField& s) { return all_finite(s); }
inline bool state_finite(const ComplexField& s) { return all_finite(s); }
inline bool state_finite(const NKGState& s) { return all_finite(s); }

}  // namespace hylo
