#pragma once

#include <vector>

#include "hylo/grid.hpp"

namespace hylo {

/// Flux-form second-order Laplacian. Cartesian axes contribute the usual
/// central difference; the cylindrical r axis contributes (1/r) d_r(r d_r .)
/// through the face conductances, so the assembled operator is symmetric
/// w.r.t. the quadrature inner product and summation-by-parts against
/// grad_inner holds to machine precision.
template <typename T>
Field<T> laplacian(const Field<T>& f) {
  const Grid& g = *f.grid;
  Field<T> out(f.grid);
  std::vector<T> flux;
  for (std::size_t a = 0; a < g.naxes(); ++a) {
    const AxisGeom& ax = g.axis(a);
    const std::size_t n = static_cast<std::size_t>(ax.n);
    if (ax.bc == Boundary::periodic) {
      flux.resize(n);
      detail::for_each_line(g, a, [&](std::size_t base, std::size_t s, double) {
        for (std::size_t i = 0; i < n; ++i) {
          const std::size_t prev = (i == 0) ? n - 1 : i - 1;
          flux[i] = ax.fc[i] * (f.v[base + i * s] - f.v[base + prev * s]);
        }
        for (std::size_t i = 0; i < n; ++i) {
          const std::size_t next = (i + 1 == n) ? 0 : i + 1;
          out.v[base + i * s] += (flux[next] - flux[i]) / ax.w[i];
        }
      });
    } else {
      flux.resize(n + 1);
      detail::for_each_line(g, a, [&](std::size_t base, std::size_t s, double) {
        flux[0] = ax.fc[0] * f.v[base];                     // (f_0 - 0)
        for (std::size_t i = 1; i < n; ++i)
          flux[i] = ax.fc[i] * (f.v[base + i * s] - f.v[base + (i - 1) * s]);
        flux[n] = ax.fc[n] * (T{} - f.v[base + (n - 1) * s]);  // (0 - f_last)
        for (std::size_t i = 0; i < n; ++i)
          out.v[base + i * s] += (flux[i + 1] - flux[i]) / ax.w[i];
      });
    }
  }
  return out;
}

namespace detail {

template <typename T>
double face_product(const T& da, const T& db);

template <>
inline double face_product<double>(const double& da, const double& db) {
  return da * db;
}
template <>
inline double face_product<cplx>(const cplx& da, const cplx& db) {
  return da.real() * db.real() + da.imag() * db.imag();
}

}  // namespace detail

/// Discrete gradient inner product: sum over faces of fc * (delta f)(delta g)
/// times the transverse quadrature weight. For complex fields this is
/// Re <grad f, grad g>. Satisfies integrate(g * laplacian f) = -grad_inner(f,g)
/// exactly (same faces, regrouped).
template <typename T>
double grad_inner(const Field<T>& f, const Field<T>& h) {
  const Grid& g = *f.grid;
  double total = 0.0;
  for (std::size_t a = 0; a < g.naxes(); ++a) {
    const AxisGeom& ax = g.axis(a);
    const std::size_t n = static_cast<std::size_t>(ax.n);
    detail::for_each_line(g, a,
                          [&](std::size_t base, std::size_t s, double wp) {
      double line = 0.0;
      if (ax.bc == Boundary::periodic) {
        for (std::size_t i = 0; i < n; ++i) {
          const std::size_t prev = (i == 0) ? n - 1 : i - 1;
          line += ax.fc[i] *
                  detail::face_product<T>(f.v[base + i * s] - f.v[base + prev * s],
                                          h.v[base + i * s] - h.v[base + prev * s]);
        }
      } else {
        line += ax.fc[0] * detail::face_product<T>(f.v[base], h.v[base]);
        for (std::size_t i = 1; i < n; ++i)
          line += ax.fc[i] *
                  detail::face_product<T>(f.v[base + i * s] - f.v[base + (i - 1) * s],
                                          h.v[base + i * s] - h.v[base + (i - 1) * s]);
        line += ax.fc[n] * detail::face_product<T>(f.v[base + (n - 1) * s],
                                                   h.v[base + (n - 1) * s]);
      }
      total += wp * line;
    });
  }
  return total;
}

/// integral |grad f|^2 with the same face stencil as laplacian.
template <typename T>
double dirichlet_energy(const Field<T>& f) {
  return grad_inner(f, f);
}

}  // namespace hylo
