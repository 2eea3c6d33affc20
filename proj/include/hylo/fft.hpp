#pragma once

#include <fftw3.h>

#include <complex>
#include <map>
#include <numbers>
#include <vector>

#include "hylo/grid.hpp"

namespace hylo {
namespace detail {

/// Cached in-place 1-D c2c FFTW plans, one per (length, direction).
/// Lines of an N-D field are gathered into the owned scratch buffer, so a
/// single contiguous plan serves every axis and layout; FFTW_ESTIMATE keeps
/// planning deterministic. Single-threaded by design, like the reductions.
class FFTCache {
 public:
  static FFTCache& instance() {
    static FFTCache c;
    return c;
  }

  cplx* scratch(std::size_t n) {
    if (n > cap_) {
      if (buf_) fftw_free(buf_);
      buf_ = static_cast<cplx*>(fftw_malloc(sizeof(cplx) * n));
      cap_ = n;
    }
    return buf_;
  }

  void execute(int n, int sign) {
    const auto key = std::make_pair(n, sign);
    auto it = plans_.find(key);
    if (it == plans_.end()) {
      fftw_complex* p = reinterpret_cast<fftw_complex*>(scratch(std::size_t(n)));
      fftw_plan plan = fftw_plan_dft_1d(n, p, p, sign, FFTW_ESTIMATE);
      it = plans_.emplace(key, plan).first;
    }
    fftw_execute_dft(it->second,
                     reinterpret_cast<fftw_complex*>(buf_),
                     reinterpret_cast<fftw_complex*>(buf_));
  }

  ~FFTCache() {
    for (auto& [k, p] : plans_) fftw_destroy_plan(p);
    if (buf_) fftw_free(buf_);
  }

  FFTCache(const FFTCache&) = delete;
  FFTCache& operator=(const FFTCache&) = delete;

 private:
  FFTCache() = default;
  std::map<std::pair<int, int>, fftw_plan> plans_;
  cplx* buf_ = nullptr;
  std::size_t cap_ = 0;
};

}  // namespace detail

/// Unnormalized in-place DFT along one (periodic) axis of the field;
/// sign = FFTW_FORWARD or FFTW_BACKWARD. A forward/backward round trip
/// multiplies the data by axis n.
inline void fft_axis(ComplexField& f, std::size_t axis, int sign) {
  const Grid& g = *f.grid;
  if (g.axis(axis).bc != Boundary::periodic)
    throw UsageError("fft_axis: axis " + std::to_string(axis) +
                     " is not periodic");
  const std::size_t n = std::size_t(g.axis(axis).n);
  detail::FFTCache& cache = detail::FFTCache::instance();
  cplx* buf = cache.scratch(n);
  detail::for_each_line(g, axis, [&](std::size_t base, std::size_t s, double) {
    for (std::size_t i = 0; i < n; ++i) buf[i] = f.v[base + i * s];
    cache.execute(int(n), sign);
    for (std::size_t i = 0; i < n; ++i) f.v[base + i * s] = buf[i];
  });
}

/// Angular wavenumber of mode index j on a periodic axis (negative branch
/// for the upper half).
inline double wavenumber(const AxisGeom& ax, int j) {
  const int m = j <= ax.n / 2 ? j : j - ax.n;
  return 2.0 * std::numbers::pi * m / (ax.hi - ax.lo);
}

}  // namespace hylo
