#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"

#include "hylo/errors.hpp"
#include "hylo/grid.hpp"

// Field snapshot format: <name>.snap holds the raw samples as float64
// little-endian, row-major; <name>.snap.json is the sidecar describing the
// grid and the component type. Complex samples are interleaved (re, im);
// the nkg-pair type stores psi followed by psi_hat. Reloading a snapshot
// reproduces every sample bit for bit.

namespace hylo {

enum class SnapshotKind { real, cplx, nkg };

namespace detail {

inline std::uint64_t byteswap64(std::uint64_t x) {
  x = ((x & 0x00ff00ff00ff00ffULL) << 8) | ((x >> 8) & 0x00ff00ff00ff00ffULL);
  x = ((x & 0x0000ffff0000ffffULL) << 16) |
      ((x >> 16) & 0x0000ffff0000ffffULL);
  return (x << 32) | (x >> 32);
}

inline void write_doubles_le(std::ostream& os, const double* p,
                             std::size_t n) {
  if constexpr (std::endian::native == std::endian::little) {
    os.write(reinterpret_cast<const char*>(p),
             static_cast<std::streamsize>(n * sizeof(double)));
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      const std::uint64_t u = byteswap64(std::bit_cast<std::uint64_t>(p[i]));
      os.write(reinterpret_cast<const char*>(&u), sizeof(u));
    }
  }
}

inline void read_doubles_le(std::istream& is, double* p, std::size_t n) {
  is.read(reinterpret_cast<char*>(p),
          static_cast<std::streamsize>(n * sizeof(double)));
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < n; ++i)
      p[i] = std::bit_cast<double>(byteswap64(std::bit_cast<std::uint64_t>(p[i])));
  }
}

inline std::string boundary_name(Boundary bc) {
  return bc == Boundary::periodic ? "periodic" : "dirichlet";
}

inline Boundary boundary_from_name(const std::string& s) {
  if (s == "periodic") return Boundary::periodic;
  if (s == "dirichlet") return Boundary::dirichlet_zero;
  throw UsageError("snapshot: unknown boundary name '" + s + "'");
}

inline std::string kind_name(SnapshotKind k) {
  switch (k) {
    case SnapshotKind::real: return "real";
    case SnapshotKind::cplx: return "complex";
    default: return "nkg-pair";
  }
}

inline nlohmann::json sidecar_json(const Grid& g, SnapshotKind kind) {
  nlohmann::json j;
  j["kind"] = g.kind() == GridKind::cylindrical ? "cylindrical" : "cartesian";
  j["component-type"] = kind_name(kind);
  j["layout"] = "row-major";
  j["dtype"] = "float64-little-endian";
  nlohmann::json dims = nlohmann::json::array();
  nlohmann::json spacings = nlohmann::json::array();
  nlohmann::json boundary = nlohmann::json::array();
  nlohmann::json axes = nlohmann::json::array();
  for (std::size_t a = 0; a < g.naxes(); ++a) {
    const AxisGeom& ax = g.axis(a);
    dims.push_back(ax.n);
    spacings.push_back(ax.dx);
    boundary.push_back(boundary_name(ax.bc));
    axes.push_back({{"lo", ax.lo},
                    {"hi", ax.hi},
                    {"points", ax.n},
                    {"boundary", boundary_name(ax.bc)}});
  }
  j["dims"] = dims;
  j["spacings"] = spacings;
  j["boundary"] = boundary;
  j["axes"] = axes;
  return j;
}

inline nlohmann::json load_sidecar(const std::string& path) {
  std::ifstream is(path + ".json");
  if (!is)
    throw UsageError("snapshot: cannot open sidecar '" + path + ".json'");
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw UsageError("snapshot: malformed sidecar '" + path +
                     ".json': " + e.what());
  }
  return j;
}

inline GridPtr grid_from_sidecar(const nlohmann::json& j,
                                 const std::string& path) {
  GridSpec spec;
  try {
    spec.kind = j.at("kind").get<std::string>() == "cylindrical"
                    ? GridKind::cylindrical
                    : GridKind::cartesian;
    for (const auto& ja : j.at("axes")) {
      AxisSpec ax;
      ax.lo = ja.at("lo").get<double>();
      ax.hi = ja.at("hi").get<double>();
      ax.points = ja.at("points").get<int>();
      ax.bc = boundary_from_name(ja.at("boundary").get<std::string>());
      spec.axes.push_back(ax);
    }
  } catch (const nlohmann::json::exception& e) {
    throw UsageError("snapshot: sidecar '" + path +
                     ".json' is missing fields: " + e.what());
  }
  return std::make_shared<Grid>(spec);
}

inline void save_raw(const std::string& path, const Grid& g,
                     SnapshotKind kind, const double* data, std::size_t n) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw UsageError("snapshot: cannot write '" + path + "'");
  write_doubles_le(os, data, n);
  if (!os) throw UsageError("snapshot: short write to '" + path + "'");
  std::ofstream js(path + ".json", std::ios::trunc);
  if (!js)
    throw UsageError("snapshot: cannot write sidecar '" + path + ".json'");
  js << sidecar_json(g, kind).dump(2) << '\n';
}

inline void load_raw(const std::string& path, double* data, std::size_t n) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw UsageError("snapshot: cannot open '" + path + "'");
  read_doubles_le(is, data, n);
  if (!is)
    throw UsageError("snapshot: '" + path +
                     "' is shorter than the sidecar promises");
  char extra;
  if (is.read(&extra, 1))
    throw UsageError("snapshot: '" + path +
                     "' is longer than the sidecar promises");
}

}  // namespace detail

inline void save_snapshot(const std::string& path, const RealField& f) {
  detail::save_raw(path, *f.grid, SnapshotKind::real, f.v.data(), f.v.size());
}

inline void save_snapshot(const std::string& path, const ComplexField& f) {
  // std::complex<double> is layout-compatible with double[2]
  detail::save_raw(path, *f.grid, SnapshotKind::cplx,
                   reinterpret_cast<const double*>(f.v.data()),
                   2 * f.v.size());
}

inline void save_snapshot(const std::string& path, const NKGState& st) {
  if (!st.psi.grid || st.psi.grid != st.psi_hat.grid)
    throw UsageError("snapshot: nkg pair components live on different grids");
  const Grid& g = *st.psi.grid;
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw UsageError("snapshot: cannot write '" + path + "'");
  detail::write_doubles_le(os,
                           reinterpret_cast<const double*>(st.psi.v.data()),
                           2 * st.psi.v.size());
  detail::write_doubles_le(
      os, reinterpret_cast<const double*>(st.psi_hat.v.data()),
      2 * st.psi_hat.v.size());
  if (!os) throw UsageError("snapshot: short write to '" + path + "'");
  std::ofstream js(path + ".json", std::ios::trunc);
  if (!js)
    throw UsageError("snapshot: cannot write sidecar '" + path + ".json'");
  js << detail::sidecar_json(g, SnapshotKind::nkg).dump(2) << '\n';
}

inline SnapshotKind snapshot_kind(const std::string& path) {
  const nlohmann::json j = detail::load_sidecar(path);
  const std::string t = j.value("component-type", "");
  if (t == "real") return SnapshotKind::real;
  if (t == "complex") return SnapshotKind::cplx;
  if (t == "nkg-pair") return SnapshotKind::nkg;
  throw UsageError("snapshot: unknown component-type '" + t + "' in '" +
                   path + ".json'");
}

inline RealField load_real_snapshot(const std::string& path) {
  const nlohmann::json j = detail::load_sidecar(path);
  if (j.value("component-type", "") != "real")
    throw UsageError("snapshot: '" + path + "' does not hold a real field");
  RealField f(detail::grid_from_sidecar(j, path));
  detail::load_raw(path, f.v.data(), f.v.size());
  return f;
}

inline ComplexField load_complex_snapshot(const std::string& path) {
  const nlohmann::json j = detail::load_sidecar(path);
  if (j.value("component-type", "") != "complex")
    throw UsageError("snapshot: '" + path +
                     "' does not hold a complex field");
  ComplexField f(detail::grid_from_sidecar(j, path));
  detail::load_raw(path, reinterpret_cast<double*>(f.v.data()),
                   2 * f.v.size());
  return f;
}

inline NKGState load_nkg_snapshot(const std::string& path) {
  const nlohmann::json j = detail::load_sidecar(path);
  if (j.value("component-type", "") != "nkg-pair")
    throw UsageError("snapshot: '" + path + "' does not hold an nkg pair");
  GridPtr g = detail::grid_from_sidecar(j, path);
  NKGState st{ComplexField(g), ComplexField(g)};
  std::ifstream is(path, std::ios::binary);
  if (!is) throw UsageError("snapshot: cannot open '" + path + "'");
  detail::read_doubles_le(is, reinterpret_cast<double*>(st.psi.v.data()),
                          2 * st.psi.v.size());
  detail::read_doubles_le(is,
                          reinterpret_cast<double*>(st.psi_hat.v.data()),
                          2 * st.psi_hat.v.size());
  if (!is)
    throw UsageError("snapshot: '" + path +
                     "' is shorter than the sidecar promises");
  return st;
}

// Optional plain-text dump for 1-D fields: coordinate,value (real) or
// coordinate,re,im (complex). Full 17-digit round-trip precision.
inline void save_field_csv(const std::string& path, const RealField& f) {
  if (f.grid->naxes() != 1)
    throw UsageError("field csv: only 1-D fields can be dumped as CSV");
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw UsageError("field csv: cannot write '" + path + "'");
  os << "coordinate,value\n";
  os.precision(17);
  const AxisGeom& ax = f.grid->axis(0);
  for (int i = 0; i < ax.n; ++i)
    os << ax.x[static_cast<std::size_t>(i)] << ','
       << f.v[static_cast<std::size_t>(i)] << '\n';
}

inline void save_field_csv(const std::string& path, const ComplexField& f) {
  if (f.grid->naxes() != 1)
    throw UsageError("field csv: only 1-D fields can be dumped as CSV");
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw UsageError("field csv: cannot write '" + path + "'");
  os << "coordinate,re,im\n";
  os.precision(17);
  const AxisGeom& ax = f.grid->axis(0);
  for (int i = 0; i < ax.n; ++i)
    os << ax.x[static_cast<std::size_t>(i)] << ','
       << f.v[static_cast<std::size_t>(i)].real() << ','
       << f.v[static_cast<std::size_t>(i)].imag() << '\n';
}

}  // namespace hylo
