#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "hylo/errors.hpp"
#include "hylo/grid.hpp"
#include "hylo/minimize.hpp"
#include "hylo/model.hpp"

// Flat INI-style run configuration. Five sections map one-to-one onto the
// module parameter types; two global keys precede the first section header.
// Unknown sections, unknown keys, and duplicate keys are rejected by name.
//
//   deterministic = true          # force the configured rng seed
//   rng-seed = 7
//   [grid]
//   kind = cartesian              # cartesian | cylindrical
//   axis1 = -20 20 2048 periodic  # lo hi points (periodic | dirichlet)
//   [model]
//   equation = nse                # nse | nse-vortex | nkg
//   p = 4
//   c-w = 2                       # nse family coefficient
//   c-n = 1                       # nkg family coefficient (0 = linear)
//   mass = 1                      # nkg mass
//   d = 0                         # optional stabilizer d s^q
//   q = 0
//   potential = constant          # constant | lattice | axial-periodic
//   potential-value = 1
//   potential-amp = 0.2
//   potential-period = 1          # lattice period matrix, row-major
//   ell = 0
//   coercivity-a = 1
//   coercivity-s = 3
//   delta = 0.01
//   sweep = 8 16 32               # test-function sweep parameters (testfn)
//   sweep-s0 = 0                  # 0 = use the hypothesis-scan optimum
//   [minimize]
//   max-iters = 2000
//   tol = 1e-6
//   initial-step = 1e-2
//   continuation = 0.016 0.013 0.01
//   init = gaussian               # gaussian | ring (ring: vortex only)
//   init-amp = 1
//   init-width = 2
//   init-omega = 0.5              # nkg pair ansatz psi_hat = -i omega psi
//   [evolve]
//   total-time = 10
//   dt = 0                        # 0 = automatic suggestion
//   samples = 200
//   perturb = 0                   # relative noise amplitude on psi
//   perturb-kmax = 10
//   reference = solve             # solve | path to a .snap snapshot
//   [output]
//   dir = out
//   snapshots = true
//   field-csv = false
//   snapshot-every = 0            # evolve: field snapshot every k steps

namespace hylo {

struct EvolveParams {
  double total_time = 10.0;
  double dt = 0.0;  // 0 = suggest_dt at run time
  int samples = 200;
  double perturb = 0.0;
  int perturb_kmax = 10;
  std::string reference = "solve";
};

struct OutputParams {
  std::string dir = "out";
  bool snapshots = true;
  bool field_csv = false;
  int snapshot_every = 0;
};

struct InitParams {
  std::string shape = "gaussian";
  double amp = 1.0;
  double width = 2.0;
  double omega = 0.5;
};

struct SweepConfig {
  std::vector<double> parameters;
  double s0 = 0.0;
};

struct RunConfig {
  GridSpec grid;
  ModelSpec model;
  MinimizeOptions minimize;
  InitParams init;
  SweepConfig sweep;
  EvolveParams evolve;
  OutputParams output;
  bool deterministic = true;
  std::uint64_t rng_seed = 0;
};

/// Command-line values that take precedence over the config file.
struct ConfigOverrides {
  std::optional<std::string> out_dir;
  std::optional<bool> deterministic;
  std::optional<std::uint64_t> rng_seed;
  std::optional<int> max_iters;
  std::optional<double> tol;
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& key, const std::string& val) {
  std::size_t pos = 0;
  double x = 0.0;
  try {
    x = std::stod(val, &pos);
  } catch (const std::exception&) {
    throw ConfigError("config: key '" + key + "' expects a number, got '" +
                      val + "'");
  }
  if (pos != val.size())
    throw ConfigError("config: key '" + key +
                      "' has trailing characters in '" + val + "'");
  return x;
}

inline long long parse_int(const std::string& key, const std::string& val) {
  std::size_t pos = 0;
  long long x = 0;
  try {
    x = std::stoll(val, &pos);
  } catch (const std::exception&) {
    throw ConfigError("config: key '" + key + "' expects an integer, got '" +
                      val + "'");
  }
  if (pos != val.size())
    throw ConfigError("config: key '" + key +
                      "' has trailing characters in '" + val + "'");
  return x;
}

inline bool parse_bool(const std::string& key, const std::string& val) {
  if (val == "true" || val == "yes" || val == "1") return true;
  if (val == "false" || val == "no" || val == "0") return false;
  throw ConfigError("config: key '" + key + "' expects true/false, got '" +
                    val + "'");
}

inline std::vector<std::string> split_ws(const std::string& val) {
  std::istringstream is(val);
  std::vector<std::string> out;
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

inline std::vector<double> parse_list(const std::string& key,
                                      const std::string& val) {
  std::vector<double> out;
  for (const std::string& tok : split_ws(val))
    out.push_back(parse_double(key, tok));
  return out;
}

inline AxisSpec parse_axis(const std::string& key, const std::string& val) {
  const std::vector<std::string> tok = split_ws(val);
  if (tok.size() != 4)
    throw ConfigError("config: key '" + key +
                      "' expects 'lo hi points boundary', got '" + val + "'");
  AxisSpec ax;
  ax.lo = parse_double(key, tok[0]);
  ax.hi = parse_double(key, tok[1]);
  ax.points = static_cast<int>(parse_int(key, tok[2]));
  if (tok[3] == "periodic")
    ax.bc = Boundary::periodic;
  else if (tok[3] == "dirichlet")
    ax.bc = Boundary::dirichlet_zero;
  else
    throw ConfigError("config: key '" + key + "' has unknown boundary '" +
                      tok[3] + "' (periodic | dirichlet)");
  return ax;
}

struct IniLine {
  std::string section;  // empty = global
  std::string key;
  std::string value;
};

inline std::vector<IniLine> parse_ini(std::istream& is) {
  static const std::set<std::string> known_sections = {
      "grid", "model", "minimize", "evolve", "output"};
  std::vector<IniLine> out;
  std::set<std::string> seen;  // "section/key" duplicates rejected
  std::string line, section;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    // inline comments: everything from the first '#' or ';' is dropped
    const std::size_t hash = line.find_first_of("#;");
    if (hash != std::string::npos) line.erase(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    if (t.front() == '[') {
      if (t.back() != ']')
        throw ConfigError("config line " + std::to_string(lineno) +
                          ": unterminated section header '" + t + "'");
      section = trim(t.substr(1, t.size() - 2));
      if (!known_sections.count(section))
        throw ConfigError("config line " + std::to_string(lineno) +
                          ": unknown section [" + section + "]");
      continue;
    }
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": expected key = value, got '" + t + "'");
    IniLine entry;
    entry.section = section;
    entry.key = trim(t.substr(0, eq));
    entry.value = trim(t.substr(eq + 1));
    if (entry.key.empty())
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": empty key");
    const std::string id = entry.section + "/" + entry.key;
    if (!seen.insert(id).second)
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": duplicate key '" + entry.key + "' in section [" +
                        entry.section + "]");
    out.push_back(std::move(entry));
  }
  return out;
}

inline void apply_global(RunConfig& cfg, const IniLine& e) {
  if (e.key == "deterministic")
    cfg.deterministic = parse_bool(e.key, e.value);
  else if (e.key == "rng-seed")
    cfg.rng_seed = static_cast<std::uint64_t>(parse_int(e.key, e.value));
  else
    throw ConfigError("config: unknown global key '" + e.key + "'");
}

inline void apply_grid(RunConfig& cfg, const IniLine& e) {
  if (e.key == "kind") {
    if (e.value == "cartesian")
      cfg.grid.kind = GridKind::cartesian;
    else if (e.value == "cylindrical")
      cfg.grid.kind = GridKind::cylindrical;
    else
      throw ConfigError("config: unknown grid kind '" + e.value + "'");
  } else if (e.key == "axis1" || e.key == "axis2" || e.key == "axis3") {
    const std::size_t idx = static_cast<std::size_t>(e.key[4] - '1');
    if (cfg.grid.axes.size() != idx)
      throw ConfigError("config: grid axes must appear in order; '" + e.key +
                        "' is out of sequence");
    cfg.grid.axes.push_back(parse_axis(e.key, e.value));
  } else {
    throw ConfigError("config: unknown key '" + e.key +
                      "' in section [grid]");
  }
}

inline void apply_model(RunConfig& cfg, const IniLine& e) {
  ModelSpec& m = cfg.model;
  if (e.key == "equation") {
    if (e.value == "nse")
      m.equation = Equation::nse;
    else if (e.value == "nse-vortex")
      m.equation = Equation::nse_vortex;
    else if (e.value == "nkg")
      m.equation = Equation::nkg;
    else
      throw ConfigError("config: unknown equation '" + e.value + "'");
    m.nonlin.family = m.equation == Equation::nkg ? NonlinFamily::nkg_power
                                                  : NonlinFamily::nse_power;
  } else if (e.key == "p") {
    m.nonlin.p = parse_double(e.key, e.value);
  } else if (e.key == "c-w") {
    m.nonlin.c_w = parse_double(e.key, e.value);
  } else if (e.key == "c-n") {
    m.nonlin.c_n = parse_double(e.key, e.value);
  } else if (e.key == "mass") {
    m.nonlin.m = parse_double(e.key, e.value);
  } else if (e.key == "d") {
    m.nonlin.d = parse_double(e.key, e.value);
  } else if (e.key == "q") {
    m.nonlin.q = parse_double(e.key, e.value);
  } else if (e.key == "potential") {
    if (e.value == "constant")
      m.potential.family = PotentialFamily::constant;
    else if (e.value == "lattice")
      m.potential.family = PotentialFamily::lattice;
    else if (e.value == "axial-periodic")
      m.potential.family = PotentialFamily::axial_periodic;
    else
      throw ConfigError("config: unknown potential family '" + e.value + "'");
  } else if (e.key == "potential-value") {
    m.potential.value = parse_double(e.key, e.value);
  } else if (e.key == "potential-amp") {
    m.potential.amp = parse_double(e.key, e.value);
  } else if (e.key == "potential-period") {
    m.potential.period = parse_list(e.key, e.value);
  } else if (e.key == "ell") {
    m.ell = static_cast<int>(parse_int(e.key, e.value));
  } else if (e.key == "coercivity-a") {
    m.coercivity.a = parse_double(e.key, e.value);
  } else if (e.key == "coercivity-s") {
    m.coercivity.s = parse_double(e.key, e.value);
  } else if (e.key == "delta") {
    m.delta = parse_double(e.key, e.value);
  } else if (e.key == "sweep") {
    cfg.sweep.parameters = parse_list(e.key, e.value);
  } else if (e.key == "sweep-s0") {
    cfg.sweep.s0 = parse_double(e.key, e.value);
  } else {
    throw ConfigError("config: unknown key '" + e.key +
                      "' in section [model]");
  }
}

inline void apply_minimize(RunConfig& cfg, const IniLine& e) {
  if (e.key == "max-iters")
    cfg.minimize.max_iters = static_cast<int>(parse_int(e.key, e.value));
  else if (e.key == "tol")
    cfg.minimize.gradient_tolerance = parse_double(e.key, e.value);
  else if (e.key == "initial-step")
    cfg.minimize.initial_step = parse_double(e.key, e.value);
  else if (e.key == "continuation")
    cfg.minimize.continuation_deltas = parse_list(e.key, e.value);
  else if (e.key == "init")
    cfg.init.shape = e.value;
  else if (e.key == "init-amp")
    cfg.init.amp = parse_double(e.key, e.value);
  else if (e.key == "init-width")
    cfg.init.width = parse_double(e.key, e.value);
  else if (e.key == "init-omega")
    cfg.init.omega = parse_double(e.key, e.value);
  else
    throw ConfigError("config: unknown key '" + e.key +
                      "' in section [minimize]");
}

inline void apply_evolve(RunConfig& cfg, const IniLine& e) {
  if (e.key == "total-time")
    cfg.evolve.total_time = parse_double(e.key, e.value);
  else if (e.key == "dt")
    cfg.evolve.dt = parse_double(e.key, e.value);
  else if (e.key == "samples")
    cfg.evolve.samples = static_cast<int>(parse_int(e.key, e.value));
  else if (e.key == "perturb")
    cfg.evolve.perturb = parse_double(e.key, e.value);
  else if (e.key == "perturb-kmax")
    cfg.evolve.perturb_kmax = static_cast<int>(parse_int(e.key, e.value));
  else if (e.key == "reference")
    cfg.evolve.reference = e.value;
  else
    throw ConfigError("config: unknown key '" + e.key +
                      "' in section [evolve]");
}

inline void apply_output(RunConfig& cfg, const IniLine& e) {
  if (e.key == "dir")
    cfg.output.dir = e.value;
  else if (e.key == "snapshots")
    cfg.output.snapshots = parse_bool(e.key, e.value);
  else if (e.key == "field-csv")
    cfg.output.field_csv = parse_bool(e.key, e.value);
  else if (e.key == "snapshot-every")
    cfg.output.snapshot_every = static_cast<int>(parse_int(e.key, e.value));
  else
    throw ConfigError("config: unknown key '" + e.key +
                      "' in section [output]");
}

}  // namespace detail

inline RunConfig parse_config_stream(std::istream& is) {
  RunConfig cfg;
  for (const detail::IniLine& e : detail::parse_ini(is)) {
    if (e.section.empty())
      detail::apply_global(cfg, e);
    else if (e.section == "grid")
      detail::apply_grid(cfg, e);
    else if (e.section == "model")
      detail::apply_model(cfg, e);
    else if (e.section == "minimize")
      detail::apply_minimize(cfg, e);
    else if (e.section == "evolve")
      detail::apply_evolve(cfg, e);
    else
      detail::apply_output(cfg, e);
  }
  if (cfg.grid.axes.empty())
    throw ConfigError("config: section [grid] must define at least axis1");
  if (cfg.init.shape != "gaussian" && cfg.init.shape != "ring" &&
      cfg.init.shape != "plateau")
    throw ConfigError("config: unknown init shape '" + cfg.init.shape +
                      "' (gaussian | ring | plateau)");
  if (cfg.init.shape == "ring" && cfg.model.equation != Equation::nse_vortex)
    throw ConfigError("config: init = ring is only meaningful for "
                      "nse-vortex runs");
  if (!(cfg.init.amp > 0.0) || !(cfg.init.width > 0.0))
    throw ConfigError("config: init-amp and init-width must be positive");
  if (cfg.evolve.samples < 1)
    throw ConfigError("config: evolve samples must be at least 1");
  if (cfg.evolve.perturb < 0.0)
    throw ConfigError("config: evolve perturb must be nonnegative");
  if (cfg.output.snapshot_every < 0)
    throw ConfigError("config: snapshot-every must be nonnegative");
  return cfg;
}

inline RunConfig parse_config_text(const std::string& text) {
  std::istringstream is(text);
  return parse_config_stream(is);
}

inline RunConfig parse_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config: cannot open '" + path + "'");
  return parse_config_stream(is);
}

inline void apply_overrides(RunConfig& cfg, const ConfigOverrides& ov) {
  if (ov.out_dir) cfg.output.dir = *ov.out_dir;
  if (ov.deterministic) cfg.deterministic = *ov.deterministic;
  if (ov.rng_seed) cfg.rng_seed = *ov.rng_seed;
  if (ov.max_iters) cfg.minimize.max_iters = *ov.max_iters;
  if (ov.tol) cfg.minimize.gradient_tolerance = *ov.tol;
}

}  // namespace hylo
