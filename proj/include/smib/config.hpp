#pragma once

// Analysis configuration: JSON document -> validated AnalysisConfig.
//
// Defaults (applied when a key is absent):
//
//   simulation.step            1e-3 bus periods
//   simulation.duration        20 bus periods
//   simulation.method          "rk4"
//   simulation.rel_tol         1e-9
//   simulation.abs_tol         1e-11
//   simulation.perturbation    phi 0, domega 0.01, re_z 0, im_z 0
//   grid.bus_phase0            0
//   eta                        unset (automatic search)
//   basin                      absent (no basin sampling)
//   basin.n                    500
//   basin.seed                 1
//   basin.horizon              300 bus periods
//   basin.convergence_tol      1e-4
//   basin.box                  phi ±1, domega ±0.5, re_z ±0.1, im_z ±0.1
//   output_dir                 "smib_out"
//
// units.mode is mandatory; per-unit configs must also give omega_base.

#include <algorithm>
#include <cstdint>
#include <initializer_list>
#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "smib/certificate.hpp"
#include "smib/error.hpp"
#include "smib/model.hpp"
#include "smib/simulator.hpp"

namespace smib {

struct BasinConfig {
  int n{500};
  std::uint64_t seed{1};
  double horizon{};
  double convergence_tol{1e-4};
  SamplingBox box{};

  bool operator==(const BasinConfig& o) const {
    return n == o.n && seed == o.seed && horizon == o.horizon &&
           convergence_tol == o.convergence_tol && box.ranges == o.box.ranges;
  }
};

struct AnalysisConfig {
  MachineParams machine;
  GridParams grid;
  UnitSystem units;
  std::optional<double> eta;
  SimOptions sim;
  LocalCoords perturbation{0.0, 0.01, Complex(0.0, 0.0)};
  std::optional<BasinConfig> basin;
  std::string output_dir{"smib_out"};

  bool operator==(const AnalysisConfig& o) const {
    const auto same_sim = [](const SimOptions& a, const SimOptions& b) {
      return a.step == b.step && a.duration == b.duration &&
             a.method == b.method && a.rel_tol == b.rel_tol &&
             a.abs_tol == b.abs_tol;
    };
    return machine == o.machine && grid == o.grid && units == o.units &&
           eta == o.eta && same_sim(sim, o.sim) &&
           perturbation.phi == o.perturbation.phi &&
           perturbation.domega == o.perturbation.domega &&
           perturbation.z == o.perturbation.z && basin == o.basin &&
           output_dir == o.output_dir;
  }
};

namespace internal {

using nlohmann::json;

inline void reject_unknown(const json& obj, std::string_view where,
                           std::initializer_list<std::string_view> allowed) {
  for (const auto& item : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), item.key()) == allowed.end()) {
      throw Error(ErrorKind::kParseError,
                  "unknown key '" + item.key() + "' in " + std::string(where));
    }
  }
}

inline const json& require_object(const json& parent, const std::string& key,
                                  std::string_view where) {
  if (!parent.contains(key)) {
    throw Error(ErrorKind::kParseError,
                "missing object '" + key + "' in " + std::string(where));
  }
  const json& v = parent.at(key);
  if (!v.is_object()) {
    throw Error(ErrorKind::kParseError, "field '" + std::string(where) + "." +
                                            key + "' must be an object");
  }
  return v;
}

inline double number_at(const json& obj, const std::string& key,
                        std::string_view where, std::optional<double> fallback) {
  if (!obj.contains(key)) {
    if (fallback) return *fallback;
    throw Error(ErrorKind::kParseError,
                "missing field '" + std::string(where) + "." + key + "'");
  }
  const json& v = obj.at(key);
  if (!v.is_number()) {
    throw Error(ErrorKind::kParseError,
                "field '" + std::string(where) + "." + key + "' must be a number");
  }
  return v.get<double>();
}

inline std::pair<double, double> range_at(const json& obj, const std::string& key,
                                          std::pair<double, double> fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
    throw Error(ErrorKind::kParseError,
                "field 'basin.box." + key + "' must be [lo, hi]");
  }
  return {v[0].get<double>(), v[1].get<double>()};
}

inline void check(bool ok, const std::string& invariant) {
  if (!ok) throw Error(ErrorKind::kValidationError, invariant + " violated");
}

inline std::size_t line_of(std::string_view text, std::size_t byte) {
  byte = std::min(byte, text.size());
  return 1 + static_cast<std::size_t>(
                 std::count(text.begin(), text.begin() + byte, '\n'));
}

}  // namespace internal

inline AnalysisConfig parse_config(std::string_view text) {
  using internal::json;
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::kParseError,
                "line " + std::to_string(internal::line_of(text, e.byte)) +
                    ": " + e.what());
  }
  if (!doc.is_object()) {
    throw Error(ErrorKind::kParseError, "top level must be an object");
  }
  internal::reject_unknown(doc, "config",
                           {"units", "machine", "grid", "eta", "simulation",
                            "basin", "output_dir"});
  AnalysisConfig cfg;

  const json& units = internal::require_object(doc, "units", "config");
  internal::reject_unknown(units, "units", {"mode", "omega_base"});
  if (!units.contains("mode") || !units.at("mode").is_string()) {
    throw Error(ErrorKind::kParseError,
                "field 'units.mode' must be \"si\" or \"per_unit\"");
  }
  const auto mode = units.at("mode").get<std::string>();
  if (mode == "si") {
    cfg.units.mode = UnitMode::kSI;
    cfg.units.omega_base = internal::number_at(units, "omega_base", "units", 1.0);
  } else if (mode == "per_unit") {
    cfg.units.mode = UnitMode::kPerUnit;
    cfg.units.omega_base =
        internal::number_at(units, "omega_base", "units", std::nullopt);
  } else {
    throw Error(ErrorKind::kParseError,
                "field 'units.mode' must be \"si\" or \"per_unit\"");
  }

  const json& mach = internal::require_object(doc, "machine", "config");
  internal::reject_unknown(mach, "machine", {"J", "K", "Tm", "L", "R", "lambda"});
  cfg.machine.J = internal::number_at(mach, "J", "machine", std::nullopt);
  cfg.machine.K = internal::number_at(mach, "K", "machine", std::nullopt);
  cfg.machine.Tm = internal::number_at(mach, "Tm", "machine", std::nullopt);
  cfg.machine.L = internal::number_at(mach, "L", "machine", std::nullopt);
  cfg.machine.R = internal::number_at(mach, "R", "machine", std::nullopt);
  cfg.machine.lambda = internal::number_at(mach, "lambda", "machine", std::nullopt);

  const json& grid = internal::require_object(doc, "grid", "config");
  internal::reject_unknown(grid, "grid", {"omega_s", "v_mag", "bus_phase0"});
  cfg.grid.omega_s = internal::number_at(grid, "omega_s", "grid", std::nullopt);
  cfg.grid.v_mag = internal::number_at(grid, "v_mag", "grid", std::nullopt);
  cfg.grid.bus_phase0 = internal::number_at(grid, "bus_phase0", "grid", 0.0);

  // Validate physical parameters before deriving period-based defaults.
  internal::check(cfg.machine.J > 0, "machine.J > 0");
  internal::check(cfg.machine.K > 0, "machine.K > 0");
  internal::check(cfg.machine.Tm > 0, "machine.Tm > 0");
  internal::check(cfg.machine.L > 0, "machine.L > 0");
  internal::check(cfg.machine.R > 0, "machine.R > 0");
  internal::check(cfg.machine.lambda > 0, "machine.lambda > 0");
  internal::check(cfg.grid.omega_s > 0, "grid.omega_s > 0");
  internal::check(cfg.grid.v_mag > 0, "grid.v_mag > 0");
  internal::check(cfg.units.omega_base > 0, "units.omega_base > 0");
  const double period = cfg.grid.period();

  if (doc.contains("eta") && !doc.at("eta").is_null()) {
    cfg.eta = internal::number_at(doc, "eta", "config", std::nullopt);
    internal::check(*cfg.eta >= 0, "eta >= 0");
  }

  cfg.sim = SimOptions::defaults_for(cfg.grid);
  if (doc.contains("simulation")) {
    const json& sim = internal::require_object(doc, "simulation", "config");
    internal::reject_unknown(sim, "simulation",
                             {"step", "duration", "method", "rel_tol", "abs_tol",
                              "perturbation"});
    cfg.sim.step = internal::number_at(sim, "step", "simulation", cfg.sim.step);
    cfg.sim.duration =
        internal::number_at(sim, "duration", "simulation", cfg.sim.duration);
    cfg.sim.rel_tol =
        internal::number_at(sim, "rel_tol", "simulation", cfg.sim.rel_tol);
    cfg.sim.abs_tol =
        internal::number_at(sim, "abs_tol", "simulation", cfg.sim.abs_tol);
    if (sim.contains("method")) {
      const json& mv = sim.at("method");
      const std::string m = mv.is_string() ? mv.get<std::string>() : "";
      if (m == "rk4") {
        cfg.sim.method = Method::kRK4Fixed;
      } else if (m == "rk45") {
        cfg.sim.method = Method::kRK45Adaptive;
      } else {
        throw Error(ErrorKind::kParseError,
                    "field 'simulation.method' must be \"rk4\" or \"rk45\"");
      }
    }
    if (sim.contains("perturbation")) {
      const json& p =
          internal::require_object(sim, "perturbation", "simulation");
      internal::reject_unknown(p, "simulation.perturbation",
                               {"phi", "domega", "re_z", "im_z"});
      const std::string w = "simulation.perturbation";
      cfg.perturbation.phi = internal::number_at(p, "phi", w, 0.0);
      cfg.perturbation.domega = internal::number_at(p, "domega", w, 0.01);
      cfg.perturbation.z = Complex(internal::number_at(p, "re_z", w, 0.0),
                                   internal::number_at(p, "im_z", w, 0.0));
    }
  }
  internal::check(cfg.sim.step > 0, "simulation.step > 0");
  internal::check(cfg.sim.duration > 0, "simulation.duration > 0");
  internal::check(cfg.sim.rel_tol > 0, "simulation.rel_tol > 0");
  internal::check(cfg.sim.abs_tol > 0, "simulation.abs_tol > 0");

  if (doc.contains("basin") && !doc.at("basin").is_null()) {
    const json& b = internal::require_object(doc, "basin", "config");
    internal::reject_unknown(b, "basin",
                             {"n", "seed", "horizon", "convergence_tol", "box"});
    BasinConfig bc;
    if (b.contains("n")) {
      internal::check(b.at("n").is_number_integer(), "basin.n integer");
      bc.n = b.at("n").get<int>();
    }
    if (b.contains("seed")) {
      internal::check(b.at("seed").is_number_unsigned(),
                      "basin.seed non-negative integer");
      bc.seed = b.at("seed").get<std::uint64_t>();
    }
    bc.horizon = internal::number_at(b, "horizon", "basin", 300.0 * period);
    bc.convergence_tol =
        internal::number_at(b, "convergence_tol", "basin", 1e-4);
    std::pair<double, double> phi{-1.0, 1.0}, dw{-0.5, 0.5}, rz{-0.1, 0.1},
        iz{-0.1, 0.1};
    if (b.contains("box")) {
      const json& box = internal::require_object(b, "box", "basin");
      internal::reject_unknown(box, "basin.box", {"phi", "domega", "re_z", "im_z"});
      phi = internal::range_at(box, "phi", phi);
      dw = internal::range_at(box, "domega", dw);
      rz = internal::range_at(box, "re_z", rz);
      iz = internal::range_at(box, "im_z", iz);
    }
    bc.box.ranges = {phi, dw, rz, iz};
    internal::check(bc.n >= 0, "basin.n >= 0");
    internal::check(bc.horizon > 0, "basin.horizon > 0");
    internal::check(bc.convergence_tol > 0, "basin.convergence_tol > 0");
    for (const auto& [lo, hi] : bc.box.ranges) {
      internal::check(lo <= hi, "basin.box lo <= hi");
    }
    cfg.basin = bc;
  }

  if (doc.contains("output_dir")) {
    internal::check(doc.at("output_dir").is_string(), "output_dir string");
    cfg.output_dir = doc.at("output_dir").get<std::string>();
    internal::check(!cfg.output_dir.empty(), "output_dir non-empty");
  }
  return cfg;
}

/// Config with every default made explicit. `with_output_dir` = false drops
/// the invocation-specific output directory (used for report echoes).
inline nlohmann::json config_to_json(const AnalysisConfig& cfg,
                                     bool with_output_dir = true) {
  using nlohmann::json;
  json doc;
  doc["units"] = {{"mode", cfg.units.mode == UnitMode::kSI ? "si" : "per_unit"},
                  {"omega_base", cfg.units.omega_base}};
  doc["machine"] = {{"J", cfg.machine.J},   {"K", cfg.machine.K},
                    {"Tm", cfg.machine.Tm}, {"L", cfg.machine.L},
                    {"R", cfg.machine.R},   {"lambda", cfg.machine.lambda}};
  doc["grid"] = {{"omega_s", cfg.grid.omega_s},
                 {"v_mag", cfg.grid.v_mag},
                 {"bus_phase0", cfg.grid.bus_phase0}};
  doc["eta"] = cfg.eta ? json(*cfg.eta) : json(nullptr);
  doc["simulation"] = {
      {"step", cfg.sim.step},
      {"duration", cfg.sim.duration},
      {"method", cfg.sim.method == Method::kRK4Fixed ? "rk4" : "rk45"},
      {"rel_tol", cfg.sim.rel_tol},
      {"abs_tol", cfg.sim.abs_tol},
      {"perturbation",
       {{"phi", cfg.perturbation.phi},
        {"domega", cfg.perturbation.domega},
        {"re_z", cfg.perturbation.z.real()},
        {"im_z", cfg.perturbation.z.imag()}}}};
  if (cfg.basin) {
    const auto& b = *cfg.basin;
    const auto r = [&](int k) {
      return json::array({b.box.ranges[k].first, b.box.ranges[k].second});
    };
    doc["basin"] = {{"n", b.n},
                    {"seed", b.seed},
                    {"horizon", b.horizon},
                    {"convergence_tol", b.convergence_tol},
                    {"box", {{"phi", r(0)}, {"domega", r(1)}, {"re_z", r(2)}, {"im_z", r(3)}}}};
  } else {
    doc["basin"] = nullptr;
  }
  if (with_output_dir) doc["output_dir"] = cfg.output_dir;
  return doc;
}

}  // namespace smib
