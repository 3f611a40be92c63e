#pragma once

// Analysis pipeline: steady states -> certificates -> linearization ->
// simulation -> basin sampling, rendered as report.json plus CSV files.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "smib/certificate.hpp"
#include "smib/config.hpp"
#include "smib/error.hpp"
#include "smib/linearization.hpp"
#include "smib/model.hpp"
#include "smib/simulator.hpp"
#include "smib/steady_state.hpp"

namespace smib {

inline constexpr std::string_view kToolVersion = "1.0.0";

enum class Stage { kSteady, kCertify, kLinearize, kSimulate, kBasin, kAll };

inline std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::kSteady: return "steady";
    case Stage::kCertify: return "certify";
    case Stage::kLinearize: return "linearize";
    case Stage::kSimulate: return "simulate";
    case Stage::kBasin: return "basin";
    case Stage::kAll: return "all";
  }
  return "all";
}

inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitSoundness = 2;

struct PipelineResult {
  nlohmann::json report;
  int exit_code{kExitOk};
  std::vector<std::filesystem::path> files;
};

/// %.17g for every double, null for non-finite values.
inline std::string format_double(double v) {
  if (!std::isfinite(v)) return "null";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Pretty-printed JSON with two-space indent and 17 significant digits.
inline void write_json(std::ostream& os, const nlohmann::json& j, int depth = 0) {
  const std::string pad(2 * (depth + 1), ' ');
  const std::string close(2 * depth, ' ');
  switch (j.type()) {
    case nlohmann::json::value_t::object: {
      if (j.empty()) {
        os << "{}";
        return;
      }
      os << "{\n";
      bool first = true;
      for (const auto& item : j.items()) {
        if (!first) os << ",\n";
        first = false;
        os << pad << nlohmann::json(item.key()).dump() << ": ";
        write_json(os, item.value(), depth + 1);
      }
      os << "\n" << close << "}";
      return;
    }
    case nlohmann::json::value_t::array: {
      if (j.empty()) {
        os << "[]";
        return;
      }
      os << "[\n";
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (i) os << ",\n";
        os << pad;
        write_json(os, j[i], depth + 1);
      }
      os << "\n" << close << "]";
      return;
    }
    case nlohmann::json::value_t::number_float:
      os << format_double(j.get<double>());
      return;
    default:
      os << j.dump();
  }
}

inline std::string utc_timestamp() {
  const std::time_t now =
      std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

namespace internal {

using nlohmann::json;

inline json complex_json(Complex z) { return {{"re", z.real()}, {"im", z.imag()}}; }

inline json finite_or_null(double v) {
  return std::isfinite(v) ? json(v) : json(nullptr);
}

inline json interval_json(const EtaInterval& e) {
  return {{"lower", finite_or_null(e.lower)},
          {"upper", finite_or_null(e.upper)},
          {"raw_lower", finite_or_null(e.raw_lower)},
          {"empty", e.empty}};
}

inline json steady_json(std::size_t idx, const SteadyState& ss,
                        const MachineParams& m, const GridParams& grid) {
  return {{"index", idx},
          {"omega_bar", ss.omega_bar},
          {"delta", ss.delta},
          {"xi_bar", complex_json(ss.xi_bar)},
          {"i_bar", complex_json(ss.i_bar)},
          {"p_bar", ss.p_bar},
          {"q_bar", ss.q_bar},
          {"re_ixi", ss.re_ixi},
          {"re_ijxi", ss.re_ijxi},
          {"residual", steady_residual(ss, m, grid)}};
}

inline json certificate_json(std::size_t idx, const Certificate& c,
                             const SteadyState& ss, const MachineParams& m,
                             const UnitSystem& units) {
  const HessianCheck h = hessian_positive(ss, c.eta, m);
  return {{"index", idx},
          {"eta", c.eta},
          {"k_hat", finite_or_null(c.k_hat)},
          {"c", c.c},
          {"cond_inertia", c.cond_inertia},
          {"cond_khat", c.cond_khat},
          {"cond_c", c.cond_c},
          {"cond_local", c.cond_local},
          {"cond_roa", c.cond_roa},
          {"rho", finite_or_null(c.rho)},
          {"rho_hat", finite_or_null(c.rho_hat)},
          {"roa_level", finite_or_null(c.roa_level)},
          {"verdict", std::string(to_string(c.verdict))},
          {"eta_local", interval_json(eta_bounds(m, ss, units, EtaMode::kLocal))},
          {"eta_roa", interval_json(eta_bounds(m, ss, units, EtaMode::kROA))},
          {"hessian",
           {{"positive", h.positive},
            {"r", h.r},
            {"min_eig_estimate", h.min_eig_estimate},
            {"consistent", h.consistent}}}};
}

inline json linearization_json(std::size_t idx, const LinearizationResult& lin) {
  json rows = json::array();
  for (const auto& row : lin.jacobian) rows.push_back(json(row));
  json eig = json::array();
  for (const auto& l : lin.eigenvalues) eig.push_back(complex_json(l));
  return {{"index", idx},
          {"jacobian", rows},
          {"eigenvalues", eig},
          {"unstable", lin.has_unstable_eigenvalue()}};
}

inline void write_trajectory_csv(const std::filesystem::path& path,
                                 const Trajectory& traj) {
  std::ofstream os(path);
  if (!os) {
    throw Error(ErrorKind::kValidationError,
                "output_dir writable violated: " + path.string());
  }
  os << "t,theta,omega,re_I,im_I,S\n";
  for (std::size_t k = 0; k < traj.size(); ++k) {
    const auto& x = traj.states[k];
    os << format_double(traj.times[k]) << ',' << format_double(x.theta) << ','
       << format_double(x.omega) << ',' << format_double(x.current.real())
       << ',' << format_double(x.current.imag()) << ','
       << format_double(traj.has_storage() ? traj.storage[k] : NAN) << '\n';
  }
}

inline void write_basin_csv(const std::filesystem::path& path,
                            const BasinReport& rep) {
  std::ofstream os(path);
  if (!os) {
    throw Error(ErrorKind::kValidationError,
                "output_dir writable violated: " + path.string());
  }
  os << "phi0,domega0,re_z0,im_z0,in_sublevel,converged,final_distance\n";
  for (const auto& s : rep.samples) {
    os << format_double(s.initial.phi) << ',' << format_double(s.initial.domega)
       << ',' << format_double(s.initial.z.real()) << ','
       << format_double(s.initial.z.imag()) << ',' << (s.in_sublevel ? 1 : 0)
       << ',' << (s.converged ? 1 : 0) << ','
       << (std::isfinite(s.final_distance) ? format_double(s.final_distance)
                                           : std::string("inf"))
       << '\n';
  }
}

inline bool runs(Stage requested, Stage stage) {
  return requested == Stage::kAll || requested == stage;
}

}  // namespace internal

/// Runs the requested stage (and the stages it depends on), writes files into
/// cfg.output_dir and returns the report. `timestamp` fills generated_at.
inline PipelineResult run_pipeline(const AnalysisConfig& cfg, Stage stage,
                                   const std::string& timestamp) {
  using nlohmann::json;
  namespace fs = std::filesystem;
  PipelineResult out;

  std::error_code ec;
  fs::create_directories(cfg.output_dir, ec);
  if (ec || !fs::is_directory(cfg.output_dir)) {
    throw Error(ErrorKind::kValidationError,
                "output_dir writable violated: " + cfg.output_dir);
  }
  const fs::path dir(cfg.output_dir);

  const bool want_cert = stage != Stage::kSteady && stage != Stage::kLinearize;
  const bool want_lin = internal::runs(stage, Stage::kLinearize);
  const bool want_sim = internal::runs(stage, Stage::kSimulate);
  const bool want_basin = internal::runs(stage, Stage::kBasin);

  json& r = out.report;
  r["tool"] = {{"name", "smib"}, {"version", std::string(kToolVersion)}};
  r["generated_at"] = timestamp;
  r["command"] = std::string(to_string(stage));
  r["config"] = config_to_json(cfg, false);

  const ExistenceReport ex = existence_indicator(cfg.machine, cfg.grid);
  r["existence"] = {{"p_script", ex.p_script}, {"count", ex.count}};
  const std::vector<SteadyState> states =
      solve_steady_states(cfg.machine, cfg.grid);

  r["steady_states"] = json::array();
  for (std::size_t i = 0; i < states.size(); ++i) {
    r["steady_states"].push_back(
        internal::steady_json(i, states[i], cfg.machine, cfg.grid));
  }

  std::vector<Certificate> certs;
  if (want_cert) {
    r["certificates"] = json::array();
    for (std::size_t i = 0; i < states.size(); ++i) {
      certs.push_back(
          certify(cfg.machine, cfg.grid, states[i], cfg.units, cfg.eta));
      r["certificates"].push_back(internal::certificate_json(
          i, certs.back(), states[i], cfg.machine, cfg.units));
    }
  }

  if (want_lin) {
    r["linearizations"] = json::array();
    for (std::size_t i = 0; i < states.size(); ++i) {
      r["linearizations"].push_back(internal::linearization_json(
          i, linearize(states[i], cfg.machine, cfg.grid)));
    }
  }

  if (want_sim) {
    r["monitors"] = json::array();
    for (std::size_t i = 0; i < states.size(); ++i) {
      SimOptions opts = cfg.sim;
      opts.record_storage = true;
      opts.eta = certs[i].eta;
      const PhysicalState x0 =
          state_from_local(cfg.perturbation, states[i], cfg.grid);
      const Trajectory traj =
          integrate(x0, cfg.machine, cfg.grid, opts, states[i]);
      const MonitorReport mon = lyapunov_monitor(traj, states[i], certs[i],
                                                 cfg.machine, cfg.grid, cfg.units);
      const std::string name = "trajectory_ss" + std::to_string(i) + ".csv";
      internal::write_trajectory_csv(dir / name, traj);
      out.files.push_back(dir / name);

      json bal = nullptr;
      if (mon.balance) {
        bal = {{"max_violation", mon.balance->max_violation},
               {"tol_diss", mon.balance->tol_diss},
               {"samples", mon.balance->samples},
               {"ok", mon.balance->ok}};
      }
      r["monitors"].push_back(
          {{"index", i},
           {"trajectory_file", name},
           {"samples", traj.size()},
           {"monotone", mon.monotone},
           {"max_increase", mon.max_increase},
           {"tol_mono", mon.tol_mono},
           {"region_defined", mon.region_defined},
           {"exit_time", mon.exit_time ? json(*mon.exit_time) : json(nullptr)},
           {"samples_in_region", mon.samples_in_region},
           {"balance", bal},
           {"final_distance",
            orbit_distance(traj.states.back(), traj.times.back(), states[i],
                           cfg.grid)}});
    }
  }

  if (want_basin) {
    r["basins"] = json::array();
    for (std::size_t i = 0; i < states.size(); ++i) {
      json entry = {{"index", i}};
      if (!cfg.basin) {
        entry["status"] = "skipped";
        entry["reason"] = "no basin section in config";
      } else if (certs[i].verdict != Verdict::kCertifiedROA) {
        entry["status"] = "skipped";
        entry["reason"] = "certificate is not CertifiedROA";
      } else {
        BasinSpec spec;
        spec.n = cfg.basin->n;
        spec.seed = cfg.basin->seed;
        spec.box = cfg.basin->box;
        spec.horizon = cfg.basin->horizon;
        spec.sim = cfg.sim;
        spec.convergence_tol = cfg.basin->convergence_tol;
        const BasinReport rep =
            basin_sample(states[i], certs[i], cfg.machine, cfg.grid, spec);
        const std::string name = "basin_ss" + std::to_string(i) + ".csv";
        internal::write_basin_csv(dir / name, rep);
        out.files.push_back(dir / name);
        json failures = json::array();
        for (const auto& f : rep.failures) {
          failures.push_back({{"phi", f.phi},
                              {"domega", f.domega},
                              {"re_z", f.z.real()},
                              {"im_z", f.z.imag()}});
        }
        entry["status"] = "run";
        entry["basin_file"] = name;
        entry["n_samples"] = rep.n_samples;
        entry["n_in_sublevel"] = rep.n_in_sublevel;
        entry["n_converged_of_in_sublevel"] = rep.n_converged_of_in_sublevel;
        entry["n_converged_total"] = rep.n_converged_total;
        entry["sound"] = rep.sound();
        entry["failures"] = failures;
        if (!rep.sound()) out.exit_code = kExitSoundness;
      }
      r["basins"].push_back(entry);
    }
  }

  std::ofstream os(dir / "report.json");
  if (!os) {
    throw Error(ErrorKind::kValidationError,
                "output_dir writable violated: " + cfg.output_dir);
  }
  write_json(os, r);
  os << '\n';
  out.files.push_back(dir / "report.json");
  return out;
}

}  // namespace smib
