// smib: command-line front end for the SMIB stability analysis.
//
//   smib <steady|certify|linearize|simulate|basin|all> --config cfg.json
//        [--out dir] [--eta value] [--seed n] [--quiet]
//
// Exit status: 0 success, 1 error, 2 basin soundness violation.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "smib/smib.hpp"

namespace {

struct Flags {
  std::string config;
  std::string out;
  std::optional<double> eta;
  std::optional<std::uint64_t> seed;
  bool quiet{false};
};

void add_flags(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "analysis config (JSON)")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--out", f.out, "output directory (overrides output_dir)");
  cmd->add_option("--eta", f.eta, "fixed eta instead of the automatic search")
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--seed", f.seed, "basin sampling seed");
  cmd->add_flag("--quiet", f.quiet, "suppress the summary on stdout");
}

void print_summary(const nlohmann::json& r) {
  std::cout << "steady states: " << r["steady_states"].size()
            << " (P = " << r["existence"]["p_script"].get<double>() << ")\n";
  if (r.contains("certificates")) {
    for (const auto& c : r["certificates"]) {
      std::cout << "  SS" << c["index"].get<int>() << ": "
                << c["verdict"].get<std::string>()
                << " (eta = " << c["eta"].get<double>() << ")\n";
    }
  }
  if (r.contains("linearizations")) {
    for (const auto& l : r["linearizations"]) {
      std::cout << "  SS" << l["index"].get<int>() << " eigenvalues:";
      for (const auto& e : l["eigenvalues"]) {
        std::cout << ' ' << e["re"].get<double>() << (e["im"].get<double>() < 0 ? "" : "+")
                  << e["im"].get<double>() << 'j';
      }
      std::cout << '\n';
    }
  }
  if (r.contains("monitors")) {
    for (const auto& m : r["monitors"]) {
      std::cout << "  SS" << m["index"].get<int>() << " monitor: "
                << (m["monotone"].get<bool>() ? "monotone" : "not monotone")
                << ", " << m["trajectory_file"].get<std::string>() << '\n';
    }
  }
  if (r.contains("basins")) {
    for (const auto& b : r["basins"]) {
      std::cout << "  SS" << b["index"].get<int>() << " basin: "
                << b["status"].get<std::string>();
      if (b["status"] == "run") {
        std::cout << ", " << b["n_converged_of_in_sublevel"].get<int>() << "/"
                  << b["n_in_sublevel"].get<int>() << " in-sublevel converged";
      }
      std::cout << '\n';
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SMIB steady-state, certificate and simulation analysis"};
  app.set_version_flag("--version", std::string(smib::kToolVersion));
  app.require_subcommand(1);

  Flags flags;
  smib::Stage stage = smib::Stage::kAll;
  const std::pair<const char*, smib::Stage> commands[] = {
      {"steady", smib::Stage::kSteady},       {"certify", smib::Stage::kCertify},
      {"linearize", smib::Stage::kLinearize}, {"simulate", smib::Stage::kSimulate},
      {"basin", smib::Stage::kBasin},         {"all", smib::Stage::kAll}};
  for (const auto& [name, st] : commands) {
    CLI::App* cmd = app.add_subcommand(name, std::string("run the ") + name + " stage");
    add_flags(cmd, flags);
    cmd->callback([&stage, st = st] { stage = st; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : smib::kExitError;
  }

  try {
    std::ifstream in(flags.config);
    std::stringstream buf;
    buf << in.rdbuf();
    smib::AnalysisConfig cfg = smib::parse_config(buf.str());
    if (!flags.out.empty()) cfg.output_dir = flags.out;
    if (flags.eta) cfg.eta = *flags.eta;
    if (flags.seed && cfg.basin) cfg.basin->seed = *flags.seed;

    const smib::PipelineResult res =
        smib::run_pipeline(cfg, stage, smib::utc_timestamp());
    if (!flags.quiet) {
      print_summary(res.report);
      std::cout << "report: " << cfg.output_dir << "/report.json\n";
    }
    if (res.exit_code == smib::kExitSoundness) {
      std::cerr << "smib: SoundnessViolation: a sample inside the certified "
                   "sublevel set did not converge\n";
    }
    return res.exit_code;
  } catch (const smib::Error& e) {
    std::cerr << "smib: " << e.what() << '\n';
  } catch (const std::exception& e) {
    std::cerr << "smib: " << e.what() << '\n';
  }
  return smib::kExitError;
}
