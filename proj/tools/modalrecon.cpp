// modalrecon <subcommand> --scenario <path> [--out <dir>] [--threads <k>] [--verbose]
//
// Exit codes: 0 success, 2 invalid scenario or arguments, 3 numerical
// failure (the diagnostic report is still written), 1 anything else.

#include <exception>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "modalrecon/io/runner.hpp"

int main(int argc, char** argv) {
  namespace io = modalrecon::io;
  CLI::App app{"Spectral reconstruction of high modes from localized observations"};
  app.set_version_flag("--version", std::string(MODALRECON_VERSION));
  app.require_subcommand(1);

  std::string scenario_path, out_dir;
  int threads = 1;
  bool verbose = false;
  const std::map<std::string, std::string> about{
      {"simulate", "nonlinear trajectory plus energy, mass and norm series"},
      {"gramian", "observability Gramian on the selected mode set"},
      {"gcc", "geometric control time of omega (printed to stdout)"},
      {"reconstruct", "recover the high modes from low modes and observations"},
      {"analyticity", "time-analyticity radius, global and on omega"},
      {"sweep", "cartesian sweep over sweep.parameters"},
      {"commutator", "commutator norms against the mode count"}};
  for (const auto& name : io::subcommands()) {
    CLI::App* sub = app.add_subcommand(name, about.at(name));
    sub->add_option("--scenario", scenario_path, "scenario YAML file")->required();
    sub->add_option("--out", out_dir, "output directory (default: run.output_dir)");
    sub->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
    sub->add_flag("--verbose", verbose, "progress messages on stderr");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  const std::string subcommand = app.get_subcommands().front()->get_name();

  try {
    const io::Scenario sc = io::load_scenario(scenario_path);
    io::RunOptions opt;
    opt.out_dir = out_dir;
    opt.threads = threads;
    opt.verbose = verbose;
    const io::RunManifest man = io::run(subcommand, sc, opt);
    if (man.failed) std::cerr << "modalrecon: " << man.failure << "\n";
    if (verbose) std::cerr << "modalrecon: wrote " << (man.out_dir / "manifest.json").string() << "\n";
    return man.exit_code();
  } catch (const modalrecon::ValidationError& e) {
    std::cerr << "modalrecon: invalid input: " << e.what() << "\n";
    return 2;
  } catch (const modalrecon::NumericalError& e) {
    std::cerr << "modalrecon: " << subcommand << ": numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "modalrecon: " << subcommand << ": " << e.what() << "\n";
    return 1;
  }
}
