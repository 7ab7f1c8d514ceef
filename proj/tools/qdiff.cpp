// qdiff: quantum state diffusion ensembles from a JSON config.
//
//   qdiff validate <config>
//   qdiff run <config> [--seed N] [--workers N] [--bit-exact]
//   qdiff compare <config> [--seed N] [--workers N] [--bit-exact]
//
// QDIFF_OUT overrides the output directory.

#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>

#include "qdiff/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Quantum state diffusion Monte Carlo"};
  app.require_subcommand(1);

  std::string path;
  std::uint64_t seed = 0;
  int workers = 0;
  bool bit_exact = false;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("config", path, "JSON config file")->required();
    cmd->add_option("--seed", seed, "Override the experiment seed");
    cmd->add_option("--workers", workers, "Worker threads")->check(CLI::PositiveNumber);
    cmd->add_flag("--bit-exact", bit_exact, "Fixed reduction order for reproducible output");
  };
  auto* validate = app.add_subcommand("validate", "Check a config and print it with defaults filled in");
  auto* run = app.add_subcommand("run", "Run the experiment and write summary.json, series.csv, manifest.json");
  auto* compare = app.add_subcommand("compare", "Run several engines on one spec and report their agreement");
  for (auto* cmd : {validate, run, compare}) add_common(cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : qdiff::cli::exit_code::kParse;
  }

  qdiff::cli::Overrides o;
  for (auto* cmd : {validate, run, compare}) {
    if (cmd->parsed()) {
      if (cmd->count("--seed")) o.seed = seed;
      if (cmd->count("--workers")) o.workers = workers;
    }
  }
  o.bit_exact = bit_exact;
  if (const char* out = std::getenv("QDIFF_OUT"); out && *out) o.output_dir = out;

  if (validate->parsed()) return qdiff::cli::cmd_validate(path, o, std::cout, std::cerr);
  if (run->parsed()) return qdiff::cli::cmd_run(path, o, std::cout, std::cerr);
  return qdiff::cli::cmd_compare(path, o, std::cout, std::cerr);
}
