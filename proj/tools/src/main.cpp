#include <CLI11.hpp>

#include <iostream>

#include "zsdgen/cli/commands.hpp"

int main(int argc, char** argv) {
  using namespace zsdgen::cli;
  CLI::App app{"Generative zero-shot detection toolkit"};
  app.require_subcommand(1, 1);
  app.fallthrough();

  std::string config_path;
  std::uint64_t seed = 0;
  std::string out_dir;
  std::string mode;
  bool no_clobber = false;
  app.add_option("--config", config_path, "Configuration file (key = value lines)")->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed, "Random seed, overrides the config");
  auto* out_opt = app.add_option("--out", out_dir, "Output directory, overrides the config");
  auto* mode_opt = app.add_option("--mode", mode, "Detection mode")->check(CLI::IsMember({"zsd", "gzsd"}));
  app.add_flag("--no-clobber", no_clobber, "Fail instead of overwriting existing outputs");
  for (const auto& name : command_names()) app.add_subcommand(name);

  CLI11_PARSE(app, argc, argv);

  RunConfig cfg;
  try {
    cfg = config_path.empty() ? parse_config_text("") : parse_config(config_path);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitFailure;
  }
  if (*seed_opt) cfg.seed = seed;
  if (*out_opt) cfg.out_dir = out_dir;
  if (*mode_opt) cfg.detect.mode = mode == "zsd" ? zsdgen::DetectMode::Zsd : zsdgen::DetectMode::Gzsd;

  RunOptions opts;
  opts.no_clobber = no_clobber;
  return run_command(app.get_subcommands().front()->get_name(), cfg, opts);
}
