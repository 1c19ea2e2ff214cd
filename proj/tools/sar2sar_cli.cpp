// sar2sar simulate|train|despeckle|evaluate|efficiency --config PATH
//         [--seed N] [--out DIR]
//
// Exit codes: 0 success, 1 I/O or file-format failure, 2 configuration
// error, 3 numeric failure.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "sar2sar/commands.hpp"

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Despeckling of SAR intensity images with a self-supervised U-Net"};
  app.require_subcommand(1);
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  const char *commands[][2] = {
      {"simulate", "write synthetic scenes, speckled observations and time series"},
      {"train", "train one phase (A, B or C) of the network"},
      {"despeckle", "restore intensity images with a trained network"},
      {"evaluate", "compute PSNR, ENL and residual-speckle metrics"},
      {"efficiency", "compare the two reflectivity estimators by Monte Carlo"}};
  for (const auto &[name, help] : commands) {
    auto *sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "key = value configuration file")->required();
    sub->add_option("--seed", seed, "override the config seed");
    sub->add_option("--out", out_dir, "override the output directory");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    app.exit(e);
    return kExitConfig;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    auto cfg = sar2sar::RunConfig::load(config_path);
    if (seed)
      cfg.override_value("seed", std::to_string(*seed));
    if (!out_dir.empty())
      cfg.override_value("out", out_dir);
    sar2sar::run_command(command, cfg, &std::cerr);
  } catch (const sar2sar::ConfigError &e) {
    std::cerr << "sar2sar " << command << ": configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const sar2sar::NumericError &e) {
    std::cerr << "sar2sar " << command << ": numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception &e) {
    std::cerr << "sar2sar " << command << ": " << e.what() << "\n";
    return kExitFailure;
  }
  return 0;
}
