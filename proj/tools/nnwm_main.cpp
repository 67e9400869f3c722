#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "nnwm/commands.hpp"
#include "nnwm/errors.hpp"

namespace {

// Exit codes: 0 success, 2 config error, 3 data error, 4 numeric failure.
constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kDataError = 3;
constexpr int kNumericError = 4;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Watermark embedding, extraction and attack toolkit for small conv nets"};
  app.require_subcommand(1);

  std::string config_path, checkpoint, key_file, message_file, attack_config, run_dir, out;
  std::uint64_t seed = 0;
  bool have_seed = false;

  auto add_seed = [&](CLI::App* cmd) {
    cmd->add_option("--seed", seed, "override the config's global seed")
        ->each([&](const std::string&) { have_seed = true; });
  };

  CLI::App* train = app.add_subcommand("train", "train a host, optionally embedding a watermark");
  train->add_option("--config", config_path, "experiment config JSON")->required();
  train->add_option("--out", out, "output directory (overrides config)");
  add_seed(train);

  CLI::App* extract = app.add_subcommand("extract", "extract a watermark from a checkpoint");
  extract->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  extract->add_option("--key", key_file, "key JSON file")->required();
  extract->add_option("--message", message_file, "reference message file (enables BER)");
  extract->add_option("--out", out, "directory to also write detection.json into");

  CLI::App* attack = app.add_subcommand("attack", "run an attack against a checkpoint");
  attack->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  attack->add_option("--key", key_file, "key JSON file")->required();
  attack->add_option("--message", message_file, "embedded message file")->required();
  attack->add_option("--config", attack_config, "attack config JSON")->required();
  attack->add_option("--out", out, "output directory");
  add_seed(attack);

  CLI::App* report = app.add_subcommand("report", "consolidate run outputs into tables");
  report->add_option("--dir", run_dir, "directory of run outputs")->required();
  report->add_option("--out", out, "directory for the report files (defaults to --dir)");

  CLI::App* gradcheck = app.add_subcommand("grad-check", "finite-difference gradient check");
  nnwm::GradCheckCmdOptions gc;
  gradcheck->add_option("--seed", gc.seed, "sampling seed");
  gradcheck->add_option("--hosts", gc.hosts, "number of random hosts");
  gradcheck->add_option("--lambda", gc.lambda, "regularizer strength (0 disables)");
  gradcheck->add_option("--tolerance", gc.tolerance, "max relative error allowed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (train->parsed()) {
      nnwm::TrainCmdOptions opt;
      opt.config_path = config_path;
      if (have_seed) opt.seed_override = seed;
      if (!out.empty()) opt.out_override = out;
      nnwm::cmd_train(opt);
    } else if (extract->parsed()) {
      nnwm::ExtractCmdOptions opt;
      opt.checkpoint = checkpoint;
      opt.key_file = key_file;
      if (!message_file.empty()) opt.message_file = message_file;
      if (!out.empty()) opt.out_dir = out;
      nnwm::cmd_extract(opt);
    } else if (attack->parsed()) {
      nnwm::AttackCmdOptions opt;
      opt.checkpoint = checkpoint;
      opt.key_file = key_file;
      opt.message_file = message_file;
      opt.attack_config = attack_config;
      if (have_seed) opt.seed_override = seed;
      if (!out.empty()) opt.out_override = out;
      nnwm::cmd_attack(opt);
    } else if (report->parsed()) {
      nnwm::ReportCmdOptions opt;
      opt.run_dir = run_dir;
      if (!out.empty()) opt.out_dir = out;
      nnwm::cmd_report(opt);
    } else if (gradcheck->parsed()) {
      if (!nnwm::cmd_gradcheck(gc)) return kNumericError;
    }
  } catch (const nnwm::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kNumericError;
  } catch (const nnwm::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const nnwm::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const nnwm::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfigError;
  }
  return kOk;
}
