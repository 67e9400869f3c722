#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "nnwm/config.hpp"

namespace nnwm {

struct TrainCmdOptions {
  std::filesystem::path config_path;
  std::optional<std::uint64_t> seed_override;
  std::optional<std::string> out_override;
};

// Writes checkpoint.bin, history.csv, summary.json (and key.json /
// message.json when embedding) into the output directory. Outputs carry the
// config hash and no timestamps, so reruns are byte-identical.
void cmd_train(const TrainCmdOptions& options);

struct ExtractCmdOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path key_file;
  std::optional<std::filesystem::path> message_file;
  std::optional<std::filesystem::path> out_dir;
};

// Prints the detection record (bits as hex, 32-bin histogram of y, BER when
// a reference message is given) to stdout; also writes detection.json when
// an output directory is given.
void cmd_extract(const ExtractCmdOptions& options);

struct AttackCmdOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path key_file;
  std::filesystem::path message_file;
  std::filesystem::path attack_config;
  std::optional<std::uint64_t> seed_override;
  std::optional<std::string> out_override;
};

void cmd_attack(const AttackCmdOptions& options);

struct ReportCmdOptions {
  std::filesystem::path run_dir;
  std::optional<std::filesystem::path> out_dir;  // defaults to run_dir
};

// Consolidates every run found under run_dir into markdown + CSV tables.
// Missing pieces are listed; an empty directory produces an empty report
// with a warning and still succeeds.
void cmd_report(const ReportCmdOptions& options);

struct GradCheckCmdOptions {
  std::uint64_t seed = 1;
  std::size_t hosts = 20;
  double lambda = 0.01;
  double tolerance = 1e-4;
};

// Gradient check over randomly sampled small hosts with the embedding
// regularizer attached; prints a JSON report and returns overall pass/fail.
bool cmd_gradcheck(const GradCheckCmdOptions& options);

}  // namespace nnwm
