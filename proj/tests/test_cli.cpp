#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "nnwm/watermark.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const fs::path kCli = NNWM_CLI_PATH;

struct RunResult {
  int exit_code;
  std::string stdout_text;
};

RunResult run_cli(const std::string& args) {
  static int counter = 0;
  const fs::path out_file =
      fs::temp_directory_path() / ("nnwm_cli_out_" + std::to_string(counter++) + ".txt");
  const std::string cmd = kCli.string() + " " + args + " > " + out_file.string() + " 2>&1";
  const int raw = std::system(cmd.c_str());
  RunResult result;
  result.exit_code = WEXITSTATUS(raw);
  std::ifstream in(out_file);
  std::stringstream ss;
  ss << in.rdbuf();
  result.stdout_text = ss.str();
  fs::remove(out_file);
  return result;
}

fs::path scratch_dir() {
  const fs::path dir = fs::temp_directory_path() / "nnwm_cli_scratch";
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json train_config(bool embed, std::uint64_t key_seed = 21) {
  json j;
  j["host"] = "small-cnn";
  j["dataset"] = {{"kind", "synthetic"}, {"n_train", 384}, {"n_test", 128}};
  j["train"] = {{"epochs", 8}, {"batch_size", 32}, {"weight_decay", 1e-4}};
  j["seed"] = 5;
  if (embed) {
    j["train"]["situation"] = "train-to-embed";
    j["train"]["lambda"] = 0.01;
    j["key"] = {{"kind", "random"}, {"seed", key_seed}, {"T", 32}};
  }
  return j;
}

}  // namespace

TEST_CASE("train without embedding: summary has no E_R field; reruns are byte-identical") {
  const fs::path dir = scratch_dir();
  write_file(dir / "config.json", train_config(false).dump());

  const RunResult first =
      run_cli("train --config " + (dir / "config.json").string() + " --out " +
              (dir / "run_a").string());
  REQUIRE(first.exit_code == 0);

  const json summary = json::parse(slurp(dir / "run_a" / "summary.json"));
  CHECK_FALSE(summary.contains("E_R"));
  CHECK_FALSE(summary.contains("ber"));
  CHECK(summary.contains("config_hash"));

  // history.csv has the documented header and an empty E_R column.
  std::ifstream hist(dir / "run_a" / "history.csv");
  std::string header;
  std::getline(hist, header);
  CHECK(header == "epoch,E0,E_R,test_error");
  std::string row;
  std::getline(hist, row);
  CHECK(row.find(",,") != std::string::npos);

  const RunResult second =
      run_cli("train --config " + (dir / "config.json").string() + " --out " +
              (dir / "run_b").string());
  REQUIRE(second.exit_code == 0);
  for (const char* name : {"checkpoint.bin", "history.csv", "summary.json"}) {
    CHECK(slurp(dir / "run_a" / name) == slurp(dir / "run_b" / name));
  }
}

TEST_CASE("embedding train run reaches BER 0 and extract agrees end to end") {
  const fs::path dir = scratch_dir();
  write_file(dir / "config.json", train_config(true).dump());
  const RunResult train_run = run_cli("train --config " + (dir / "config.json").string() +
                                      " --out " + (dir / "run").string());
  REQUIRE(train_run.exit_code == 0);

  const json summary = json::parse(slurp(dir / "run" / "summary.json"));
  CHECK(summary["ber"] == 0.0);
  CHECK(summary["M"] == 144);
  CHECK(summary.contains("E_R"));

  const RunResult extract_run = run_cli(
      "extract --checkpoint " + (dir / "run" / "checkpoint.bin").string() + " --key " +
      (dir / "run" / "key.json").string() + " --message " +
      (dir / "run" / "message.json").string() + " --out " + (dir / "det").string());
  REQUIRE(extract_run.exit_code == 0);
  const json detection = json::parse(slurp(dir / "det" / "detection.json"));
  CHECK(detection["ber"] == 0.0);
  CHECK(detection["bits_hex"] == summary["bits_hex"]);
  REQUIRE(detection["histogram"].size() == 32);

  // Embedded all-ones watermark: every y sits in the upper half (BER 0 and
  // s(0)=1 force y >= 0.5), with clear mass in the top quarter.
  int upper = 0, top = 0, total = 0;
  for (std::size_t b = 0; b < 32; ++b) {
    const int c = detection["histogram"][b].get<int>();
    total += c;
    if (b >= 16) upper += c;
    if (b >= 24) top += c;
  }
  CHECK(total == 32);
  CHECK(upper == 32);
  CHECK(top >= 16);

  // Wrong-seed keys: mean BER across 10 keys lands near one half.
  double ber_sum = 0.0;
  for (int k = 0; k < 10; ++k) {
    nnwm::WatermarkKey wrong = nnwm::make_key(nnwm::KeyKind::random, 9000 + k, 32, 144);
    write_file(dir / "wrong_key.json",
               json{{"kind", "random"}, {"seed", 9000 + k}, {"T", 32}, {"M", 144}, {"version", 1}}
                   .dump());
    const RunResult wrong_run = run_cli(
        "extract --checkpoint " + (dir / "run" / "checkpoint.bin").string() + " --key " +
        (dir / "wrong_key.json").string() + " --message " +
        (dir / "run" / "message.json").string());
    REQUIRE(wrong_run.exit_code == 0);
    ber_sum += json::parse(wrong_run.stdout_text)["ber"].get<double>();
  }
  CHECK(ber_sum / 10.0 > 0.4);
  CHECK(ber_sum / 10.0 < 0.6);

  // Non-embedded checkpoint: y histogram spreads out instead.
  write_file(dir / "plain.json", train_config(false).dump());
  REQUIRE(run_cli("train --config " + (dir / "plain.json").string() + " --out " +
                  (dir / "plain_run").string())
              .exit_code == 0);
  write_file(dir / "probe_key.json",
             json{{"kind", "random"}, {"seed", 21}, {"T", 32}, {"M", 144}, {"version", 1}}.dump());
  const RunResult plain_extract =
      run_cli("extract --checkpoint " + (dir / "plain_run" / "checkpoint.bin").string() +
              " --key " + (dir / "probe_key.json").string());
  REQUIRE(plain_extract.exit_code == 0);
  const json plain_detection = json::parse(plain_extract.stdout_text);
  int plain_upper = 0;
  for (std::size_t b = 16; b < 32; ++b) plain_upper += plain_detection["histogram"][b].get<int>();
  CHECK(plain_upper < 32);
}

TEST_CASE("attack subcommand: prune sweep CSV, finetune fields, overwrite BER") {
  const fs::path dir = scratch_dir();
  write_file(dir / "config.json", train_config(true).dump());
  REQUIRE(run_cli("train --config " + (dir / "config.json").string() + " --out " +
                  (dir / "run").string())
              .exit_code == 0);
  const std::string common = " --checkpoint " + (dir / "run" / "checkpoint.bin").string() +
                             " --key " + (dir / "run" / "key.json").string() + " --message " +
                             (dir / "run" / "message.json").string();

  write_file(dir / "prune.json", json{{"kind", "prune"},
                                      {"alphas", {0.0, 0.5, 1.0}},
                                      {"orders", {"ascending", "random"}}}
                                     .dump());
  REQUIRE(run_cli("attack" + common + " --config " + (dir / "prune.json").string() + " --out " +
                  (dir / "prune_out").string())
              .exit_code == 0);
  std::ifstream csv(dir / "prune_out" / "sweep.csv");
  std::string line;
  std::getline(csv, line);
  CHECK(line == "alpha,order,E_R,BER");
  int rows = 0;
  while (std::getline(csv, line)) ++rows;
  CHECK(rows == 6);  // one row per (alpha, order)

  write_file(dir / "ft.json",
             json{{"kind", "finetune"},
                  {"epochs", 2},
                  {"dataset", {{"kind", "synthetic"}, {"n_train", 384}, {"n_test", 128}}},
                  {"train", {{"weight_decay", 1e-4}}},
                  {"seed", 5}}
                 .dump());
  REQUIRE(run_cli("attack" + common + " --config " + (dir / "ft.json").string() + " --out " +
                  (dir / "ft_out").string())
              .exit_code == 0);
  const json ft = json::parse(slurp(dir / "ft_out" / "report.json"));
  CHECK(ft["report"].contains("E_R"));
  CHECK(ft["report"].contains("E_R_after"));
  CHECK(ft["report"]["kind"] == "finetune");

  write_file(dir / "ow.json",
             json{{"kind", "overwrite"},
                  {"epochs", 2},
                  {"new_key", {{"kind", "random"}, {"seed", 777}, {"T", 32}}},
                  {"dataset", {{"kind", "synthetic"}, {"n_train", 384}, {"n_test", 128}}},
                  {"train", {{"weight_decay", 1e-4}, {"lambda", 0.01}}},
                  {"seed", 5}}
                 .dump());
  REQUIRE(run_cli("attack" + common + " --config " + (dir / "ow.json").string() + " --out " +
                  (dir / "ow_out").string())
              .exit_code == 0);
  const json ow = json::parse(slurp(dir / "ow_out" / "report.json"));
  CHECK(ow["report"].contains("ber_after"));  // the ORIGINAL watermark's BER
  CHECK(ow["report"].contains("new_watermark"));
}

TEST_CASE("attack command is idempotent for fixed inputs and seed") {
  const fs::path dir = scratch_dir();
  write_file(dir / "config.json", train_config(true).dump());
  REQUIRE(run_cli("train --config " + (dir / "config.json").string() + " --out " +
                  (dir / "run").string())
              .exit_code == 0);
  write_file(dir / "prune.json",
             json{{"kind", "prune"}, {"alphas", {0.3, 0.7}}, {"orders", {"random"}}}.dump());
  const std::string common = " --checkpoint " + (dir / "run" / "checkpoint.bin").string() +
                             " --key " + (dir / "run" / "key.json").string() + " --message " +
                             (dir / "run" / "message.json").string() + " --config " +
                             (dir / "prune.json").string();
  REQUIRE(run_cli("attack" + common + " --out " + (dir / "a").string()).exit_code == 0);
  REQUIRE(run_cli("attack" + common + " --out " + (dir / "b").string()).exit_code == 0);
  CHECK(slurp(dir / "a" / "report.json") == slurp(dir / "b" / "report.json"));
  CHECK(slurp(dir / "a" / "sweep.csv") == slurp(dir / "b" / "sweep.csv"));
}

TEST_CASE("cifar10-format data trains through the CLI via NNWM_DATA_DIR") {
  const fs::path dir = scratch_dir();
  fs::create_directories(dir / "data" / "cifar");
  std::mt19937_64 gen(9);
  for (const char* name : {"data_batch_1.bin", "data_batch_2.bin", "data_batch_3.bin",
                           "data_batch_4.bin", "data_batch_5.bin", "test_batch.bin"}) {
    std::ofstream out(dir / "data" / "cifar" / name, std::ios::binary);
    for (int r = 0; r < 20; ++r) {
      out.put(static_cast<char>(r % 10));
      for (int p = 0; p < 3072; ++p) out.put(static_cast<char>(gen() & 0xFF));
    }
  }
  json config;
  config["host"] = "small-cnn";
  config["dataset"] = {{"kind", "cifar10"}, {"dir", "cifar"}, {"train_per_class", 8},
                       {"test_per_class", 2}};
  config["train"] = {{"epochs", 2}, {"batch_size", 16}};
  config["seed"] = 4;
  write_file(dir / "config.json", config.dump());

  setenv("NNWM_DATA_DIR", (dir / "data").c_str(), 1);
  const RunResult run = run_cli("train --config " + (dir / "config.json").string() + " --out " +
                                (dir / "run").string());
  unsetenv("NNWM_DATA_DIR");
  REQUIRE(run.exit_code == 0);
  const json summary = json::parse(slurp(dir / "run" / "summary.json"));
  CHECK(summary["situation"] == "none");
  CHECK(summary["final_test_error"].get<double>() <= 1.0);
}

TEST_CASE("report: empty dir warns but exits 0; full dir builds tables; reruns identical") {
  const fs::path dir = scratch_dir();
  fs::create_directories(dir / "empty");
  const RunResult empty = run_cli("report --dir " + (dir / "empty").string());
  CHECK(empty.exit_code == 0);
  CHECK(fs::exists(dir / "empty" / "report.md"));
  CHECK(slurp(dir / "empty" / "report.md").find("Warnings") != std::string::npos);

  write_file(dir / "config.json", train_config(true).dump());
  REQUIRE(run_cli("train --config " + (dir / "config.json").string() + " --out " +
                  (dir / "runs" / "embed").string())
              .exit_code == 0);
  write_file(dir / "plain.json", train_config(false).dump());
  REQUIRE(run_cli("train --config " + (dir / "plain.json").string() + " --out " +
                  (dir / "runs" / "plain").string())
              .exit_code == 0);

  REQUIRE(run_cli("report --dir " + (dir / "runs").string() + " --out " +
                  (dir / "rep_a").string())
              .exit_code == 0);
  REQUIRE(run_cli("report --dir " + (dir / "runs").string() + " --out " +
                  (dir / "rep_b").string())
              .exit_code == 0);
  CHECK(slurp(dir / "rep_a" / "report.md") == slurp(dir / "rep_b" / "report.md"));
  CHECK(slurp(dir / "rep_a" / "report.md").find("random") != std::string::npos);
  CHECK(fs::exists(dir / "rep_a" / "report_training.csv"));
}

TEST_CASE("exit codes: 2 config, 3 data, 0 success") {
  const fs::path dir = scratch_dir();

  write_file(dir / "bad.json", "{\"host\": \"mega-net\"}");
  CHECK(run_cli("train --config " + (dir / "bad.json").string()).exit_code == 2);

  write_file(dir / "typo.json", "{\"hosst\": \"small-cnn\"}");
  const RunResult typo = run_cli("train --config " + (dir / "typo.json").string());
  CHECK(typo.exit_code == 2);
  CHECK(typo.stdout_text.find("hosst") != std::string::npos);

  CHECK(run_cli("train --config " + (dir / "missing.json").string()).exit_code == 2);
  CHECK(run_cli("report --dir " + (dir / "nowhere").string()).exit_code == 3);
  CHECK(run_cli("extract --checkpoint " + (dir / "none.bin").string() + " --key " +
                (dir / "none.json").string())
            .exit_code == 3);

  // Key/M mismatch is a config error.
  write_file(dir / "config.json", train_config(true).dump());
  REQUIRE(run_cli("train --config " + (dir / "config.json").string() + " --out " +
                  (dir / "run").string())
              .exit_code == 0);
  write_file(dir / "mismatch_key.json",
             json{{"kind", "random"}, {"seed", 1}, {"T", 32}, {"M", 288}, {"version", 1}}.dump());
  CHECK(run_cli("extract --checkpoint " + (dir / "run" / "checkpoint.bin").string() + " --key " +
                (dir / "mismatch_key.json").string())
            .exit_code == 2);
}

TEST_CASE("grad-check subcommand reports and passes") {
  const RunResult result = run_cli("grad-check --hosts 3 --seed 7");
  CHECK(result.exit_code == 0);
  const json report = json::parse(result.stdout_text);
  CHECK(report["pass"] == true);
  CHECK(report["max_rel_error"].get<double>() <= 1e-4);
}

TEST_CASE("fine-tune and distill configs run through the CLI from a checkpoint") {
  const fs::path dir = scratch_dir();
  write_file(dir / "base.json", train_config(false).dump());
  REQUIRE(run_cli("train --config " + (dir / "base.json").string() + " --out " +
                  (dir / "base_run").string())
              .exit_code == 0);

  json ft = train_config(true);
  ft["train"]["situation"] = "fine-tune-to-embed";
  ft["init_from"] = (dir / "base_run" / "checkpoint.bin").string();
  write_file(dir / "ft.json", ft.dump());
  REQUIRE(run_cli("train --config " + (dir / "ft.json").string() + " --out " +
                  (dir / "ft_run").string())
              .exit_code == 0);
  const json ft_summary = json::parse(slurp(dir / "ft_run" / "summary.json"));
  CHECK(ft_summary["situation"] == "fine-tune-to-embed");
  CHECK(ft_summary["ber"] == 0.0);

  json distill = ft;
  distill["train"]["situation"] = "distill-to-embed";
  write_file(dir / "distill.json", distill.dump());
  REQUIRE(run_cli("train --config " + (dir / "distill.json").string() + " --out " +
                  (dir / "distill_run").string())
              .exit_code == 0);
  const json distill_summary = json::parse(slurp(dir / "distill_run" / "summary.json"));
  CHECK(distill_summary["ber"] == 0.0);

  // A fine-tune config pointing at a missing checkpoint is a data error.
  ft["init_from"] = (dir / "void.bin").string();
  write_file(dir / "broken.json", ft.dump());
  CHECK(run_cli("train --config " + (dir / "broken.json").string()).exit_code == 3);
}

TEST_CASE("report lists unreadable runs but still produces the rest") {
  const fs::path dir = scratch_dir();
  write_file(dir / "config.json", train_config(false).dump());
  REQUIRE(run_cli("train --config " + (dir / "config.json").string() + " --out " +
                  (dir / "runs" / "good").string())
              .exit_code == 0);
  fs::create_directories(dir / "runs" / "broken");
  write_file(dir / "runs" / "broken" / "summary.json", "{not json");

  const RunResult rep = run_cli("report --dir " + (dir / "runs").string() + " --out " +
                                (dir / "rep").string());
  CHECK(rep.exit_code == 0);
  const std::string md = slurp(dir / "rep" / "report.md");
  CHECK(md.find("skipped") != std::string::npos);
  CHECK(md.find("broken") != std::string::npos);
  CHECK(md.find("good/summary.json") != std::string::npos);
}

TEST_CASE("train --seed override changes outputs deterministically") {
  const fs::path dir = scratch_dir();
  write_file(dir / "config.json", train_config(false).dump());
  REQUIRE(run_cli("train --config " + (dir / "config.json").string() + " --seed 9 --out " +
                  (dir / "s9").string())
              .exit_code == 0);
  REQUIRE(run_cli("train --config " + (dir / "config.json").string() + " --seed 9 --out " +
                  (dir / "s9b").string())
              .exit_code == 0);
  REQUIRE(run_cli("train --config " + (dir / "config.json").string() + " --seed 10 --out " +
                  (dir / "s10").string())
              .exit_code == 0);
  CHECK(slurp(dir / "s9" / "checkpoint.bin") == slurp(dir / "s9b" / "checkpoint.bin"));
  CHECK(slurp(dir / "s9" / "checkpoint.bin") != slurp(dir / "s10" / "checkpoint.bin"));
  const json s9 = json::parse(slurp(dir / "s9" / "summary.json"));
  const json s10 = json::parse(slurp(dir / "s10" / "summary.json"));
  CHECK(s9["config_hash"] != s10["config_hash"]);
}
