#include "nnwm/commands.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "nnwm/checkpoint.hpp"
#include "nnwm/errors.hpp"
#include "nnwm/gradcheck.hpp"
#include "nnwm/rng.hpp"

namespace nnwm {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  write_text(path, j.dump(2) + "\n");
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw DataError(path.string() + ": invalid JSON");
  return j;
}

// Config files get the config-error exit path; broken run artifacts keep the
// data-error one.
nlohmann::json read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError(path.string() + ": invalid JSON");
  return j;
}

// The provenance hash covers the effective config minus its output location,
// so reruns into different directories stay comparable.
std::string effective_config_hash(nlohmann::json raw, std::optional<std::uint64_t> seed_override) {
  if (seed_override) raw["seed"] = *seed_override;
  raw.erase("output_dir");
  return config_hash(raw);
}

nlohmann::json detection_json(const DetectionStats& stats, const WatermarkKey& key) {
  nlohmann::json j;
  j["kind"] = key_kind_name(key.kind);
  j["T"] = key.bit_count;
  j["M"] = key.param_count;
  j["bits_hex"] = stats.bits.to_hex();
  j["mean_bit"] = stats.mean_bit();
  j["histogram"] = stats.histogram;
  if (stats.bit_error) j["ber"] = *stats.bit_error;
  return j;
}

nlohmann::json attack_report_json(const AttackReport& report) {
  nlohmann::json j;
  j["kind"] = report.kind;
  j["E_R"] = report.er_before;
  j["E_R_after"] = report.er_after;
  j["ber_before"] = report.ber_before;
  j["ber_after"] = report.ber_after;
  if (report.test_error_after) j["test_error_after"] = *report.test_error_after;
  if (report.half_sq_dist) j["half_sq_dist"] = *report.half_sq_dist;
  if (!report.warnings.empty()) j["warnings"] = report.warnings;
  if (report.new_watermark) {
    nlohmann::json nw;
    nw["bits_hex"] = report.new_watermark->bits.to_hex();
    if (report.new_watermark->bit_error) nw["ber"] = *report.new_watermark->bit_error;
    j["new_watermark"] = nw;
  }
  if (!report.sweep.empty()) {
    nlohmann::json sweep = nlohmann::json::array();
    for (const SweepPoint& p : report.sweep) {
      sweep.push_back({{"alpha", p.alpha},
                       {"order", prune_order_name(p.order)},
                       {"E_R", p.embedding_loss},
                       {"ber", p.bit_error}});
    }
    j["sweep"] = sweep;
  }
  return j;
}

std::string sweep_csv(const std::vector<SweepPoint>& sweep) {
  std::ostringstream out;
  out << "alpha,order,E_R,BER\n";
  for (const SweepPoint& p : sweep) {
    out << fmt(p.alpha) << "," << prune_order_name(p.order) << "," << fmt(p.embedding_loss) << ","
        << fmt(p.bit_error) << "\n";
  }
  return out.str();
}

}  // namespace

void cmd_train(const TrainCmdOptions& options) {
  nlohmann::json raw = read_config_file(options.config_path);
  ExperimentConfig config = parse_experiment_config(raw);
  if (options.seed_override) config.seed = *options.seed_override;
  if (options.out_override) config.output_dir = *options.out_override;
  const std::string hash = effective_config_hash(raw, options.seed_override);

  auto [train_data, test_data] = config.dataset.load(derive_seed(config.seed, 100));

  const std::vector<std::size_t> input_shape =
      config.input_shape.empty() ? std::vector<std::size_t>(train_data.inputs.shape().begin() + 1,
                                                            train_data.inputs.shape().end())
                                 : config.input_shape;

  HostModel model;
  std::optional<HostModel> teacher;
  const Situation situation = config.train.situation;
  if (situation == Situation::finetune_to_embed || situation == Situation::distill_to_embed) {
    Checkpoint ckpt = load_checkpoint(*config.init_from);
    if (situation == Situation::distill_to_embed) teacher = ckpt.model;
    model = std::move(ckpt.model);
  } else {
    model = build_host(host_preset_from_string(config.host), derive_seed(config.seed, 200),
                       input_shape, train_data.num_classes);
  }
  if (config.embed_layer) model.embed_layer = *config.embed_layer;

  std::optional<WatermarkKey> key;
  std::optional<Message> message;
  if (config.key) {
    if (!model.embed_layer) throw ConfigError("config.embed_layer: host has no conv layer");
    const std::size_t m = embed_dim(model, *model.embed_layer);
    key = make_key(config.key->kind, config.key->seed, config.key->bit_count, m);
    message = config.message.realize(config.key->bit_count);
  }

  TrainConfig train_config = config.train;
  train_config.shuffle_seed = derive_seed(config.seed, 300);

  TrainResult result =
      train(std::move(model), train_data, test_data, train_config, key ? &*key : nullptr,
            message ? &*message : nullptr, teacher ? &*teacher : nullptr);

  const std::filesystem::path out_dir(config.output_dir);
  std::filesystem::create_directories(out_dir);

  nlohmann::json metadata;
  metadata["config_hash"] = hash;
  metadata["seed"] = config.seed;
  metadata["epochs"] = train_config.epochs;
  metadata["situation"] = situation_name(situation);
  metadata["final_e0"] = result.history.back().e0;
  metadata["final_test_error"] = result.final_test_error;
  save_checkpoint(out_dir / "checkpoint.bin", result.model, metadata);

  std::ostringstream csv;
  csv << "epoch,E0,E_R,test_error\n";
  for (const EpochStats& row : result.history) {
    csv << row.epoch << "," << fmt(row.e0) << ",";
    if (row.embedding_loss) csv << fmt(*row.embedding_loss);
    csv << "," << fmt(row.test_error) << "\n";
  }
  write_text(out_dir / "history.csv", csv.str());

  nlohmann::json summary;
  summary["config_hash"] = hash;
  summary["seed"] = config.seed;
  summary["host"] = config.host;
  summary["situation"] = situation_name(situation);
  summary["epochs"] = train_config.epochs;
  summary["param_count"] = result.model.param_count();
  summary["final_e0"] = result.history.back().e0;
  summary["final_test_error"] = result.final_test_error;
  if (key) {
    summary["lambda"] = train_config.lambda;
    summary["key_kind"] = key_kind_name(key->kind);
    summary["T"] = key->bit_count;
    summary["M"] = key->param_count;
    summary["embed_layer"] = *result.model.embed_layer;
    if (train_config.lambda > 0.0) {
      summary["E_R"] = *result.history.back().embedding_loss;
    }
    summary["ber"] = *result.detection->bit_error;
    summary["bits_hex"] = result.detection->bits.to_hex();
    save_key_file(out_dir / "key.json", *key);
    save_message_file(out_dir / "message.json", *message);
  }
  write_json(out_dir / "summary.json", summary);
}

void cmd_extract(const ExtractCmdOptions& options) {
  Checkpoint ckpt = load_checkpoint(options.checkpoint);
  WatermarkKey key = load_key_file(options.key_file);
  if (!ckpt.model.embed_layer) {
    throw ConfigError("checkpoint has no embed layer designated");
  }
  const std::size_t m = embed_dim(ckpt.model, *ckpt.model.embed_layer);
  if (m != key.param_count) {
    throw ConfigError("key M=" + std::to_string(key.param_count) +
                      " does not match checkpoint layer M=" + std::to_string(m));
  }

  DetectionStats stats = extract(key, ckpt.model, *ckpt.model.embed_layer);
  if (options.message_file) {
    const Message reference = load_message_file(*options.message_file);
    stats.bit_error = ber(stats.bits, reference);
  }

  const nlohmann::json j = detection_json(stats, key);
  std::cout << j.dump(2) << "\n";
  if (options.out_dir) {
    std::filesystem::create_directories(*options.out_dir);
    write_json(*options.out_dir / "detection.json", j);
  }
}

void cmd_attack(const AttackCmdOptions& options) {
  Checkpoint ckpt = load_checkpoint(options.checkpoint);
  WatermarkKey key = load_key_file(options.key_file);
  Message message = load_message_file(options.message_file);

  nlohmann::json raw = read_config_file(options.attack_config);
  AttackConfig config = parse_attack_config(raw);
  if (options.seed_override) config.seed = *options.seed_override;
  const std::string hash = effective_config_hash(raw, options.seed_override);

  const std::filesystem::path out_dir(options.out_override ? *options.out_override
                                                           : std::string("attack-out"));
  std::filesystem::create_directories(out_dir);

  nlohmann::json out;
  out["config_hash"] = hash;
  out["seed"] = config.seed;

  if (config.kind == "prune") {
    AttackReport report = attack_prune_sweep(ckpt.model, key, message, config.alphas,
                                             config.orders, config.prune_seed);
    out["report"] = attack_report_json(report);
    write_text(out_dir / "sweep.csv", sweep_csv(report.sweep));
  } else if (config.kind == "finetune") {
    auto [train_data, test_data] = config.dataset.load(derive_seed(config.seed, 100));
    TrainConfig train_config = config.train;
    train_config.shuffle_seed = derive_seed(config.seed, 300);
    AttackReport report = attack_finetune(ckpt.model, key, message, train_data, test_data,
                                          config.epochs, train_config);
    out["report"] = attack_report_json(report);
  } else if (config.kind == "overwrite") {
    auto [train_data, test_data] = config.dataset.load(derive_seed(config.seed, 100));
    if (!ckpt.model.embed_layer) throw ConfigError("checkpoint has no embed layer");
    const std::size_t m = embed_dim(ckpt.model, *ckpt.model.embed_layer);
    const WatermarkKey new_key =
        make_key(config.new_key->kind, config.new_key->seed, config.new_key->bit_count, m);
    const Message new_message = config.new_message.realize(new_key.bit_count);
    TrainConfig train_config = config.train;
    train_config.epochs = config.epochs;
    train_config.shuffle_seed = derive_seed(config.seed, 300);
    AttackReport report = attack_overwrite(ckpt.model, key, message, new_key, new_message,
                                           train_data, test_data, train_config);
    for (const std::string& warning : report.warnings) std::cerr << "warning: " << warning << "\n";
    out["report"] = attack_report_json(report);
  } else if (config.kind == "posthoc") {
    std::optional<Dataset> test_data;
    auto [ignored, test] = config.dataset.load(derive_seed(config.seed, 100));
    test_data = std::move(test);
    nlohmann::json reports = nlohmann::json::array();
    for (double lambda : config.lambdas) {
      AttackReport report = embed_posthoc(ckpt.model, key, message, lambda, config.steps,
                                          config.lr, &*test_data);
      nlohmann::json rj = attack_report_json(report);
      rj["lambda"] = lambda;
      reports.push_back(rj);
    }
    out["reports"] = reports;
  }
  write_json(out_dir / "report.json", out);
}

void cmd_report(const ReportCmdOptions& options) {
  if (!std::filesystem::exists(options.run_dir)) {
    throw DataError("run directory " + options.run_dir.string() + " does not exist");
  }
  const std::filesystem::path out_dir = options.out_dir ? *options.out_dir : options.run_dir;
  std::filesystem::create_directories(out_dir);

  std::vector<std::filesystem::path> all;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(options.run_dir)) {
    if (entry.is_regular_file()) all.push_back(entry.path());
  }
  std::sort(all.begin(), all.end());

  // Unreadable runs are listed and skipped; the report stays partial rather
  // than failing outright.
  std::vector<std::string> warnings;
  std::vector<std::filesystem::path> summaries, attack_reports;
  auto readable = [&](const std::filesystem::path& path) {
    try {
      (void)read_json_file(path);
      return true;
    } catch (const Error& e) {
      warnings.push_back("skipped " + std::filesystem::relative(path, options.run_dir).string() +
                         ": " + e.what());
      return false;
    }
  };
  for (const auto& path : all) {
    if (path.filename() == "summary.json" && readable(path)) summaries.push_back(path);
    if (path.filename() == "report.json" && readable(path)) attack_reports.push_back(path);
  }

  std::ostringstream md;
  md << "# Experiment report\n\n";
  if (summaries.empty() && attack_reports.empty()) {
    warnings.push_back("no runs found under " + options.run_dir.string());
  }

  // Training runs: fidelity and capacity views of the same summaries.
  std::ostringstream train_csv;
  train_csv << "situation,key_kind,T,M,lambda,seed,final_test_error,E_R,ber,config_hash\n";
  md << "## Training runs (fidelity)\n\n";
  md << "| situation | key | T | lambda | test error | E_R | BER | seed |\n";
  md << "|---|---|---|---|---|---|---|---|\n";
  for (const auto& path : summaries) {
    nlohmann::json s = read_json_file(path);
    const std::string kind = s.value("key_kind", std::string("-"));
    const std::string t = s.contains("T") ? std::to_string(s["T"].get<std::size_t>()) : "-";
    const std::string m = s.contains("M") ? std::to_string(s["M"].get<std::size_t>()) : "-";
    const std::string lambda = s.contains("lambda") ? fmt6(s["lambda"].get<double>()) : "-";
    const std::string er = s.contains("E_R") ? fmt6(s["E_R"].get<double>()) : "-";
    const std::string bits = s.contains("ber") ? fmt6(s["ber"].get<double>()) : "-";
    md << "| " << s.value("situation", std::string("?")) << " | " << kind << " | " << t << " | "
       << lambda << " | " << fmt6(s["final_test_error"].get<double>()) << " | " << er << " | "
       << bits << " | " << s.value("seed", 0ULL) << " |\n";
    train_csv << s.value("situation", std::string("?")) << "," << kind << "," << t << "," << m
              << "," << lambda << "," << s.value("seed", 0ULL) << ","
              << fmt(s["final_test_error"].get<double>()) << ","
              << (s.contains("E_R") ? fmt(s["E_R"].get<double>()) : "") << ","
              << (s.contains("ber") ? fmt(s["ber"].get<double>()) : "") << ","
              << s.value("config_hash", std::string()) << "\n";
  }
  md << "\n";

  md << "## Capacity (runs grouped by T)\n\n";
  md << "| T | M | E_R | BER | test error | seed |\n|---|---|---|---|---|---|\n";
  std::vector<nlohmann::json> capacity_rows;
  for (const auto& path : summaries) {
    nlohmann::json s = read_json_file(path);
    if (s.contains("T")) capacity_rows.push_back(s);
  }
  std::stable_sort(capacity_rows.begin(), capacity_rows.end(),
                   [](const nlohmann::json& a, const nlohmann::json& b) {
                     return a["T"].get<std::size_t>() < b["T"].get<std::size_t>();
                   });
  for (const nlohmann::json& s : capacity_rows) {
    md << "| " << s["T"].get<std::size_t>() << " | " << s["M"].get<std::size_t>() << " | "
       << (s.contains("E_R") ? fmt6(s["E_R"].get<double>()) : "-") << " | "
       << fmt6(s["ber"].get<double>()) << " | " << fmt6(s["final_test_error"].get<double>())
       << " | " << s.value("seed", 0ULL) << " |\n";
  }
  md << "\n";

  // Attack reports by kind.
  std::ostringstream prune_csv;
  prune_csv << "alpha,order,E_R,BER,config_hash\n";
  md << "## Pruning sweeps\n\n| alpha | order | E_R | BER |\n|---|---|---|---|\n";
  for (const auto& path : attack_reports) {
    nlohmann::json r = read_json_file(path);
    if (!r.contains("report") || !r["report"].contains("sweep")) continue;
    for (const nlohmann::json& p : r["report"]["sweep"]) {
      md << "| " << fmt6(p["alpha"].get<double>()) << " | " << p["order"].get<std::string>()
         << " | " << fmt6(p["E_R"].get<double>()) << " | " << fmt6(p["ber"].get<double>())
         << " |\n";
      prune_csv << fmt(p["alpha"].get<double>()) << "," << p["order"].get<std::string>() << ","
                << fmt(p["E_R"].get<double>()) << "," << fmt(p["ber"].get<double>()) << ","
                << r.value("config_hash", std::string()) << "\n";
    }
  }
  md << "\n## Fine-tuning attacks\n\n| E_R | E'_R | BER after | test error |\n|---|---|---|---|\n";
  for (const auto& path : attack_reports) {
    nlohmann::json r = read_json_file(path);
    if (!r.contains("report") || r["report"].value("kind", std::string()) != "finetune") continue;
    const nlohmann::json& rep = r["report"];
    md << "| " << fmt6(rep["E_R"].get<double>()) << " | " << fmt6(rep["E_R_after"].get<double>())
       << " | " << fmt6(rep["ber_after"].get<double>()) << " | "
       << (rep.contains("test_error_after") ? fmt6(rep["test_error_after"].get<double>()) : "-")
       << " |\n";
  }
  md << "\n## Post-hoc embedding (lambda sweep)\n\n";
  md << "| lambda | half_sq_dist | E_R | test error | BER |\n|---|---|---|---|---|\n";
  for (const auto& path : attack_reports) {
    nlohmann::json r = read_json_file(path);
    if (!r.contains("reports")) continue;
    for (const nlohmann::json& rep : r["reports"]) {
      if (rep.value("kind", std::string()) != "posthoc") continue;
      md << "| " << fmt6(rep["lambda"].get<double>()) << " | "
         << fmt6(rep["half_sq_dist"].get<double>()) << " | " << fmt6(rep["E_R_after"].get<double>())
         << " | "
         << (rep.contains("test_error_after") ? fmt6(rep["test_error_after"].get<double>()) : "-")
         << " | " << fmt6(rep["ber_after"].get<double>()) << " |\n";
    }
  }

  md << "\n## Provenance\n\n";
  for (const auto& path : summaries) {
    nlohmann::json s = read_json_file(path);
    md << "- " << std::filesystem::relative(path, options.run_dir).string() << ": seed "
       << s.value("seed", 0ULL) << ", config " << s.value("config_hash", std::string("?")) << "\n";
  }
  for (const auto& path : attack_reports) {
    nlohmann::json r = read_json_file(path);
    md << "- " << std::filesystem::relative(path, options.run_dir).string() << ": seed "
       << r.value("seed", 0ULL) << ", config " << r.value("config_hash", std::string("?")) << "\n";
  }
  if (!warnings.empty()) {
    md << "\n## Warnings\n\n";
    for (const std::string& w : warnings) {
      md << "- " << w << "\n";
      std::cerr << "warning: " << w << "\n";
    }
  }

  write_text(out_dir / "report.md", md.str());
  write_text(out_dir / "report_training.csv", train_csv.str());
  write_text(out_dir / "report_prune.csv", prune_csv.str());
}

bool cmd_gradcheck(const GradCheckCmdOptions& options) {
  bool all_pass = true;
  double worst = 0.0;
  nlohmann::json checks = nlohmann::json::array();
  for (std::size_t i = 0; i < options.hosts; ++i) {
    const std::uint64_t host_seed = derive_seed(options.seed, 1000 + i);
    HostModel model = sample_check_host(host_seed);

    Rng rng(derive_seed(host_seed, 5));
    const std::size_t n = 2 + rng.uniform_index(2);
    std::vector<std::size_t> batch_shape = {n};
    batch_shape.insert(batch_shape.end(), model.input_shape.begin(), model.input_shape.end());
    Tensor batch(batch_shape);
    for (std::size_t k = 0; k < batch.size(); ++k) batch[k] = rng.normal();
    std::vector<int> labels(n);
    for (std::size_t k = 0; k < n; ++k) {
      labels[k] = static_cast<int>(rng.uniform_index(model.num_classes));
    }
    const Tensor targets = one_hot(labels, model.num_classes);

    std::optional<ExtraTerm> extra;
    if (options.lambda > 0.0) {
      const std::size_t layer = *model.embed_layer;
      const std::size_t m = embed_dim(model, layer);
      const WatermarkKey key = make_key(KeyKind::random, derive_seed(host_seed, 6), 8, m);
      const Message message = Message::random(8, derive_seed(host_seed, 7));
      extra = attach_regularizer(model, layer, key, message, options.lambda);
    }

    const GradCheckReport report =
        grad_check(model, batch, targets, extra ? &*extra : nullptr, options.tolerance);
    all_pass = all_pass && report.pass;
    worst = std::max(worst, report.max_rel_error);
    checks.push_back({{"host_seed", host_seed},
                      {"params", report.params_checked},
                      {"max_rel_error", report.max_rel_error},
                      {"pass", report.pass},
                      {"worst", report.worst}});
  }

  nlohmann::json out;
  out["hosts"] = options.hosts;
  out["lambda"] = options.lambda;
  out["tolerance"] = options.tolerance;
  out["max_rel_error"] = worst;
  out["pass"] = all_pass;
  out["checks"] = checks;
  std::cout << out.dump(2) << "\n";
  return all_pass;
}

}  // namespace nnwm
