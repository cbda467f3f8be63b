// Command-line surface for the synthetic ECGI benchmark: dataset generation,
// model training, posterior sampling, evaluation, classical baselines, and
// the cross-method comparison table.

#include <CLI11.hpp>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "ecgi/harness.hpp"
#include "ecgi/io_util.hpp"
#include "ecgi/svd.hpp"

namespace {

using namespace ecgi;

std::string checksum_hex(const DatasetSplit& split) { return hex64(dataset_checksum(split)); }

void ensure_parent_dir(const std::string& path) {
  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
}

int cmd_gen_data(const DatasetConfig& cfg, const std::string& out) {
  DatasetSplit split = make_dataset(cfg);
  ensure_parent_dir(out);
  save_dataset(split, out);
  write_file(sidecar_path(out), dataset_config_json(cfg) + "\n");

  std::cout << "wrote " << out << "  (" << split.train.size() << " train / "
            << split.validation.size() << " val / " << split.test.size() << " test)\n";
  std::cout << "policy: " << split.policy << "\n";
  std::cout << "checksum: " << checksum_hex(split) << "\n";
  for (int h = 0; h < cfg.hearts; ++h) {
    TransferOperator op = heart_operator(cfg, h);
    std::cout << "heart " << h << " operator condition number: "
              << format_double(jacobi_svd(op.a).condition_number()) << "\n";
  }
  return 0;
}

int cmd_train(ExperimentConfig cfg) {
  DatasetSplit data = load_dataset(cfg.dataset);
  if (data.train.empty()) throw ConfigError("train: dataset has no training pairs");
  const int n_h = static_cast<int>(data.train[0].x.potentials.rows());
  const int n_b = static_cast<int>(data.train[0].y.potentials.rows());

  TrainedModel model = build_model(cfg.model, n_h, n_b, cfg.diffusion, cfg.baseline, cfg.seed);
  TrainOptions opts;
  opts.epochs = cfg.epochs;
  opts.batch_size = cfg.batch_size;
  opts.learning_rate = cfg.learning_rate;
  opts.seed = cfg.seed;

  std::filesystem::create_directories(cfg.out_dir);
  const std::string ckpt = cfg.out_dir + "/checkpoint.ecgi";
  try {
    TrainResult r = train_model(model, data, opts);
    write_file(cfg.out_dir + "/train_log.csv", r.log_csv);
    save_trained_model(model, ckpt);
    write_file(cfg.out_dir + "/experiment.json", experiment_config_json(cfg) + "\n");
    std::cout << "trained " << cfg.model << " for " << cfg.epochs << " epochs; best epoch "
              << r.best_epoch << " (val cc " << format_double(r.best_val_cc) << ")\n";
    std::cout << "checkpoint: " << ckpt << "\n";
    return 0;
  } catch (const NumericError& e) {
    // Divergence: the trainer restored the last finite parameters.
    save_trained_model(model, ckpt);
    std::cerr << "training aborted: " << e.what() << "\nlast finite state saved to " << ckpt
              << "\n";
    return 1;
  }
}

int cmd_sample(const std::string& checkpoint, const std::string& data_path, int k,
               std::uint64_t seed, const std::string& out) {
  TrainedModel model = load_trained_model(checkpoint);
  DatasetSplit data = load_dataset(data_path);
  if (data.test.empty()) throw ConfigError("sample: dataset has no test split");

  DatasetSplit recon;
  recon.policy = "reconstructions";
  Rng base(seed);
  for (size_t i = 0; i < data.test.size(); ++i) {
    BeatPair p = data.test[i];
    p.x.potentials = predict(model, p.y, k, base.child({0x62656174ULL, i}));
    recon.test.push_back(std::move(p));
  }
  ensure_parent_dir(out);
  save_dataset(recon, out);
  std::cout << "wrote " << recon.test.size() << " reconstructions to " << out << "\n";
  return 0;
}

int cmd_evaluate(const std::string& checkpoint, const std::string& data_path, int k,
                 std::uint64_t seed, const std::string& report_path) {
  TrainedModel model = load_trained_model(checkpoint);
  DatasetSplit data = load_dataset(data_path);
  MetricsReport r = evaluate_model(model, data.test, k, seed);
  r.split_checksum = checksum_hex(data);

  ensure_parent_dir(report_path);
  write_file(report_path, report_csv_header() + "\n" + report_csv_row(r) + "\n");
  write_file(report_path + ".beats.csv", per_beat_csv(r));
  std::cout << report_csv_header() << "\n" << report_csv_row(r) << "\n";
  return 0;
}

int cmd_baseline(const std::string& method, std::optional<double> lambda, std::optional<int> rank,
                 const std::string& data_path, const std::string& gen_config_path,
                 const std::string& report_path) {
  std::string cfg_path = gen_config_path.empty() ? sidecar_path(data_path) : gen_config_path;
  DatasetConfig gen = parse_dataset_config(read_file(cfg_path));
  DatasetSplit data = load_dataset(data_path);

  ClassicalOptions opts;
  opts.method = method;
  opts.lambda = lambda;
  opts.rank = rank;
  MetricsReport r = evaluate_classical(gen, data, opts);
  r.split_checksum = checksum_hex(data);

  ensure_parent_dir(report_path);
  write_file(report_path, report_csv_header() + "\n" + report_csv_row(r) + "\n");
  write_file(report_path + ".beats.csv", per_beat_csv(r));
  std::cout << report_csv_header() << "\n" << report_csv_row(r) << "\n";
  return 0;
}

int cmd_compare(const ComparisonConfig& cfg) {
  ComparisonResult r = run_comparison(cfg);
  std::cout << r.txt;
  if (!cfg.out_dir.empty()) {
    std::cout << "reports: " << cfg.out_dir << "/comparison.csv, " << cfg.out_dir
              << "/comparison.txt\n";
  }
  return r.all_ok ? 0 : 1;
}

int cmd_export_traces(const std::string& checkpoint, const std::string& data_path, int beat, int k,
                      const std::vector<int>& electrodes, std::uint64_t seed,
                      const std::string& out) {
  TrainedModel model = load_trained_model(checkpoint);
  DatasetSplit data = load_dataset(data_path);
  TraceExport t = export_traces(model, data.test, beat, k, electrodes, seed);
  ensure_parent_dir(out);
  write_file(out, t.csv);
  auto joined = [](const std::vector<int>& v) {
    std::string s;
    for (int e : v) s += (s.empty() ? "" : ",") + std::to_string(e);
    return s.empty() ? std::string("-") : s;
  };
  std::cout << "selected by cc: " << joined(t.selection.by_cc)
            << "; by mse: " << joined(t.selection.by_mse) << "\nwrote " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Synthetic benchmark for diffusion-based epicardial potential reconstruction"};
  app.require_subcommand(1);

  std::optional<std::uint64_t> global_seed;
  std::string global_config, global_out;
  app.add_option("--seed", global_seed, "Override the configured seed");
  app.add_option("--config", global_config, "JSON config file (train/compare)");
  app.add_option("--out", global_out, "Override the output path/directory");

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic paired dataset");
  DatasetConfig gcfg;
  std::string gen_out = "dataset.ecgd";
  gen->add_option("--hearts", gcfg.hearts, "Number of hearts");
  gen->add_option("--beats-per-heart", gcfg.beats_per_heart, "Beats per heart");
  gen->add_option("--nh", gcfg.n_h, "Heart electrodes N_h");
  gen->add_option("--nb", gcfg.n_b, "Torso electrodes N_b");
  gen->add_option("--t", gcfg.t_len, "Samples per beat T");
  gen->add_option("--snr-db", gcfg.snr_db, "Observation SNR in dB");
  gen->add_option("--seed", gcfg.seed, "Generation seed");
  gen->add_option("--pacing-sites", gcfg.pacing_sites, "Pacing sites per heart");
  gen->add_option("--test-hearts", gcfg.test_hearts, "Hearts held out for testing");
  gen->add_option("--val-fraction", gcfg.val_fraction, "Validation fraction of training beats");
  gen->add_option("--out", gen_out, "Output dataset file");

  // train
  auto* train = app.add_subcommand("train", "Train a model from a JSON experiment config");

  // sample
  auto* sample = app.add_subcommand("sample", "Sample posterior reconstructions for the test split");
  std::string s_ckpt, s_data, s_out = "reconstructions.ecgd";
  int s_k = 8;
  std::uint64_t s_seed = 7;
  sample->add_option("--checkpoint", s_ckpt, "Model checkpoint")->required();
  sample->add_option("--data", s_data, "Dataset file")->required();
  sample->add_option("--k", s_k, "Posterior samples per record");
  sample->add_option("--seed", s_seed, "Sampling seed");
  sample->add_option("--out", s_out, "Output dataset-format file of reconstructions");

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "Evaluate a checkpoint on the test split");
  std::string e_ckpt, e_data, e_report = "report.csv";
  int e_k = 8;
  std::uint64_t e_seed = 7;
  eval->add_option("--checkpoint", e_ckpt, "Model checkpoint")->required();
  eval->add_option("--data", e_data, "Dataset file")->required();
  eval->add_option("--k", e_k, "Posterior samples per record (diffusion)");
  eval->add_option("--seed", e_seed, "Evaluation seed");
  eval->add_option("--report", e_report, "Report CSV path");

  // baseline
  auto* base = app.add_subcommand("baseline", "Run a classical solver as a reference row");
  std::string b_method = "tikhonov0", b_data, b_report = "baseline.csv", b_gen;
  double b_lambda = -1.0;
  int b_rank = 0;
  base->add_option("--method", b_method, "tikhonov0|tikhonov1|tsvd");
  base->add_option("--lambda", b_lambda, "Regularization weight (grid-selected when omitted)");
  base->add_option("--rank", b_rank, "TSVD truncation rank (grid-selected when omitted)");
  base->add_option("--data", b_data, "Dataset file")->required();
  base->add_option("--gen-config", b_gen, "Dataset generation sidecar JSON");
  base->add_option("--report", b_report, "Report CSV path");

  // compare
  auto* compare = app.add_subcommand("compare", "Train and evaluate all methods on one dataset");

  // export-traces
  auto* traces = app.add_subcommand("export-traces", "Export per-electrode signal traces");
  std::string t_ckpt, t_data, t_out = "traces.csv";
  int t_beat = 0, t_k = 3;
  std::uint64_t t_seed = 7;
  std::vector<int> t_electrodes;
  traces->add_option("--checkpoint", t_ckpt, "Model checkpoint")->required();
  traces->add_option("--data", t_data, "Dataset file")->required();
  traces->add_option("--beat", t_beat, "Test beat index");
  traces->add_option("--k", t_k, "Electrodes per selection criterion");
  traces->add_option("--electrodes", t_electrodes, "Explicit electrode indices")->delimiter(',');
  traces->add_option("--seed", t_seed, "Sampling seed");
  traces->add_option("--out", t_out, "Output CSV path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      if (global_seed) gcfg.seed = *global_seed;
      if (!global_out.empty()) gen_out = global_out;
      return cmd_gen_data(gcfg, gen_out);
    }
    if (train->parsed()) {
      if (global_config.empty()) throw ConfigError("train: --config <json> is required");
      ExperimentConfig cfg = parse_experiment_config(read_file(global_config));
      if (global_seed) cfg.seed = *global_seed;
      if (!global_out.empty()) cfg.out_dir = global_out;
      return cmd_train(cfg);
    }
    if (sample->parsed()) {
      if (global_seed) s_seed = *global_seed;
      if (!global_out.empty()) s_out = global_out;
      return cmd_sample(s_ckpt, s_data, s_k, s_seed, s_out);
    }
    if (eval->parsed()) {
      if (global_seed) e_seed = *global_seed;
      if (!global_out.empty()) e_report = global_out;
      return cmd_evaluate(e_ckpt, e_data, e_k, e_seed, e_report);
    }
    if (base->parsed()) {
      std::optional<double> lambda;
      std::optional<int> rank;
      if (base->count("--lambda")) lambda = b_lambda;
      if (base->count("--rank")) rank = b_rank;
      if (!global_out.empty()) b_report = global_out;
      return cmd_baseline(b_method, lambda, rank, b_data, b_gen, b_report);
    }
    if (compare->parsed()) {
      if (global_config.empty()) throw ConfigError("compare: --config <json> is required");
      ComparisonConfig cfg = parse_comparison_config(read_file(global_config));
      if (global_seed) cfg.seed = *global_seed;
      if (!global_out.empty()) cfg.out_dir = global_out;
      return cmd_compare(cfg);
    }
    if (traces->parsed()) {
      if (global_seed) t_seed = *global_seed;
      if (!global_out.empty()) t_out = global_out;
      return cmd_export_traces(t_ckpt, t_data, t_beat, t_k, t_electrodes, t_seed, t_out);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
