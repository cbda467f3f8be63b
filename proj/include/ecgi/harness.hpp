#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ecgi/classical.hpp"
#include "ecgi/diffusion.hpp"
#include "ecgi/forward_sim.hpp"
#include "ecgi/metrics.hpp"
#include "ecgi/models.hpp"
#include "ecgi/schedule.hpp"

namespace ecgi {

// Global z-score statistics of the training split; stored in checkpoints so
// sampling and evaluation reverse the normalization exactly.
struct NormStats {
  double x_mean = 0.0, x_std = 1.0;
  double y_mean = 0.0, y_std = 1.0;
};

NormStats compute_norm_stats(const std::vector<BeatPair>& train);

struct ExperimentConfig {
  std::string dataset;
  std::string model = "diffusion";  // diffusion|cnn1d|lstm|transformer|tikhonov0|tikhonov1|tsvd
  int epochs = 100;
  int batch_size = 32;
  double learning_rate = 3e-4;
  std::uint64_t seed = 42;
  DiffusionConfig diffusion;
  std::string out_dir = "out";
  std::optional<BaselineConfig> baseline;  // architecture override for baseline kinds
};

// Strict JSON mirror of ExperimentConfig; unknown keys are rejected.
ExperimentConfig parse_experiment_config(const std::string& json_text);
std::string experiment_config_json(const ExperimentConfig& cfg);

// Strict JSON mirror of DatasetConfig (the gen-data sidecar).
DatasetConfig parse_dataset_config(const std::string& json_text);
std::string dataset_config_json(const DatasetConfig& cfg);

std::string config_fingerprint(const std::string& canonical_json);

// A trained (or freshly initialized) model plus everything needed to run it.
struct TrainedModel {
  std::string kind;
  std::unique_ptr<TransformerDenoiser> denoiser;
  std::unique_ptr<Baseline> baseline;
  DiffusionConfig diffusion;
  NoiseSchedule sched;
  NormStats norm;
  int n_h = 0, n_b = 0;
  int epochs_trained = 0;
  std::uint64_t seed = 0;

  Model& model() const;
  long param_count() const;
  bool is_diffusion() const { return kind == "diffusion"; }
};

// Architecture construction with seeded initialization (epoch-0 state).
TrainedModel build_model(const std::string& kind, int n_h, int n_b,
                         const DiffusionConfig& diffusion_cfg,
                         const std::optional<BaselineConfig>& baseline_cfg, std::uint64_t seed);

struct TrainOptions {
  int epochs = 100;
  int batch_size = 32;
  double learning_rate = 3e-4;
  std::uint64_t seed = 42;
  int threads = 0;        // 0 = default_thread_count()
  int val_subset = 6;     // diffusion: validation beats sampled per epoch
  int val_k = 1;          // diffusion: chains per validation beat
};

struct TrainResult {
  std::string log_csv;    // epoch,train_loss,val_cc,val_mse,wall_clock_s
  int best_epoch = 0;     // 1-based; 0 when no epochs ran
  double best_val_cc = 0.0;
  double final_train_loss = 0.0;
  double first_epoch_loss = 0.0;
};

// Mini-batch Adam training with a seeded shuffle. Per-sample gradients may
// be evaluated on worker replicas; accumulation is in sample order, so the
// result is identical for any thread count. The best-validation parameters
// are restored into `model` on return. On divergence the last finite
// parameters are restored and the NumericError is rethrown.
TrainResult train_model(TrainedModel& model, const DatasetSplit& data, const TrainOptions& opts);

// Checkpoint round trip: parameters + normalization stats in the binary
// container, architecture description in a JSON sidecar next to it.
void save_trained_model(const TrainedModel& model, const std::string& checkpoint_path);
TrainedModel load_trained_model(const std::string& checkpoint_path);
std::string sidecar_path(const std::string& checkpoint_path);

// Posterior-mean (diffusion) or single-pass (deterministic) predictions for
// one record, in millivolts.
Eigen::MatrixXd predict(const TrainedModel& model, const BodySurfaceRecord& rec, int k_samples,
                        const Rng& rng);

// Pooled test-set metrics. Diffusion models are scored on the mean of
// k_samples posterior draws; beat b uses the seeded stream (eval_seed, b).
MetricsReport evaluate_model(const TrainedModel& model, const std::vector<BeatPair>& testset,
                             int k_samples, std::uint64_t eval_seed, int threads = 0);

// Reference rows: classical solvers (lambda or rank selected on validation
// when not fixed) and the zero predictor.
struct ClassicalOptions {
  std::string method = "tikhonov0";  // tikhonov0|tikhonov1|tsvd
  std::optional<double> lambda;
  std::optional<int> rank;
};

MetricsReport evaluate_classical(const DatasetConfig& gen_cfg, const DatasetSplit& data,
                                 const ClassicalOptions& opts);
MetricsReport evaluate_zero_predictor(const std::vector<BeatPair>& testset);

struct ComparisonConfig {
  std::optional<std::string> dataset_path;  // generated from `gen` when absent
  DatasetConfig gen;
  std::vector<std::string> methods = {"cnn1d", "diffusion", "lstm", "transformer"};
  int epochs = 100;
  int batch_size = 32;
  double learning_rate = 3e-4;
  std::uint64_t seed = 42;
  DiffusionConfig diffusion;
  std::string out_dir = "out";
  int threads = 0;
};

ComparisonConfig parse_comparison_config(const std::string& json_text);
std::string comparison_config_json(const ComparisonConfig& cfg);

struct ComparisonResult {
  std::vector<MetricsReport> rows;  // sorted by method name
  std::string csv;                  // deterministic report
  std::string txt;                  // human table, includes wall clock
  bool all_ok = true;
  std::uint64_t split_checksum = 0;
};

// Trains and evaluates every requested method on one shared dataset with a
// shared evaluation seed. Learned-method training logs and checkpoints are
// written under out_dir when it is non-empty.
ComparisonResult run_comparison(const ComparisonConfig& cfg);

// Electrode traces for external plotting: truth, posterior mean, and
// per-sample spread, for the top-k electrodes by temporal CC and the top-k
// by lowest per-electrode MSE (plus any explicitly requested electrodes).
struct TraceSelection {
  std::vector<int> by_cc;
  std::vector<int> by_mse;
};

struct TraceExport {
  std::string csv;
  TraceSelection selection;
};

TraceExport export_traces(const TrainedModel& model, const std::vector<BeatPair>& testset,
                          int beat_index, int k_top, const std::vector<int>& explicit_electrodes,
                          std::uint64_t eval_seed);

}  // namespace ecgi
