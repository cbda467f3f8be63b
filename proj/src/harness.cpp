#include "ecgi/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "ecgi/checkpoint.hpp"
#include "ecgi/io_util.hpp"
#include "ecgi/parallel.hpp"

namespace ecgi {

using nlohmann::json;

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

double now_s() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where + ": expected a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed) {
      if (it.key() == a) {
        ok = true;
        break;
      }
    }
    if (!ok) throw ConfigError(where + ": unknown key '" + it.key() + "'");
  }
}

json diffusion_to_json(const DiffusionConfig& d) {
  return json{{"t_diff", d.t_diff},
              {"beta_min", d.beta_min},
              {"beta_max", d.beta_max},
              {"schedule", d.kind == ScheduleKind::sqrt_linear ? "sqrt_linear" : "linear"},
              {"sample_count", d.sample_count}};
}

DiffusionConfig diffusion_from_json(const json& j) {
  check_keys(j, "diffusion", {"t_diff", "beta_min", "beta_max", "schedule", "sample_count"});
  DiffusionConfig d;
  d.t_diff = j.value("t_diff", d.t_diff);
  d.beta_min = j.value("beta_min", d.beta_min);
  d.beta_max = j.value("beta_max", d.beta_max);
  d.sample_count = j.value("sample_count", d.sample_count);
  std::string kind = j.value("schedule", std::string("sqrt_linear"));
  if (kind == "sqrt_linear") {
    d.kind = ScheduleKind::sqrt_linear;
  } else if (kind == "linear") {
    d.kind = ScheduleKind::linear;
  } else {
    throw ConfigError("diffusion.schedule must be 'sqrt_linear' or 'linear', got '" + kind + "'");
  }
  return d;
}

json baseline_to_json(const BaselineConfig& b) {
  return json{{"hidden", b.hidden}, {"depth", b.depth}, {"kernel", b.kernel}};
}

BaselineConfig baseline_from_json(const json& j, BaselineKind kind) {
  check_keys(j, "baseline", {"hidden", "depth", "kernel"});
  BaselineConfig b = default_baseline_config(kind);
  b.hidden = j.value("hidden", b.hidden);
  b.depth = j.value("depth", b.depth);
  b.kernel = j.value("kernel", b.kernel);
  return b;
}

json beat_to_json(const BeatParams& p) {
  return json{{"amplitude_mv", p.amplitude_mv},
              {"amp_jitter", p.amp_jitter},
              {"conduction_slowness", p.conduction_slowness},
              {"upstroke_samples", p.upstroke_samples},
              {"plateau_samples", p.plateau_samples},
              {"repol_tau", p.repol_tau}};
}

BeatParams beat_from_json(const json& j) {
  check_keys(j, "beat",
             {"amplitude_mv", "amp_jitter", "conduction_slowness", "upstroke_samples",
              "plateau_samples", "repol_tau"});
  BeatParams p;
  p.amplitude_mv = j.value("amplitude_mv", p.amplitude_mv);
  p.amp_jitter = j.value("amp_jitter", p.amp_jitter);
  p.conduction_slowness = j.value("conduction_slowness", p.conduction_slowness);
  p.upstroke_samples = j.value("upstroke_samples", p.upstroke_samples);
  p.plateau_samples = j.value("plateau_samples", p.plateau_samples);
  p.repol_tau = j.value("repol_tau", p.repol_tau);
  return p;
}

bool is_learned(const std::string& kind) {
  return kind == "diffusion" || kind == "cnn1d" || kind == "lstm" || kind == "transformer";
}

bool is_classical(const std::string& kind) {
  return kind == "tikhonov0" || kind == "tikhonov1" || kind == "tsvd";
}

Tensor normalize(const Eigen::MatrixXd& m, double mean, double std) {
  return Tensor::from_matrix((m.array() - mean).matrix() / std);
}

Eigen::MatrixXd denormalize(const Tensor& t, double mean, double std) {
  return (t.to_matrix().array() * std + mean).matrix();
}

std::vector<Arr> snapshot_params(const Model& m) {
  std::vector<Arr> s;
  s.reserve(m.params().size());
  for (const Param& p : m.params()) s.push_back(p.value.data());
  return s;
}

void restore_snapshot(Model& m, const std::vector<Arr>& s) {
  for (size_t i = 0; i < s.size(); ++i) m.params()[i].value.mutable_data() = s[i];
}

DenoiserFn denoiser_fn(const TransformerDenoiser& d) {
  return [&d](const Tensor& x_t, int t, const Tensor& y) { return d.forward(x_t, t, y); };
}

}  // namespace

NormStats compute_norm_stats(const std::vector<BeatPair>& train) {
  if (train.empty()) throw ConfigError("compute_norm_stats: empty training split");
  double x_sum = 0.0, x_sq = 0.0, y_sum = 0.0, y_sq = 0.0;
  long nx = 0, ny = 0;
  for (const BeatPair& p : train) {
    x_sum += p.x.potentials.sum();
    x_sq += p.x.potentials.array().square().sum();
    nx += p.x.potentials.size();
    y_sum += p.y.potentials.sum();
    y_sq += p.y.potentials.array().square().sum();
    ny += p.y.potentials.size();
  }
  NormStats s;
  s.x_mean = x_sum / static_cast<double>(nx);
  s.y_mean = y_sum / static_cast<double>(ny);
  double xv = x_sq / static_cast<double>(nx) - s.x_mean * s.x_mean;
  double yv = y_sq / static_cast<double>(ny) - s.y_mean * s.y_mean;
  s.x_std = xv > 0 ? std::sqrt(xv) : 1.0;
  s.y_std = yv > 0 ? std::sqrt(yv) : 1.0;
  return s;
}

ExperimentConfig parse_experiment_config(const std::string& json_text) {
  json j = json::parse(json_text);
  check_keys(j, "config",
             {"dataset", "model", "epochs", "batch_size", "learning_rate", "seed", "diffusion",
              "out_dir", "baseline"});
  ExperimentConfig c;
  c.dataset = j.value("dataset", c.dataset);
  c.model = j.value("model", c.model);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.seed = j.value("seed", c.seed);
  c.out_dir = j.value("out_dir", c.out_dir);
  if (j.contains("diffusion")) c.diffusion = diffusion_from_json(j["diffusion"]);
  if (j.contains("baseline")) {
    if (!is_learned(c.model) || c.model == "diffusion") {
      throw ConfigError("config: 'baseline' is only valid for cnn1d/lstm/transformer");
    }
    c.baseline = baseline_from_json(j["baseline"], baseline_kind_from_name(c.model));
  }
  if (c.epochs < 0 || c.batch_size < 1 || !(c.learning_rate > 0.0)) {
    throw ConfigError("config: epochs must be >= 0, batch_size >= 1, learning_rate > 0");
  }
  if (!is_learned(c.model) && !is_classical(c.model)) {
    throw ConfigError("config: unknown model '" + c.model + "'");
  }
  return c;
}

std::string experiment_config_json(const ExperimentConfig& c) {
  json j{{"dataset", c.dataset},
         {"model", c.model},
         {"epochs", c.epochs},
         {"batch_size", c.batch_size},
         {"learning_rate", c.learning_rate},
         {"seed", c.seed},
         {"diffusion", diffusion_to_json(c.diffusion)},
         {"out_dir", c.out_dir}};
  if (c.baseline) j["baseline"] = baseline_to_json(*c.baseline);
  return j.dump(2);
}

DatasetConfig parse_dataset_config(const std::string& json_text) {
  json j = json::parse(json_text);
  check_keys(j, "dataset config",
             {"hearts", "beats_per_heart", "n_h", "n_b", "t_len", "pacing_sites", "test_hearts",
              "snr_db", "val_fraction", "seed", "beat"});
  DatasetConfig c;
  c.hearts = j.value("hearts", c.hearts);
  c.beats_per_heart = j.value("beats_per_heart", c.beats_per_heart);
  c.n_h = j.value("n_h", c.n_h);
  c.n_b = j.value("n_b", c.n_b);
  c.t_len = j.value("t_len", c.t_len);
  c.pacing_sites = j.value("pacing_sites", c.pacing_sites);
  c.test_hearts = j.value("test_hearts", c.test_hearts);
  c.snr_db = j.value("snr_db", c.snr_db);
  c.val_fraction = j.value("val_fraction", c.val_fraction);
  c.seed = j.value("seed", c.seed);
  if (j.contains("beat")) c.beat = beat_from_json(j["beat"]);
  return c;
}

std::string dataset_config_json(const DatasetConfig& c) {
  json j{{"hearts", c.hearts},
         {"beats_per_heart", c.beats_per_heart},
         {"n_h", c.n_h},
         {"n_b", c.n_b},
         {"t_len", c.t_len},
         {"pacing_sites", c.pacing_sites},
         {"test_hearts", c.test_hearts},
         {"snr_db", c.snr_db},
         {"val_fraction", c.val_fraction},
         {"seed", c.seed},
         {"beat", beat_to_json(c.beat)}};
  return j.dump(2);
}

std::string config_fingerprint(const std::string& canonical_json) {
  return hex64(fnv1a64(canonical_json));
}

Model& TrainedModel::model() const {
  if (denoiser) return *denoiser;
  if (baseline) return *baseline;
  throw ContractError("TrainedModel: no model built");
}

long TrainedModel::param_count() const { return model().param_count(); }

TrainedModel build_model(const std::string& kind, int n_h, int n_b,
                         const DiffusionConfig& diffusion_cfg,
                         const std::optional<BaselineConfig>& baseline_cfg, std::uint64_t seed) {
  TrainedModel tm;
  tm.kind = kind;
  tm.n_h = n_h;
  tm.n_b = n_b;
  tm.seed = seed;
  tm.diffusion = diffusion_cfg;
  Rng init = Rng(seed).child({0x696e6974ULL});
  if (kind == "diffusion") {
    tm.sched = build_schedule(diffusion_cfg);
    tm.denoiser = std::make_unique<TransformerDenoiser>(n_h, n_b, TransformerConfig{}, init);
  } else if (is_learned(kind)) {
    BaselineKind bk = baseline_kind_from_name(kind);
    BaselineConfig bc = baseline_cfg.value_or(default_baseline_config(bk));
    bc.kind = bk;
    tm.baseline = make_baseline(n_h, n_b, bc, init);
  } else {
    throw ConfigError("build_model: '" + kind + "' is not a learned model");
  }
  return tm;
}

namespace {

TrainedModel clone_arch(const TrainedModel& tm) {
  std::optional<BaselineConfig> bc;
  if (tm.baseline) bc = tm.baseline->config();
  TrainedModel rep = build_model(tm.kind, tm.n_h, tm.n_b, tm.diffusion, bc, tm.seed);
  rep.model().sync_from(tm.model());
  rep.norm = tm.norm;
  return rep;
}

struct ValMetrics {
  double cc = kNan;
  double mse = kNan;
};

// Validation pass shared by the per-epoch log and best-model selection.
// Diffusion models sample a fixed seeded subset with val_k chains per beat;
// deterministic models run the full validation split.
ValMetrics validate(const TrainedModel& tm, const std::vector<BeatPair>& val,
                    const std::vector<size_t>& subset, int val_k, std::uint64_t seed, int threads) {
  if (val.empty()) return {};
  std::vector<size_t> idx;
  if (tm.is_diffusion()) {
    idx = subset;
  } else {
    idx.resize(val.size());
    std::iota(idx.begin(), idx.end(), size_t{0});
  }
  std::vector<Eigen::MatrixXd> preds(idx.size());
  Rng base(seed);
  parallel_for(
      static_cast<int>(idx.size()),
      [&](int i) {
        const BeatPair& p = val[idx[static_cast<size_t>(i)]];
        Tensor y_n = normalize(p.y.potentials, tm.norm.y_mean, tm.norm.y_std);
        if (tm.is_diffusion()) {
          PosteriorSample ps =
              sample_posterior(y_n, denoiser_fn(*tm.denoiser), tm.sched, tm.n_h, val_k,
                               base.child({0x76616c63ULL, idx[static_cast<size_t>(i)]}));
          preds[static_cast<size_t>(i)] = denormalize(ps.mean, tm.norm.x_mean, tm.norm.x_std);
        } else {
          preds[static_cast<size_t>(i)] =
              denormalize(tm.baseline->forward(y_n), tm.norm.x_mean, tm.norm.x_std);
        }
      },
      threads);
  MetricsAccumulator acc;
  for (size_t i = 0; i < idx.size(); ++i) {
    acc.add(static_cast<int>(idx[i]), val[idx[i]].x.heart_id, preds[i], val[idx[i]].x.potentials);
  }
  MetricsReport r;
  acc.fill(r);
  return {r.cc_defined ? r.temporal_cc : kNan, r.mse};
}

}  // namespace

TrainResult train_model(TrainedModel& tm, const DatasetSplit& data, const TrainOptions& opts) {
  if (data.train.empty()) throw ConfigError("train: empty training split");
  const int n_h = static_cast<int>(data.train[0].x.potentials.rows());
  const int n_b = static_cast<int>(data.train[0].y.potentials.rows());
  if (n_h != tm.n_h || n_b != tm.n_b) {
    throw ConfigError("train: dataset dims (" + std::to_string(n_h) + "," + std::to_string(n_b) +
                      ") do not match model (" + std::to_string(tm.n_h) + "," +
                      std::to_string(tm.n_b) + ")");
  }

  tm.norm = compute_norm_stats(data.train);

  // Normalized constants shared (read-only) by all workers.
  std::vector<Tensor> x_n, y_n;
  x_n.reserve(data.train.size());
  y_n.reserve(data.train.size());
  for (const BeatPair& p : data.train) {
    x_n.push_back(normalize(p.x.potentials, tm.norm.x_mean, tm.norm.x_std));
    y_n.push_back(normalize(p.y.potentials, tm.norm.y_mean, tm.norm.y_std));
  }

  Model& master = tm.model();
  AdamState adam(master.params(), {opts.learning_rate, 0.9, 0.999, 1e-8});

  int threads = opts.threads > 0 ? opts.threads : default_thread_count();
  threads = std::min(threads, opts.batch_size);
  std::vector<TrainedModel> replicas;
  if (threads > 1) {
    replicas.reserve(static_cast<size_t>(threads));
    for (int w = 0; w < threads; ++w) replicas.push_back(clone_arch(tm));
  }

  Rng master_rng(opts.seed);

  // Fixed seeded validation subset for diffusion models, reused every epoch.
  std::vector<size_t> val_subset;
  if (!data.validation.empty()) {
    std::vector<size_t> vidx(data.validation.size());
    std::iota(vidx.begin(), vidx.end(), size_t{0});
    Rng vr = master_rng.child({0x76616c73ULL});
    for (size_t i = vidx.size(); i > 1; --i) {
      std::swap(vidx[i - 1], vidx[static_cast<size_t>(vr.uniform_int(0, static_cast<int>(i) - 1))]);
    }
    vidx.resize(std::min(vidx.size(), static_cast<size_t>(std::max(1, opts.val_subset))));
    std::sort(vidx.begin(), vidx.end());
    val_subset = vidx;
  }

  std::ostringstream log;
  log << "epoch,train_loss,val_cc,val_mse,wall_clock_s\n";

  TrainResult result;
  std::vector<Arr> best = snapshot_params(master);
  double best_cc = -std::numeric_limits<double>::infinity();
  const size_t n_params = master.params().size();
  std::vector<Arr> last_finite = snapshot_params(master);
  const double t_start = now_s();

  const long n_train = static_cast<long>(data.train.size());
  for (int epoch = 1; epoch <= opts.epochs; ++epoch) {
    // Seeded shuffle of the training order.
    std::vector<long> order(static_cast<size_t>(n_train));
    std::iota(order.begin(), order.end(), 0L);
    Rng sh = master_rng.child({0x73687566ULL, static_cast<std::uint64_t>(epoch)});
    for (size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<size_t>(sh.uniform_int(0, static_cast<int>(i) - 1))]);
    }

    double epoch_loss_sum = 0.0;
    long epoch_samples = 0;
    const long n_steps = (n_train + opts.batch_size - 1) / opts.batch_size;
    for (long step = 0; step < n_steps; ++step) {
      const long lo = step * opts.batch_size;
      const long hi = std::min(n_train, lo + opts.batch_size);
      const int bsz = static_cast<int>(hi - lo);

      std::vector<double> slot_loss(static_cast<size_t>(bsz), 0.0);
      std::vector<std::vector<Arr>> slot_grads(static_cast<size_t>(bsz));

      try {
        parallel_for(
            bsz,
            [&](int s) {
              const TrainedModel& worker =
                  threads > 1 ? replicas[static_cast<size_t>(s % threads)] : tm;
              const long sample = order[static_cast<size_t>(lo + s)];
              Rng draw_rng = master_rng.child({0x64726177ULL, static_cast<std::uint64_t>(epoch),
                                               static_cast<std::uint64_t>(step),
                                               static_cast<std::uint64_t>(s)});
              Tape tape;
              Tensor loss;
              if (worker.is_diffusion()) {
                loss = train_loss(x_n[static_cast<size_t>(sample)], y_n[static_cast<size_t>(sample)],
                                  denoiser_fn(*worker.denoiser), worker.sched, draw_rng);
              } else {
                Tensor d = sub(worker.baseline->forward(y_n[static_cast<size_t>(sample)]),
                               x_n[static_cast<size_t>(sample)]);
                loss = mean(mul(d, d));
              }
              tape.backward(loss);
              slot_loss[static_cast<size_t>(s)] = loss.value();
              std::vector<Arr>& g = slot_grads[static_cast<size_t>(s)];
              g.reserve(n_params);
              for (const Param& p : worker.model().params()) g.push_back(p.value.grad_array().size() ? p.value.grad_array() : Arr::Zero(p.value.size()));
            },
            threads);

        // Fixed-order reduction over the batch, then one Adam step.
        std::vector<Arr> acc;
        acc.reserve(n_params);
        for (const Param& p : master.params()) acc.push_back(Arr::Zero(p.value.size()));
        double batch_loss = 0.0;
        for (int s = 0; s < bsz; ++s) {
          batch_loss += slot_loss[static_cast<size_t>(s)];
          for (size_t i = 0; i < n_params; ++i) acc[i] += slot_grads[static_cast<size_t>(s)][i];
        }
        batch_loss /= bsz;
        for (size_t i = 0; i < n_params; ++i) acc[i] /= static_cast<double>(bsz);
        if (!std::isfinite(batch_loss)) throw NumericError("train: non-finite batch loss");

        last_finite = snapshot_params(master);
        adam_step(master.params(), acc, adam);
        for (TrainedModel& rep : replicas) rep.model().sync_from(master);

        epoch_loss_sum += batch_loss * bsz;
        epoch_samples += bsz;
      } catch (const NumericError& e) {
        restore_snapshot(master, last_finite);
        throw NumericError("train: diverged at epoch " + std::to_string(epoch) + " step " +
                           std::to_string(step) + ": " + e.what());
      }
    }

    const double train_loss_epoch = epoch_loss_sum / static_cast<double>(epoch_samples);
    ValMetrics vm;
    try {
      vm = validate(tm, data.validation, val_subset, opts.val_k,
                    master_rng.child({0x76616cULL}).seed(), opts.threads);
    } catch (const NumericError& e) {
      restore_snapshot(master, last_finite);
      throw NumericError("train: diverged during validation at epoch " + std::to_string(epoch) +
                         ": " + e.what());
    }
    log << epoch << ',' << format_double(train_loss_epoch) << ',' << format_double(vm.cc) << ','
        << format_double(vm.mse) << ',' << format_double(now_s() - t_start) << '\n';

    if (epoch == 1) result.first_epoch_loss = train_loss_epoch;
    result.final_train_loss = train_loss_epoch;
    const double score = std::isnan(vm.cc) ? -train_loss_epoch : vm.cc;
    if (score > best_cc) {
      best_cc = score;
      best = snapshot_params(master);
      result.best_epoch = epoch;
      result.best_val_cc = vm.cc;
    }
  }

  if (opts.epochs > 0) restore_snapshot(master, best);
  for (TrainedModel& rep : replicas) rep.model().sync_from(master);
  tm.epochs_trained = opts.epochs;
  result.log_csv = log.str();
  return result;
}

std::string sidecar_path(const std::string& checkpoint_path) {
  std::filesystem::path p(checkpoint_path);
  p.replace_extension(".json");
  return p.string();
}

void save_trained_model(const TrainedModel& tm, const std::string& checkpoint_path) {
  std::vector<Param> tensors = tm.model().params();
  tensors.push_back({"norm.x_mean", Tensor::scalar(tm.norm.x_mean)});
  tensors.push_back({"norm.x_std", Tensor::scalar(tm.norm.x_std)});
  tensors.push_back({"norm.y_mean", Tensor::scalar(tm.norm.y_mean)});
  tensors.push_back({"norm.y_std", Tensor::scalar(tm.norm.y_std)});
  save_checkpoint(tensors, checkpoint_path);

  json j{{"kind", tm.kind},
         {"n_h", tm.n_h},
         {"n_b", tm.n_b},
         {"epochs_trained", tm.epochs_trained},
         {"seed", tm.seed},
         {"diffusion", diffusion_to_json(tm.diffusion)}};
  if (tm.baseline) j["baseline"] = baseline_to_json(tm.baseline->config());
  write_file(sidecar_path(checkpoint_path), j.dump(2) + "\n");
}

TrainedModel load_trained_model(const std::string& checkpoint_path) {
  json j = json::parse(read_file(sidecar_path(checkpoint_path)));
  check_keys(j, "model sidecar",
             {"kind", "n_h", "n_b", "epochs_trained", "seed", "diffusion", "baseline"});
  std::string kind = j.at("kind").get<std::string>();
  std::optional<BaselineConfig> bc;
  if (j.contains("baseline")) bc = baseline_from_json(j["baseline"], baseline_kind_from_name(kind));
  TrainedModel tm = build_model(kind, j.at("n_h").get<int>(), j.at("n_b").get<int>(),
                                diffusion_from_json(j.at("diffusion")), bc,
                                j.value("seed", std::uint64_t{0}));
  tm.epochs_trained = j.value("epochs_trained", 0);

  std::vector<Param> loaded = load_checkpoint(checkpoint_path);
  tm.norm.x_mean = find_param(loaded, "norm.x_mean").value.value();
  tm.norm.x_std = find_param(loaded, "norm.x_std").value.value();
  tm.norm.y_mean = find_param(loaded, "norm.y_mean").value.value();
  tm.norm.y_std = find_param(loaded, "norm.y_std").value.value();
  std::vector<Param> model_only;
  for (const Param& p : loaded) {
    if (p.name.rfind("norm.", 0) != 0) model_only.push_back(p);
  }
  restore_params(tm.model().params(), model_only);
  return tm;
}

Eigen::MatrixXd predict(const TrainedModel& tm, const BodySurfaceRecord& rec, int k_samples,
                        const Rng& rng) {
  Tensor y_n = normalize(rec.potentials, tm.norm.y_mean, tm.norm.y_std);
  if (tm.is_diffusion()) {
    PosteriorSample ps =
        sample_posterior(y_n, denoiser_fn(*tm.denoiser), tm.sched, tm.n_h, k_samples, rng);
    return denormalize(ps.mean, tm.norm.x_mean, tm.norm.x_std);
  }
  return denormalize(tm.baseline->forward(y_n), tm.norm.x_mean, tm.norm.x_std);
}

MetricsReport evaluate_model(const TrainedModel& tm, const std::vector<BeatPair>& testset,
                             int k_samples, std::uint64_t eval_seed, int threads) {
  if (testset.empty()) throw ConfigError("evaluate: empty test split");
  std::vector<Eigen::MatrixXd> preds(testset.size());
  Rng base(eval_seed);
  parallel_for(
      static_cast<int>(testset.size()),
      [&](int i) {
        preds[static_cast<size_t>(i)] =
            predict(tm, testset[static_cast<size_t>(i)].y, k_samples,
                    base.child({0x62656174ULL, static_cast<std::uint64_t>(i)}));
      },
      threads);

  MetricsAccumulator acc;
  for (size_t i = 0; i < testset.size(); ++i) {
    acc.add(static_cast<int>(i), testset[i].x.heart_id, preds[i], testset[i].x.potentials);
  }
  MetricsReport r;
  acc.fill(r);
  r.method = tm.kind;
  r.param_count = tm.param_count();
  r.epochs_trained = tm.epochs_trained;
  r.k_samples = tm.is_diffusion() ? k_samples : 0;
  r.seed = eval_seed;
  return r;
}

MetricsReport evaluate_classical(const DatasetConfig& gen_cfg, const DatasetSplit& data,
                                 const ClassicalOptions& opts) {
  if (data.test.empty()) throw ConfigError("evaluate_classical: empty test split");
  RegularizationConfig cfg;
  if (opts.method == "tikhonov0") {
    cfg.op = RegularizationConfig::Operator::identity;
  } else if (opts.method == "tikhonov1") {
    cfg.op = RegularizationConfig::Operator::first_difference;
  } else if (opts.method == "tsvd") {
    cfg.truncation_rank = opts.rank.value_or(0);
  } else {
    throw ConfigError("evaluate_classical: unknown method '" + opts.method + "'");
  }

  std::map<int, TransferOperator> ops;
  auto op_for = [&](int heart_id) -> const TransferOperator& {
    auto it = ops.find(heart_id);
    if (it == ops.end()) it = ops.emplace(heart_id, heart_operator(gen_cfg, heart_id)).first;
    return it->second;
  };

  // Selection on the validation split, each beat solved with its own heart's
  // operator; falls back to the train split if validation is empty.
  const std::vector<BeatPair>& sel = data.validation.empty() ? data.train : data.validation;
  std::string chosen;
  if (opts.method == "tsvd") {
    int rank = opts.rank.value_or(0);
    if (rank == 0) {
      double best = std::numeric_limits<double>::infinity();
      int max_rank = std::min(gen_cfg.n_b, gen_cfg.n_h);
      for (int k = 1; k <= max_rank; ++k) {
        RegularizationConfig c2 = cfg;
        c2.truncation_rank = k;
        double sq = 0.0;
        for (const BeatPair& p : sel) {
          EpicardialBeat est = solve_beat(op_for(p.x.heart_id), p.y, c2);
          sq += (est.potentials - p.x.potentials).array().square().sum();
        }
        if (sq < best) {
          best = sq;
          rank = k;
        }
      }
    }
    cfg.truncation_rank = rank;
    chosen = "rank=" + std::to_string(rank);
  } else {
    double lambda = opts.lambda.value_or(-1.0);
    if (lambda < 0.0) {
      const std::vector<double> grid = {1e-3, 1e-2, 1e-1, 1.0};
      double best = std::numeric_limits<double>::infinity();
      lambda = grid.front();
      for (double l : grid) {
        RegularizationConfig c2 = cfg;
        c2.lambda = l;
        double sq = 0.0;
        for (const BeatPair& p : sel) {
          EpicardialBeat est = solve_beat(op_for(p.x.heart_id), p.y, c2);
          sq += (est.potentials - p.x.potentials).array().square().sum();
        }
        if (sq < best) {
          best = sq;
          lambda = l;
        }
      }
    }
    cfg.lambda = lambda;
    chosen = "lambda=" + format_double(lambda);
  }

  MetricsAccumulator acc;
  for (size_t i = 0; i < data.test.size(); ++i) {
    const BeatPair& p = data.test[i];
    EpicardialBeat est = solve_beat(op_for(p.x.heart_id), p.y, cfg);
    acc.add(static_cast<int>(i), p.x.heart_id, est.potentials, p.x.potentials);
  }
  MetricsReport r;
  acc.fill(r);
  r.method = opts.method;
  r.param_count = 0;
  r.config_fingerprint = chosen;
  return r;
}

MetricsReport evaluate_zero_predictor(const std::vector<BeatPair>& testset) {
  if (testset.empty()) throw ConfigError("evaluate_zero_predictor: empty test split");
  MetricsAccumulator acc;
  for (size_t i = 0; i < testset.size(); ++i) {
    Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(testset[i].x.potentials.rows(),
                                                 testset[i].x.potentials.cols());
    acc.add(static_cast<int>(i), testset[i].x.heart_id, zero, testset[i].x.potentials);
  }
  MetricsReport r;
  acc.fill(r);
  r.method = "zero";
  return r;
}

ComparisonConfig parse_comparison_config(const std::string& json_text) {
  json j = json::parse(json_text);
  check_keys(j, "comparison config",
             {"dataset", "gen", "methods", "epochs", "batch_size", "learning_rate", "seed",
              "diffusion", "out_dir", "threads"});
  ComparisonConfig c;
  if (j.contains("dataset") && !j["dataset"].is_null()) {
    c.dataset_path = j["dataset"].get<std::string>();
  }
  if (j.contains("gen")) c.gen = parse_dataset_config(j["gen"].dump());
  if (j.contains("methods")) {
    c.methods.clear();
    for (const auto& m : j["methods"]) c.methods.push_back(m.get<std::string>());
  }
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.seed = j.value("seed", c.seed);
  if (j.contains("diffusion")) c.diffusion = diffusion_from_json(j["diffusion"]);
  c.out_dir = j.value("out_dir", c.out_dir);
  c.threads = j.value("threads", c.threads);
  for (const std::string& m : c.methods) {
    if (!is_learned(m) && !is_classical(m)) {
      throw ConfigError("comparison config: unknown method '" + m + "'");
    }
  }
  return c;
}

std::string comparison_config_json(const ComparisonConfig& c) {
  json j{{"gen", json::parse(dataset_config_json(c.gen))},
         {"methods", c.methods},
         {"epochs", c.epochs},
         {"batch_size", c.batch_size},
         {"learning_rate", c.learning_rate},
         {"seed", c.seed},
         {"diffusion", diffusion_to_json(c.diffusion)},
         {"out_dir", c.out_dir},
         {"threads", c.threads}};
  if (c.dataset_path) j["dataset"] = *c.dataset_path;
  return j.dump(2);
}

ComparisonResult run_comparison(const ComparisonConfig& cfg) {
  DatasetSplit data = cfg.dataset_path ? load_dataset(*cfg.dataset_path) : make_dataset(cfg.gen);
  audit_split(data);
  if (data.test.empty()) throw ConfigError("run_comparison: dataset has no test split");
  const int n_h = static_cast<int>(data.test[0].x.potentials.rows());
  const int n_b = static_cast<int>(data.test[0].y.potentials.rows());

  std::vector<std::string> methods = cfg.methods;
  std::sort(methods.begin(), methods.end());
  methods.erase(std::unique(methods.begin(), methods.end()), methods.end());

  // Capacity matching across the deterministic baseline trio.
  {
    std::vector<long> counts;
    for (const std::string& m : methods) {
      if (is_learned(m) && m != "diffusion") {
        counts.push_back(
            build_model(m, n_h, n_b, cfg.diffusion, std::nullopt, cfg.seed).param_count());
      }
    }
    check_capacity_match(counts);
  }

  const std::string fingerprint = config_fingerprint(comparison_config_json(cfg));
  const std::uint64_t eval_seed = Rng(cfg.seed).child({0x6576616cULL}).seed();
  const std::uint64_t checksum_before = dataset_checksum(data);

  if (!cfg.out_dir.empty()) std::filesystem::create_directories(cfg.out_dir);

  ComparisonResult result;
  result.split_checksum = checksum_before;
  std::ostringstream txt;
  txt << "method          cc        mse        mae        params   wall_s   status\n";

  for (const std::string& m : methods) {
    const double t0 = now_s();
    MetricsReport row;
    bool ok = true;
    std::string error;
    try {
      const std::uint64_t checksum_now = dataset_checksum(data);
      if (checksum_now != checksum_before) {
        throw ContractError("run_comparison: dataset changed between methods");
      }
      if (is_learned(m)) {
        TrainedModel tm = build_model(m, n_h, n_b, cfg.diffusion, std::nullopt, cfg.seed);
        TrainOptions topts;
        topts.epochs = cfg.epochs;
        topts.batch_size = cfg.batch_size;
        topts.learning_rate = cfg.learning_rate;
        topts.seed = cfg.seed;
        topts.threads = cfg.threads;
        TrainResult tr = train_model(tm, data, topts);
        if (!cfg.out_dir.empty()) {
          write_file(cfg.out_dir + "/train_log_" + m + ".csv", tr.log_csv);
          save_trained_model(tm, cfg.out_dir + "/checkpoint_" + m + ".ecgi");
        }
        row = evaluate_model(tm, data.test, m == "diffusion" ? cfg.diffusion.sample_count : 0,
                             eval_seed, cfg.threads);
      } else {
        ClassicalOptions copts;
        copts.method = m;
        row = evaluate_classical(cfg.gen, data, copts);
      }
    } catch (const std::exception& e) {
      ok = false;
      error = e.what();
      row = MetricsReport{};
      row.method = m;
      row.temporal_cc = kNan;
      row.mse = kNan;
      row.mae = kNan;
      row.cc_defined = false;
      result.all_ok = false;
    }
    row.wall_clock_s = now_s() - t0;
    row.split_checksum = hex64(checksum_before);
    if (row.config_fingerprint.empty()) row.config_fingerprint = fingerprint;
    row.seed = eval_seed;
    result.rows.push_back(row);

    char line[256];
    std::snprintf(line, sizeof(line), "%-15s %-9.4f %-10.4f %-10.4f %-8ld %-8.1f %s\n",
                  m.c_str(), row.temporal_cc, row.mse, row.mae, row.param_count, row.wall_clock_s,
                  ok ? "ok" : ("FAILED: " + error).c_str());
    txt << line;
  }

  std::ostringstream csv;
  csv << report_csv_header() << '\n';
  for (const MetricsReport& r : result.rows) csv << report_csv_row(r) << '\n';
  result.csv = csv.str();
  txt << "\nsplit_checksum=" << hex64(checksum_before) << " eval_seed=" << eval_seed
      << "\nschedule=sqrt_linear (beta quadratic in t); mse/mae in millivolt units\n";
  result.txt = txt.str();

  if (!cfg.out_dir.empty()) {
    write_file(cfg.out_dir + "/comparison.csv", result.csv);
    write_file(cfg.out_dir + "/comparison.txt", result.txt);
  }
  return result;
}

TraceExport export_traces(const TrainedModel& tm, const std::vector<BeatPair>& testset,
                          int beat_index, int k_top, const std::vector<int>& explicit_electrodes,
                          std::uint64_t eval_seed) {
  if (beat_index < 0 || beat_index >= static_cast<int>(testset.size())) {
    throw ContractError("export_traces: beat index " + std::to_string(beat_index) +
                        " out of range [0, " + std::to_string(testset.size()) + ")");
  }
  if (k_top < 0) throw ContractError("export_traces: k must be non-negative");
  const BeatPair& pair = testset[static_cast<size_t>(beat_index)];
  const Eigen::MatrixXd& truth = pair.x.potentials;
  const int n_h = static_cast<int>(truth.rows());
  const int t_len = static_cast<int>(truth.cols());
  for (int e : explicit_electrodes) {
    if (e < 0 || e >= n_h) {
      throw ContractError("export_traces: electrode " + std::to_string(e) + " out of range [0, " +
                          std::to_string(n_h) + ")");
    }
  }

  Rng rng = Rng(eval_seed).child({0x62656174ULL, static_cast<std::uint64_t>(beat_index)});
  Eigen::MatrixXd mean_pred;
  Eigen::MatrixXd sd_pred = Eigen::MatrixXd::Zero(n_h, t_len);
  if (tm.is_diffusion()) {
    Tensor y_n = normalize(pair.y.potentials, tm.norm.y_mean, tm.norm.y_std);
    PosteriorSample ps = sample_posterior(y_n, denoiser_fn(*tm.denoiser), tm.sched, tm.n_h,
                                          tm.diffusion.sample_count, rng);
    mean_pred = denormalize(ps.mean, tm.norm.x_mean, tm.norm.x_std);
    const int k = static_cast<int>(ps.samples.size());
    if (k > 1) {
      Eigen::ArrayXXd sq = Eigen::ArrayXXd::Zero(n_h, t_len);
      Eigen::ArrayXXd mu = Eigen::ArrayXXd::Zero(n_h, t_len);
      for (const Tensor& s : ps.samples) {
        Eigen::ArrayXXd d = denormalize(s, tm.norm.x_mean, tm.norm.x_std).array();
        mu += d;
        sq += d.square();
      }
      mu /= k;
      sd_pred = ((sq / k - mu.square()).max(0.0)).sqrt().matrix();
    }
  } else {
    mean_pred = predict(tm, pair.y, 1, rng);
  }

  TraceSelection sel;
  if (k_top > 0) {
    CcResult cc = temporal_cc(mean_pred, truth);
    std::vector<std::pair<double, int>> by_cc;
    for (int i = 0; i < n_h; ++i) {
      if (!std::isnan(cc.per_electrode[static_cast<size_t>(i)])) {
        by_cc.push_back({-cc.per_electrode[static_cast<size_t>(i)], i});
      }
    }
    std::sort(by_cc.begin(), by_cc.end());
    for (int i = 0; i < std::min<int>(k_top, static_cast<int>(by_cc.size())); ++i) {
      sel.by_cc.push_back(by_cc[static_cast<size_t>(i)].second);
    }
    std::vector<std::pair<double, int>> by_mse;
    for (int i = 0; i < n_h; ++i) {
      double m = (mean_pred.row(i) - truth.row(i)).array().square().mean();
      by_mse.push_back({m, i});
    }
    std::sort(by_mse.begin(), by_mse.end());
    for (int i = 0; i < std::min<int>(k_top, n_h); ++i) {
      sel.by_mse.push_back(by_mse[static_cast<size_t>(i)].second);
    }
  }

  std::ostringstream csv;
  csv << "criterion,electrode,t,truth_mv,pred_mean_mv,pred_sd_mv\n";
  auto emit = [&](const char* criterion, int e) {
    for (int t = 0; t < t_len; ++t) {
      csv << criterion << ',' << e << ',' << t << ',' << format_double(truth(e, t)) << ','
          << format_double(mean_pred(e, t)) << ',' << format_double(sd_pred(e, t)) << '\n';
    }
  };
  for (int e : sel.by_cc) emit("cc", e);
  for (int e : sel.by_mse) emit("mse", e);
  for (int e : explicit_electrodes) emit("explicit", e);

  TraceExport out;
  out.csv = csv.str();
  out.selection = sel;
  return out;
}

}  // namespace ecgi
