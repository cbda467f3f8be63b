#pragma once

#include <memory>
#include <string>
#include <vector>

#include "ecgi/adam.hpp"
#include "ecgi/rng.hpp"
#include "ecgi/tensor.hpp"

namespace ecgi {

struct TransformerConfig {
  int d_model = 64;
  int n_heads = 4;
  int n_layers = 2;
  int d_ff = 128;
};

enum class BaselineKind { cnn1d, lstm, transformer };

std::string baseline_kind_name(BaselineKind kind);
BaselineKind baseline_kind_from_name(const std::string& name);

struct BaselineConfig {
  BaselineKind kind = BaselineKind::cnn1d;
  int hidden = 100;  // channels (CNN), state width (LSTM), d_model (transformer)
  int depth = 3;     // conv layers / encoder layers; unused by the LSTM
  int kernel = 5;    // CNN only, odd
};

// Widths tuned so the three baselines land within the capacity-matching
// tolerance of each other at desk-scale signal dimensions.
BaselineConfig default_baseline_config(BaselineKind kind);

class Model {
 public:
  virtual ~Model() = default;
  std::vector<Param>& params() { return params_; }
  const std::vector<Param>& params() const { return params_; }
  long param_count() const;

  // Copies parameter values from a same-architecture model, in place.
  void sync_from(const Model& other);

  // Registers a trainable tensor under a hierarchical name.
  Tensor add_param(const std::string& name, Tensor t);

 protected:
  std::vector<Param> params_;
};

namespace detail {

struct EncoderLayer {
  Tensor ln1_g, ln1_b, ln2_g, ln2_b;
  std::vector<Tensor> wq, wk, wv;  // one d_model x d_head block per head
  Tensor wo, bo, w1, b1, w2, b2;
};

// Pre-norm self-attention encoder over T x d_model token matrices, with a
// final layer norm.
struct Encoder {
  TransformerConfig cfg;
  std::vector<EncoderLayer> layers;
  Tensor final_g, final_b;

  void build(Model& owner, const std::string& prefix, Rng& rng);
  Tensor forward(Tensor h) const;
};

}  // namespace detail

// Conditional noise predictor: tokens are per-time-sample concatenations of
// the noisy epicardial column and the observed body-surface column, with
// sinusoidal positions and a projected sinusoidal timestep embedding added.
// The output head starts at zero, so an untrained model predicts no noise.
class TransformerDenoiser : public Model {
 public:
  TransformerDenoiser(int n_h, int n_b, const TransformerConfig& cfg, Rng rng);

  Tensor forward(const Tensor& x_t, int t, const Tensor& y) const;

  int n_h() const { return n_h_; }
  int n_b() const { return n_b_; }
  const TransformerConfig& config() const { return cfg_; }

 private:
  int n_h_, n_b_;
  TransformerConfig cfg_;
  Tensor w_in_, b_in_, wt1_, bt1_, wt2_, bt2_, w_head_, b_head_;
  detail::Encoder encoder_;
};

// Deterministic y -> x regressors trained with mean squared error.
class Baseline : public Model {
 public:
  virtual Tensor forward(const Tensor& y) const = 0;
  const BaselineConfig& config() const { return cfg_; }
  int n_h() const { return n_h_; }
  int n_b() const { return n_b_; }

 protected:
  Baseline(int n_h, int n_b, const BaselineConfig& cfg) : n_h_(n_h), n_b_(n_b), cfg_(cfg) {}
  int n_h_, n_b_;
  BaselineConfig cfg_;
};

std::unique_ptr<Baseline> make_baseline(int n_h, int n_b, const BaselineConfig& cfg, Rng rng);

// Parameter counts of the three baselines must stay within +-25% of each
// other; throws ConfigError otherwise.
void check_capacity_match(const std::vector<long>& counts);

}  // namespace ecgi
