#include "ecgi/models.hpp"

#include <algorithm>
#include <cmath>

#include "ecgi/errors.hpp"

namespace ecgi {

namespace {

Tensor glorot(int rows, int cols, Rng& rng) {
  Tensor t = Tensor::randn({rows, cols}, rng);
  return Tensor({rows, cols}, t.data() / std::sqrt(static_cast<double>(rows)));
}

}  // namespace

std::string baseline_kind_name(BaselineKind kind) {
  switch (kind) {
    case BaselineKind::cnn1d: return "cnn1d";
    case BaselineKind::lstm: return "lstm";
    case BaselineKind::transformer: return "transformer";
  }
  throw ContractError("baseline_kind_name: unknown kind");
}

BaselineKind baseline_kind_from_name(const std::string& name) {
  if (name == "cnn1d") return BaselineKind::cnn1d;
  if (name == "lstm") return BaselineKind::lstm;
  if (name == "transformer") return BaselineKind::transformer;
  throw ConfigError("unknown baseline kind '" + name + "'");
}

BaselineConfig default_baseline_config(BaselineKind kind) {
  switch (kind) {
    case BaselineKind::cnn1d: return {kind, 100, 3, 5};
    case BaselineKind::lstm: return {kind, 125, 1, 0};
    case BaselineKind::transformer: return {kind, 64, 2, 0};
  }
  throw ContractError("default_baseline_config: unknown kind");
}

long Model::param_count() const {
  long n = 0;
  for (const Param& p : params_) n += p.value.size();
  return n;
}

void Model::sync_from(const Model& other) {
  if (params_.size() != other.params_.size()) {
    throw ContractError("sync_from: parameter lists differ in length");
  }
  for (size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name != other.params_[i].name ||
        params_[i].value.shape() != other.params_[i].value.shape()) {
      throw ContractError("sync_from: parameter mismatch at '" + params_[i].name + "'");
    }
    params_[i].value.mutable_data() = other.params_[i].value.data();
  }
}

Tensor Model::add_param(const std::string& name, Tensor t) {
  t.set_requires_grad(true);
  params_.push_back({name, t});
  return t;
}

namespace detail {

void Encoder::build(Model& owner, const std::string& prefix, Rng& rng) {
  if (cfg.d_model % cfg.n_heads != 0) {
    throw ConfigError("encoder: d_model must be divisible by n_heads");
  }
  const int d = cfg.d_model, dh = cfg.d_model / cfg.n_heads;
  layers.resize(static_cast<size_t>(cfg.n_layers));
  for (int l = 0; l < cfg.n_layers; ++l) {
    EncoderLayer& layer = layers[static_cast<size_t>(l)];
    std::string base = prefix + ".layer" + std::to_string(l);
    layer.ln1_g = owner.add_param(base + ".ln1.gain", Tensor::full({d}, 1.0));
    layer.ln1_b = owner.add_param(base + ".ln1.bias", Tensor::zeros({d}));
    for (int h = 0; h < cfg.n_heads; ++h) {
      layer.wq.push_back(owner.add_param(base + ".attn.wq" + std::to_string(h), glorot(d, dh, rng)));
      layer.wk.push_back(owner.add_param(base + ".attn.wk" + std::to_string(h), glorot(d, dh, rng)));
      layer.wv.push_back(owner.add_param(base + ".attn.wv" + std::to_string(h), glorot(d, dh, rng)));
    }
    layer.wo = owner.add_param(base + ".attn.wo", glorot(d, d, rng));
    layer.bo = owner.add_param(base + ".attn.bo", Tensor::zeros({d}));
    layer.ln2_g = owner.add_param(base + ".ln2.gain", Tensor::full({d}, 1.0));
    layer.ln2_b = owner.add_param(base + ".ln2.bias", Tensor::zeros({d}));
    layer.w1 = owner.add_param(base + ".ff.w1", glorot(d, cfg.d_ff, rng));
    layer.b1 = owner.add_param(base + ".ff.b1", Tensor::zeros({cfg.d_ff}));
    layer.w2 = owner.add_param(base + ".ff.w2", glorot(cfg.d_ff, d, rng));
    layer.b2 = owner.add_param(base + ".ff.b2", Tensor::zeros({d}));
  }
  final_g = owner.add_param(prefix + ".final.gain", Tensor::full({d}, 1.0));
  final_b = owner.add_param(prefix + ".final.bias", Tensor::zeros({d}));
}

Tensor Encoder::forward(Tensor h) const {
  const int dh = cfg.d_model / cfg.n_heads;
  const double att_scale = 1.0 / std::sqrt(static_cast<double>(dh));
  for (const EncoderLayer& layer : layers) {
    Tensor a = add_row(mul_row(layer_norm(h), layer.ln1_g), layer.ln1_b);
    std::vector<Tensor> heads;
    heads.reserve(layer.wq.size());
    for (size_t hd = 0; hd < layer.wq.size(); ++hd) {
      Tensor q = matmul(a, layer.wq[hd]);
      Tensor k = matmul(a, layer.wk[hd]);
      Tensor v = matmul(a, layer.wv[hd]);
      Tensor scores = scale(matmul(q, transpose(k)), att_scale);
      heads.push_back(matmul(softmax(scores, 1), v));
    }
    Tensor attn = add_row(matmul(concat(heads, 1), layer.wo), layer.bo);
    h = add(h, attn);

    Tensor f = add_row(mul_row(layer_norm(h), layer.ln2_g), layer.ln2_b);
    Tensor ff = add_row(matmul(gelu(add_row(matmul(f, layer.w1), layer.b1)), layer.w2), layer.b2);
    h = add(h, ff);
  }
  return add_row(mul_row(layer_norm(h), final_g), final_b);
}

}  // namespace detail

// ---- TransformerDenoiser ----

TransformerDenoiser::TransformerDenoiser(int n_h, int n_b, const TransformerConfig& cfg, Rng rng)
    : n_h_(n_h), n_b_(n_b), cfg_(cfg) {
  const int d = cfg.d_model;
  w_in_ = add_param("in.w", glorot(n_h + n_b, d, rng));
  b_in_ = add_param("in.b", Tensor::zeros({d}));
  wt1_ = add_param("time.w1", glorot(d, d, rng));
  bt1_ = add_param("time.b1", Tensor::zeros({d}));
  wt2_ = add_param("time.w2", glorot(d, d, rng));
  bt2_ = add_param("time.b2", Tensor::zeros({d}));
  encoder_.cfg = cfg;
  encoder_.build(*this, "enc", rng);
  // Zero head: the untrained model predicts zero noise.
  w_head_ = add_param("head.w", Tensor::zeros({d, n_h}));
  b_head_ = add_param("head.b", Tensor::zeros({n_h}));
}

Tensor TransformerDenoiser::forward(const Tensor& x_t, int t, const Tensor& y) const {
  if (x_t.rank() != 2 || x_t.rows() != n_h_) {
    throw DimensionError("denoiser: x_t has shape " + shape_str(x_t.shape()) + ", expected [" +
                         std::to_string(n_h_) + " x T]");
  }
  if (y.rank() != 2 || y.rows() != n_b_ || y.cols() != x_t.cols()) {
    throw DimensionError("denoiser: y has shape " + shape_str(y.shape()) + ", expected [" +
                         std::to_string(n_b_) + " x " + std::to_string(x_t.cols()) + "]");
  }
  if (t < 1) throw ContractError("denoiser: timestep " + std::to_string(t) + " out of range");

  const int t_len = x_t.cols();
  const int d = cfg_.d_model;

  Tensor tokens = transpose(concat({x_t, y}, 0));           // T x (n_h + n_b)
  Tensor h = add_row(matmul(tokens, w_in_), b_in_);          // T x d
  h = add(h, position_encoding(t_len, d));

  Tensor temb = reshape(sinusoidal_embedding(static_cast<double>(t), d), {1, d});
  temb = gelu(add_row(matmul(temb, wt1_), bt1_));
  temb = add_row(matmul(temb, wt2_), bt2_);
  h = add_row(h, reshape(temb, {d}));

  h = encoder_.forward(h);
  Tensor out = add_row(matmul(h, w_head_), b_head_);         // T x n_h
  return transpose(out);
}

// ---- baselines ----

namespace {

class Cnn1dBaseline : public Baseline {
 public:
  Cnn1dBaseline(int n_h, int n_b, const BaselineConfig& cfg, Rng& rng) : Baseline(n_h, n_b, cfg) {
    if (cfg.kernel < 1 || cfg.kernel % 2 == 0) {
      throw ConfigError("cnn1d: kernel width must be odd and positive");
    }
    if (cfg.depth < 1) throw ConfigError("cnn1d: depth must be at least 1");
    int c_in = n_b;
    for (int l = 0; l < cfg.depth; ++l) {
      int c_out = l == cfg.depth - 1 ? n_h : cfg.hidden;
      std::string base = "conv" + std::to_string(l);
      weights_.push_back(add_param(base + ".w", glorot(c_out, c_in * cfg.kernel, rng)));
      biases_.push_back(add_param(base + ".b", Tensor::zeros({c_out})));
      c_in = c_out;
    }
  }

  Tensor forward(const Tensor& y) const override {
    Tensor h = y;
    for (size_t l = 0; l < weights_.size(); ++l) {
      Tensor z = add_col(matmul(weights_[l], im2col1d(h, cfg_.kernel)), biases_[l]);
      h = l + 1 < weights_.size() ? relu(z) : z;
    }
    return h;
  }

 private:
  std::vector<Tensor> weights_, biases_;
};

class LstmBaseline : public Baseline {
 public:
  LstmBaseline(int n_h, int n_b, const BaselineConfig& cfg, Rng& rng) : Baseline(n_h, n_b, cfg) {
    const int hid = cfg.hidden;
    const char* gates[4] = {"i", "f", "g", "o"};
    for (int g = 0; g < 4; ++g) {
      std::string base = std::string("gate_") + gates[g];
      wx_[g] = add_param(base + ".wx", glorot(hid, n_b, rng));
      wh_[g] = add_param(base + ".wh", glorot(hid, hid, rng));
      // Forget gate biased open so early training keeps long-range state.
      b_[g] = add_param(base + ".b", g == 1 ? Tensor::full({hid}, 1.0) : Tensor::zeros({hid}));
    }
    w_ro_ = add_param("readout.w", glorot(n_h, hid, rng));
    b_ro_ = add_param("readout.b", Tensor::zeros({n_h}));
  }

  Tensor forward(const Tensor& y) const override {
    const int t_len = y.cols();
    const int hid = cfg_.hidden;

    // Input columns are constants; slice them outside the recorded graph.
    std::vector<Tensor> x_cols;
    x_cols.reserve(static_cast<size_t>(t_len));
    Eigen::MatrixXd ym = y.to_matrix();
    for (int t = 0; t < t_len; ++t) x_cols.push_back(Tensor::from_matrix(ym.col(t)));

    Tensor h = Tensor::zeros({hid, 1});
    Tensor c = Tensor::zeros({hid, 1});
    std::vector<Tensor> out_cols;
    out_cols.reserve(static_cast<size_t>(t_len));
    for (int t = 0; t < t_len; ++t) {
      Tensor gi = sigmoid(gate(0, x_cols[static_cast<size_t>(t)], h));
      Tensor gf = sigmoid(gate(1, x_cols[static_cast<size_t>(t)], h));
      Tensor gg = ecgi::tanh(gate(2, x_cols[static_cast<size_t>(t)], h));
      Tensor go = sigmoid(gate(3, x_cols[static_cast<size_t>(t)], h));
      c = add(mul(gf, c), mul(gi, gg));
      h = mul(go, ecgi::tanh(c));
      out_cols.push_back(add_col(matmul(w_ro_, h), b_ro_));
    }
    return concat(out_cols, 1);
  }

 private:
  Tensor gate(int g, const Tensor& x, const Tensor& h) const {
    return add_col(add(matmul(wx_[g], x), matmul(wh_[g], h)), b_[g]);
  }
  Tensor wx_[4], wh_[4], b_[4];
  Tensor w_ro_, b_ro_;
};

class TransformerBaseline : public Baseline {
 public:
  TransformerBaseline(int n_h, int n_b, const BaselineConfig& cfg, Rng& rng)
      : Baseline(n_h, n_b, cfg) {
    encoder_.cfg = TransformerConfig{cfg.hidden, 4, cfg.depth, 2 * cfg.hidden};
    const int d = encoder_.cfg.d_model;
    w_in_ = add_param("in.w", glorot(n_b, d, rng));
    b_in_ = add_param("in.b", Tensor::zeros({d}));
    encoder_.build(*this, "enc", rng);
    w_head_ = add_param("head.w", glorot(d, n_h, rng));
    b_head_ = add_param("head.b", Tensor::zeros({n_h}));
  }

  Tensor forward(const Tensor& y) const override {
    const int d = encoder_.cfg.d_model;
    Tensor h = add_row(matmul(transpose(y), w_in_), b_in_);
    h = add(h, position_encoding(y.cols(), d));
    h = encoder_.forward(h);
    return transpose(add_row(matmul(h, w_head_), b_head_));
  }

 private:
  Tensor w_in_, b_in_, w_head_, b_head_;
  detail::Encoder encoder_;
};

}  // namespace

std::unique_ptr<Baseline> make_baseline(int n_h, int n_b, const BaselineConfig& cfg, Rng rng) {
  switch (cfg.kind) {
    case BaselineKind::cnn1d: return std::make_unique<Cnn1dBaseline>(n_h, n_b, cfg, rng);
    case BaselineKind::lstm: return std::make_unique<LstmBaseline>(n_h, n_b, cfg, rng);
    case BaselineKind::transformer:
      return std::make_unique<TransformerBaseline>(n_h, n_b, cfg, rng);
  }
  throw ContractError("make_baseline: unknown kind");
}

void check_capacity_match(const std::vector<long>& counts) {
  if (counts.size() < 2) return;
  long lo = *std::min_element(counts.begin(), counts.end());
  long hi = *std::max_element(counts.begin(), counts.end());
  if (lo <= 0 || static_cast<double>(hi) / static_cast<double>(lo) > 1.25) {
    std::string msg = "baseline capacities not matched within 25%:";
    for (long c : counts) msg += " " + std::to_string(c);
    throw ConfigError(msg);
  }
}

}  // namespace ecgi
