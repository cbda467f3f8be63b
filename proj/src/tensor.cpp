#include "ecgi/tensor.hpp"

#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace ecgi {

namespace {

thread_local Tape* g_active_tape = nullptr;
std::atomic<std::uint64_t> g_tape_counter{1};

void check_finite(const char* op, const Arr& a) {
  if (!a.allFinite()) {
    throw NumericError(std::string(op) + ": non-finite result");
  }
}

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

void check_rank2(const char* op, const Tensor& a) {
  if (a.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected rank-2 tensor, got " + shape_str(a.shape()));
  }
}

ConstMatMap mat(const Tensor& t) { return ConstMatMap(t.data().data(), t.rows(), t.cols()); }

ConstMatMap mat(const Arr& a, int r, int c) { return ConstMatMap(a.data(), r, c); }

// Records `out` on the active tape when any input participates. Only
// participating inputs are retained on the node: constants stay untouched,
// which keeps shared dataset tensors safe under multi-threaded evaluation.
void record(const Tensor& out, std::initializer_list<Tensor> inputs,
            std::function<void(const Arr&)> pull) {
  Tape* tape = Tape::active();
  if (tape == nullptr) return;
  std::vector<std::shared_ptr<detail::TensorImpl>> ins;
  for (const Tensor& in : inputs) {
    if (tracks_grad(in)) ins.push_back(in.impl());
  }
  if (ins.empty()) return;
  tape->record(out, std::move(ins), std::move(pull));
}

}  // namespace

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << 'x';
    os << s[i];
  }
  os << ']';
  return os.str();
}

long shape_size(const Shape& s) {
  long n = 1;
  for (int d : s) n *= d;
  return n;
}

// ---- Tensor ----

Tensor::Tensor(Shape shape, Arr data) : impl_(std::make_shared<detail::TensorImpl>()) {
  if (shape_size(shape) != data.size()) {
    throw DimensionError("tensor: shape " + shape_str(shape) + " does not match buffer length " +
                         std::to_string(data.size()));
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
}

Tensor Tensor::zeros(const Shape& shape) { return Tensor(shape, Arr::Zero(shape_size(shape))); }

Tensor Tensor::full(const Shape& shape, double value) {
  return Tensor(shape, Arr::Constant(shape_size(shape), value));
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{1}, Arr::Constant(1, value)); }

Tensor Tensor::randn(const Shape& shape, Rng& rng) {
  Arr a(shape_size(shape));
  for (long i = 0; i < a.size(); ++i) a[i] = rng.normal();
  return Tensor(shape, std::move(a));
}

Tensor Tensor::from_vector(const std::vector<double>& v) {
  Arr a = Eigen::Map<const Arr>(v.data(), static_cast<long>(v.size()));
  return Tensor(Shape{static_cast<int>(v.size())}, std::move(a));
}

Tensor Tensor::from_matrix(const Eigen::MatrixXd& m) {
  RowMat rm = m;
  Arr a = Eigen::Map<const Arr>(rm.data(), rm.size());
  return Tensor(Shape{static_cast<int>(m.rows()), static_cast<int>(m.cols())}, std::move(a));
}

int Tensor::rows() const {
  check_rank2("rows", *this);
  return impl_->shape[0];
}

int Tensor::cols() const {
  check_rank2("cols", *this);
  return impl_->shape[1];
}

double Tensor::value() const {
  if (size() != 1) {
    throw ContractError("value: tensor of shape " + shape_str(shape()) + " is not scalar");
  }
  return impl_->data[0];
}

double Tensor::at(std::initializer_list<int> idx) const {
  if (static_cast<int>(idx.size()) != rank()) {
    throw DimensionError("at: index rank mismatch for shape " + shape_str(shape()));
  }
  long flat = 0;
  int i = 0;
  for (int v : idx) {
    flat = flat * impl_->shape[static_cast<size_t>(i)] + v;
    ++i;
  }
  return impl_->data[flat];
}

ConstMatMap Tensor::matrix() const {
  check_rank2("matrix", *this);
  return ConstMatMap(impl_->data.data(), impl_->shape[0], impl_->shape[1]);
}

Eigen::MatrixXd Tensor::to_matrix() const { return matrix(); }

Tensor& Tensor::set_requires_grad(bool on) {
  impl_->requires_grad = on;
  return *this;
}

Tensor Tensor::grad() const {
  if (has_grad()) return Tensor(impl_->shape, impl_->grad);
  return Tensor::zeros(impl_->shape);
}

const Arr& Tensor::grad_array() const {
  static const Arr empty;
  return has_grad() ? impl_->grad : empty;
}

Tensor Tensor::detach() const { return Tensor(impl_->shape, impl_->data); }

// ---- Tape ----

Tape::Tape() : id_(g_tape_counter.fetch_add(1)) {
  if (g_active_tape != nullptr) {
    throw ContractError("tape: tapes do not nest within a thread");
  }
  g_active_tape = this;
}

Tape::~Tape() {
  if (g_active_tape == this) g_active_tape = nullptr;
}

Tape* Tape::active() { return g_active_tape; }

bool tracks_grad(const Tensor& t) {
  Tape* tape = Tape::active();
  if (tape == nullptr) return false;
  const auto& impl = *t.impl();
  return impl.requires_grad || (impl.node >= 0 && impl.tape_id == tape->id());
}

void Tape::record(const Tensor& out, std::vector<std::shared_ptr<detail::TensorImpl>> inputs,
                  std::function<void(const Arr&)> pull) {
  if (consumed_) {
    throw ContractError("tape: recording after backward");
  }
  out.impl()->node = static_cast<int>(nodes_.size());
  out.impl()->tape_id = id_;
  nodes_.push_back(Node{out.impl(), std::move(inputs), std::move(pull)});
}

void Tape::backward(const Tensor& loss) {
  if (consumed_) {
    throw ContractError("tape: backward on a consumed tape");
  }
  if (loss.size() != 1) {
    throw ContractError("backward: loss has shape " + shape_str(loss.shape()) +
                        ", expected a scalar");
  }
  consumed_ = true;

  // Zero gradients for every tensor touched by this tape.
  std::unordered_set<detail::TensorImpl*> seen;
  auto reset = [&seen](const std::shared_ptr<detail::TensorImpl>& p) {
    if (seen.insert(p.get()).second) {
      p->grad = Arr::Zero(p->data.size());
    }
  };
  for (const Node& n : nodes_) {
    reset(n.out);
    for (const auto& in : n.inputs) reset(in);
  }

  // A constant loss was never recorded: every gradient stays zero.
  const auto& li = *loss.impl();
  if (li.node < 0 || li.tape_id != id_) {
    if (seen.find(loss.impl().get()) == seen.end()) {
      loss.impl()->grad = Arr::Zero(1);
    }
    return;
  }

  loss.impl()->grad = Arr::Constant(1, 1.0);
  for (size_t i = nodes_.size(); i-- > 0;) {
    Node& n = nodes_[i];
    if (static_cast<int>(i) > li.node) continue;  // after the loss: no influence
    n.pull(n.out->grad);
    n.pull = nullptr;  // each node is visited exactly once
  }
}

void backward(const Tensor& loss, Tape& tape) { tape.backward(loss); }

// ---- operations ----

namespace {

Tensor finite_result(const char* op, Shape shape, Arr data) {
  check_finite(op, data);
  return Tensor(std::move(shape), std::move(data));
}

bool needs(const Tensor& t) { return tracks_grad(t); }

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape("add", a, b);
  Tensor out = finite_result("add", a.shape(), a.data() + b.data());
  if (Tape::active() && (needs(a) || needs(b))) {
    bool na = needs(a), nb = needs(b);
    auto ai = a.impl(), bi = b.impl();
    record(out, {a, b}, [ai, bi, na, nb](const Arr& g) {
      if (na) ai->grad += g;
      if (nb) bi->grad += g;
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape("sub", a, b);
  Tensor out = finite_result("sub", a.shape(), a.data() - b.data());
  if (Tape::active() && (needs(a) || needs(b))) {
    bool na = needs(a), nb = needs(b);
    auto ai = a.impl(), bi = b.impl();
    record(out, {a, b}, [ai, bi, na, nb](const Arr& g) {
      if (na) ai->grad += g;
      if (nb) bi->grad -= g;
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape("mul", a, b);
  Tensor out = finite_result("mul", a.shape(), a.data() * b.data());
  if (Tape::active() && (needs(a) || needs(b))) {
    bool na = needs(a), nb = needs(b);
    auto ai = a.impl(), bi = b.impl();
    record(out, {a, b}, [ai, bi, na, nb](const Arr& g) {
      if (na) ai->grad += g * bi->data;
      if (nb) bi->grad += g * ai->data;
    });
  }
  return out;
}

Tensor scale(const Tensor& a, double c) {
  Tensor out = finite_result("scale", a.shape(), a.data() * c);
  if (needs(a)) {
    auto ai = a.impl();
    record(out, {a}, [ai, c](const Arr& g) { ai->grad += g * c; });
  }
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_rank2("matmul", a);
  check_rank2("matmul", b);
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
  const int m = a.rows(), k = a.cols(), n = b.cols();
  RowMat prod = mat(a) * mat(b);
  Tensor out = finite_result("matmul", Shape{m, n}, Eigen::Map<const Arr>(prod.data(), prod.size()));
  if (Tape::active() && (needs(a) || needs(b))) {
    bool na = needs(a), nb = needs(b);
    auto ai = a.impl(), bi = b.impl();
    record(out, {a, b}, [ai, bi, na, nb, m, k, n](const Arr& g) {
      ConstMatMap gm(g.data(), m, n);
      if (na) {
        MatMap ga(ai->grad.data(), m, k);
        ga.noalias() += gm * mat(bi->data, k, n).transpose();
      }
      if (nb) {
        MatMap gb(bi->grad.data(), k, n);
        gb.noalias() += mat(ai->data, m, k).transpose() * gm;
      }
    });
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  check_rank2("transpose", a);
  const int r = a.rows(), c = a.cols();
  RowMat t = mat(a).transpose();
  Tensor out(Shape{c, r}, Eigen::Map<const Arr>(t.data(), t.size()));
  if (needs(a)) {
    auto ai = a.impl();
    record(out, {a}, [ai, r, c](const Arr& g) {
      MatMap ga(ai->grad.data(), r, c);
      ga += mat(g, c, r).transpose();
    });
  }
  return out;
}

Tensor reshape(const Tensor& a, const Shape& shape) {
  if (shape_size(shape) != a.size()) {
    throw DimensionError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  Tensor out(shape, a.data());
  if (needs(a)) {
    auto ai = a.impl();
    record(out, {a}, [ai](const Arr& g) { ai->grad += g; });
  }
  return out;
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw ContractError("concat: no inputs");
  if (axis != 0 && axis != 1) throw ContractError("concat: axis must be 0 or 1");
  for (const Tensor& p : parts) check_rank2("concat", p);

  const int fixed = axis == 0 ? parts[0].cols() : parts[0].rows();
  int total = 0;
  for (const Tensor& p : parts) {
    int f = axis == 0 ? p.cols() : p.rows();
    if (f != fixed) {
      throw DimensionError("concat: shape mismatch " + shape_str(parts[0].shape()) + " vs " +
                           shape_str(p.shape()));
    }
    total += axis == 0 ? p.rows() : p.cols();
  }
  const int rows = axis == 0 ? total : fixed;
  const int cols = axis == 0 ? fixed : total;
  RowMat out_m(rows, cols);
  int off = 0;
  for (const Tensor& p : parts) {
    if (axis == 0) {
      out_m.middleRows(off, p.rows()) = mat(p);
      off += p.rows();
    } else {
      out_m.middleCols(off, p.cols()) = mat(p);
      off += p.cols();
    }
  }
  Tensor out(Shape{rows, cols}, Eigen::Map<const Arr>(out_m.data(), out_m.size()));

  bool any = false;
  for (const Tensor& p : parts) any = any || needs(p);
  if (Tape::active() && any) {
    struct Piece {
      std::shared_ptr<detail::TensorImpl> impl;
      int r, c, off;
      bool need;
    };
    std::vector<Piece> pieces;
    std::vector<std::shared_ptr<detail::TensorImpl>> ins;
    int o = 0;
    for (const Tensor& p : parts) {
      bool need = needs(p);
      pieces.push_back({p.impl(), p.rows(), p.cols(), o, need});
      if (need) ins.push_back(p.impl());
      o += axis == 0 ? p.rows() : p.cols();
    }
    Tape::active()->record(out, std::move(ins), [pieces, axis, rows, cols](const Arr& g) {
      ConstMatMap gm(g.data(), rows, cols);
      for (const Piece& p : pieces) {
        if (!p.need) continue;
        MatMap gp(p.impl->grad.data(), p.r, p.c);
        if (axis == 0) {
          gp += gm.middleRows(p.off, p.r);
        } else {
          gp += gm.middleCols(p.off, p.c);
        }
      }
    });
  }
  return out;
}

Tensor sum(const Tensor& a) {
  Tensor out = finite_result("sum", Shape{1}, Arr::Constant(1, a.data().sum()));
  if (needs(a)) {
    auto ai = a.impl();
    record(out, {a}, [ai](const Arr& g) { ai->grad += g[0]; });
  }
  return out;
}

Tensor mean(const Tensor& a) {
  const double n = static_cast<double>(a.size());
  Tensor out = finite_result("mean", Shape{1}, Arr::Constant(1, a.data().sum() / n));
  if (needs(a)) {
    auto ai = a.impl();
    record(out, {a}, [ai, n](const Arr& g) { ai->grad += g[0] / n; });
  }
  return out;
}

Tensor relu(const Tensor& a) {
  Tensor out(a.shape(), a.data().max(0.0));
  if (needs(a)) {
    auto ai = a.impl();
    record(out, {a}, [ai](const Arr& g) {
      ai->grad += g * (ai->data > 0.0).cast<double>();
    });
  }
  return out;
}

Tensor gelu(const Tensor& a) {
  // Exact erf form: x * Phi(x).
  const Arr& x = a.data();
  Arr cdf(x.size());
  for (long i = 0; i < x.size(); ++i) cdf[i] = 0.5 * (1.0 + std::erf(x[i] * M_SQRT1_2));
  Tensor out = finite_result("gelu", a.shape(), x * cdf);
  if (needs(a)) {
    auto ai = a.impl();
    record(out, {a}, [ai, cdf](const Arr& g) {
      const Arr& x = ai->data;
      Arr pdf = (-0.5 * x.square()).exp() * 0.3989422804014327;
      ai->grad += g * (cdf + x * pdf);
    });
  }
  return out;
}

Tensor sigmoid(const Tensor& a) {
  const Arr& x = a.data();
  Arr s(x.size());
  for (long i = 0; i < x.size(); ++i) {
    double v = x[i];
    s[i] = v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  }
  Tensor out = finite_result("sigmoid", a.shape(), std::move(s));
  if (needs(a)) {
    auto ai = a.impl();
    Arr y = out.data();
    record(out, {a}, [ai, y](const Arr& g) { ai->grad += g * y * (1.0 - y); });
  }
  return out;
}

Tensor tanh(const Tensor& a) {
  Tensor out = finite_result("tanh", a.shape(), a.data().tanh());
  if (needs(a)) {
    auto ai = a.impl();
    Arr y = out.data();
    record(out, {a}, [ai, y](const Arr& g) { ai->grad += g * (1.0 - y.square()); });
  }
  return out;
}

namespace {

// Shared row-wise kernels; axis 0 is handled by transposing views.
Arr softmax_rows(const Arr& x, int rows, int cols) {
  Arr y(x.size());
  for (int r = 0; r < rows; ++r) {
    auto row = x.segment(static_cast<long>(r) * cols, cols);
    double m = row.maxCoeff();
    Arr e = (row - m).exp();
    y.segment(static_cast<long>(r) * cols, cols) = e / e.sum();
  }
  return y;
}

}  // namespace

Tensor softmax(const Tensor& a, int axis) {
  check_rank2("softmax", a);
  if (axis != 0 && axis != 1) throw ContractError("softmax: axis must be 0 or 1");
  const int r = a.rows(), c = a.cols();
  Arr y;
  if (axis == 1) {
    y = softmax_rows(a.data(), r, c);
  } else {
    RowMat t = mat(a).transpose();
    Arr yt = softmax_rows(Eigen::Map<const Arr>(t.data(), t.size()), c, r);
    RowMat back = mat(yt, c, r).transpose();
    y = Eigen::Map<const Arr>(back.data(), back.size());
  }
  Tensor out = finite_result("softmax", a.shape(), std::move(y));
  if (needs(a)) {
    auto ai = a.impl();
    Arr yv = out.data();
    record(out, {a}, [ai, yv, r, c, axis](const Arr& g) {
      MatMap ga(ai->grad.data(), r, c);
      ConstMatMap gm(g.data(), r, c);
      ConstMatMap ym(yv.data(), r, c);
      if (axis == 1) {
        for (int i = 0; i < r; ++i) {
          double dot = gm.row(i).cwiseProduct(ym.row(i)).sum();
          ga.row(i) += (gm.row(i).array() - dot).matrix().cwiseProduct(ym.row(i));
        }
      } else {
        for (int j = 0; j < c; ++j) {
          double dot = gm.col(j).cwiseProduct(ym.col(j)).sum();
          ga.col(j) += (gm.col(j).array() - dot).matrix().cwiseProduct(ym.col(j));
        }
      }
    });
  }
  return out;
}

Tensor layer_norm(const Tensor& a, int axis, double eps) {
  check_rank2("layer_norm", a);
  if (axis != 0 && axis != 1) throw ContractError("layer_norm: axis must be 0 or 1");
  const int r = a.rows(), c = a.cols();
  const int groups = axis == 1 ? r : c;
  const int width = axis == 1 ? c : r;
  Arr y(a.size());
  Arr inv_sd(groups);
  ConstMatMap xm(a.data().data(), r, c);
  MatMap ym(y.data(), r, c);
  for (int i = 0; i < groups; ++i) {
    Eigen::ArrayXd seg = axis == 1 ? Eigen::ArrayXd(xm.row(i).transpose().array())
                                   : Eigen::ArrayXd(xm.col(i).array());
    double mu = seg.mean();
    double var = (seg - mu).square().mean();
    double is = 1.0 / std::sqrt(var + eps);
    inv_sd[i] = is;
    if (axis == 1) {
      ym.row(i) = ((seg - mu) * is).matrix().transpose();
    } else {
      ym.col(i) = ((seg - mu) * is).matrix();
    }
  }
  Tensor out = finite_result("layer_norm", a.shape(), std::move(y));
  if (needs(a)) {
    auto ai = a.impl();
    Arr yv = out.data();
    record(out, {a}, [ai, yv, inv_sd, r, c, axis, width](const Arr& g) {
      MatMap ga(ai->grad.data(), r, c);
      ConstMatMap gm(g.data(), r, c);
      ConstMatMap ym2(yv.data(), r, c);
      const int groups = axis == 1 ? r : c;
      for (int i = 0; i < groups; ++i) {
        Eigen::VectorXd gi = axis == 1 ? Eigen::VectorXd(gm.row(i).transpose()) : Eigen::VectorXd(gm.col(i));
        Eigen::VectorXd yi = axis == 1 ? Eigen::VectorXd(ym2.row(i).transpose()) : Eigen::VectorXd(ym2.col(i));
        double gmean = gi.mean();
        double gymean = gi.cwiseProduct(yi).sum() / width;
        Eigen::VectorXd d = inv_sd[i] * (gi.array() - gmean - yi.array() * gymean).matrix();
        if (axis == 1) {
          ga.row(i) += d.transpose();
        } else {
          ga.col(i) += d;
        }
      }
    });
  }
  return out;
}

Tensor add_row(const Tensor& x, const Tensor& b) {
  check_rank2("add_row", x);
  if (b.rank() != 1 || b.dim(0) != x.cols()) {
    throw DimensionError("add_row: bias " + shape_str(b.shape()) + " does not match " +
                         shape_str(x.shape()));
  }
  const int r = x.rows(), c = x.cols();
  RowMat out_m = mat(x);
  out_m.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b.data().data(), c);
  Tensor out = finite_result("add_row", x.shape(), Eigen::Map<const Arr>(out_m.data(), out_m.size()));
  if (Tape::active() && (needs(x) || needs(b))) {
    bool nx = needs(x), nb = needs(b);
    auto xi = x.impl(), bi = b.impl();
    record(out, {x, b}, [xi, bi, nx, nb, r, c](const Arr& g) {
      if (nx) xi->grad += g;
      if (nb) {
        Eigen::Map<Eigen::RowVectorXd> gb(bi->grad.data(), c);
        gb += mat(g, r, c).colwise().sum();
      }
    });
  }
  return out;
}

Tensor add_col(const Tensor& x, const Tensor& b) {
  check_rank2("add_col", x);
  if (b.rank() != 1 || b.dim(0) != x.rows()) {
    throw DimensionError("add_col: bias " + shape_str(b.shape()) + " does not match " +
                         shape_str(x.shape()));
  }
  const int r = x.rows(), c = x.cols();
  RowMat out_m = mat(x);
  out_m.colwise() += Eigen::Map<const Eigen::VectorXd>(b.data().data(), r);
  Tensor out = finite_result("add_col", x.shape(), Eigen::Map<const Arr>(out_m.data(), out_m.size()));
  if (Tape::active() && (needs(x) || needs(b))) {
    bool nx = needs(x), nb = needs(b);
    auto xi = x.impl(), bi = b.impl();
    record(out, {x, b}, [xi, bi, nx, nb, r, c](const Arr& g) {
      if (nx) xi->grad += g;
      if (nb) {
        Eigen::Map<Eigen::VectorXd> gb(bi->grad.data(), r);
        gb += mat(g, r, c).rowwise().sum();
      }
    });
  }
  return out;
}

Tensor mul_row(const Tensor& x, const Tensor& g) {
  check_rank2("mul_row", x);
  if (g.rank() != 1 || g.dim(0) != x.cols()) {
    throw DimensionError("mul_row: gain " + shape_str(g.shape()) + " does not match " +
                         shape_str(x.shape()));
  }
  const int r = x.rows(), c = x.cols();
  RowMat out_m = mat(x).array().rowwise() *
                 Eigen::Map<const Eigen::RowVectorXd>(g.data().data(), c).array();
  Tensor out = finite_result("mul_row", x.shape(), Eigen::Map<const Arr>(out_m.data(), out_m.size()));
  if (Tape::active() && (needs(x) || needs(g))) {
    bool nx = needs(x), ng = needs(g);
    auto xi = x.impl(), gi = g.impl();
    record(out, {x, g}, [xi, gi, nx, ng, r, c](const Arr& gout) {
      ConstMatMap gm(gout.data(), r, c);
      if (nx) {
        MatMap gx(xi->grad.data(), r, c);
        gx.array() += gm.array().rowwise() *
                      Eigen::Map<const Eigen::RowVectorXd>(gi->data.data(), c).array();
      }
      if (ng) {
        Eigen::Map<Eigen::RowVectorXd> gg(gi->grad.data(), c);
        gg += (gm.array() * mat(xi->data, r, c).array()).colwise().sum().matrix();
      }
    });
  }
  return out;
}

Tensor im2col1d(const Tensor& x, int k) {
  check_rank2("im2col1d", x);
  if (k < 1 || k % 2 == 0) throw ContractError("im2col1d: kernel width must be odd and positive");
  const int ch = x.rows(), t_len = x.cols(), pad = (k - 1) / 2;
  ConstMatMap xm(x.data().data(), ch, t_len);
  RowMat out_m = RowMat::Zero(ch * k, t_len);
  for (int c = 0; c < ch; ++c) {
    for (int j = 0; j < k; ++j) {
      for (int t = 0; t < t_len; ++t) {
        int src = t + j - pad;
        if (src >= 0 && src < t_len) out_m(c * k + j, t) = xm(c, src);
      }
    }
  }
  Tensor out(Shape{ch * k, t_len}, Eigen::Map<const Arr>(out_m.data(), out_m.size()));
  if (needs(x)) {
    auto xi = x.impl();
    record(out, {x}, [xi, ch, t_len, k, pad](const Arr& g) {
      MatMap gx(xi->grad.data(), ch, t_len);
      ConstMatMap gm(g.data(), ch * k, t_len);
      for (int c = 0; c < ch; ++c) {
        for (int j = 0; j < k; ++j) {
          for (int t = 0; t < t_len; ++t) {
            int src = t + j - pad;
            if (src >= 0 && src < t_len) gx(c, src) += gm(c * k + j, t);
          }
        }
      }
    });
  }
  return out;
}

Tensor sinusoidal_embedding(double position, int dim) {
  if (dim < 2 || dim % 2 != 0) throw ContractError("sinusoidal_embedding: dim must be even");
  Arr e(dim);
  const int half = dim / 2;
  for (int i = 0; i < half; ++i) {
    double freq = std::exp(-std::log(10000.0) * (2.0 * i / dim));
    e[2 * i] = std::sin(position * freq);
    e[2 * i + 1] = std::cos(position * freq);
  }
  return Tensor(Shape{dim}, std::move(e));
}

Tensor position_encoding(int t_len, int dim) {
  if (dim < 2 || dim % 2 != 0) throw ContractError("position_encoding: dim must be even");
  Arr e(static_cast<long>(t_len) * dim);
  const int half = dim / 2;
  for (int p = 0; p < t_len; ++p) {
    for (int i = 0; i < half; ++i) {
      double freq = std::exp(-std::log(10000.0) * (2.0 * i / dim));
      e[static_cast<long>(p) * dim + 2 * i] = std::sin(p * freq);
      e[static_cast<long>(p) * dim + 2 * i + 1] = std::cos(p * freq);
    }
  }
  return Tensor(Shape{t_len, dim}, std::move(e));
}

}  // namespace ecgi
