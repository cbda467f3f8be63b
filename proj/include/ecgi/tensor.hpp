#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "ecgi/errors.hpp"
#include "ecgi/rng.hpp"

namespace ecgi {

using Shape = std::vector<int>;
using Arr = Eigen::ArrayXd;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

std::string shape_str(const Shape& s);
long shape_size(const Shape& s);

class Tape;

namespace detail {

struct TensorImpl {
  Shape shape;
  Arr data;                 // flat, row-major
  Arr grad;                 // empty until a backward pass touches it
  bool requires_grad = false;
  int node = -1;            // node id on the tape identified by tape_id
  std::uint64_t tape_id = 0;
};

}  // namespace detail

// Dense row-major f64 tensor. Copies share the underlying buffer, so a
// Tensor is a cheap handle; values are never mutated after construction
// except by the optimizer's explicit in-place update.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, Arr data);

  static Tensor zeros(const Shape& shape);
  static Tensor full(const Shape& shape, double value);
  static Tensor scalar(double value);
  static Tensor randn(const Shape& shape, Rng& rng);
  static Tensor from_vector(const std::vector<double>& v);
  static Tensor from_matrix(const Eigen::MatrixXd& m);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int rank() const { return static_cast<int>(impl_->shape.size()); }
  long size() const { return impl_->data.size(); }
  int dim(int i) const { return impl_->shape[static_cast<size_t>(i)]; }
  int rows() const;
  int cols() const;

  const Arr& data() const { return impl_->data; }
  // Reserved for the optimizer; everything else treats tensors as values.
  Arr& mutable_data() { return impl_->data; }

  double value() const;                  // scalar tensors only
  double at(std::initializer_list<int> idx) const;

  ConstMatMap matrix() const;            // rank-2 view
  Eigen::MatrixXd to_matrix() const;     // rank-2 copy (column-major)

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool on = true);

  // Gradient from the last backward pass; zeros if this tensor was detached
  // from (or unused by) the loss.
  Tensor grad() const;
  const Arr& grad_array() const;
  bool has_grad() const { return impl_ && impl_->grad.size() == size(); }

  Tensor detach() const;

  std::shared_ptr<detail::TensorImpl> impl() const { return impl_; }

 private:
  std::shared_ptr<detail::TensorImpl> impl_;
};

// Records the operations of one forward evaluation and replays them in
// reverse for gradients. Constructing a Tape makes it the active tape for
// the current thread; tapes do not nest and are single-threaded.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active();

  size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }
  std::uint64_t id() const { return id_; }

  // One reverse sweep; visits every node exactly once and leaves
  // d(loss)/d(tensor) in each participating tensor's grad buffer.
  // A loss that was never recorded (a constant) yields all-zero gradients.
  void backward(const Tensor& loss);

  void record(const Tensor& out, std::vector<std::shared_ptr<detail::TensorImpl>> inputs,
              std::function<void(const Arr&)> pull);

 private:
  struct Node {
    std::shared_ptr<detail::TensorImpl> out;
    std::vector<std::shared_ptr<detail::TensorImpl>> inputs;
    std::function<void(const Arr&)> pull;
  };
  std::vector<Node> nodes_;
  std::uint64_t id_;
  bool consumed_ = false;
};

void backward(const Tensor& loss, Tape& tape);

// True if `t` should propagate gradient on the active tape.
bool tracks_grad(const Tensor& t);

// ---- elementwise and linear operations ----

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, const Shape& shape);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor gelu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor softmax(const Tensor& a, int axis = 1);
Tensor layer_norm(const Tensor& a, int axis = 1, double eps = 1e-5);

// Broadcast helpers for affine layers: bias over rows/columns, per-column gain.
Tensor add_row(const Tensor& x, const Tensor& b);   // x: R x C, b: [C]
Tensor add_col(const Tensor& x, const Tensor& b);   // x: R x C, b: [R]
Tensor mul_row(const Tensor& x, const Tensor& g);   // x: R x C, g: [C]

// Unfolds a channels-by-time signal into (C*k) x T patches with zero padding,
// so a same-length 1-D convolution becomes a single matmul. k must be odd.
Tensor im2col1d(const Tensor& x, int k);

// Constant builders (never recorded).
Tensor sinusoidal_embedding(double position, int dim);
Tensor position_encoding(int t_len, int dim);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(const Tensor& a, double c) { return scale(a, c); }
inline Tensor operator*(double c, const Tensor& a) { return scale(a, c); }

}  // namespace ecgi
