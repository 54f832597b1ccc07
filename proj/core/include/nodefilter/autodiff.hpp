#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace nodefilter::ad {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);

// Dense f64 array with up to three axes, row-major.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return values_.size(); }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  double* data() noexcept { return values_.data(); }
  const double* data() const noexcept { return values_.data(); }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  // Value of a single-element tensor.
  double item() const;

  bool operator==(const Tensor&) const = default;

 private:
  Shape shape_;
  std::vector<double> values_;
};

// Learnable tensor plus its gradient slot. Gradients accumulate until
// zero_grad().
class Parameter {
 public:
  Parameter() = default;
  Parameter(std::string name, Tensor value);

  std::string name;
  Tensor value;
  Tensor grad;

  void zero_grad();
};

class Tape;

// Handle to a node recorded on a tape.
class Var {
 public:
  Var() = default;
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  Tape* tape() const noexcept { return tape_; }
  std::size_t id() const noexcept { return id_; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Append-only record of operations. backward() visits nodes in exact
// reverse order of recording.
class Tape {
 public:
  // Local gradient rule: given this node's output value and gradient,
  // accumulate into its inputs through grad().
  using BackwardRule = std::function<void(Tape& tape, const Tensor& out_value, const Tensor& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  // Gradients flowing into this node are added to p.grad by backward().
  Var param(Parameter& p);
  Var record(Tensor value, BackwardRule rule);

  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  // Gradient buffer of a node; valid during backward().
  Tensor& grad(std::size_t id);

  std::size_t size() const noexcept { return nodes_.size(); }

  // Throws std::invalid_argument if loss is not a scalar on this tape.
  void backward(const Var& loss);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    BackwardRule rule;
    Parameter* param = nullptr;
  };
  std::vector<Node> nodes_;
};

// -- primitives ------------------------------------------------------------
// Every primitive checks shapes and throws ShapeError on mismatch.

// (..., n, k) x (k, m) -> (..., m). Leading axes are flattened.
Var matmul(const Var& a, const Var& b);
// Batched (B, n, k) x (B, k, m) -> (B, n, m).
Var bmm(const Var& a, const Var& b);
// Batched a b^T: (B, n, k) x (B, m, k) -> (B, n, m).
Var bmm_nt(const Var& a, const Var& b);
// Per-order weights: x (B, T, d), w (T, d, e) -> (B, T, e).
Var orderwise_matmul(const Var& x, const Var& w);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var hadamard(const Var& a, const Var& b);
Var scale(const Var& a, double s);

Var tanh(const Var& a);
Var relu(const Var& a);
// Softmax over the last axis.
Var softmax_rows(const Var& a);
// Normalizes over the last axis: (x - mean) / sqrt(var + eps) * gain + offset.
Var layer_norm_rows(const Var& x, const Var& gain, const Var& offset, double eps = 1e-5);

// Sums the rows of each trailing matrix: (B, T, d) -> (B, d), (n, d) -> (d).
Var sum_rows(const Var& a);
Var sum_all(const Var& a);
Var mean_all(const Var& a);

// Columns [begin, end) of the last axis.
Var slice_cols(const Var& a, std::size_t begin, std::size_t end);
// Concatenates along the last axis; leading axes must agree.
Var concat_cols(std::span<const Var> parts);
// Tiles v over new leading axes: shape `leading` ++ v.shape().
Var broadcast_row(const Var& v, const Shape& leading);
Var reshape(const Var& a, Shape shape);

// Mean over rows of -log softmax(logits)[label], logits (n, c).
Var cross_entropy(const Var& logits, std::span<const std::size_t> labels);

// -- gradient checking -----------------------------------------------------

struct ParamCheck {
  std::string name;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
};

struct GradCheckReport {
  std::vector<ParamCheck> params;
  double max_rel_error = 0.0;
};

// Compares reverse-mode gradients of `loss_fn` with central differences
// (f(t+eps) - f(t-eps)) / 2eps for every element of every parameter.
// Relative error: |a - n| / max(1e-8, |a| + |n|). Throws std::runtime_error
// if two baseline evaluations disagree.
GradCheckReport grad_check(const std::function<Var(Tape&)>& loss_fn, std::span<Parameter* const> params,
                           double eps = 1e-5);

}  // namespace nodefilter::ad
