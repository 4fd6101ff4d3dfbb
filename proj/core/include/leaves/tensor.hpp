#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace leaves {

/// Shape of a dense tensor, rank 0 to 3. Rank 0 is a scalar.
using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};
struct DomainError : std::runtime_error {
  explicit DomainError(const std::string& msg) : std::runtime_error(msg) {}
};
struct UsageError : std::runtime_error {
  explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

class Tape;

/// Dense 64-bit float tensor. A tensor is either detached (a plain value)
/// or attached to a Tape node, in which case gradients can flow to it.
class Tensor {
 public:
  Tensor() : shape_{}, values_(std::make_shared<std::vector<double>>(1, 0.0)) {}
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double v);
  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double v);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return values_->size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }

  const std::vector<double>& values() const { return *values_; }
  double at(std::size_t flat) const { return (*values_)[flat]; }
  double item() const;

  bool on_tape() const { return tape_ != nullptr; }
  bool requires_grad() const { return requires_grad_; }
  Tape* tape() const { return tape_; }
  int node() const { return node_; }

  /// Value copy detached from any tape.
  Tensor detached() const { return Tensor(shape_, *values_); }

  /// Gradient accumulated by the owning tape's backward(). Same shape as
  /// the tensor. Errors if the tensor is detached or backward has not run.
  std::vector<double> grad() const;

 private:
  Shape shape_;
  std::shared_ptr<std::vector<double>> values_;
  Tape* tape_ = nullptr;
  int node_ = -1;
  bool requires_grad_ = false;
  friend class Tape;
};

/// Reverse-mode gradient tape. Built eagerly per step (define-by-run) and
/// discarded afterwards; never shared across concurrent executions.
class Tape {
 public:
  using BackwardFn = std::function<void(const std::vector<double>& out_grad, Tape& tape)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Register a leaf value. Gradients accumulate on it iff requires_grad.
  Tensor leaf(const Tensor& value, bool requires_grad);
  Tensor leaf(Shape shape, std::vector<double> values, bool requires_grad);

  /// Record an interior node. Inputs must already live on this tape.
  Tensor record(Shape shape, std::vector<double> values,
                std::vector<int> inputs, BackwardFn backward);

  /// Run reverse accumulation from a rank-0 loss. A second call without a
  /// fresh tape is an error.
  void backward(const Tensor& loss);

  bool backward_done() const { return backward_done_; }
  std::size_t num_nodes() const { return nodes_.size(); }

  const std::vector<double>& grad_of(int node) const;
  void accumulate(int node, const std::vector<double>& g);
  void accumulate(int node, std::size_t flat_index, double g);
  bool node_requires_grad(int node) const { return nodes_[static_cast<std::size_t>(node)].requires_grad; }

 private:
  struct Node {
    Shape shape;
    std::vector<int> inputs;
    BackwardFn backward;
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
  mutable std::vector<std::vector<double>> grads_;
  bool backward_done_ = false;
};

}  // namespace leaves
