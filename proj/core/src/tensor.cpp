#include "leaves/tensor.hpp"

#include <sstream>

namespace leaves {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)),
      values_(std::make_shared<std::vector<double>>(std::move(values))) {
  if (shape_.size() > 3) throw ShapeError("tensor rank > 3: " + shape_str(shape_));
  if (numel(shape_) != values_->size()) {
    throw ShapeError("shape " + shape_str(shape_) + " does not match value count " +
                     std::to_string(values_->size()));
  }
}

Tensor Tensor::scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }

Tensor Tensor::zeros(Shape shape) {
  std::size_t n = numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::full(Shape shape, double v) {
  std::size_t n = numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, v));
}

double Tensor::item() const {
  if (!shape_.empty()) throw ShapeError("item() on non-scalar tensor " + shape_str(shape_));
  return (*values_)[0];
}

std::vector<double> Tensor::grad() const {
  if (tape_ == nullptr) throw UsageError("grad() on a detached tensor");
  if (!tape_->backward_done()) throw UsageError("grad() before backward()");
  return tape_->grad_of(node_);
}

Tensor Tape::leaf(const Tensor& value, bool requires_grad) {
  return leaf(value.shape(), value.values(), requires_grad);
}

Tensor Tape::leaf(Shape shape, std::vector<double> values, bool requires_grad) {
  Tensor t(std::move(shape), std::move(values));
  t.tape_ = this;
  t.node_ = static_cast<int>(nodes_.size());
  t.requires_grad_ = requires_grad;
  nodes_.push_back(Node{t.shape_, {}, nullptr, requires_grad});
  grads_.emplace_back();
  return t;
}

Tensor Tape::record(Shape shape, std::vector<double> values,
                    std::vector<int> inputs, BackwardFn backward) {
  bool rg = false;
  for (int in : inputs) {
    if (in < 0 || static_cast<std::size_t>(in) >= nodes_.size())
      throw UsageError("recorded input not on this tape");
    rg = rg || nodes_[static_cast<std::size_t>(in)].requires_grad;
  }
  Tensor t(std::move(shape), std::move(values));
  t.tape_ = this;
  t.node_ = static_cast<int>(nodes_.size());
  t.requires_grad_ = rg;
  nodes_.push_back(Node{t.shape_, std::move(inputs), std::move(backward), rg});
  grads_.emplace_back();
  return t;
}

void Tape::backward(const Tensor& loss) {
  if (backward_done_) throw UsageError("backward() called twice on the same tape");
  if (loss.tape() != this) throw UsageError("backward() on a loss from a different tape");
  if (!loss.shape().empty()) throw ShapeError("backward() requires a rank-0 loss");
  backward_done_ = true;
  grads_[static_cast<std::size_t>(loss.node())] = {1.0};
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || !n.backward) continue;
    if (grads_[i].empty()) continue;  // not reachable from the loss
    n.backward(grads_[i], *this);
  }
}

const std::vector<double>& Tape::grad_of(int node) const {
  auto& g = grads_[static_cast<std::size_t>(node)];
  // Nodes unreachable from the loss report a zero gradient of the right shape.
  if (g.empty()) g.assign(numel(nodes_[static_cast<std::size_t>(node)].shape), 0.0);
  return g;
}

void Tape::accumulate(int node, const std::vector<double>& g) {
  auto& dst = grads_[static_cast<std::size_t>(node)];
  if (dst.empty()) dst.assign(numel(nodes_[static_cast<std::size_t>(node)].shape), 0.0);
  if (dst.size() != g.size()) throw ShapeError("gradient size mismatch in accumulate");
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
}

void Tape::accumulate(int node, std::size_t flat_index, double g) {
  auto& dst = grads_[static_cast<std::size_t>(node)];
  if (dst.empty()) dst.assign(numel(nodes_[static_cast<std::size_t>(node)].shape), 0.0);
  dst[flat_index] += g;
}

}  // namespace leaves
