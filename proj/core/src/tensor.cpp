#include "capfuse/tensor.hpp"

#include <limits>
#include <utility>

namespace capfuse {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (const int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) s += ", ";
    s += std::to_string(shape[i]);
  }
  s += ")";
  return s;
}

namespace {

void validate_shape(const Shape& shape, std::size_t values_size) {
  for (const int d : shape) {
    if (d <= 0) {
      throw ShapeError("tensor: non-positive extent in shape " + shape_to_string(shape));
    }
  }
  if (shape_numel(shape) != values_size) {
    throw ShapeError("tensor: shape " + shape_to_string(shape) + " does not match " +
                     std::to_string(values_size) + " values");
  }
}

}  // namespace

Tensor Tensor::leaf(Shape shape, std::vector<float> values, bool requires_grad) {
  validate_shape(shape, values.size());
  Tensor t;
  t.node_ = std::make_shared<Node>();
  t.node_->shape = std::move(shape);
  t.node_->values = std::move(values);
  t.node_->needs_grad = requires_grad;
  return t;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return leaf(std::move(shape), std::vector<float>(n, 0.0f), requires_grad);
}

Tensor Tensor::full(Shape shape, float value) {
  const std::size_t n = shape_numel(shape);
  return leaf(std::move(shape), std::vector<float>(n, value), false);
}

Tensor Tensor::scalar(float value) { return leaf({1}, {value}, false); }

Tensor Tensor::interior(Shape shape, std::vector<float> values, bool needs_grad) {
  Tensor t = leaf(std::move(shape), std::move(values), false);
  t.node_->needs_grad = needs_grad;
  return t;
}

float Tensor::item() const {
  if (numel() != 1) {
    throw ShapeError("item: tensor with shape " + shape_to_string(shape()) + " is not scalar");
  }
  return node_->values[0];
}

std::span<float> Tensor::grad_acc() const {
  if (node_->grad.empty()) node_->grad.assign(node_->values.size(), 0.0f);
  return node_->grad;
}

float Tensor::grad_at(std::size_t i) const {
  return node_->grad.empty() ? 0.0f : node_->grad[i];
}

void Tensor::zero_grad() const {
  if (!node_->grad.empty()) node_->grad.assign(node_->values.size(), 0.0f);
}

void Tape::record(const char* op_name, std::vector<Tensor> inputs, Tensor& output,
                  std::function<void()> backward) {
  Op op;
  op.name = op_name;
  op.inputs.reserve(inputs.size());
  for (const Tensor& in : inputs) op.inputs.push_back(in.node_);
  op.output = output.node_;
  op.fn = std::move(backward);
  output.node_->tape_id = static_cast<int>(ops_.size());
  ops_.push_back(std::move(op));
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw NumericError("backward: loss must be a scalar tensor, got shape " +
                       (loss.defined() ? shape_to_string(loss.shape()) : std::string("<empty>")));
  }
  // Interior grads are per-call scratch; leaf grads persist and accumulate.
  for (Op& op : ops_) {
    op.output->grad.assign(op.output->values.size(), 0.0f);
  }
  Tensor seed = loss;
  seed.grad_acc()[0] += 1.0f;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
    it->fn();
  }
}

void Tape::note_kink_margin(double m) {
  if (!has_kink_ || m < kink_margin_) {
    kink_margin_ = m;
    has_kink_ = true;
  }
}

}  // namespace capfuse
