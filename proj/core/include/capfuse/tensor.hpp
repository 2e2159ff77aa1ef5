#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "capfuse/errors.hpp"

namespace capfuse {

using Shape = std::vector<int>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

class Tape;

/// Dense f32 array with shape, values and an optional same-shape gradient
/// buffer. Value-semantic handle: copies share the underlying node. Nodes are
/// either leaves (inputs, parameters) or outputs of operations recorded on a
/// Tape; a leaf never has a tape id.
class Tensor {
 public:
  Tensor() = default;

  static Tensor leaf(Shape shape, std::vector<float> values, bool requires_grad = false);
  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, float value);
  static Tensor scalar(float value);

  /// Output-node factory used by tape operations. `needs_grad` marks whether a
  /// gradient has to be propagated through this node (any input needs one).
  static Tensor interior(Shape shape, std::vector<float> values, bool needs_grad);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  int dim(int axis) const { return node_->shape[static_cast<std::size_t>(axis)]; }
  std::size_t numel() const { return node_->values.size(); }

  // Handle semantics: a const Tensor is a const handle, not immutable data,
  // so the mutating accessors below are const-qualified.
  std::span<const float> values() const { return node_->values; }
  std::span<float> values_mut() const { return node_->values; }

  /// Scalar value; throws unless numel() == 1.
  float item() const;
  float at(std::size_t i) const { return node_->values[i]; }

  bool is_leaf() const { return node_->tape_id < 0; }
  int tape_id() const { return node_->tape_id; }
  bool needs_grad() const { return node_->needs_grad; }

  /// Mutable gradient buffer, zero-allocated on first access.
  std::span<float> grad_acc() const;
  /// Read-only gradient; empty span if never allocated.
  std::span<const float> grad() const { return node_->grad; }
  float grad_at(std::size_t i) const;
  void zero_grad() const;

  friend bool same_node(const Tensor& a, const Tensor& b) { return a.node_ == b.node_; }

 private:
  struct Node {
    Shape shape;
    std::vector<float> values;
    std::vector<float> grad;  // empty until first touched
    bool needs_grad = false;
    int tape_id = -1;
  };

  std::shared_ptr<Node> node_;

  friend class Tape;
};

/// Ordered record of operations for one forward pass (define-by-run). Values
/// are computed eagerly when ops are built; the tape stores only the backward
/// rules, in topological order by construction.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Records one operation. `backward` must read output.grad and accumulate
  /// into the grads of the captured inputs.
  void record(const char* op_name, std::vector<Tensor> inputs, Tensor& output,
              std::function<void()> backward);

  /// Reverse pass from a scalar loss. Interior gradients are reset at the
  /// start of every call; leaf gradients accumulate across calls.
  void backward(const Tensor& loss);

  std::size_t num_ops() const { return ops_.size(); }
  const char* op_name(std::size_t i) const { return ops_[i].name; }

  /// Smallest distance of any kink-valued op input (relu, clamp) from its
  /// kink, recorded at forward time. Finite-difference checks use this to
  /// reject configurations where a central difference would straddle a kink.
  double kink_margin() const { return kink_margin_; }
  void note_kink_margin(double m);

 private:
  struct Op {
    const char* name;
    std::vector<std::shared_ptr<Tensor::Node>> inputs;
    std::shared_ptr<Tensor::Node> output;
    std::function<void()> fn;
  };

  std::vector<Op> ops_;
  double kink_margin_ = std::numeric_limits<double>::infinity();
  bool has_kink_ = false;
};

}  // namespace capfuse
