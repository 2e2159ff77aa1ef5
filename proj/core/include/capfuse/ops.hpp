#pragma once

#include <span>
#include <vector>

#include "capfuse/tensor.hpp"

namespace capfuse {

// Differentiable op inventory. Every op computes its value eagerly (double
// accumulation inside reductions, f32 storage) and records an exact backward
// rule on the tape. Shape violations throw ShapeError naming the op and the
// offending shapes.

/// matmul supports (R,K)x(K,C) -> (R,C), (K)x(K,C) -> (C) and (R,K)x(K) -> (R).
Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);

/// Same-shape addition, or (R,C) + (C) broadcasting the vector to every row.
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);

/// Elementwise product. Supports same-shape, (R,C) * (C) row broadcast and
/// multiplication by a scalar tensor of shape (1) on either side.
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);

/// Multiplication by a compile-time constant (no gradient into the constant).
Tensor scalar_mul(Tape& tape, const Tensor& a, float s);

Tensor tanh(Tape& tape, const Tensor& a);
Tensor sigmoid(Tape& tape, const Tensor& a);
Tensor relu(Tape& tape, const Tensor& a);
Tensor elu(Tape& tape, const Tensor& a);  // alpha = 1
Tensor log(Tape& tape, const Tensor& a);
Tensor clamp(Tape& tape, const Tensor& a, float lo, float hi);

/// Softmax / log-softmax along `axis` (rank-1: axis 0; rank-2: 0 or 1).
Tensor softmax(Tape& tape, const Tensor& a, int axis);
Tensor log_softmax(Tape& tape, const Tensor& a, int axis);

/// Axis reductions. Rank-1 tensors reduce to shape (1); rank-2 tensors reduce
/// the given axis away ((R,C) -> (C) for axis 0, (R) for axis 1).
Tensor sum(Tape& tape, const Tensor& a, int axis);
Tensor mean(Tape& tape, const Tensor& a, int axis);
Tensor sum_all(Tape& tape, const Tensor& a);
Tensor mean_all(Tape& tape, const Tensor& a);

Tensor concat(Tape& tape, std::span<const Tensor> parts, int axis);
Tensor slice(Tape& tape, const Tensor& a, int axis, int start, int len);

/// Stacks k same-length vectors into a (k, C) matrix.
Tensor stack_rows(Tape& tape, std::span<const Tensor> rows);

/// Row lookup into an embedding table (V, d): one id -> (d), k ids -> (k, d).
/// Gradients scatter-accumulate into the table rows.
Tensor embedding_row(Tape& tape, const Tensor& table, int id);
Tensor embedding(Tape& tape, const Tensor& table, std::span<const int> ids);

/// Picks m[i, ids[i]] from a (R, C) matrix -> (R). Used for target log-probs.
Tensor gather_cols(Tape& tape, const Tensor& m, std::span<const int> ids);

}  // namespace capfuse
