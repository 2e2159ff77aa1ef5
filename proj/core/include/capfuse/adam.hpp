#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "capfuse/params.hpp"

namespace capfuse {

/// Adam optimizer state: per-parameter first/second moment buffers (keyed like
/// the ParamStore) plus the shared step counter and hyperparameters. Moment
/// buffers are zero-initialized on first use; t increments by exactly one per
/// step.
struct AdamState {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t t = 0;

  std::map<std::string, std::vector<float>> m;
  std::map<std::string, std::vector<float>> v;
};

/// One bias-corrected Adam update over every parameter in the store, reading
/// the accumulated gradients. Gradients are left untouched. Throws
/// NumericError naming the parameter path if a gradient is non-finite.
void adam_step(ParamStore& params, AdamState& state);

/// Rescales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the pre-clip norm.
double clip_global_grad_norm(ParamStore& params, double max_norm);

}  // namespace capfuse
