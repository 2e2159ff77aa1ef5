#include "capfuse/adam.hpp"

#include <cmath>

namespace capfuse {

void adam_step(ParamStore& params, AdamState& state) {
  state.t += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));

  for (auto& [path, p] : params.entries()) {
    auto& m = state.m[path];
    auto& v = state.v[path];
    if (m.empty()) m.assign(p.numel(), 0.0f);
    if (v.empty()) v.assign(p.numel(), 0.0f);
    if (m.size() != p.numel() || v.size() != p.numel()) {
      throw ShapeError("adam_step: moment shape mismatch for '" + path + "'");
    }

    auto values = p.values_mut();
    const auto g = p.grad();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double gi = g.empty() ? 0.0 : static_cast<double>(g[i]);
      if (!std::isfinite(gi)) {
        throw NumericError("adam_step: non-finite gradient in '" + path + "' at index " +
                           std::to_string(i));
      }
      const double mi = state.beta1 * m[i] + (1.0 - state.beta1) * gi;
      const double vi = state.beta2 * v[i] + (1.0 - state.beta2) * gi * gi;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      const double mhat = mi / bc1;
      const double vhat = vi / bc2;
      values[i] = static_cast<float>(values[i] - state.lr * mhat / (std::sqrt(vhat) + state.eps));
    }
  }
}

double clip_global_grad_norm(ParamStore& params, double max_norm) {
  double sq = 0.0;
  for (auto& [path, p] : params.entries()) {
    for (const float g : p.grad()) sq += static_cast<double>(g) * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double scale = max_norm / norm;
    for (auto& [path, p] : params.entries()) {
      auto g = p.grad_acc();
      for (float& x : g) x = static_cast<float>(x * scale);
    }
  }
  return norm;
}

}  // namespace capfuse
