#pragma once

#include <map>
#include <string>

#include "capfuse/rng.hpp"
#include "capfuse/tensor.hpp"

namespace capfuse {

/// Learnable parameters keyed by dotted path (e.g. "topdown.gru1.Wz").
/// Iteration order is lexicographic, which keeps every consumer deterministic.
class ParamStore {
 public:
  Tensor& add(const std::string& path, Tensor t);
  Tensor& at(const std::string& path);
  const Tensor& at(const std::string& path) const;
  bool contains(const std::string& path) const { return entries_.count(path) > 0; }

  std::map<std::string, Tensor>& entries() { return entries_; }
  const std::map<std::string, Tensor>& entries() const { return entries_; }

  void zero_grad();
  std::size_t total_values() const;

  /// Copies raw values out of / back into the store (snapshot/restore for
  /// best-on-validation retention).
  std::map<std::string, std::vector<float>> snapshot_values() const;
  void restore_values(const std::map<std::string, std::vector<float>>& snap);

 private:
  std::map<std::string, Tensor> entries_;
};

/// Xavier-uniform matrix (fan_in = rows, fan_out = cols in the x*W layout).
Tensor xavier_uniform(int rows, int cols, Rng& rng);

/// Zero-initialized bias vector parameter.
Tensor zeros_param(int n);

}  // namespace capfuse
