#include "capfuse/params.hpp"

#include <cmath>

namespace capfuse {

Tensor& ParamStore::add(const std::string& path, Tensor t) {
  if (entries_.count(path) > 0) {
    throw ConfigError("param store: duplicate path '" + path + "'");
  }
  if (!t.defined() || !t.is_leaf() || !t.needs_grad()) {
    throw ConfigError("param store: '" + path + "' must be a requires-grad leaf");
  }
  return entries_.emplace(path, std::move(t)).first->second;
}

Tensor& ParamStore::at(const std::string& path) {
  auto it = entries_.find(path);
  if (it == entries_.end()) throw ConfigError("param store: unknown path '" + path + "'");
  return it->second;
}

const Tensor& ParamStore::at(const std::string& path) const {
  auto it = entries_.find(path);
  if (it == entries_.end()) throw ConfigError("param store: unknown path '" + path + "'");
  return it->second;
}

void ParamStore::zero_grad() {
  for (auto& [path, t] : entries_) t.zero_grad();
}

std::size_t ParamStore::total_values() const {
  std::size_t n = 0;
  for (const auto& [path, t] : entries_) n += t.numel();
  return n;
}

std::map<std::string, std::vector<float>> ParamStore::snapshot_values() const {
  std::map<std::string, std::vector<float>> snap;
  for (const auto& [path, t] : entries_) {
    snap.emplace(path, std::vector<float>(t.values().begin(), t.values().end()));
  }
  return snap;
}

void ParamStore::restore_values(const std::map<std::string, std::vector<float>>& snap) {
  for (auto& [path, t] : entries_) {
    auto it = snap.find(path);
    if (it == snap.end() || it->second.size() != t.numel()) {
      throw ConfigError("param store: snapshot mismatch for '" + path + "'");
    }
    std::copy(it->second.begin(), it->second.end(), t.values_mut().begin());
  }
}

Tensor xavier_uniform(int rows, int cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / (rows + cols));
  std::vector<float> w(static_cast<std::size_t>(rows) * cols);
  for (float& x : w) x = static_cast<float>(rng.uniform(-limit, limit));
  return Tensor::leaf({rows, cols}, std::move(w), true);
}

Tensor zeros_param(int n) { return Tensor::zeros({n}, true); }

}  // namespace capfuse
