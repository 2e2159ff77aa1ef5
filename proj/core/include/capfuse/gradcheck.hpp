#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "capfuse/tensor.hpp"

namespace capfuse {

/// One gradient-check scenario: leaf shapes, an optional domain adjustment for
/// the sampled leaf values, and a builder that assembles a scalar loss from
/// the leaves. The builder must be deterministic in the leaf values.
struct GradCheckCase {
  std::string name;
  std::vector<Shape> leaf_shapes;
  std::function<void(int leaf_index, std::span<float> values)> adjust;  // may be null
  std::function<Tensor(Tape&, std::span<Tensor> leaves)> build;
};

/// Compares tape gradients against central finite differences
/// (f(x+h) - f(x-h)) / 2h and returns the max over all leaf entries of
/// |analytic - numeric| / max(1, |analytic|, |numeric|).
///
/// Configurations where a kinked op (relu, clamp) lands within 20h of its kink
/// are re-drawn from a derived seed: a central difference straddling the kink
/// measures nothing meaningful there. Non-finite losses throw NumericError.
double grad_check(const GradCheckCase& c, std::uint64_t seed, double h = 1e-3);

struct GradCheckReport {
  std::string name;
  std::uint64_t seed = 0;
  double max_rel_err = 0.0;
  bool pass = false;
};

/// Runs the full suite (every tensor op, feature attention, one full top-down
/// step, one full x-lan step) over `seeds_per_case` seeds at the given
/// tolerance. Used by tests, the acceptance suite and the `gradcheck` CLI.
std::vector<GradCheckReport> gradcheck_suite(int seeds_per_case = 10, double tolerance = 1e-3);

}  // namespace capfuse
