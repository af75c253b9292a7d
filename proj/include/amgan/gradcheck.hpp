#pragma once

#include "amgan/tensor.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace amgan::ad {

struct GradCheckOptions {
  double eps = 1e-4;
  double rtol = 1e-3;
  // Magnitude below which gradients are compared absolutely instead of relatively.
  double floor = 1e-6;
  // 0 checks every entry; otherwise a seeded random subsample of this many
  // entries across all inputs.
  std::size_t max_entries = 0;
  std::uint64_t seed = 0;
  // Skip entries whose +-eps stencil flips the sign of any ReLU input; with a
  // subsample, further entries are drawn in their place.
  bool skip_kinks = true;
};

struct GradCheckResult {
  std::string name;
  std::size_t checked = 0;
  // max over entries of |analytic - numeric| / max(|analytic|, |numeric|, floor)
  double max_error = 0.0;
  std::size_t skipped = 0;  // stencils that crossed a kink
  bool passed = false;
};

// Compares reverse-mode gradients of loss_fn() with respect to each input
// against central finite differences. loss_fn must rebuild the graph from the
// current input values on every call and return a scalar.
GradCheckResult check_gradients(const std::string& name, const std::function<Tensor()>& loss_fn,
                                std::vector<Tensor> inputs, const GradCheckOptions& opt = {});

// Randomized checks over every differentiable op.
std::vector<GradCheckResult> run_op_gradchecks(std::uint64_t seed, const GradCheckOptions& opt = {});

// sum(t * weights), a generic scalar projection used to drive checks.
Tensor weighted_sum(const Tensor& t, const Tensor& weights);

}  // namespace amgan::ad
