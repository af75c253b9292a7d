#pragma once

#include "amgan/tensor.hpp"

#include <cstdint>
#include <vector>

namespace amgan::ad {

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::uint64_t step = 0;
};

// One bias-corrected Adam update of every tensor in params, reading each
// tensor's grad buffer (an absent buffer counts as zero gradient).
void adam_step(std::vector<Tensor>& params, AdamState& state, const AdamConfig& cfg);

}  // namespace amgan::ad
