#pragma once

#include <cstdint>
#include <vector>

#include "rssiloc/model/tensor.hpp"

namespace rssiloc::model {

struct AdamHyper {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;

  static AdamState zeros_like(const std::vector<Tensor*>& params);
};

// One bias-corrected Adam update for step number t (1-based).
void adam_step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads, AdamState& state,
               const AdamHyper& hyper, std::int64_t t);

}  // namespace rssiloc::model
