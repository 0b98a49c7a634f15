#pragma once

#include <string>

#include "rssiloc/model/loss.hpp"
#include "rssiloc/model/network.hpp"
#include "rssiloc/model/trained_model.hpp"

namespace rssiloc::model {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
  // Elements whose +-eps probe flips a ReLU; the derivative is undefined
  // there, so they are counted but not compared.
  std::size_t skipped_kinks = 0;
};

// Compares backward() against central differences of loss(forward(x)) for
// every parameter element away from ReLU kinks:
//   |analytic - cd| / max(|analytic|, |cd|, 1e-8).
// Parameters are perturbed in place and restored. max_per_tensor > 0 checks a
// seeded random subset of that many elements per tensor.
GradCheckResult grad_check(Network& net, const Mat& x, const OutputLoss& loss, double eps = 1e-4,
                           std::size_t max_per_tensor = 0);

// Builds the configured network for the frame's shape (raw dBm mapped through
// the default input map) and checks it against the given target.
GradCheckResult grad_check(const ModelConfig& config, const FeatureFrame& frame, const TargetPoint& target,
                           double eps = 1e-4, std::size_t max_per_tensor = 0);

}  // namespace rssiloc::model
