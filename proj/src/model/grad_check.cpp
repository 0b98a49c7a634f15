#include "rssiloc/model/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rssiloc/model/train.hpp"
#include "rssiloc/rng.hpp"

namespace rssiloc::model {

namespace {

// Which ReLU outputs are active; a change between the probe points means the
// central difference straddles a kink.
std::vector<bool> relu_pattern(const Tape& tape, const Network& net) {
  std::vector<bool> on;
  for (std::size_t l = 0; l < net.layers().size(); ++l) {
    if (net.layers()[l]->kind() != "relu") continue;
    for (const double v : tape.layers[l].saved.at(0).data) on.push_back(v > 0.0);
  }
  return on;
}

}  // namespace

GradCheckResult grad_check(Network& net, const Mat& x, const OutputLoss& loss, double eps,
                           std::size_t max_per_tensor) {
  Tape tape;
  auto grads = net.zero_gradients();
  const Mat y = net.forward(x, tape, nullptr);
  const auto base_pattern = relu_pattern(tape, net);
  Mat dy(y.rows, y.cols);
  dy.data = loss.grad(y.data);
  net.backward(dy, tape, grads);

  GradCheckResult result;
  auto params = net.parameters();
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto& data = params[p]->data;
    std::vector<std::size_t> indices(data.size());
    std::iota(indices.begin(), indices.end(), std::size_t{0});
    if (max_per_tensor > 0 && indices.size() > max_per_tensor) {
      Rng rng(derive_seed(1, params[p]->name));
      rng.shuffle(std::span(indices));
      indices.resize(max_per_tensor);
      std::sort(indices.begin(), indices.end());
    }
    for (const std::size_t i : indices) {
      const double saved = data[i];
      Tape probe;
      data[i] = saved + eps;
      const double up = loss.value(net.forward(x, probe, nullptr).data);
      bool kink = relu_pattern(probe, net) != base_pattern;
      data[i] = saved - eps;
      const double down = loss.value(net.forward(x, probe, nullptr).data);
      kink = kink || relu_pattern(probe, net) != base_pattern;
      data[i] = saved;
      if (kink) {
        ++result.skipped_kinks;
        continue;
      }
      const double cd = (up - down) / (2.0 * eps);
      const double analytic = grads[p].data[i];
      const double rel = std::abs(analytic - cd) / std::max({std::abs(analytic), std::abs(cd), 1e-8});
      ++result.checked;
      if (rel > result.max_relative_error) {
        result.max_relative_error = rel;
        result.worst_parameter = params[p]->name;
        result.worst_index = i;
        result.worst_analytic = analytic;
        result.worst_numeric = cd;
      }
    }
  }
  return result;
}

GradCheckResult grad_check(const ModelConfig& config, const FeatureFrame& frame, const TargetPoint& target,
                           double eps, std::size_t max_per_tensor) {
  const int channels = frame.n_sources * kAggregationCount * (config.use_mask_channels ? 2 : 1);
  Network net = build_network(config, frame.n_steps, channels, config.seed);
  return grad_check(net, encode_frame(frame, InputNorm{}, config.use_mask_channels),
                    make_output_loss(config, target), eps, max_per_tensor);
}

}  // namespace rssiloc::model
