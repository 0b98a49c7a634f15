#pragma once

#include <memory>
#include <span>
#include <vector>

#include "rssiloc/model/config.hpp"
#include "rssiloc/model/layers.hpp"

namespace rssiloc::model {

struct Tape {
  std::vector<LayerTape> layers;
};

// A feed-forward stack of layers. Parameters are addressed in layer order.
class Network {
 public:
  Network() = default;
  explicit Network(std::vector<std::unique_ptr<Layer>> layers);
  Network(Network&&) noexcept = default;
  Network& operator=(Network&&) noexcept = default;

  Mat forward(const Mat& x) const;
  // Records a tape; dropout is active when dropout_rng is non-null.
  Mat forward(const Mat& x, Tape& tape, Rng* dropout_rng) const;
  // Accumulates into grads (same layout as parameters()); returns d loss / d input.
  Mat backward(const Mat& dy, const Tape& tape, std::vector<Tensor>& grads) const;

  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;
  std::vector<Tensor> zero_gradients() const;
  std::size_t parameter_count() const;
  const std::vector<std::unique_ptr<Layer>>& layers() const { return layers_; }

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

// Builds the configured architecture for input (n_steps x n_channels) with
// parameters drawn from `seed`.
Network build_network(const ModelConfig& config, int n_steps, int n_channels, std::uint64_t seed);

}  // namespace rssiloc::model
