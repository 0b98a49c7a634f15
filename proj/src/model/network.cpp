#include "rssiloc/model/network.hpp"

#include <cmath>

#include "rssiloc/error.hpp"

namespace rssiloc::model {

Network::Network(std::vector<std::unique_ptr<Layer>> layers) : layers_(std::move(layers)) {}

Mat Network::forward(const Mat& x) const {
  ForwardContext ctx;
  Mat a = x;
  for (const auto& layer : layers_) a = layer->forward(a, nullptr, ctx);
  return a;
}

Mat Network::forward(const Mat& x, Tape& tape, Rng* dropout_rng) const {
  ForwardContext ctx{dropout_rng != nullptr, dropout_rng};
  tape.layers.assign(layers_.size(), LayerTape{});
  Mat a = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) a = layers_[i]->forward(a, &tape.layers[i], ctx);
  return a;
}

Mat Network::backward(const Mat& dy, const Tape& tape, std::vector<Tensor>& grads) const {
  std::vector<std::size_t> offsets(layers_.size() + 1, 0);
  for (std::size_t i = 0; i < layers_.size(); ++i) offsets[i + 1] = offsets[i] + layers_[i]->parameters().size();
  if (grads.size() != offsets.back()) throw Error(Errc::ShapeMismatch, "gradient buffer does not match network");
  Mat d = dy;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    std::span<Tensor> slot(grads.data() + offsets[i], offsets[i + 1] - offsets[i]);
    d = layers_[i]->backward(d, tape.layers[i], slot);
  }
  return d;
}

std::vector<Tensor*> Network::parameters() {
  std::vector<Tensor*> out;
  for (auto& layer : layers_) {
    for (auto& t : layer->parameters()) out.push_back(&t);
  }
  return out;
}

std::vector<const Tensor*> Network::parameters() const {
  std::vector<const Tensor*> out;
  for (const auto& layer : layers_) {
    for (const auto& t : std::as_const(*layer).parameters()) out.push_back(&t);
  }
  return out;
}

std::vector<Tensor> Network::zero_gradients() const {
  std::vector<Tensor> out;
  for (const auto* p : parameters()) out.push_back(Tensor::zeros(p->name, p->shape));
  return out;
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto* p : parameters()) n += p->size();
  return n;
}

Network build_network(const ModelConfig& config, int n_steps, int n_channels, std::uint64_t seed) {
  config.validate();
  if (!is_neural(config.kind)) throw Error(Errc::InvalidConfig, "not a neural model kind");
  if (n_steps < 1 || n_channels < 1) throw Error(Errc::ShapeMismatch, "empty network input");

  Rng rng(seed);
  std::vector<std::unique_ptr<Layer>> layers;
  auto channels = static_cast<std::size_t>(n_channels);
  const auto steps = static_cast<std::size_t>(n_steps);

  if (has_cnn(config.kind)) {
    for (std::size_t i = 0; i < config.conv_kernels.size(); ++i) {
      const auto k = static_cast<std::size_t>(config.conv_kernels[i]);
      auto conv = std::make_unique<Conv1D>("conv" + std::to_string(i), channels, config.conv_filters, k);
      conv->init(rng, std::sqrt(6.0 / static_cast<double>(k * channels)));
      layers.push_back(std::move(conv));
      layers.push_back(std::make_unique<ActivationLayer>(Activation::Relu));
      channels = static_cast<std::size_t>(config.conv_filters);
    }
    if (config.dropout_after_cnn) layers.push_back(std::make_unique<Dropout>(config.dropout));
  }

  std::size_t features = 0;
  if (has_lstm(config.kind)) {
    const bool attention = config.kind == ModelKind::CnnLstmAttention;
    const auto units = static_cast<std::size_t>(config.lstm_units);
    for (int l = 0; l < config.lstm_layers; ++l) {
      const bool sequences = l + 1 < config.lstm_layers || attention;
      auto lstm = std::make_unique<Lstm>("lstm" + std::to_string(l), channels, units, sequences);
      lstm->init(rng);
      layers.push_back(std::move(lstm));
      layers.push_back(std::make_unique<Dropout>(config.dropout));
      channels = units;
    }
    if (attention) {
      auto att = std::make_unique<AdditiveAttention>("attention", units, units);
      att->init(rng);
      layers.push_back(std::move(att));
    }
    features = units;
  } else {
    layers.push_back(std::make_unique<Flatten>());
    if (!config.dropout_after_cnn) layers.push_back(std::make_unique<Dropout>(config.dropout));
    features = steps * channels;
  }

  for (std::size_t i = 0; i < config.mlp_widths.size(); ++i) {
    const auto width = static_cast<std::size_t>(config.mlp_widths[i]);
    auto dense = std::make_unique<Dense>("dense" + std::to_string(i), features, width);
    dense->init(rng, std::sqrt(6.0 / static_cast<double>(features)));
    layers.push_back(std::move(dense));
    layers.push_back(std::make_unique<ActivationLayer>(Activation::Relu));
    features = width;
  }

  const auto outputs = static_cast<std::size_t>(config.output_size());
  auto head = std::make_unique<Dense>("head", features, outputs);
  head->init(rng, std::sqrt(3.0 / static_cast<double>(features)));
  layers.push_back(std::move(head));
  if (config.head == HeadKind::RegressionXY) {
    layers.push_back(std::make_unique<ActivationLayer>(Activation::Sigmoid));
  } else {
    layers.push_back(std::make_unique<Softmax>());
  }
  return Network(std::move(layers));
}

}  // namespace rssiloc::model
