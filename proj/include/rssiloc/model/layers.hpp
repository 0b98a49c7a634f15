#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "rssiloc/model/tensor.hpp"
#include "rssiloc/rng.hpp"

namespace rssiloc::model {

// What a layer keeps from its forward pass for the backward pass.
struct LayerTape {
  std::vector<Mat> saved;
};

struct ForwardContext {
  bool training = false;
  Rng* dropout_rng = nullptr;
};

// Layers are immutable during forward/backward, so one network can serve
// concurrent inference. Gradients are accumulated into caller-owned tensors
// laid out like parameters().
class Layer {
 public:
  virtual ~Layer() = default;
  virtual std::string kind() const = 0;

  // tape is null on the inference path.
  virtual Mat forward(const Mat& x, LayerTape* tape, const ForwardContext& ctx) const = 0;
  virtual Mat backward(const Mat& dy, const LayerTape& tape, std::span<Tensor> grads) const = 0;

  virtual std::span<Tensor> parameters() { return {}; }
  virtual std::span<const Tensor> parameters() const { return {}; }
};

enum class Activation { Relu, Tanh, Sigmoid };

// 1D convolution along the step axis, stride 1, "same" padding
// (left = (k-1)/2, right = k-1-left). Input (T x C) -> output (T x F).
class Conv1D : public Layer {
 public:
  Conv1D(std::string name, std::size_t in_channels, std::size_t filters, std::size_t kernel);
  std::string kind() const override { return "conv1d"; }
  Mat forward(const Mat& x, LayerTape* tape, const ForwardContext& ctx) const override;
  Mat backward(const Mat& dy, const LayerTape& tape, std::span<Tensor> grads) const override;
  std::span<Tensor> parameters() override { return params_; }
  std::span<const Tensor> parameters() const override { return params_; }
  void init(Rng& rng, double limit);

 private:
  std::size_t in_, filters_, kernel_, left_;
  std::vector<Tensor> params_;  // weight (F x K x C), bias (F)
};

// y = x W^T + b applied to every row.
class Dense : public Layer {
 public:
  Dense(std::string name, std::size_t in, std::size_t out);
  std::string kind() const override { return "dense"; }
  Mat forward(const Mat& x, LayerTape* tape, const ForwardContext& ctx) const override;
  Mat backward(const Mat& dy, const LayerTape& tape, std::span<Tensor> grads) const override;
  std::span<Tensor> parameters() override { return params_; }
  std::span<const Tensor> parameters() const override { return params_; }
  void init(Rng& rng, double limit);

 private:
  std::size_t in_, out_;
  std::vector<Tensor> params_;  // weight (out x in), bias (out)
};

class ActivationLayer : public Layer {
 public:
  explicit ActivationLayer(Activation fn) : fn_(fn) {}
  std::string kind() const override;
  Mat forward(const Mat& x, LayerTape* tape, const ForwardContext& ctx) const override;
  Mat backward(const Mat& dy, const LayerTape& tape, std::span<Tensor> grads) const override;

 private:
  Activation fn_;
};

// Row-wise softmax.
class Softmax : public Layer {
 public:
  std::string kind() const override { return "softmax"; }
  Mat forward(const Mat& x, LayerTape* tape, const ForwardContext& ctx) const override;
  Mat backward(const Mat& dy, const LayerTape& tape, std::span<Tensor> grads) const override;
};

// Inverted dropout; identity unless training with a non-zero rate.
class Dropout : public Layer {
 public:
  explicit Dropout(double rate) : rate_(rate) {}
  std::string kind() const override { return "dropout"; }
  Mat forward(const Mat& x, LayerTape* tape, const ForwardContext& ctx) const override;
  Mat backward(const Mat& dy, const LayerTape& tape, std::span<Tensor> grads) const override;
  double rate() const { return rate_; }

 private:
  double rate_;
};

// (T x C) -> (1 x T*C), step-major.
class Flatten : public Layer {
 public:
  std::string kind() const override { return "flatten"; }
  Mat forward(const Mat& x, LayerTape* tape, const ForwardContext& ctx) const override;
  Mat backward(const Mat& dy, const LayerTape& tape, std::span<Tensor> grads) const override;
};

// Single LSTM layer, gate order (input, forget, cell, output). Emits the full
// hidden sequence (T x U) or only the last state (1 x U).
class Lstm : public Layer {
 public:
  Lstm(std::string name, std::size_t in, std::size_t units, bool return_sequences);
  std::string kind() const override { return "lstm"; }
  Mat forward(const Mat& x, LayerTape* tape, const ForwardContext& ctx) const override;
  Mat backward(const Mat& dy, const LayerTape& tape, std::span<Tensor> grads) const override;
  std::span<Tensor> parameters() override { return params_; }
  std::span<const Tensor> parameters() const override { return params_; }
  void init(Rng& rng);

 private:
  std::size_t in_, units_;
  bool return_sequences_;
  std::vector<Tensor> params_;  // wx (4U x in), wh (4U x U), bias (4U)
};

// Additive attention pooling over a sequence:
//   score_t = v . tanh(W h_t + b),  alpha = softmax(score),  out = sum alpha_t h_t
class AdditiveAttention : public Layer {
 public:
  AdditiveAttention(std::string name, std::size_t units, std::size_t attention_dim);
  std::string kind() const override { return "attention"; }
  Mat forward(const Mat& x, LayerTape* tape, const ForwardContext& ctx) const override;
  Mat backward(const Mat& dy, const LayerTape& tape, std::span<Tensor> grads) const override;
  std::span<Tensor> parameters() override { return params_; }
  std::span<const Tensor> parameters() const override { return params_; }
  void init(Rng& rng);

 private:
  std::size_t units_, dim_;
  std::vector<Tensor> params_;  // w (A x U), bias (A), v (A)
};

}  // namespace rssiloc::model
