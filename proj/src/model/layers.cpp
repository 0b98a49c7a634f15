#include "rssiloc/model/layers.hpp"

#include <algorithm>
#include <cmath>

#include "rssiloc/error.hpp"

namespace rssiloc::model {

namespace {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

void fill_uniform(Tensor& t, Rng& rng, double limit) {
  for (auto& v : t.data) v = rng.uniform(-limit, limit);
}

void require_cols(const Mat& x, std::size_t cols, const char* what) {
  if (x.cols != cols) {
    throw Error(Errc::ShapeMismatch, std::string(what) + " expects " + std::to_string(cols) + " columns, got " +
                                         std::to_string(x.cols));
  }
}

}  // namespace

// ------------------------------------------------------------------ Conv1D

Conv1D::Conv1D(std::string name, std::size_t in_channels, std::size_t filters, std::size_t kernel)
    : in_(in_channels), filters_(filters), kernel_(kernel), left_((kernel - 1) / 2) {
  params_.push_back(Tensor::zeros(name + ".weight", {filters, kernel, in_channels}));
  params_.push_back(Tensor::zeros(name + ".bias", {filters}));
}

void Conv1D::init(Rng& rng, double limit) { fill_uniform(params_[0], rng, limit); }

Mat Conv1D::forward(const Mat& x, LayerTape* tape, const ForwardContext&) const {
  require_cols(x, in_, "conv1d");
  const std::size_t steps = x.rows;
  const auto& w = params_[0].data;
  const auto& b = params_[1].data;
  Mat y(steps, filters_);
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t f = 0; f < filters_; ++f) {
      double acc = b[f];
      for (std::size_t j = 0; j < kernel_; ++j) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + j) - static_cast<std::ptrdiff_t>(left_);
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(steps)) continue;
        const double* wr = &w[(f * kernel_ + j) * in_];
        const double* xr = &x.data[static_cast<std::size_t>(src) * in_];
        for (std::size_t c = 0; c < in_; ++c) acc += wr[c] * xr[c];
      }
      y(t, f) = acc;
    }
  }
  if (tape) tape->saved = {x};
  return y;
}

Mat Conv1D::backward(const Mat& dy, const LayerTape& tape, std::span<Tensor> grads) const {
  const Mat& x = tape.saved.at(0);
  const std::size_t steps = x.rows;
  const auto& w = params_[0].data;
  auto& dw = grads[0].data;
  auto& db = grads[1].data;
  Mat dx(steps, in_);
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t f = 0; f < filters_; ++f) {
      const double g = dy(t, f);
      db[f] += g;
      if (g == 0.0) continue;
      for (std::size_t j = 0; j < kernel_; ++j) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + j) - static_cast<std::ptrdiff_t>(left_);
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(steps)) continue;
        const std::size_t base = (f * kernel_ + j) * in_;
        const double* xr = &x.data[static_cast<std::size_t>(src) * in_];
        double* dxr = &dx.data[static_cast<std::size_t>(src) * in_];
        for (std::size_t c = 0; c < in_; ++c) {
          dw[base + c] += g * xr[c];
          dxr[c] += g * w[base + c];
        }
      }
    }
  }
  return dx;
}

// ------------------------------------------------------------------ Dense

Dense::Dense(std::string name, std::size_t in, std::size_t out) : in_(in), out_(out) {
  params_.push_back(Tensor::zeros(name + ".weight", {out, in}));
  params_.push_back(Tensor::zeros(name + ".bias", {out}));
}

void Dense::init(Rng& rng, double limit) { fill_uniform(params_[0], rng, limit); }

Mat Dense::forward(const Mat& x, LayerTape* tape, const ForwardContext&) const {
  require_cols(x, in_, "dense");
  const auto& w = params_[0].data;
  const auto& b = params_[1].data;
  Mat y(x.rows, out_);
  for (std::size_t r = 0; r < x.rows; ++r) {
    const double* xr = &x.data[r * in_];
    for (std::size_t o = 0; o < out_; ++o) {
      const double* wr = &w[o * in_];
      double acc = b[o];
      for (std::size_t i = 0; i < in_; ++i) acc += wr[i] * xr[i];
      y(r, o) = acc;
    }
  }
  if (tape) tape->saved = {x};
  return y;
}

Mat Dense::backward(const Mat& dy, const LayerTape& tape, std::span<Tensor> grads) const {
  const Mat& x = tape.saved.at(0);
  const auto& w = params_[0].data;
  auto& dw = grads[0].data;
  auto& db = grads[1].data;
  Mat dx(x.rows, in_);
  for (std::size_t r = 0; r < x.rows; ++r) {
    const double* xr = &x.data[r * in_];
    double* dxr = &dx.data[r * in_];
    for (std::size_t o = 0; o < out_; ++o) {
      const double g = dy(r, o);
      db[o] += g;
      if (g == 0.0) continue;
      double* dwr = &dw[o * in_];
      const double* wr = &w[o * in_];
      for (std::size_t i = 0; i < in_; ++i) {
        dwr[i] += g * xr[i];
        dxr[i] += g * wr[i];
      }
    }
  }
  return dx;
}

// ------------------------------------------------------------------ activations

std::string ActivationLayer::kind() const {
  switch (fn_) {
    case Activation::Relu: return "relu";
    case Activation::Tanh: return "tanh";
    case Activation::Sigmoid: return "sigmoid";
  }
  return "activation";
}

Mat ActivationLayer::forward(const Mat& x, LayerTape* tape, const ForwardContext&) const {
  Mat y = x;
  for (auto& v : y.data) {
    switch (fn_) {
      case Activation::Relu: v = v < 0.0 ? 0.0 : v; break;  // NaN passes through
      case Activation::Tanh: v = std::tanh(v); break;
      case Activation::Sigmoid: v = sigmoid(v); break;
    }
  }
  if (tape) tape->saved = {y};
  return y;
}

Mat ActivationLayer::backward(const Mat& dy, const LayerTape& tape, std::span<Tensor>) const {
  const Mat& y = tape.saved.at(0);
  Mat dx = dy;
  for (std::size_t i = 0; i < dx.data.size(); ++i) {
    const double out = y.data[i];
    switch (fn_) {
      case Activation::Relu: dx.data[i] = out > 0.0 ? dx.data[i] : 0.0; break;
      case Activation::Tanh: dx.data[i] *= 1.0 - out * out; break;
      case Activation::Sigmoid: dx.data[i] *= out * (1.0 - out); break;
    }
  }
  return dx;
}

Mat Softmax::forward(const Mat& x, LayerTape* tape, const ForwardContext&) const {
  Mat y = x;
  for (std::size_t r = 0; r < y.rows; ++r) {
    auto row = y.row(r);
    const double peak = *std::max_element(row.begin(), row.end());
    double total = 0.0;
    for (auto& v : row) {
      v = std::exp(v - peak);
      total += v;
    }
    for (auto& v : row) v /= total;
  }
  if (tape) tape->saved = {y};
  return y;
}

Mat Softmax::backward(const Mat& dy, const LayerTape& tape, std::span<Tensor>) const {
  const Mat& y = tape.saved.at(0);
  Mat dx(y.rows, y.cols);
  for (std::size_t r = 0; r < y.rows; ++r) {
    double dot = 0.0;
    for (std::size_t c = 0; c < y.cols; ++c) dot += dy(r, c) * y(r, c);
    for (std::size_t c = 0; c < y.cols; ++c) dx(r, c) = y(r, c) * (dy(r, c) - dot);
  }
  return dx;
}

Mat Dropout::forward(const Mat& x, LayerTape* tape, const ForwardContext& ctx) const {
  if (!ctx.training || rate_ <= 0.0 || ctx.dropout_rng == nullptr) {
    if (tape) tape->saved.clear();
    return x;
  }
  Mat mask(x.rows, x.cols);
  const double keep_scale = 1.0 / (1.0 - rate_);
  for (auto& m : mask.data) m = ctx.dropout_rng->uniform() >= rate_ ? keep_scale : 0.0;
  Mat y = x;
  for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] *= mask.data[i];
  if (tape) tape->saved = {std::move(mask)};
  return y;
}

Mat Dropout::backward(const Mat& dy, const LayerTape& tape, std::span<Tensor>) const {
  if (tape.saved.empty()) return dy;
  const Mat& mask = tape.saved[0];
  Mat dx = dy;
  for (std::size_t i = 0; i < dx.data.size(); ++i) dx.data[i] *= mask.data[i];
  return dx;
}

Mat Flatten::forward(const Mat& x, LayerTape* tape, const ForwardContext&) const {
  if (tape) tape->saved = {Mat(x.rows, x.cols)};
  Mat y(1, x.size());
  y.data = x.data;
  return y;
}

Mat Flatten::backward(const Mat& dy, const LayerTape& tape, std::span<Tensor>) const {
  const Mat& shape = tape.saved.at(0);
  Mat dx(shape.rows, shape.cols);
  dx.data = dy.data;
  return dx;
}

// ------------------------------------------------------------------ LSTM

Lstm::Lstm(std::string name, std::size_t in, std::size_t units, bool return_sequences)
    : in_(in), units_(units), return_sequences_(return_sequences) {
  params_.push_back(Tensor::zeros(name + ".wx", {4 * units, in}));
  params_.push_back(Tensor::zeros(name + ".wh", {4 * units, units}));
  params_.push_back(Tensor::zeros(name + ".bias", {4 * units}));
}

void Lstm::init(Rng& rng) {
  const double limit = 1.0 / std::sqrt(static_cast<double>(units_));
  fill_uniform(params_[0], rng, limit);
  fill_uniform(params_[1], rng, limit);
  // Forget-gate bias starts at 1.
  for (std::size_t u = 0; u < units_; ++u) params_[2].data[units_ + u] = 1.0;
}

// Tape layout: x (T x in), gates (T x 4U, post-activation), c (T x U), h (T x U).
Mat Lstm::forward(const Mat& x, LayerTape* tape, const ForwardContext&) const {
  require_cols(x, in_, "lstm");
  const std::size_t steps = x.rows;
  const std::size_t u4 = 4 * units_;
  const auto& wx = params_[0].data;
  const auto& wh = params_[1].data;
  const auto& b = params_[2].data;
  Mat gates(steps, u4);
  Mat cell(steps, units_);
  Mat hidden(steps, units_);
  std::vector<double> h_prev(units_, 0.0);
  std::vector<double> c_prev(units_, 0.0);
  std::vector<double> z(u4);
  for (std::size_t t = 0; t < steps; ++t) {
    const double* xr = &x.data[t * in_];
    for (std::size_t r = 0; r < u4; ++r) {
      double acc = b[r];
      const double* wxr = &wx[r * in_];
      for (std::size_t i = 0; i < in_; ++i) acc += wxr[i] * xr[i];
      const double* whr = &wh[r * units_];
      for (std::size_t i = 0; i < units_; ++i) acc += whr[i] * h_prev[i];
      z[r] = acc;
    }
    for (std::size_t u = 0; u < units_; ++u) {
      const double ig = sigmoid(z[u]);
      const double fg = sigmoid(z[units_ + u]);
      const double gg = std::tanh(z[2 * units_ + u]);
      const double og = sigmoid(z[3 * units_ + u]);
      const double c = fg * c_prev[u] + ig * gg;
      const double h = og * std::tanh(c);
      gates(t, u) = ig;
      gates(t, units_ + u) = fg;
      gates(t, 2 * units_ + u) = gg;
      gates(t, 3 * units_ + u) = og;
      cell(t, u) = c;
      hidden(t, u) = h;
    }
    for (std::size_t u = 0; u < units_; ++u) {
      c_prev[u] = cell(t, u);
      h_prev[u] = hidden(t, u);
    }
  }
  Mat y;
  if (return_sequences_) {
    y = hidden;
  } else {
    y = Mat(1, units_);
    if (steps > 0) std::copy_n(hidden.data.begin() + static_cast<std::ptrdiff_t>((steps - 1) * units_), units_, y.data.begin());
  }
  if (tape) tape->saved = {x, std::move(gates), std::move(cell), std::move(hidden)};
  return y;
}

Mat Lstm::backward(const Mat& dy, const LayerTape& tape, std::span<Tensor> grads) const {
  const Mat& x = tape.saved.at(0);
  const Mat& gates = tape.saved.at(1);
  const Mat& cell = tape.saved.at(2);
  const Mat& hidden = tape.saved.at(3);
  const std::size_t steps = x.rows;
  const std::size_t u4 = 4 * units_;
  const auto& wx = params_[0].data;
  const auto& wh = params_[1].data;
  auto& dwx = grads[0].data;
  auto& dwh = grads[1].data;
  auto& db = grads[2].data;

  Mat dx(steps, in_);
  std::vector<double> dh_next(units_, 0.0);
  std::vector<double> dc_next(units_, 0.0);
  std::vector<double> dz(u4);
  for (std::size_t tt = steps; tt-- > 0;) {
    for (std::size_t u = 0; u < units_; ++u) {
      double dh = dh_next[u];
      if (return_sequences_) {
        dh += dy(tt, u);
      } else if (tt == steps - 1) {
        dh += dy(0, u);
      }
      const double ig = gates(tt, u);
      const double fg = gates(tt, units_ + u);
      const double gg = gates(tt, 2 * units_ + u);
      const double og = gates(tt, 3 * units_ + u);
      const double tc = std::tanh(cell(tt, u));
      const double c_prev = tt > 0 ? cell(tt - 1, u) : 0.0;
      const double dc = dh * og * (1.0 - tc * tc) + dc_next[u];
      dz[u] = dc * gg * ig * (1.0 - ig);
      dz[units_ + u] = dc * c_prev * fg * (1.0 - fg);
      dz[2 * units_ + u] = dc * ig * (1.0 - gg * gg);
      dz[3 * units_ + u] = dh * tc * og * (1.0 - og);
      dc_next[u] = dc * fg;
    }
    const double* xr = &x.data[tt * in_];
    double* dxr = &dx.data[tt * in_];
    std::fill(dh_next.begin(), dh_next.end(), 0.0);
    for (std::size_t r = 0; r < u4; ++r) {
      const double g = dz[r];
      db[r] += g;
      if (g == 0.0) continue;
      double* dwxr = &dwx[r * in_];
      const double* wxr = &wx[r * in_];
      for (std::size_t i = 0; i < in_; ++i) {
        dwxr[i] += g * xr[i];
        dxr[i] += g * wxr[i];
      }
      if (tt > 0) {
        const double* hp = &hidden.data[(tt - 1) * units_];
        double* dwhr = &dwh[r * units_];
        const double* whr = &wh[r * units_];
        for (std::size_t i = 0; i < units_; ++i) {
          dwhr[i] += g * hp[i];
          dh_next[i] += g * whr[i];
        }
      }
    }
  }
  return dx;
}

// ------------------------------------------------------------------ attention

AdditiveAttention::AdditiveAttention(std::string name, std::size_t units, std::size_t attention_dim)
    : units_(units), dim_(attention_dim) {
  params_.push_back(Tensor::zeros(name + ".weight", {attention_dim, units}));
  params_.push_back(Tensor::zeros(name + ".bias", {attention_dim}));
  params_.push_back(Tensor::zeros(name + ".v", {attention_dim}));
}

void AdditiveAttention::init(Rng& rng) {
  fill_uniform(params_[0], rng, std::sqrt(3.0 / static_cast<double>(units_)));
  fill_uniform(params_[2], rng, std::sqrt(3.0 / static_cast<double>(dim_)));
}

// Tape layout: h (T x U), u = tanh(W h + b) (T x A), alpha (1 x T).
Mat AdditiveAttention::forward(const Mat& x, LayerTape* tape, const ForwardContext&) const {
  require_cols(x, units_, "attention");
  const std::size_t steps = x.rows;
  const auto& w = params_[0].data;
  const auto& b = params_[1].data;
  const auto& v = params_[2].data;
  Mat act(steps, dim_);
  Mat alpha(1, steps);
  for (std::size_t t = 0; t < steps; ++t) {
    double score = 0.0;
    for (std::size_t a = 0; a < dim_; ++a) {
      double acc = b[a];
      const double* wr = &w[a * units_];
      for (std::size_t i = 0; i < units_; ++i) acc += wr[i] * x(t, i);
      act(t, a) = std::tanh(acc);
      score += v[a] * act(t, a);
    }
    alpha(0, t) = score;
  }
  if (steps > 0) {
    const double peak = *std::max_element(alpha.data.begin(), alpha.data.end());
    double total = 0.0;
    for (auto& s : alpha.data) {
      s = std::exp(s - peak);
      total += s;
    }
    for (auto& s : alpha.data) s /= total;
  }
  Mat y(1, units_);
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t i = 0; i < units_; ++i) y(0, i) += alpha(0, t) * x(t, i);
  }
  if (tape) tape->saved = {x, std::move(act), std::move(alpha)};
  return y;
}

Mat AdditiveAttention::backward(const Mat& dy, const LayerTape& tape, std::span<Tensor> grads) const {
  const Mat& h = tape.saved.at(0);
  const Mat& act = tape.saved.at(1);
  const Mat& alpha = tape.saved.at(2);
  const std::size_t steps = h.rows;
  const auto& w = params_[0].data;
  const auto& v = params_[2].data;
  auto& dw = grads[0].data;
  auto& db = grads[1].data;
  auto& dv = grads[2].data;

  Mat dh(steps, units_);
  std::vector<double> dalpha(steps, 0.0);
  double weighted = 0.0;
  for (std::size_t t = 0; t < steps; ++t) {
    double d = 0.0;
    for (std::size_t i = 0; i < units_; ++i) {
      d += dy(0, i) * h(t, i);
      dh(t, i) += alpha(0, t) * dy(0, i);
    }
    dalpha[t] = d;
    weighted += alpha(0, t) * d;
  }
  for (std::size_t t = 0; t < steps; ++t) {
    const double ds = alpha(0, t) * (dalpha[t] - weighted);
    for (std::size_t a = 0; a < dim_; ++a) {
      const double u = act(t, a);
      dv[a] += ds * u;
      const double dpre = ds * v[a] * (1.0 - u * u);
      db[a] += dpre;
      double* dwr = &dw[a * units_];
      const double* wr = &w[a * units_];
      for (std::size_t i = 0; i < units_; ++i) {
        dwr[i] += dpre * h(t, i);
        dh(t, i) += dpre * wr[i];
      }
    }
  }
  return dh;
}

}  // namespace rssiloc::model
