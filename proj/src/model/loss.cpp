#include "rssiloc/model/loss.hpp"

#include <algorithm>
#include <cmath>

#include "rssiloc/error.hpp"

namespace rssiloc::model {

namespace {

void check_lengths(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) {
    throw Error(Errc::ShapeMismatch, "loss inputs have lengths " + std::to_string(a.size()) + " and " +
                                         std::to_string(b.size()));
  }
}

void check_index(std::span<const double> probs, std::size_t target) {
  if (target >= probs.size()) {
    throw Error(Errc::IndexOutOfRange, "class " + std::to_string(target) + " of " + std::to_string(probs.size()));
  }
}

}  // namespace

double loss_mse(std::span<const double> pred, std::span<const double> target) {
  check_lengths(pred, target);
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    sum += d * d;
  }
  return sum / static_cast<double>(pred.size());
}

std::vector<double> loss_mse_grad(std::span<const double> pred, std::span<const double> target) {
  check_lengths(pred, target);
  std::vector<double> g(pred.size());
  const double scale = 2.0 / static_cast<double>(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) g[i] = scale * (pred[i] - target[i]);
  return g;
}

double loss_cross_entropy(std::span<const double> probs, std::size_t target) {
  check_index(probs, target);
  return -std::log(std::max(probs[target], kProbabilityClamp));
}

std::vector<double> loss_cross_entropy_grad(std::span<const double> probs, std::size_t target) {
  check_index(probs, target);
  std::vector<double> g(probs.size(), 0.0);
  if (probs[target] > kProbabilityClamp) g[target] = -1.0 / probs[target];
  return g;
}

double loss_binary_cross_entropy(std::span<const double> probs, std::size_t target) {
  check_index(probs, target);
  double sum = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = std::clamp(probs[i], kProbabilityClamp, 1.0 - kProbabilityClamp);
    sum -= i == target ? std::log(p) : std::log(1.0 - p);
  }
  return sum / static_cast<double>(probs.size());
}

std::vector<double> loss_binary_cross_entropy_grad(std::span<const double> probs, std::size_t target) {
  check_index(probs, target);
  std::vector<double> g(probs.size(), 0.0);
  const double n = static_cast<double>(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = probs[i];
    if (p <= kProbabilityClamp || p >= 1.0 - kProbabilityClamp) continue;
    g[i] = (i == target ? -1.0 / p : 1.0 / (1.0 - p)) / n;
  }
  return g;
}

}  // namespace rssiloc::model

namespace rssiloc::model {

double OutputLoss::value(std::span<const double> output) const {
  switch (kind) {
    case Kind::Mse: return loss_mse(output, target);
    case Kind::CrossEntropy: return loss_cross_entropy(output, room);
    case Kind::BinaryCrossEntropy: return loss_binary_cross_entropy(output, room);
  }
  return 0.0;
}

std::vector<double> OutputLoss::grad(std::span<const double> output) const {
  switch (kind) {
    case Kind::Mse: return loss_mse_grad(output, target);
    case Kind::CrossEntropy: return loss_cross_entropy_grad(output, room);
    case Kind::BinaryCrossEntropy: return loss_binary_cross_entropy_grad(output, room);
  }
  return {};
}

}  // namespace rssiloc::model
