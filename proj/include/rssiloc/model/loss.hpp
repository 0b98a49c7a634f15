#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace rssiloc::model {

inline constexpr double kProbabilityClamp = 1e-12;

double loss_mse(std::span<const double> pred, std::span<const double> target);
std::vector<double> loss_mse_grad(std::span<const double> pred, std::span<const double> target);

// -log(max(p[target], 1e-12)).
double loss_cross_entropy(std::span<const double> probs, std::size_t target);
std::vector<double> loss_cross_entropy_grad(std::span<const double> probs, std::size_t target);

// Mean over classes of the binary cross-entropy against a one-hot target.
double loss_binary_cross_entropy(std::span<const double> probs, std::size_t target);
std::vector<double> loss_binary_cross_entropy_grad(std::span<const double> probs, std::size_t target);

}  // namespace rssiloc::model

namespace rssiloc::model {

// The loss applied to a network output row for one training target.
struct OutputLoss {
  enum class Kind { Mse, CrossEntropy, BinaryCrossEntropy };
  Kind kind = Kind::Mse;
  std::vector<double> target;  // Mse
  std::size_t room = 0;        // cross-entropy forms

  double value(std::span<const double> output) const;
  std::vector<double> grad(std::span<const double> output) const;
};

}  // namespace rssiloc::model
