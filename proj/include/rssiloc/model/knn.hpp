#pragma once

#include <array>
#include <span>
#include <vector>

namespace rssiloc::model {

// Fingerprint lookup: inverse-distance-weighted mean of the k nearest stored
// targets under Euclidean distance. An exact match (distance 0) returns the
// mean of the exact matches.
class KnnRegressor {
 public:
  KnnRegressor() = default;
  KnnRegressor(int k, std::vector<std::vector<double>> features, std::vector<std::array<double, 2>> targets);

  std::array<double, 2> predict(std::span<const double> query) const;

  int k() const { return k_; }
  std::size_t size() const { return features_.size(); }
  const std::vector<std::vector<double>>& features() const { return features_; }
  const std::vector<std::array<double, 2>>& targets() const { return targets_; }

 private:
  int k_ = 5;
  std::vector<std::vector<double>> features_;
  std::vector<std::array<double, 2>> targets_;
};

}  // namespace rssiloc::model
