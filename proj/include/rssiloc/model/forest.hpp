#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "rssiloc/model/config.hpp"

namespace rssiloc::model {

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;
};

// CART regression tree: variance-reduction splits, x <= threshold goes left,
// leaves predict the mean target of their samples.
class RegressionTree {
 public:
  // rows: n x d row-major features; y: n targets; sample: indices (with
  // repetition for bootstrap draws).
  static RegressionTree fit(std::span<const double> rows, std::size_t n_features, std::span<const double> y,
                            std::vector<std::size_t> sample, const RfParams& params, std::uint64_t seed);

  double predict(std::span<const double> features) const;
  const std::vector<TreeNode>& nodes() const { return nodes_; }
  std::vector<TreeNode>& nodes() { return nodes_; }
  int depth() const;

 private:
  std::vector<TreeNode> nodes_;
};

// One bagged forest per output coordinate.
class RegressionForest {
 public:
  static RegressionForest fit(std::span<const double> rows, std::size_t n_features,
                              std::span<const std::array<double, 2>> targets, const RfParams& params,
                              std::uint64_t seed);

  std::array<double, 2> predict(std::span<const double> features) const;

  std::array<std::vector<RegressionTree>, 2>& trees() { return trees_; }
  const std::array<std::vector<RegressionTree>, 2>& trees() const { return trees_; }

 private:
  std::array<std::vector<RegressionTree>, 2> trees_;
};

}  // namespace rssiloc::model
