#include "rssiloc/model/forest.hpp"

#include <algorithm>
#include <functional>
#include <numeric>

#include "rssiloc/error.hpp"
#include "rssiloc/rng.hpp"

namespace rssiloc::model {

namespace {

struct Grower {
  std::span<const double> rows;
  std::size_t d;
  std::span<const double> y;
  const RfParams& params;
  Rng rng;
  std::vector<TreeNode> nodes;
  std::vector<std::size_t> feature_pool;

  double x(std::size_t sample, std::size_t feature) const { return rows[sample * d + feature]; }

  int grow(std::vector<std::size_t>& idx, int depth) {
    const int id = static_cast<int>(nodes.size());
    nodes.push_back(TreeNode{});
    double sum = 0.0;
    double lo = y[idx.front()];
    double hi = lo;
    for (const auto i : idx) {
      sum += y[i];
      lo = std::min(lo, y[i]);
      hi = std::max(hi, y[i]);
    }
    const double n = static_cast<double>(idx.size());
    nodes[static_cast<std::size_t>(id)].value = std::clamp(sum / n, lo, hi);

    const auto min_leaf = static_cast<std::size_t>(params.min_leaf);
    if (depth >= params.max_depth || idx.size() < 2 * min_leaf || lo == hi) return id;

    // Sample candidate features without replacement.
    std::size_t mtry = params.max_features > 0 ? static_cast<std::size_t>(params.max_features) : std::max<std::size_t>(1, d / 3);
    mtry = std::min(mtry, d);
    for (std::size_t k = 0; k < mtry; ++k) {
      const std::size_t j = k + static_cast<std::size_t>(rng.below(d - k));
      std::swap(feature_pool[k], feature_pool[j]);
    }
    std::vector<std::size_t> candidates(feature_pool.begin(), feature_pool.begin() + static_cast<std::ptrdiff_t>(mtry));
    std::sort(candidates.begin(), candidates.end());

    const double parent_score = sum * sum / n;
    double best_score = parent_score;
    int best_feature = -1;
    double best_threshold = 0.0;
    std::vector<std::pair<double, double>> vals(idx.size());
    for (const auto f : candidates) {
      for (std::size_t k = 0; k < idx.size(); ++k) vals[k] = {x(idx[k], f), y[idx[k]]};
      std::sort(vals.begin(), vals.end());
      double left_sum = 0.0;
      for (std::size_t k = 0; k + 1 < vals.size(); ++k) {
        left_sum += vals[k].second;
        const std::size_t n_left = k + 1;
        const std::size_t n_right = vals.size() - n_left;
        if (n_left < min_leaf) continue;
        if (n_right < min_leaf) break;
        if (vals[k].first == vals[k + 1].first) continue;
        const double right_sum = sum - left_sum;
        const double score = left_sum * left_sum / static_cast<double>(n_left) +
                             right_sum * right_sum / static_cast<double>(n_right);
        if (score > best_score * (1.0 + 1e-12) + 1e-300) {
          best_score = score;
          best_feature = static_cast<int>(f);
          double mid = vals[k].first + (vals[k + 1].first - vals[k].first) / 2.0;
          if (!(mid < vals[k + 1].first)) mid = vals[k].first;
          best_threshold = mid;
        }
      }
    }
    if (best_feature < 0) return id;

    std::vector<std::size_t> left;
    std::vector<std::size_t> right;
    for (const auto i : idx) (x(i, static_cast<std::size_t>(best_feature)) <= best_threshold ? left : right).push_back(i);
    idx.clear();
    idx.shrink_to_fit();
    nodes[static_cast<std::size_t>(id)].feature = best_feature;
    nodes[static_cast<std::size_t>(id)].threshold = best_threshold;
    const int l = grow(left, depth + 1);
    const int r = grow(right, depth + 1);
    nodes[static_cast<std::size_t>(id)].left = l;
    nodes[static_cast<std::size_t>(id)].right = r;
    return id;
  }
};

}  // namespace

RegressionTree RegressionTree::fit(std::span<const double> rows, std::size_t n_features, std::span<const double> y,
                                   std::vector<std::size_t> sample, const RfParams& params, std::uint64_t seed) {
  if (sample.empty() || n_features == 0) throw Error(Errc::EmptyTrainingSet, "regression tree needs samples");
  Grower g{rows, n_features, y, params, Rng(seed), {}, std::vector<std::size_t>(n_features)};
  std::iota(g.feature_pool.begin(), g.feature_pool.end(), std::size_t{0});
  g.grow(sample, 0);
  RegressionTree tree;
  tree.nodes_ = std::move(g.nodes);
  return tree;
}

double RegressionTree::predict(std::span<const double> features) const {
  std::size_t node = 0;
  while (nodes_[node].feature >= 0) {
    const auto& n = nodes_[node];
    node = static_cast<std::size_t>(features[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
  }
  return nodes_[node].value;
}

int RegressionTree::depth() const {
  std::function<int(std::size_t)> walk = [&](std::size_t i) -> int {
    const auto& n = nodes_[i];
    if (n.feature < 0) return 0;
    return 1 + std::max(walk(static_cast<std::size_t>(n.left)), walk(static_cast<std::size_t>(n.right)));
  };
  return nodes_.empty() ? 0 : walk(0);
}

RegressionForest RegressionForest::fit(std::span<const double> rows, std::size_t n_features,
                                       std::span<const std::array<double, 2>> targets, const RfParams& params,
                                       std::uint64_t seed) {
  const std::size_t n = targets.size();
  if (n == 0) throw Error(Errc::EmptyTrainingSet, "random forest needs at least one sample");
  if (rows.size() != n * n_features) throw Error(Errc::ShapeMismatch, "feature matrix size");
  RegressionForest forest;
  for (std::size_t c = 0; c < 2; ++c) {
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = targets[i][c];
    for (int t = 0; t < params.n_trees; ++t) {
      const std::uint64_t tree_seed = mix_seed(seed ^ mix_seed(c * 1'000'003ULL + static_cast<std::uint64_t>(t)));
      Rng draw(tree_seed);
      std::vector<std::size_t> sample(n);
      if (params.bootstrap) {
        for (auto& s : sample) s = static_cast<std::size_t>(draw.below(n));
      } else {
        std::iota(sample.begin(), sample.end(), std::size_t{0});
      }
      forest.trees_[c].push_back(RegressionTree::fit(rows, n_features, y, std::move(sample), params, mix_seed(tree_seed)));
    }
  }
  return forest;
}

std::array<double, 2> RegressionForest::predict(std::span<const double> features) const {
  std::array<double, 2> out{};
  for (std::size_t c = 0; c < 2; ++c) {
    const auto& trees = trees_[c];
    double sum = 0.0;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto& t : trees) {
      const double v = t.predict(features);
      sum += v;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    out[c] = std::clamp(sum / static_cast<double>(trees.size()), lo, hi);
  }
  return out;
}

}  // namespace rssiloc::model
