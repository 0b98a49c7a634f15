#include "rssiloc/model/knn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rssiloc/error.hpp"

namespace rssiloc::model {

KnnRegressor::KnnRegressor(int k, std::vector<std::vector<double>> features,
                           std::vector<std::array<double, 2>> targets)
    : k_(k), features_(std::move(features)), targets_(std::move(targets)) {
  if (features_.empty()) throw Error(Errc::EmptyTrainingSet, "kNN needs at least one stored fingerprint");
  if (features_.size() != targets_.size()) throw Error(Errc::ShapeMismatch, "kNN features and targets differ in count");
  if (k_ < 1 || static_cast<std::size_t>(k_) > features_.size()) {
    throw Error(Errc::InvalidConfig,
                "k=" + std::to_string(k_) + " exceeds the " + std::to_string(features_.size()) + " stored fingerprints");
  }
}

std::array<double, 2> KnnRegressor::predict(std::span<const double> query) const {
  std::vector<std::pair<double, std::size_t>> dist(features_.size());
  for (std::size_t i = 0; i < features_.size(); ++i) {
    const auto& f = features_[i];
    if (f.size() != query.size()) throw Error(Errc::ShapeMismatch, "kNN query length");
    double d2 = 0.0;
    for (std::size_t j = 0; j < f.size(); ++j) {
      const double d = f[j] - query[j];
      d2 += d * d;
    }
    dist[i] = {d2, i};
  }
  const auto k = static_cast<std::size_t>(k_);
  std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());

  std::array<double, 2> exact{0.0, 0.0};
  std::size_t n_exact = 0;
  for (std::size_t i = 0; i < k; ++i) {
    if (dist[i].first != 0.0) break;
    exact[0] += targets_[dist[i].second][0];
    exact[1] += targets_[dist[i].second][1];
    ++n_exact;
  }
  if (n_exact > 0) return {exact[0] / static_cast<double>(n_exact), exact[1] / static_cast<double>(n_exact)};

  std::array<double, 2> acc{0.0, 0.0};
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    const double w = 1.0 / std::sqrt(dist[i].first);
    acc[0] += w * targets_[dist[i].second][0];
    acc[1] += w * targets_[dist[i].second][1];
    total += w;
  }
  return {acc[0] / total, acc[1] / total};
}

}  // namespace rssiloc::model
