#pragma once

#include <functional>
#include <span>

#include "rssiloc/model/adam.hpp"
#include "rssiloc/model/loss.hpp"
#include "rssiloc/model/trained_model.hpp"

namespace rssiloc::model {

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainOptions {
  int batch = 64;
  int max_epochs = 200;
  int patience = 20;
  double val_fraction = 0.1;
  AdamHyper adam;
  std::function<void(const EpochStats&)> on_epoch;
};

// Neural kinds: mini-batch Adam with early stopping on validation loss; the
// best-validation parameters are kept. kNN/RF: fit on all pairs.
// Throws EmptyTrainingSet, NonFiniteLoss, InvalidConfig.
TrainedModel train(const ModelConfig& config, const DatasetMeta& meta, std::span<const TrainingPair> pairs,
                   const TrainOptions& options = {});

inline TrainedModel train(const ModelConfig& config, const TrainingSet& set, const TrainOptions& options = {}) {
  return train(config, set.meta, set.pairs, options);
}

// The loss the configured head trains against for one pair.
OutputLoss make_output_loss(const ModelConfig& config, const TargetPoint& target);

}  // namespace rssiloc::model
