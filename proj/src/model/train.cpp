#include "rssiloc/model/train.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "rssiloc/error.hpp"
#include "rssiloc/rng.hpp"

namespace rssiloc::model {

OutputLoss make_output_loss(const ModelConfig& config, const TargetPoint& target) {
  OutputLoss loss;
  if (config.head == HeadKind::RegressionXY) {
    loss.kind = OutputLoss::Kind::Mse;
    loss.target = {target.x_norm, target.y_norm};
    return loss;
  }
  if (!target.room) throw Error(Errc::InvalidConfig, "classification target has no room");
  loss.kind = config.binary_cross_entropy ? OutputLoss::Kind::BinaryCrossEntropy : OutputLoss::Kind::CrossEntropy;
  loss.room = static_cast<std::size_t>(*target.room);
  return loss;
}

namespace {

struct Sample {
  Mat x;
  OutputLoss loss;
};

double mean_loss(const Network& net, const std::vector<Sample>& samples) {
  double total = 0.0;
  for (const auto& s : samples) total += s.loss.value(net.forward(s.x).data);
  return total / static_cast<double>(samples.size());
}

std::vector<std::vector<double>> snapshot(const Network& net) {
  std::vector<std::vector<double>> out;
  for (const auto* p : net.parameters()) out.push_back(p->data);
  return out;
}

void restore(Network& net, const std::vector<std::vector<double>>& saved) {
  auto params = net.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->data = saved[i];
}

void fit_neural(TrainedModel& model, std::span<const TrainingPair> pairs, const TrainOptions& options) {
  const auto& config = model.config;
  std::vector<Sample> all;
  all.reserve(pairs.size());
  for (const auto& p : pairs) {
    if (config.head == HeadKind::ClassifyRoom && !p.target.room) continue;
    all.push_back({encode_frame(p.frame, model.norm, config.use_mask_channels), make_output_loss(config, p.target)});
  }
  if (all.empty()) throw Error(Errc::EmptyTrainingSet, "no usable training pairs for this head");

  std::vector<std::size_t> order(all.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng split_rng(derive_seed(config.seed, "split"));
  split_rng.shuffle(std::span(order));
  std::size_t n_val = static_cast<std::size_t>(std::floor(options.val_fraction * static_cast<double>(all.size())));
  if (n_val >= all.size()) n_val = all.size() - 1;

  std::vector<Sample> val;
  std::vector<Sample> train;
  for (std::size_t i = 0; i < order.size(); ++i) (i < n_val ? val : train).push_back(std::move(all[order[i]]));

  model.network = build_network(config, model.meta.window.n_steps(), model.input_channels(), config.seed);
  Network& net = model.network;
  auto params = net.parameters();
  AdamState state = AdamState::zeros_like(params);
  Rng shuffle_rng(derive_seed(config.seed, "shuffle"));
  Rng dropout_rng(derive_seed(config.seed, "dropout"));

  const std::size_t batch = static_cast<std::size_t>(std::max(1, options.batch));
  std::vector<std::size_t> idx(train.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});

  double best = std::numeric_limits<double>::infinity();
  auto best_params = snapshot(net);
  int since_best = 0;
  std::int64_t step = 0;
  Tape tape;
  double last_train = 0.0;

  for (int epoch = 1; epoch <= options.max_epochs; ++epoch) {
    shuffle_rng.shuffle(std::span(idx));
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < idx.size(); start += batch) {
      const std::size_t end = std::min(idx.size(), start + batch);
      const double scale = 1.0 / static_cast<double>(end - start);
      auto grads = net.zero_gradients();
      for (std::size_t b = start; b < end; ++b) {
        const Sample& s = train[idx[b]];
        const Mat y = net.forward(s.x, tape, &dropout_rng);
        const double loss = s.loss.value(y.data);
        if (!std::isfinite(loss)) {
          std::ostringstream msg;
          msg << "loss " << loss << " at epoch " << epoch << ", step " << step + 1 << ", sample " << idx[b];
          throw Error(Errc::NonFiniteLoss, msg.str());
        }
        epoch_loss += loss;
        Mat dy(y.rows, y.cols);
        dy.data = s.loss.grad(y.data);
        for (auto& g : dy.data) g *= scale;
        net.backward(dy, tape, grads);
      }
      adam_step(params, grads, state, options.adam, ++step);
    }
    last_train = epoch_loss / static_cast<double>(train.size());
    const double val_loss = val.empty() ? mean_loss(net, train) : mean_loss(net, val);
    if (!std::isfinite(val_loss)) {
      throw Error(Errc::NonFiniteLoss, "validation loss " + std::to_string(val_loss) + " at epoch " +
                                           std::to_string(epoch));
    }
    if (options.on_epoch) options.on_epoch({epoch, last_train, val_loss});
    model.info.epochs_run = epoch;
    if (val_loss < best) {
      best = val_loss;
      best_params = snapshot(net);
      since_best = 0;
    } else if (++since_best >= options.patience) {
      break;
    }
  }
  restore(net, best_params);
  model.info.final_loss = last_train;
  model.info.best_val_loss = best;
  model.info.train_size = train.size();
  model.info.val_size = val.size();
}

}  // namespace

TrainedModel train(const ModelConfig& config, const DatasetMeta& meta, std::span<const TrainingPair> pairs,
                   const TrainOptions& options) {
  if (pairs.empty()) throw Error(Errc::EmptyTrainingSet, "training set is empty");
  TrainedModel model;
  model.config = config;
  model.meta = meta;
  if (model.config.head == HeadKind::ClassifyRoom && model.config.n_rooms == 0) {
    model.config.n_rooms = static_cast<int>(meta.room_names.size());
  }
  model.config.validate();
  const int expected = static_cast<int>(meta.roster.size()) * kAggregationCount * meta.window.n_steps();
  for (const auto& p : pairs) {
    if (static_cast<int>(p.frame.values.size()) != expected || p.frame.n_steps != meta.window.n_steps()) {
      throw Error(Errc::ShapeMismatch, "training frame does not match dataset meta");
    }
  }
  model.norm = fit_input_norm(pairs);
  model.info.seed = config.seed;

  if (is_neural(config.kind)) {
    fit_neural(model, pairs, options);
    return model;
  }
  if (model.config.head != HeadKind::RegressionXY) {
    throw Error(Errc::InvalidConfig, std::string(model_kind_name(config.kind)) + " supports regression only");
  }
  std::vector<std::array<double, 2>> targets;
  targets.reserve(pairs.size());
  for (const auto& p : pairs) targets.push_back({p.target.x_norm, p.target.y_norm});
  if (config.kind == ModelKind::Knn) {
    std::vector<std::vector<double>> features;
    features.reserve(pairs.size());
    for (const auto& p : pairs) features.push_back(flatten_frame(p.frame, model.norm));
    model.knn = KnnRegressor(config.knn_k, std::move(features), std::move(targets));
  } else {
    const std::size_t d = static_cast<std::size_t>(expected);
    std::vector<double> rows;
    rows.reserve(pairs.size() * d);
    for (const auto& p : pairs) {
      const auto f = flatten_frame(p.frame, model.norm);
      rows.insert(rows.end(), f.begin(), f.end());
    }
    model.forest = RegressionForest::fit(rows, d, targets, config.rf, derive_seed(config.seed, "forest"));
  }
  model.info.train_size = pairs.size();
  return model;
}

}  // namespace rssiloc::model
