#include "rssiloc/model/trained_model.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"
#include "rssiloc/binary_io.hpp"
#include "rssiloc/dataset_file.hpp"
#include "rssiloc/error.hpp"

namespace rssiloc::model {

using nlohmann::json;

InputNorm fit_input_norm(std::span<const TrainingPair> pairs) {
  InputNorm norm;
  double peak = -std::numeric_limits<double>::infinity();
  for (const auto& p : pairs) {
    for (std::size_t i = 0; i < p.frame.values.size(); ++i) {
      if (!p.frame.missing[i]) peak = std::max(peak, p.frame.values[i]);
    }
  }
  norm.max = std::isfinite(peak) && peak > norm.floor ? peak : norm.floor + 1.0;
  return norm;
}

Mat encode_frame(const FeatureFrame& frame, const InputNorm& norm, bool mask_channels) {
  const auto steps = static_cast<std::size_t>(frame.n_steps);
  const std::size_t value_channels = static_cast<std::size_t>(frame.n_sources) * kAggregationCount;
  Mat x(steps, value_channels * (mask_channels ? 2 : 1));
  for (std::size_t ch = 0; ch < value_channels; ++ch) {
    for (std::size_t t = 0; t < steps; ++t) {
      const std::size_t idx = ch * steps + t;
      x(t, ch) = norm.apply(frame.values[idx]);
      if (mask_channels) x(t, value_channels + ch) = frame.missing[idx] ? 1.0 : 0.0;
    }
  }
  return x;
}

std::vector<double> flatten_frame(const FeatureFrame& frame, const InputNorm& norm) {
  std::vector<double> out(frame.values.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = norm.apply(frame.values[i]);
  return out;
}

std::size_t RoomDistribution::argmax() const {
  return static_cast<std::size_t>(std::max_element(probabilities.begin(), probabilities.end()) - probabilities.begin());
}

int TrainedModel::input_channels() const {
  return static_cast<int>(meta.roster.size()) * kAggregationCount * (config.use_mask_channels ? 2 : 1);
}

Prediction TrainedModel::predict(const FeatureFrame& frame) const {
  if (frame.n_sources != static_cast<int>(meta.roster.size()) || frame.n_steps != meta.window.n_steps() ||
      frame.values.size() != static_cast<std::size_t>(frame.n_sources) * kAggregationCount * frame.n_steps) {
    throw Error(Errc::ShapeMismatch, "frame is " + std::to_string(frame.n_sources) + "x3x" +
                                         std::to_string(frame.n_steps) + ", model expects " +
                                         std::to_string(meta.roster.size()) + "x3x" +
                                         std::to_string(meta.window.n_steps()));
  }
  Prediction out;
  auto position = [&](double xn, double yn) {
    return PositionEstimate{frame.t_star_ms, xn, yn, xn * meta.width_px, yn * meta.height_px};
  };
  if (is_neural(config.kind)) {
    const Mat y = network.forward(encode_frame(frame, norm, config.use_mask_channels));
    if (config.head == HeadKind::RegressionXY) {
      out.position = position(y.data.at(0), y.data.at(1));
    } else {
      out.rooms = RoomDistribution{y.data};
    }
    return out;
  }
  const auto features = flatten_frame(frame, norm);
  std::array<double, 2> xy{};
  if (config.kind == ModelKind::Knn) {
    if (!knn) throw Error(Errc::ModelNotLoaded, "kNN store missing");
    xy = knn->predict(features);
  } else {
    if (!forest) throw Error(Errc::ModelNotLoaded, "forest missing");
    xy = forest->predict(features);
  }
  out.position = position(xy[0], xy[1]);
  return out;
}

// ------------------------------------------------------------------ config json

std::string config_to_json_text(const ModelConfig& c) {
  json j = {{"kind", model_kind_name(c.kind)},
            {"conv_kernels", c.conv_kernels},
            {"conv_filters", c.conv_filters},
            {"lstm_layers", c.lstm_layers},
            {"lstm_units", c.lstm_units},
            {"mlp_widths", c.mlp_widths},
            {"dropout", c.dropout},
            {"dropout_after_cnn", c.dropout_after_cnn},
            {"head", c.head == HeadKind::RegressionXY ? "regression_xy" : "classify_room"},
            {"n_rooms", c.n_rooms},
            {"binary_cross_entropy", c.binary_cross_entropy},
            {"use_mask_channels", c.use_mask_channels},
            {"seed", c.seed},
            {"knn_k", c.knn_k},
            {"rf",
             {{"n_trees", c.rf.n_trees},
              {"max_depth", c.rf.max_depth},
              {"min_leaf", c.rf.min_leaf},
              {"max_features", c.rf.max_features},
              {"bootstrap", c.rf.bootstrap}}},
            {"reference_shapes", c.reference_shapes}};
  return j.dump();
}

ModelConfig config_from_json_text(const std::string& text) {
  ModelConfig c;
  try {
    const json j = json::parse(text);
    c.kind = parse_model_kind(j.at("kind").get<std::string>());
    c.conv_kernels = j.value("conv_kernels", c.conv_kernels);
    c.conv_filters = j.value("conv_filters", c.conv_filters);
    c.lstm_layers = j.value("lstm_layers", c.lstm_layers);
    c.lstm_units = j.value("lstm_units", c.lstm_units);
    c.mlp_widths = j.value("mlp_widths", c.mlp_widths);
    c.dropout = j.value("dropout", c.dropout);
    c.dropout_after_cnn = j.value("dropout_after_cnn", c.dropout_after_cnn);
    c.head = j.value("head", std::string("regression_xy")) == "classify_room" ? HeadKind::ClassifyRoom
                                                                               : HeadKind::RegressionXY;
    c.n_rooms = j.value("n_rooms", c.n_rooms);
    c.binary_cross_entropy = j.value("binary_cross_entropy", c.binary_cross_entropy);
    c.use_mask_channels = j.value("use_mask_channels", c.use_mask_channels);
    c.seed = j.value("seed", c.seed);
    c.knn_k = j.value("knn_k", c.knn_k);
    if (j.contains("rf")) {
      const auto& rf = j["rf"];
      c.rf.n_trees = rf.value("n_trees", c.rf.n_trees);
      c.rf.max_depth = rf.value("max_depth", c.rf.max_depth);
      c.rf.min_leaf = rf.value("min_leaf", c.rf.min_leaf);
      c.rf.max_features = rf.value("max_features", c.rf.max_features);
      c.rf.bootstrap = rf.value("bootstrap", c.rf.bootstrap);
    }
    c.reference_shapes = j.value("reference_shapes", c.reference_shapes);
  } catch (const json::exception& e) {
    throw Error(Errc::InvalidConfig, std::string("model config: ") + e.what());
  }
  return c;
}

// ------------------------------------------------------------------ container

namespace {

constexpr char kMagic[] = "RLMD";

void write_tensor(ByteWriter& w, const Tensor& t) {
  w.str(t.name);
  w.u32(static_cast<std::uint32_t>(t.shape.size()));
  for (const auto d : t.shape) w.u64(d);
  w.f64s(t.data);
}

}  // namespace

std::vector<std::uint8_t> serialize_model(const TrainedModel& m) {
  ByteWriter w;
  w.raw(kMagic);
  w.u32(kModelFormatVersion);
  const json header = {{"config", json::parse(config_to_json_text(m.config))},
                       {"meta", json::parse(meta_to_json_text(m.meta))}};
  w.str(header.dump());
  w.f64(m.norm.floor);
  w.f64(m.norm.max);
  w.u32(static_cast<std::uint32_t>(m.info.epochs_run));
  w.f64(m.info.final_loss);
  w.f64(m.info.best_val_loss);
  w.u64(m.info.seed);
  w.u64(m.info.train_size);
  w.u64(m.info.val_size);

  if (is_neural(m.config.kind)) {
    const auto params = m.network.parameters();
    w.u32(static_cast<std::uint32_t>(params.size()));
    for (const auto* p : params) write_tensor(w, *p);
  } else if (m.config.kind == ModelKind::Knn) {
    if (!m.knn) throw Error(Errc::ModelNotLoaded, "kNN store missing");
    const auto& f = m.knn->features();
    w.u32(static_cast<std::uint32_t>(m.knn->k()));
    w.u64(f.size());
    w.u64(f.empty() ? 0 : f.front().size());
    for (const auto& row : f) w.f64s(row);
    for (const auto& t : m.knn->targets()) {
      w.f64(t[0]);
      w.f64(t[1]);
    }
  } else {
    if (!m.forest) throw Error(Errc::ModelNotLoaded, "forest missing");
    for (const auto& trees : m.forest->trees()) {
      w.u32(static_cast<std::uint32_t>(trees.size()));
      for (const auto& tree : trees) {
        w.u32(static_cast<std::uint32_t>(tree.nodes().size()));
        for (const auto& n : tree.nodes()) {
          w.u32(static_cast<std::uint32_t>(n.feature));
          w.f64(n.threshold);
          w.u32(static_cast<std::uint32_t>(n.left));
          w.u32(static_cast<std::uint32_t>(n.right));
          w.f64(n.value);
        }
      }
    }
  }
  return w.bytes();
}

TrainedModel deserialize_model(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (r.raw(4) != kMagic) throw Error(Errc::CorruptFile, "not a model file");
  const auto version = r.u32();
  if (version != kModelFormatVersion) throw Error(Errc::CorruptFile, "unsupported model version " + std::to_string(version));
  TrainedModel m;
  try {
    const json header = json::parse(r.str());
    m.config = config_from_json_text(header.at("config").dump());
    m.meta = meta_from_json_text(header.at("meta").dump());
  } catch (const json::exception& e) {
    throw Error(Errc::CorruptFile, std::string("model header: ") + e.what());
  }
  m.norm.floor = r.f64();
  m.norm.max = r.f64();
  m.info.epochs_run = static_cast<int>(r.u32());
  m.info.final_loss = r.f64();
  m.info.best_val_loss = r.f64();
  m.info.seed = r.u64();
  m.info.train_size = r.u64();
  m.info.val_size = r.u64();

  if (is_neural(m.config.kind)) {
    m.network = build_network(m.config, m.meta.window.n_steps(), m.input_channels(), m.config.seed);
    auto params = m.network.parameters();
    const auto count = r.u32();
    if (count != params.size()) throw Error(Errc::CorruptFile, "parameter count does not match architecture");
    for (auto* p : params) {
      const std::string name = r.str();
      const auto rank = r.u32();
      std::vector<std::size_t> shape(rank);
      for (auto& d : shape) d = static_cast<std::size_t>(r.u64());
      if (name != p->name || shape != p->shape) throw Error(Errc::CorruptFile, "unexpected tensor " + name);
      p->data = r.f64s(p->size());
    }
  } else if (m.config.kind == ModelKind::Knn) {
    const int k = static_cast<int>(r.u32());
    const auto n = r.u64();
    const auto d = r.u64();
    std::vector<std::vector<double>> features(n);
    for (auto& row : features) row = r.f64s(d);
    std::vector<std::array<double, 2>> targets(n);
    for (auto& t : targets) {
      t[0] = r.f64();
      t[1] = r.f64();
    }
    m.knn = KnnRegressor(k, std::move(features), std::move(targets));
  } else {
    RegressionForest forest;
    for (auto& trees : forest.trees()) {
      const auto n_trees = r.u32();
      for (std::uint32_t t = 0; t < n_trees; ++t) {
        RegressionTree tree;
        const auto n_nodes = r.u32();
        for (std::uint32_t i = 0; i < n_nodes; ++i) {
          TreeNode n;
          n.feature = static_cast<std::int32_t>(r.u32());
          n.threshold = r.f64();
          n.left = static_cast<std::int32_t>(r.u32());
          n.right = static_cast<std::int32_t>(r.u32());
          n.value = r.f64();
          tree.nodes().push_back(n);
        }
        trees.push_back(std::move(tree));
      }
    }
    m.forest = std::move(forest);
  }
  if (r.remaining() != 0) throw Error(Errc::CorruptFile, "trailing bytes in model");
  return m;
}

void save_model(const TrainedModel& model, const std::filesystem::path& path) {
  write_checksummed(path, serialize_model(model));
}

TrainedModel load_model(const std::filesystem::path& path) { return deserialize_model(read_checksummed(path)); }

}  // namespace rssiloc::model
