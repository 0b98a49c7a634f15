#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "rssiloc/model/config.hpp"
#include "rssiloc/model/forest.hpp"
#include "rssiloc/model/knn.hpp"
#include "rssiloc/model/network.hpp"
#include "rssiloc/segmentation.hpp"

namespace rssiloc::model {

// Affine RSSI map fitted on training data: floor -> 0, observed max -> 1.
struct InputNorm {
  double floor = kRssiFloorDbm;
  double max = -40.0;

  double apply(double rssi) const { return (rssi - floor) / (max - floor); }
};

InputNorm fit_input_norm(std::span<const TrainingPair> pairs);

// (n_steps x channels) with channel = source * 3 + slot; mask channels follow
// when enabled.
Mat encode_frame(const FeatureFrame& frame, const InputNorm& norm, bool mask_channels);
// Normalized values in frame order, for the fingerprint baselines.
std::vector<double> flatten_frame(const FeatureFrame& frame, const InputNorm& norm);

struct PositionEstimate {
  std::int64_t t_star_ms = 0;
  double x_norm = 0.0;
  double y_norm = 0.0;
  double x_px = 0.0;
  double y_px = 0.0;
};

struct RoomDistribution {
  std::vector<double> probabilities;
  std::size_t argmax() const;
};

struct Prediction {
  std::optional<PositionEstimate> position;
  std::optional<RoomDistribution> rooms;
};

struct TrainingInfo {
  int epochs_run = 0;
  double final_loss = 0.0;
  double best_val_loss = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t train_size = 0;
  std::uint64_t val_size = 0;
};

class TrainedModel {
 public:
  ModelConfig config;
  DatasetMeta meta;
  InputNorm norm;
  TrainingInfo info;
  Network network;
  std::optional<KnnRegressor> knn;
  std::optional<RegressionForest> forest;

  int input_channels() const;
  // Throws ShapeMismatch when the frame does not fit the model's roster and window.
  Prediction predict(const FeatureFrame& frame) const;
};

// Versioned container, little-endian, CRC32 trailer:
//   "RLMD" u32 version, u32+JSON header (config, dataset meta),
//   f64 norm floor/max, training info, then the kind-specific payload
//   (named tensors | kNN store | per-coordinate trees).
inline constexpr std::uint32_t kModelFormatVersion = 1;

std::vector<std::uint8_t> serialize_model(const TrainedModel& model);
TrainedModel deserialize_model(std::span<const std::uint8_t> bytes);
void save_model(const TrainedModel& model, const std::filesystem::path& path);
TrainedModel load_model(const std::filesystem::path& path);

std::string config_to_json_text(const ModelConfig& config);
ModelConfig config_from_json_text(const std::string& text);

}  // namespace rssiloc::model
