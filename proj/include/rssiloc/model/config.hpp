#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace rssiloc::model {

enum class ModelKind { Cnn, Lstm, CnnLstm, CnnLstmAttention, Knn, Rf };
enum class HeadKind { RegressionXY, ClassifyRoom };

std::string_view model_kind_name(ModelKind kind);
ModelKind parse_model_kind(std::string_view text);
bool is_neural(ModelKind kind);
bool has_cnn(ModelKind kind);
bool has_lstm(ModelKind kind);

struct RfParams {
  int n_trees = 100;
  int max_depth = 12;
  int min_leaf = 3;
  // Features tried per split; 0 selects max(1, d/3).
  int max_features = 0;
  bool bootstrap = true;
};

struct ModelConfig {
  ModelKind kind = ModelKind::CnnLstm;

  std::vector<int> conv_kernels{2, 3, 3};
  int conv_filters = 16;
  int lstm_layers = 2;
  int lstm_units = 32;
  std::vector<int> mlp_widths{512, 256};
  double dropout = 0.2;
  // Extra dropout between the convolution stack and what follows it.
  bool dropout_after_cnn = false;

  HeadKind head = HeadKind::RegressionXY;
  int n_rooms = 0;
  // Per-class binary cross-entropy instead of the categorical form.
  bool binary_cross_entropy = false;
  // Append the missing mask as extra input channels.
  bool use_mask_channels = false;

  std::uint64_t seed = 7;

  int knn_k = 5;
  RfParams rf;

  // When true, validate() insists on kernels {2,3,3} and 2 x 32 LSTM units.
  // Small test networks turn this off.
  bool reference_shapes = true;

  int output_size() const { return head == HeadKind::RegressionXY ? 2 : n_rooms; }
  // Throws InvalidConfig.
  void validate() const;
};

}  // namespace rssiloc::model
