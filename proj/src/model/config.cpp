#include "rssiloc/model/config.hpp"

#include "rssiloc/error.hpp"

namespace rssiloc::model {

std::string_view model_kind_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::Cnn: return "cnn";
    case ModelKind::Lstm: return "lstm";
    case ModelKind::CnnLstm: return "cnn_lstm";
    case ModelKind::CnnLstmAttention: return "cnn_lstm_attention";
    case ModelKind::Knn: return "knn";
    case ModelKind::Rf: return "rf";
  }
  return "?";
}

ModelKind parse_model_kind(std::string_view text) {
  if (text == "cnn") return ModelKind::Cnn;
  if (text == "lstm") return ModelKind::Lstm;
  if (text == "cnn_lstm" || text == "lstm_cnn" || text == "lstm+cnn") return ModelKind::CnnLstm;
  if (text == "cnn_lstm_attention" || text == "lstm+cnn+attention" || text == "attention") {
    return ModelKind::CnnLstmAttention;
  }
  if (text == "knn") return ModelKind::Knn;
  if (text == "rf" || text == "random_forest") return ModelKind::Rf;
  throw Error(Errc::InvalidConfig, "unknown model kind '" + std::string(text) + "'");
}

bool is_neural(ModelKind kind) { return kind != ModelKind::Knn && kind != ModelKind::Rf; }

bool has_cnn(ModelKind kind) {
  return kind == ModelKind::Cnn || kind == ModelKind::CnnLstm || kind == ModelKind::CnnLstmAttention;
}

bool has_lstm(ModelKind kind) {
  return kind == ModelKind::Lstm || kind == ModelKind::CnnLstm || kind == ModelKind::CnnLstmAttention;
}

void ModelConfig::validate() const {
  if (head == HeadKind::ClassifyRoom && n_rooms < 2) {
    throw Error(Errc::InvalidConfig, "room classification needs at least two rooms");
  }
  if (dropout < 0.0 || dropout >= 1.0) throw Error(Errc::InvalidConfig, "dropout rate must lie in [0, 1)");
  if (kind == ModelKind::Knn && knn_k < 1) throw Error(Errc::InvalidConfig, "k must be >= 1");
  if (kind == ModelKind::Rf && (rf.n_trees < 1 || rf.max_depth < 0 || rf.min_leaf < 1)) {
    throw Error(Errc::InvalidConfig, "invalid random forest parameters");
  }
  if (!is_neural(kind)) return;
  if (has_cnn(kind)) {
    if (conv_kernels.empty() || conv_filters < 1) throw Error(Errc::InvalidConfig, "empty convolution stack");
    for (const int k : conv_kernels) {
      if (k < 1) throw Error(Errc::InvalidConfig, "kernel sizes must be positive");
    }
    if (reference_shapes && conv_kernels != std::vector<int>{2, 3, 3}) {
      throw Error(Errc::InvalidConfig, "convolution kernels are fixed to 2, 3, 3");
    }
  }
  if (has_lstm(kind)) {
    if (lstm_layers < 1 || lstm_units < 1) throw Error(Errc::InvalidConfig, "empty LSTM stack");
    if (reference_shapes && (lstm_layers != 2 || lstm_units != 32)) {
      throw Error(Errc::InvalidConfig, "LSTM stack is fixed to two layers of 32 units");
    }
  }
  for (const int w : mlp_widths) {
    if (w < 1) throw Error(Errc::InvalidConfig, "MLP widths must be positive");
  }
}

}  // namespace rssiloc::model
