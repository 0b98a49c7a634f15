#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rssiloc/floorplan.hpp"
#include "rssiloc/ingest.hpp"
#include "rssiloc/model/train.hpp"
#include "rssiloc/segmentation.hpp"

namespace rssiloc {

struct Fold {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

enum class SplitMode {
  Sample,  // shuffled per-pair folds
  Block,   // contiguous runs of t*, leakage-aware
};

std::string_view split_mode_name(SplitMode mode);
SplitMode parse_split_mode(std::string_view text);

// Deterministic shuffled partition of 0..n-1 into k folds; the first n % k
// folds hold one extra item. Throws DatasetTooSmall when n < k.
std::vector<Fold> kfold_split(std::size_t n, int k, std::uint64_t seed);
// k contiguous folds over the given (already time-ordered) indices.
std::vector<Fold> block_split(std::size_t n, int k);

struct RegressionMetrics {
  double mae_x_m = 0.0;
  double mae_y_m = 0.0;
  double mae_m = 0.0;
  std::size_t count = 0;
};

// Pixel errors scaled to metres per axis; combined = mean of the two axes.
RegressionMetrics regression_metrics(std::span<const PointPx> predicted, std::span<const PointPx> truth,
                                     double scale_x_mm_per_px, double scale_y_mm_per_px);

// Throws EmptyTestSet.
RegressionMetrics evaluate_regression(const model::TrainedModel& model, std::span<const TrainingPair> test);

struct RoomMetrics {
  double accuracy = 0.0;
  std::size_t correct = 0;
  std::size_t total = 0;
  // Targets outside every room, left out of the score.
  std::size_t excluded = 0;
  // Predicted positions outside every room (scored as wrong, not in the matrix).
  std::size_t predicted_none = 0;
  std::vector<std::string> room_names;
  std::vector<std::vector<std::size_t>> confusion;  // [truth][predicted]
};

// Scores predicted room indices against targets. Throws EmptyTestSet.
RoomMetrics room_metrics(std::span<const std::optional<int>> predicted, std::span<const std::optional<int>> truth,
                         const std::vector<std::string>& room_names);

// Classification heads use the argmax; regression outputs go through room_of.
RoomMetrics evaluate_rooms(const model::TrainedModel& model, std::span<const TrainingPair> test,
                           const FloorPlan& plan);

struct ExternalEstimate {
  std::int64_t t_ms = 0;
  std::optional<PointPx> position;
};

// CSV with header t_ms,x_px,y_px; an empty, "nan" or "-" coordinate marks a
// lost estimate.
std::vector<ExternalEstimate> parse_estimates_csv(const std::string& text);
std::vector<ExternalEstimate> load_estimates_csv(const std::filesystem::path& path);

struct ExternalScore {
  std::optional<RegressionMetrics> metrics;  // nullopt when every match was lost
  std::size_t matched = 0;
  std::size_t scored = 0;
  std::size_t lost = 0;
  std::size_t outside_labels = 0;
  double lost_fraction = 0.0;

  std::string to_text() const;
};

// Matches each estimate to the label track interpolated at its timestamp.
// Estimates outside the labeled span are excluded from both denominators.
// Throws NoOverlap.
ExternalScore score_external_estimates(std::span<const ExternalEstimate> estimates,
                                       std::span<const LabelSample> labels, const FloorPlan& plan,
                                       std::int64_t max_gap_ms = kMaxLabelGapMs);

struct ExperimentConfig {
  Tech tech = Tech::Uwb;
  WindowSpec window;
  model::ModelConfig model;
  int k_folds = 10;
  std::uint64_t seed = 7;
  SplitMode split = SplitMode::Sample;

  // Stable identity used for per-cell seeds and row labels.
  std::string key() const;
};

struct ReportRow {
  std::string flat;
  Tech tech = Tech::Uwb;
  WindowMode mode = WindowMode::PastAndFuture;
  model::ModelKind model = model::ModelKind::CnnLstm;
  model::HeadKind head = model::HeadKind::RegressionXY;
  double window_s = 0.0;
  int n_steps = 0;
  int folds = 0;
  std::size_t pairs = 0;
  double discard_fraction = 0.0;
  double mae_x_m = 0.0;
  double mae_y_m = 0.0;
  double mae_m = 0.0;
  double fold_sigma_m = 0.0;
  std::optional<double> room_accuracy;
  std::optional<double> lost_fraction;
  double wall_time_s = 0.0;
  std::string status = "ok";
};

struct EvalReport {
  std::vector<ReportRow> rows;

  // Comma-separated table with a header row. Wall time is machine dependent,
  // so it is only written on request.
  std::string to_csv(bool include_wall_time = false) const;
  std::string to_text() const;
  // Plain data series for external plotting: MAE vs window size per
  // (mode, model), and per-row error bars.
  void write_plot_data(const std::filesystem::path& dir) const;
};

struct MatrixOptions {
  model::TrainOptions train;
  // Run only the first n folds of each cell (0 = all).
  int max_folds = 0;
  bool room_accuracy = true;
  std::function<void(const std::string&)> progress;
};

// One row per config in input order; a failing cell becomes a row with a
// failure status.
EvalReport run_matrix(const LoadedDataset& data, const FloorPlan& plan, const std::string& tag,
                      const std::vector<ExperimentConfig>& configs, const MatrixOptions& options = {});

// Named matrices: "default" (past+future, 4/12/20/30 s, CNN, LSTM, CNN_LSTM,
// kNN, RF), "full" (both modes), "quick" (4/12 s, CNN, CNN_LSTM, kNN, RF),
// or an explicit "models=cnn,knn;windows=4,12;modes=past+future" list.
// 20 s and larger spans use 2 s sub-windows, shorter ones 1 s.
std::vector<ExperimentConfig> named_matrix(const std::string& name, Tech tech, std::uint64_t seed, int k_folds);

// Sub-window length used for a total span in the matrices above.
double default_sub_span_s(double total_span_s);

}  // namespace rssiloc
