#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rssiloc/floorplan.hpp"
#include "rssiloc/ingest.hpp"

namespace rssiloc {

enum class WindowMode { OnlyPast, PastAndFuture };

std::string_view window_mode_name(WindowMode mode);
WindowMode parse_window_mode(std::string_view text);

// Half-open [lo, hi) in epoch milliseconds.
struct Interval {
  std::int64_t lo = 0;
  std::int64_t hi = 0;
  friend bool operator==(const Interval&, const Interval&) = default;
};

// A window of n_steps consecutive sub-windows that tile without gaps or
// overlap. ONLY_PAST ends at t*; PAST_AND_FUTURE puts ceil(n/2) sub-windows
// before t* and floor(n/2) after.
struct WindowSpec {
  double total_span_s = 12.0;
  double sub_span_s = 1.0;
  WindowMode mode = WindowMode::PastAndFuture;
  // Replaces total/sub as the step count when set.
  std::optional<int> steps_override;

  std::int64_t sub_span_ms() const;
  int n_steps() const;
  int past_steps() const;
  int future_steps() const { return n_steps() - past_steps(); }
  // Throws InvalidConfig.
  void validate() const;
  std::vector<Interval> sub_windows(std::int64_t t_star_ms) const;
  std::string describe() const;

  friend bool operator==(const WindowSpec&, const WindowSpec&) = default;
};

struct Aggregate {
  double mean = 0.0;
  double max = 0.0;
  double min = 0.0;
};

// Aggregation slot order inside a frame.
enum AggregationSlot : int { kMeanSlot = 0, kMaxSlot = 1, kMinSlot = 2 };
inline constexpr int kAggregationCount = 3;

// nullopt is the MISSING value: no sample in [lo, hi).
std::optional<Aggregate> aggregate_window(const SampleStream& stream, Interval interval);

// values/missing are laid out source-major: index (source * 3 + slot) * n_steps + step.
struct FeatureFrame {
  std::int64_t t_star_ms = 0;
  std::string tag_id;
  int n_sources = 0;
  int n_steps = 0;
  std::vector<double> values;
  std::vector<std::uint8_t> missing;

  std::size_t size() const { return values.size(); }
  std::size_t index(int source, int slot, int step) const {
    return (static_cast<std::size_t>(source) * kAggregationCount + static_cast<std::size_t>(slot)) *
               static_cast<std::size_t>(n_steps) +
           static_cast<std::size_t>(step);
  }
  double value(int source, int slot, int step) const { return values[index(source, slot, step)]; }
  bool is_missing(int source, int slot, int step) const { return missing[index(source, slot, step)] != 0; }
};

// Missing cells hold kRssiFloorDbm with the mask set; nullopt when every cell
// is missing.
std::optional<FeatureFrame> try_build_feature_frame(std::span<const SampleStream* const> per_source,
                                                    const WindowSpec& spec, std::int64_t t_star_ms,
                                                    const std::string& tag_id = {});

// Throws AllMissing.
FeatureFrame build_feature_frame(std::span<const SampleStream* const> per_source, const WindowSpec& spec,
                                 std::int64_t t_star_ms, const std::string& tag_id = {});

inline constexpr std::int64_t kMaxLabelGapMs = 5000;

// Linear interpolation between the labels bracketing t*. nullopt (GAP) when
// t* lies outside the labeled span or the bracket is wider than max_gap_ms.
std::optional<PointPx> interpolate_label(std::span<const LabelSample> labels, std::int64_t t_star_ms,
                                         std::int64_t max_gap_ms = kMaxLabelGapMs);

struct TargetPoint {
  double x_px = 0.0;
  double y_px = 0.0;
  double x_norm = 0.0;
  double y_norm = 0.0;
  std::optional<int> room;
};

TargetPoint make_target(PointPx p, const FloorPlan& plan);

struct TrainingPair {
  FeatureFrame frame;
  TargetPoint target;
};

struct DiscardReport {
  std::size_t grid_points = 0;
  std::size_t gap_dropped = 0;
  std::size_t all_missing_dropped = 0;
  std::size_t kept = 0;

  double discard_fraction() const;
  double gap_fraction() const;
};

// Everything needed to interpret a set of pairs without the original flat.
struct DatasetMeta {
  std::string flat_name;
  int width_px = 0;
  int height_px = 0;
  double width_mm = 0.0;
  double height_mm = 0.0;
  Tech tech = Tech::Uwb;
  std::string tag_id;
  WindowSpec window;
  std::vector<std::string> roster;
  std::vector<std::string> room_names;

  double scale_x() const { return width_mm / width_px; }
  double scale_y() const { return height_mm / height_px; }
};

struct TrainingSet {
  DatasetMeta meta;
  std::vector<TrainingPair> pairs;
  DiscardReport report;
};

DatasetMeta make_meta(const FloorPlan& plan, Tech tech, const std::string& tag, const WindowSpec& spec,
                      std::vector<std::string> roster);

struct GridOptions {
  double step_s = 1.0;
  std::int64_t max_gap_ms = kMaxLabelGapMs;
};

// t* grid at step_s across each session's labeled span. Throws
// EmptyTrainingSet when no pair survives.
TrainingSet generate_training_set(const LoadedDataset& data, const FloorPlan& plan, Tech tech,
                                  const std::vector<std::string>& roster, const std::string& tag,
                                  const WindowSpec& spec, const GridOptions& grid = {});

struct DatasetSummary {
  std::size_t samples = 0;
  std::size_t labels = 0;
  std::vector<std::pair<std::string, double>> source_share_pct;
  // Rooms in declaration order, then "(none)" for labels outside every room.
  std::vector<std::pair<std::string, double>> room_share_pct;
  double label_interval_mean_s = 0.0;
  double label_interval_std_s = 0.0;

  std::string to_text() const;
};

DatasetSummary summarize_dataset(const LoadedDataset& data, const FloorPlan& plan);

}  // namespace rssiloc
