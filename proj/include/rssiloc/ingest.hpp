#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rssiloc/floorplan.hpp"
#include "rssiloc/types.hpp"

namespace rssiloc {

struct RssiSample {
  std::int64_t t_ms = 0;
  std::string source_id;
  Tech tech = Tech::Uwb;
  double rssi_dbm = 0.0;
  std::string tag_id;
  // Arrival index; breaks ties between equal timestamps.
  std::uint64_t seq = 0;
  // Outside the plausibility band for its technology. Kept, not dropped.
  bool out_of_band = false;
};

struct LabelSample {
  std::int64_t t_ms = 0;
  double x_px = 0.0;
  double y_px = 0.0;
  std::string session_id;
};

// Column orders:
//   LABEL: date time epoch x_px y_px
//   UWB:   epoch date time anchor_id rssi
//   BLE:   epoch rssi mac
struct RecordSchema {
  RecordKind kind = RecordKind::Uwb;
  char delimiter = '\0';  // '\0': any run of whitespace
  EpochUnit epoch_unit = EpochUnit::Auto;
  std::string tag_id = "tag0";
  std::string session_id;
};

inline constexpr std::int64_t kSecondsThreshold = 1'000'000'000'000;  // 10^12
// 2100-01-01T00:00:00Z
inline constexpr std::int64_t kMaxEpochMs = 4'102'444'800'000;

std::vector<std::string_view> split_fields(std::string_view line, char delimiter);

// Parses an epoch token and returns milliseconds. Values below 10^12 are
// seconds under EpochUnit::Auto. Fractional seconds are accepted.
std::int64_t parse_epoch_ms(std::string_view token, EpochUnit unit);

LabelSample parse_label_record(std::string_view line, const RecordSchema& schema);
RssiSample parse_rssi_record(std::string_view line, const RecordSchema& schema);

bool rssi_in_band(Tech tech, double rssi_dbm);

// Writers emit the same column layouts. Epochs are written in milliseconds and
// the date/time columns in UTC; real values use the shortest round-trip form.
std::string format_label_record(const LabelSample& label);
std::string format_rssi_record(const RssiSample& sample);
std::string format_number(double v);

struct StreamKey {
  std::string source_id;
  std::string tag_id;
  auto operator<=>(const StreamKey&) const = default;
};

// Samples for one (source, tag) pair, kept ordered by (t_ms, seq).
class SampleStream {
 public:
  SampleStream() = default;
  explicit SampleStream(std::vector<RssiSample> samples);

  void append(RssiSample sample);
  std::span<const RssiSample> samples() const { return samples_; }
  std::size_t size() const { return samples_.size(); }
  bool empty() const { return samples_.empty(); }

  // Samples with t_lo <= t_ms < t_hi.
  std::span<const RssiSample> range(std::int64_t t_lo, std::int64_t t_hi) const;

  // Drops samples older than t_ms.
  void trim_before(std::int64_t t_ms);

 private:
  std::vector<RssiSample> samples_;
};

using StreamSet = std::map<StreamKey, SampleStream>;

struct RejectedLine {
  std::string file;
  std::size_t line = 0;
  std::string reason;
};

struct IngestReport {
  std::size_t total_lines = 0;
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  std::size_t out_of_band = 0;
  std::size_t labels = 0;
  std::size_t labels_out_of_canvas = 0;
  std::size_t late_dropped = 0;
  std::size_t malformed_messages = 0;
  std::map<std::string, std::size_t> per_source;
  std::vector<RejectedLine> rejections;
  std::vector<std::pair<std::int64_t, std::int64_t>> connection_gaps;

  std::string to_text() const;
};

struct LoadedDataset {
  StreamSet streams;
  std::vector<LabelSample> labels;  // sorted by t_ms
  IngestReport report;

  std::size_t sample_count() const;
  // Streams for one tag in roster order; absent sources yield empty streams.
  std::vector<const SampleStream*> for_roster(const std::vector<std::string>& roster, const std::string& tag) const;
  std::vector<std::string> tags() const;
};

struct LoadOptions {
  // Throw on the first bad line (with file and line number) instead of
  // counting it in the report.
  bool strict = false;
  std::optional<Tech> only_tech;
};

LoadedDataset load_dataset(const std::vector<DataFileRef>& files, const FloorPlan& plan, const LoadOptions& options = {});
LoadedDataset load_dataset(const FloorPlan& plan, const LoadOptions& options = {});

// Merge step shared by file loading and live capture: samples sorted by
// (t_ms, seq) and grouped per (source, tag).
void add_samples(StreamSet& streams, std::vector<RssiSample> samples);

// Holds samples for a fixed horizon so that slightly out-of-order arrivals are
// released in timestamp order. Samples older than the release watermark are
// dropped and counted.
class ReorderBuffer {
 public:
  explicit ReorderBuffer(std::int64_t horizon_ms = 2000) : horizon_ms_(horizon_ms) {}

  // Returns samples that became final.
  std::vector<RssiSample> push(RssiSample sample);
  std::vector<RssiSample> flush();

  std::size_t dropped() const { return dropped_; }
  std::size_t pending() const { return pending_.size(); }

 private:
  std::vector<RssiSample> release_until(std::int64_t t_ms);

  std::int64_t horizon_ms_;
  std::int64_t max_seen_ = INT64_MIN;
  std::int64_t released_upto_ = INT64_MIN;
  std::size_t dropped_ = 0;
  std::multimap<std::pair<std::int64_t, std::uint64_t>, RssiSample> pending_;
};

enum class TimestampMode { Live, Recorded };

using Clock = std::function<std::int64_t()>;

// Wall clock in epoch milliseconds, clamped so it never steps backwards.
Clock system_clock_ms();

// Live mode: the receiver clock. Recorded mode: the epoch in the payload.
std::int64_t stamp_receive_time(std::int64_t payload_epoch_ms, TimestampMode mode, const Clock& clock);

// Append-only line log. Lines are written verbatim with '\n' and flushed.
class RecordLog {
 public:
  explicit RecordLog(std::filesystem::path path);
  void append(std::string_view line);
  const std::filesystem::path& path() const { return path_; }

  static std::vector<std::string> read_lines(const std::filesystem::path& path);

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

// Writes a dataset as per-kind record logs in the given directory.
void write_store(const LoadedDataset& data, const std::filesystem::path& dir);

}  // namespace rssiloc
