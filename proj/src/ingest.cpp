#include "rssiloc/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <mutex>
#include <sstream>

#include "rssiloc/error.hpp"

namespace rssiloc {

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\f' || c == '\v'; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::optional<double> parse_real(std::string_view token) {
  double v = 0.0;
  const char* first = token.data();
  const char* last = token.data() + token.size();
  if (first != last && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) return std::nullopt;
  return v;
}

std::string describe(std::string_view line) {
  constexpr std::size_t kMax = 80;
  std::string s(line.substr(0, kMax));
  if (line.size() > kMax) s += "...";
  return "'" + s + "'";
}

double parse_coordinate(std::string_view token, std::string_view line) {
  const auto v = parse_real(token);
  if (!v || !std::isfinite(*v)) throw Error(Errc::MalformedRecord, "non-numeric coordinate in " + describe(line));
  return *v;
}

double parse_rssi(std::string_view token, std::string_view line) {
  const auto v = parse_real(token);
  if (!v) throw Error(Errc::MalformedRecord, "non-numeric rssi in " + describe(line));
  if (!std::isfinite(*v)) throw Error(Errc::NonFiniteRssi, "rssi '" + std::string(token) + "'");
  return *v;
}

}  // namespace

std::vector<std::string_view> split_fields(std::string_view line, char delimiter) {
  std::vector<std::string_view> fields;
  if (delimiter == '\0') {
    std::size_t i = 0;
    while (i < line.size()) {
      while (i < line.size() && is_space(line[i])) ++i;
      const std::size_t start = i;
      while (i < line.size() && !is_space(line[i])) ++i;
      if (i > start) fields.push_back(line.substr(start, i - start));
    }
    return fields;
  }
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(delimiter, start);
    fields.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  // Trailing empty field from a line ending in the delimiter.
  if (!fields.empty() && fields.back().empty()) fields.pop_back();
  return fields;
}

std::int64_t parse_epoch_ms(std::string_view token, EpochUnit unit) {
  std::int64_t ms = 0;
  std::int64_t whole = 0;
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), whole);
  if (ec == std::errc() && ptr == token.data() + token.size()) {
    const bool seconds = unit == EpochUnit::Seconds || (unit == EpochUnit::Auto && whole < kSecondsThreshold);
    if (seconds && (whole > kMaxEpochMs / 1000 || whole <= 0)) {
      throw Error(Errc::TimestampOutOfRange, "epoch " + std::string(token));
    }
    ms = seconds ? whole * 1000 : whole;
  } else {
    const auto v = parse_real(token);
    if (!v || !std::isfinite(*v)) throw Error(Errc::MalformedRecord, "bad epoch '" + std::string(token) + "'");
    const bool seconds = unit == EpochUnit::Seconds || (unit == EpochUnit::Auto && *v < 1e12);
    const double scaled = seconds ? *v * 1000.0 : *v;
    if (!(scaled > 0.0) || scaled > static_cast<double>(kMaxEpochMs)) {
      throw Error(Errc::TimestampOutOfRange, "epoch " + std::string(token));
    }
    ms = std::llround(scaled);
  }
  if (ms <= 0 || ms > kMaxEpochMs) throw Error(Errc::TimestampOutOfRange, "epoch " + std::string(token));
  return ms;
}

LabelSample parse_label_record(std::string_view line, const RecordSchema& schema) {
  const auto f = split_fields(line, schema.delimiter);
  if (f.size() < 5) throw Error(Errc::MalformedRecord, "label record needs 5 fields: " + describe(line));
  LabelSample out;
  out.t_ms = parse_epoch_ms(f[2], schema.epoch_unit);
  out.x_px = parse_coordinate(f[3], line);
  out.y_px = parse_coordinate(f[4], line);
  out.session_id = schema.session_id;
  return out;
}

bool rssi_in_band(Tech tech, double rssi_dbm) {
  if (tech == Tech::Uwb) return rssi_dbm >= -120.0 && rssi_dbm <= -40.0;
  return rssi_dbm >= -120.0 && rssi_dbm <= 0.0;
}

RssiSample parse_rssi_record(std::string_view line, const RecordSchema& schema) {
  const auto f = split_fields(line, schema.delimiter);
  RssiSample out;
  out.tag_id = schema.tag_id;
  switch (schema.kind) {
    case RecordKind::Uwb:
      if (f.size() < 5) throw Error(Errc::MalformedRecord, "UWB record needs 5 fields: " + describe(line));
      out.tech = Tech::Uwb;
      out.t_ms = parse_epoch_ms(f[0], schema.epoch_unit);
      out.source_id = std::string(f[3]);
      out.rssi_dbm = parse_rssi(f[4], line);
      break;
    case RecordKind::Ble:
      if (f.size() < 3) throw Error(Errc::MalformedRecord, "BLE record needs 3 fields: " + describe(line));
      out.tech = Tech::Ble;
      out.t_ms = parse_epoch_ms(f[0], schema.epoch_unit);
      out.rssi_dbm = parse_rssi(f[1], line);
      out.source_id = std::string(f[2]);
      break;
    case RecordKind::Label:
      throw Error(Errc::MalformedRecord, "label schema passed to the RSSI parser");
  }
  if (out.source_id.empty()) throw Error(Errc::MalformedRecord, "empty source id: " + describe(line));
  out.out_of_band = !rssi_in_band(out.tech, out.rssi_dbm);
  return out;
}

std::string format_number(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

namespace {

std::string utc_date_time(std::int64_t t_ms) {
  const std::time_t secs = static_cast<std::time_t>(t_ms / 1000);
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%d %H:%M:%S", &tm);
  return buf;
}

}  // namespace

std::string format_label_record(const LabelSample& label) {
  return utc_date_time(label.t_ms) + " " + std::to_string(label.t_ms) + " " + format_number(label.x_px) + " " +
         format_number(label.y_px);
}

std::string format_rssi_record(const RssiSample& s) {
  if (s.tech == Tech::Uwb) {
    return std::to_string(s.t_ms) + " " + utc_date_time(s.t_ms) + " " + s.source_id + " " + format_number(s.rssi_dbm);
  }
  return std::to_string(s.t_ms) + " " + format_number(s.rssi_dbm) + " " + s.source_id;
}

namespace {

bool sample_before(const RssiSample& a, const RssiSample& b) {
  return a.t_ms != b.t_ms ? a.t_ms < b.t_ms : a.seq < b.seq;
}

}  // namespace

SampleStream::SampleStream(std::vector<RssiSample> samples) : samples_(std::move(samples)) {
  std::stable_sort(samples_.begin(), samples_.end(), sample_before);
}

void SampleStream::append(RssiSample sample) {
  if (samples_.empty() || !sample_before(sample, samples_.back())) {
    samples_.push_back(std::move(sample));
    return;
  }
  const auto pos = std::upper_bound(samples_.begin(), samples_.end(), sample, sample_before);
  samples_.insert(pos, std::move(sample));
}

std::span<const RssiSample> SampleStream::range(std::int64_t t_lo, std::int64_t t_hi) const {
  const auto by_time = [](const RssiSample& s, std::int64_t t) { return s.t_ms < t; };
  const auto lo = std::lower_bound(samples_.begin(), samples_.end(), t_lo, by_time);
  const auto hi = std::lower_bound(lo, samples_.end(), t_hi, by_time);
  return {lo, hi};
}

void SampleStream::trim_before(std::int64_t t_ms) {
  const auto by_time = [](const RssiSample& s, std::int64_t t) { return s.t_ms < t; };
  const auto cut = std::lower_bound(samples_.begin(), samples_.end(), t_ms, by_time);
  samples_.erase(samples_.begin(), cut);
}

std::string IngestReport::to_text() const {
  std::ostringstream out;
  out << "lines            " << total_lines << "\n"
      << "accepted         " << accepted << "\n"
      << "rejected         " << rejected << "\n"
      << "labels           " << labels << "\n"
      << "out-of-band rssi " << out_of_band << "\n";
  if (labels_out_of_canvas) out << "labels off-canvas " << labels_out_of_canvas << "\n";
  if (late_dropped) out << "late dropped     " << late_dropped << "\n";
  if (malformed_messages) out << "malformed msgs   " << malformed_messages << "\n";
  for (const auto& [gap_start, gap_end] : connection_gaps) {
    out << "connection gap   " << gap_start << " .. " << gap_end << "\n";
  }
  out << "per source:\n";
  for (const auto& [source, n] : per_source) out << "  " << source << " " << n << "\n";
  const std::size_t shown = std::min<std::size_t>(rejections.size(), 20);
  for (std::size_t i = 0; i < shown; ++i) {
    out << "  rejected " << rejections[i].file << ":" << rejections[i].line << " " << rejections[i].reason << "\n";
  }
  if (rejections.size() > shown) out << "  ... " << rejections.size() - shown << " more\n";
  return out.str();
}

std::size_t LoadedDataset::sample_count() const {
  std::size_t n = 0;
  for (const auto& [key, stream] : streams) n += stream.size();
  return n;
}

std::vector<const SampleStream*> LoadedDataset::for_roster(const std::vector<std::string>& roster,
                                                           const std::string& tag) const {
  static const SampleStream kEmpty;
  std::vector<const SampleStream*> out;
  out.reserve(roster.size());
  for (const auto& source : roster) {
    const auto it = streams.find(StreamKey{source, tag});
    out.push_back(it == streams.end() ? &kEmpty : &it->second);
  }
  return out;
}

std::vector<std::string> LoadedDataset::tags() const {
  std::vector<std::string> out;
  for (const auto& [key, stream] : streams) {
    if (std::find(out.begin(), out.end(), key.tag_id) == out.end()) out.push_back(key.tag_id);
  }
  return out;
}

void add_samples(StreamSet& streams, std::vector<RssiSample> samples) {
  std::stable_sort(samples.begin(), samples.end(), sample_before);
  for (auto& s : samples) {
    StreamKey key{s.source_id, s.tag_id};
    streams[key].append(std::move(s));
  }
}

namespace {

std::vector<std::string> read_text_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

}  // namespace

LoadedDataset load_dataset(const std::vector<DataFileRef>& files, const FloorPlan& plan, const LoadOptions& options) {
  LoadedDataset data;
  std::vector<RssiSample> samples;
  std::uint64_t seq = 0;

  for (const auto& file : files) {
    if (options.only_tech) {
      if (file.kind == RecordKind::Uwb && *options.only_tech != Tech::Uwb) continue;
      if (file.kind == RecordKind::Ble && *options.only_tech != Tech::Ble) continue;
    }
    RecordSchema schema;
    schema.kind = file.kind;
    schema.delimiter = plan.delimiter;
    schema.epoch_unit = plan.epoch_unit;
    schema.tag_id = plan.default_tag;
    schema.session_id = file.session_id.empty() ? file.path.stem().string() : file.session_id;

    const auto lines = read_text_lines(file.path);
    for (std::size_t i = 0; i < lines.size(); ++i) {
      const std::string_view line = trim(lines[i]);
      if (line.empty() || line.front() == '#') continue;
      ++data.report.total_lines;
      try {
        if (file.kind == RecordKind::Label) {
          auto label = parse_label_record(line, schema);
          if (!plan.in_canvas(PointPx{label.x_px, label.y_px})) {
            ++data.report.labels_out_of_canvas;
            throw Error(Errc::OutOfCanvas, "label (" + format_number(label.x_px) + ", " + format_number(label.y_px) +
                                               ") outside the floor plan");
          }
          data.labels.push_back(std::move(label));
          ++data.report.labels;
        } else {
          auto sample = parse_rssi_record(line, schema);
          if (file.beacon) {
            sample.tag_id = sample.source_id;
            sample.source_id = *file.beacon;
          }
          sample.seq = seq++;
          if (sample.out_of_band) ++data.report.out_of_band;
          ++data.report.per_source[sample.source_id];
          samples.push_back(std::move(sample));
        }
        ++data.report.accepted;
      } catch (const Error& e) {
        if (options.strict) {
          throw Error(e.code(), file.path.string() + ":" + std::to_string(i + 1) + ": " + e.what());
        }
        ++data.report.rejected;
        data.report.rejections.push_back(RejectedLine{file.path.string(), i + 1, e.what()});
      }
    }
  }

  if (samples.empty()) throw Error(Errc::EmptyDataset, "no valid RSSI samples in the given files");
  add_samples(data.streams, std::move(samples));
  std::stable_sort(data.labels.begin(), data.labels.end(),
                   [](const LabelSample& a, const LabelSample& b) { return a.t_ms < b.t_ms; });
  return data;
}

LoadedDataset load_dataset(const FloorPlan& plan, const LoadOptions& options) {
  return load_dataset(plan.data_files, plan, options);
}

std::vector<RssiSample> ReorderBuffer::push(RssiSample sample) {
  if (max_seen_ != INT64_MIN && sample.t_ms < max_seen_ - horizon_ms_) {
    ++dropped_;
    return {};
  }
  max_seen_ = std::max(max_seen_, sample.t_ms);
  pending_.emplace(std::make_pair(sample.t_ms, sample.seq), std::move(sample));
  return release_until(max_seen_ - horizon_ms_);
}

std::vector<RssiSample> ReorderBuffer::flush() { return release_until(INT64_MAX); }

std::vector<RssiSample> ReorderBuffer::release_until(std::int64_t t_ms) {
  std::vector<RssiSample> out;
  auto it = pending_.begin();
  while (it != pending_.end() && it->first.first <= t_ms) {
    out.push_back(std::move(it->second));
    it = pending_.erase(it);
  }
  released_upto_ = std::max(released_upto_, t_ms);
  return out;
}

Clock system_clock_ms() {
  struct State {
    std::mutex mutex;
    std::int64_t last = 0;
  };
  auto state = std::make_shared<State>();
  return [state] {
    const auto now = std::chrono::duration_cast<std::chrono::milliseconds>(
                         std::chrono::system_clock::now().time_since_epoch())
                         .count();
    std::lock_guard lock(state->mutex);
    state->last = std::max<std::int64_t>(state->last, now);
    return state->last;
  };
}

std::int64_t stamp_receive_time(std::int64_t payload_epoch_ms, TimestampMode mode, const Clock& clock) {
  return mode == TimestampMode::Live ? clock() : payload_epoch_ms;
}

RecordLog::RecordLog(std::filesystem::path path) : path_(std::move(path)) {
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  out_.open(path_, std::ios::binary | std::ios::app);
  if (!out_) throw Error(Errc::Io, "cannot open log " + path_.string());
}

void RecordLog::append(std::string_view line) {
  out_.write(line.data(), static_cast<std::streamsize>(line.size()));
  out_.put('\n');
  out_.flush();
  if (!out_) throw Error(Errc::Io, "write failed on " + path_.string());
}

std::vector<std::string> RecordLog::read_lines(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) return {};
  return read_text_lines(path);
}

void write_store(const LoadedDataset& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const char* name : {"labels.log", "uwb.log", "ble.log"}) std::filesystem::remove(dir / name);
  RecordLog labels(dir / "labels.log");
  for (const auto& l : data.labels) labels.append(format_label_record(l));

  std::vector<const RssiSample*> all;
  for (const auto& [key, stream] : data.streams) {
    for (const auto& s : stream.samples()) all.push_back(&s);
  }
  std::stable_sort(all.begin(), all.end(), [](const RssiSample* a, const RssiSample* b) { return sample_before(*a, *b); });
  RecordLog uwb(dir / "uwb.log");
  RecordLog ble(dir / "ble.log");
  for (const auto* s : all) (s->tech == Tech::Uwb ? uwb : ble).append(format_rssi_record(*s));
}

}  // namespace rssiloc
