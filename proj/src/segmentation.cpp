#include "rssiloc/segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "rssiloc/error.hpp"

namespace rssiloc {

std::string_view window_mode_name(WindowMode mode) {
  return mode == WindowMode::OnlyPast ? "only-past" : "past+future";
}

WindowMode parse_window_mode(std::string_view text) {
  if (text == "past" || text == "only-past" || text == "onlypast" || text == "only_past") return WindowMode::OnlyPast;
  if (text == "past+future" || text == "past-future" || text == "past_and_future") return WindowMode::PastAndFuture;
  throw Error(Errc::InvalidConfig, "unknown window mode '" + std::string(text) + "'");
}

namespace {

std::int64_t to_ms(double seconds) { return std::llround(seconds * 1000.0); }

}  // namespace

std::int64_t WindowSpec::sub_span_ms() const { return to_ms(sub_span_s); }

int WindowSpec::n_steps() const {
  if (steps_override) return *steps_override;
  const std::int64_t sub = sub_span_ms();
  return sub > 0 ? static_cast<int>(to_ms(total_span_s) / sub) : 0;
}

int WindowSpec::past_steps() const {
  const int n = n_steps();
  return mode == WindowMode::OnlyPast ? n : (n + 1) / 2;
}

void WindowSpec::validate() const {
  const std::int64_t sub = sub_span_ms();
  if (sub <= 0 || std::abs(sub_span_s * 1000.0 - static_cast<double>(sub)) > 1e-6) {
    throw Error(Errc::InvalidConfig, "sub-window span must be a positive whole number of milliseconds");
  }
  if (steps_override) {
    if (*steps_override < 1) throw Error(Errc::InvalidConfig, "step override must be >= 1");
    return;
  }
  const std::int64_t total = to_ms(total_span_s);
  if (total <= 0 || total % sub != 0 || std::abs(total_span_s * 1000.0 - static_cast<double>(total)) > 1e-6) {
    throw Error(Errc::InvalidConfig, "window span " + describe() + " is not a whole multiple of the sub-window");
  }
}

std::vector<Interval> WindowSpec::sub_windows(std::int64_t t_star_ms) const {
  const std::int64_t sub = sub_span_ms();
  const int n = n_steps();
  const std::int64_t start = t_star_ms - static_cast<std::int64_t>(past_steps()) * sub;
  std::vector<Interval> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out.push_back(Interval{start + i * sub, start + (i + 1) * sub});
  return out;
}

std::string WindowSpec::describe() const {
  std::ostringstream out;
  out << total_span_s << "s/" << sub_span_s << "s " << window_mode_name(mode);
  if (steps_override) out << " (" << *steps_override << " steps)";
  return out.str();
}

std::optional<Aggregate> aggregate_window(const SampleStream& stream, Interval interval) {
  const auto hits = stream.range(interval.lo, interval.hi);
  if (hits.empty()) return std::nullopt;
  Aggregate agg{0.0, hits.front().rssi_dbm, hits.front().rssi_dbm};
  double sum = 0.0;
  for (const auto& s : hits) {
    sum += s.rssi_dbm;
    agg.max = std::max(agg.max, s.rssi_dbm);
    agg.min = std::min(agg.min, s.rssi_dbm);
  }
  agg.mean = sum / static_cast<double>(hits.size());
  return agg;
}

std::optional<FeatureFrame> try_build_feature_frame(std::span<const SampleStream* const> per_source,
                                                    const WindowSpec& spec, std::int64_t t_star_ms,
                                                    const std::string& tag_id) {
  if (per_source.empty()) throw Error(Errc::InvalidConfig, "empty anchor roster");
  FeatureFrame frame;
  frame.t_star_ms = t_star_ms;
  frame.tag_id = tag_id;
  frame.n_sources = static_cast<int>(per_source.size());
  frame.n_steps = spec.n_steps();
  const std::size_t cells = per_source.size() * kAggregationCount * static_cast<std::size_t>(frame.n_steps);
  frame.values.assign(cells, kRssiFloorDbm);
  frame.missing.assign(cells, 1);

  const auto windows = spec.sub_windows(t_star_ms);
  bool any = false;
  for (int s = 0; s < frame.n_sources; ++s) {
    for (int step = 0; step < frame.n_steps; ++step) {
      const auto agg = aggregate_window(*per_source[static_cast<std::size_t>(s)], windows[static_cast<std::size_t>(step)]);
      if (!agg) continue;
      any = true;
      frame.values[frame.index(s, kMeanSlot, step)] = agg->mean;
      frame.values[frame.index(s, kMaxSlot, step)] = agg->max;
      frame.values[frame.index(s, kMinSlot, step)] = agg->min;
      for (int slot = 0; slot < kAggregationCount; ++slot) frame.missing[frame.index(s, slot, step)] = 0;
    }
  }
  if (!any) return std::nullopt;
  return frame;
}

FeatureFrame build_feature_frame(std::span<const SampleStream* const> per_source, const WindowSpec& spec,
                                 std::int64_t t_star_ms, const std::string& tag_id) {
  auto frame = try_build_feature_frame(per_source, spec, t_star_ms, tag_id);
  if (!frame) throw Error(Errc::AllMissing, "no source reported inside the window at t*=" + std::to_string(t_star_ms));
  return std::move(*frame);
}

std::optional<PointPx> interpolate_label(std::span<const LabelSample> labels, std::int64_t t_star_ms,
                                         std::int64_t max_gap_ms) {
  const auto next = std::lower_bound(labels.begin(), labels.end(), t_star_ms,
                                     [](const LabelSample& l, std::int64_t t) { return l.t_ms < t; });
  if (next == labels.end()) return std::nullopt;
  if (next->t_ms == t_star_ms) return PointPx{next->x_px, next->y_px};
  if (next == labels.begin()) return std::nullopt;
  const auto prev = std::prev(next);
  const std::int64_t span = next->t_ms - prev->t_ms;
  if (span > max_gap_ms) return std::nullopt;
  const double f = static_cast<double>(t_star_ms - prev->t_ms) / static_cast<double>(span);
  return PointPx{std::lerp(prev->x_px, next->x_px, f), std::lerp(prev->y_px, next->y_px, f)};
}

TargetPoint make_target(PointPx p, const FloorPlan& plan) {
  TargetPoint t;
  t.x_px = p.x;
  t.y_px = p.y;
  t.x_norm = std::clamp(p.x / plan.width_px, 0.0, 1.0);
  t.y_norm = std::clamp(p.y / plan.height_px, 0.0, 1.0);
  if (const auto room = room_of(p, plan)) t.room = room->index;
  return t;
}

double DiscardReport::discard_fraction() const {
  return grid_points == 0 ? 0.0 : static_cast<double>(grid_points - kept) / static_cast<double>(grid_points);
}

double DiscardReport::gap_fraction() const {
  return grid_points == 0 ? 0.0 : static_cast<double>(gap_dropped) / static_cast<double>(grid_points);
}

DatasetMeta make_meta(const FloorPlan& plan, Tech tech, const std::string& tag, const WindowSpec& spec,
                      std::vector<std::string> roster) {
  DatasetMeta meta;
  meta.flat_name = plan.name;
  meta.width_px = plan.width_px;
  meta.height_px = plan.height_px;
  meta.width_mm = plan.width_mm;
  meta.height_mm = plan.height_mm;
  meta.tech = tech;
  meta.tag_id = tag;
  meta.window = spec;
  meta.roster = std::move(roster);
  for (const auto& r : plan.rooms) meta.room_names.push_back(r.label.name);
  return meta;
}

namespace {

// Labels grouped per session, sessions ordered by their first label.
std::vector<std::vector<LabelSample>> labels_by_session(const std::vector<LabelSample>& labels) {
  std::map<std::string, std::vector<LabelSample>> grouped;
  for (const auto& l : labels) grouped[l.session_id].push_back(l);
  std::vector<std::vector<LabelSample>> out;
  for (auto& [id, v] : grouped) out.push_back(std::move(v));
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.front().t_ms < b.front().t_ms; });
  return out;
}

}  // namespace

TrainingSet generate_training_set(const LoadedDataset& data, const FloorPlan& plan, Tech tech,
                                  const std::vector<std::string>& roster, const std::string& tag,
                                  const WindowSpec& spec, const GridOptions& grid) {
  spec.validate();
  if (roster.empty()) throw Error(Errc::InvalidConfig, "empty anchor roster for " + std::string(tech_name(tech)));
  if (data.labels.empty()) throw Error(Errc::EmptyTrainingSet, "no labels");
  const std::int64_t step_ms = std::llround(grid.step_s * 1000.0);
  if (step_ms <= 0) throw Error(Errc::InvalidConfig, "grid step must be positive");

  TrainingSet set;
  set.meta = make_meta(plan, tech, tag, spec, roster);
  const auto streams = data.for_roster(roster, tag);

  for (const auto& session : labels_by_session(data.labels)) {
    const std::int64_t first = session.front().t_ms;
    const std::int64_t last = session.back().t_ms;
    for (std::int64_t t = first; t <= last; t += step_ms) {
      ++set.report.grid_points;
      const auto point = interpolate_label(session, t, grid.max_gap_ms);
      if (!point) {
        ++set.report.gap_dropped;
        continue;
      }
      auto frame = try_build_feature_frame(streams, spec, t, tag);
      if (!frame) {
        ++set.report.all_missing_dropped;
        continue;
      }
      set.pairs.push_back(TrainingPair{std::move(*frame), make_target(*point, plan)});
      ++set.report.kept;
    }
  }
  if (set.pairs.empty()) throw Error(Errc::EmptyTrainingSet, "every grid point was dropped");
  return set;
}

std::string DatasetSummary::to_text() const {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(2);
  out << "samples " << samples << ", labels " << labels << "\n";
  out << "label inter-arrival mean " << label_interval_mean_s << " s, std " << label_interval_std_s << " s\n";
  out << "share per source (%):\n";
  for (const auto& [name, pct] : source_share_pct) out << "  " << name << " " << pct << "\n";
  out << "labels per room (%):\n";
  for (const auto& [name, pct] : room_share_pct) out << "  " << name << " " << pct << "\n";
  return out.str();
}

DatasetSummary summarize_dataset(const LoadedDataset& data, const FloorPlan& plan) {
  DatasetSummary summary;
  std::map<std::string, std::size_t> per_source;
  for (const auto& [key, stream] : data.streams) {
    per_source[key.source_id] += stream.size();
    summary.samples += stream.size();
  }
  for (const auto& [source, n] : per_source) {
    summary.source_share_pct.emplace_back(source, 100.0 * static_cast<double>(n) / static_cast<double>(summary.samples));
  }

  summary.labels = data.labels.size();
  std::vector<std::size_t> per_room(plan.rooms.size() + 1, 0);
  for (const auto& l : data.labels) {
    const auto room = room_of(PointPx{l.x_px, l.y_px}, plan);
    ++per_room[room ? static_cast<std::size_t>(room->index) : plan.rooms.size()];
  }
  if (summary.labels > 0) {
    for (std::size_t i = 0; i < per_room.size(); ++i) {
      const std::string name = i < plan.rooms.size() ? plan.rooms[i].label.name : "(none)";
      if (i == plan.rooms.size() && per_room[i] == 0) continue;
      summary.room_share_pct.emplace_back(name, 100.0 * static_cast<double>(per_room[i]) / static_cast<double>(summary.labels));
    }
  }

  std::vector<double> gaps;
  for (const auto& session : labels_by_session(data.labels)) {
    for (std::size_t i = 1; i < session.size(); ++i) {
      gaps.push_back(static_cast<double>(session[i].t_ms - session[i - 1].t_ms) / 1000.0);
    }
  }
  if (!gaps.empty()) {
    const double mean = std::accumulate(gaps.begin(), gaps.end(), 0.0) / static_cast<double>(gaps.size());
    double ss = 0.0;
    for (const double g : gaps) ss += (g - mean) * (g - mean);
    summary.label_interval_mean_s = mean;
    summary.label_interval_std_s = gaps.size() > 1 ? std::sqrt(ss / static_cast<double>(gaps.size() - 1)) : 0.0;
  }
  return summary;
}

}  // namespace rssiloc
