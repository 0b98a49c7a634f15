#include "rssiloc/service/replay.hpp"

#include <algorithm>
#include <thread>

#include "json.hpp"
#include "rssiloc/error.hpp"
#include "rssiloc/segmentation.hpp"

namespace rssiloc::service {

std::string_view replay_source_name(ReplaySource source) {
  return source == ReplaySource::Recorded ? "recorded" : "recomputed";
}

ReplaySource parse_replay_source(std::string_view text) {
  if (text == "recorded") return ReplaySource::Recorded;
  if (text == "recomputed") return ReplaySource::Recomputed;
  throw Error(Errc::InvalidConfig, "replay source must be recorded or recomputed, got '" + std::string(text) + "'");
}

std::string ReplayEvent::to_json_text(ReplaySource source) const {
  auto j = nlohmann::json::parse(position_to_json_text(position));
  j["type"] = position.source == PositionSource::Label ? "replay_label" : "replay_position";
  j["prediction_source"] = replay_source_name(source);
  return j.dump();
}

std::vector<ReplayEvent> replay_timeline(const SessionLog& log, const FloorPlan& plan, ReplaySource source,
                                         const model::TrainedModel* model) {
  std::vector<ReplayEvent> events;
  for (const auto& l : log.labels) {
    LivePosition p;
    p.t_ms = l.t_ms;
    p.tag_id = log.session.tag_id;
    p.source = PositionSource::Label;
    p.estimate = model::PositionEstimate{l.t_ms, l.x_px / plan.width_px, l.y_px / plan.height_px, l.x_px, l.y_px};
    p.room = room_of({l.x_px, l.y_px}, plan);
    events.push_back({l.t_ms, std::move(p)});
  }
  if (source == ReplaySource::Recorded) {
    for (const auto& p : log.positions) events.push_back({p.t_ms, p});
  } else {
    if (!model) throw Error(Errc::ModelNotLoaded, "recomputed replay needs a loaded model");
    LivePredictor predictor(log.session.tag_id, plan, true);
    predictor.set_model(std::shared_ptr<const model::TrainedModel>(model, [](const auto*) {}));
    std::vector<std::int64_t> instants;
    for (const auto& p : log.positions) instants.push_back(p.t_ms);
    if (instants.empty() && !log.samples.empty()) {
      const std::int64_t end = log.session.stopped_at.value_or(log.samples.back().t_ms);
      for (std::int64_t t = log.session.started_at + 1000; t <= end; t += 1000) instants.push_back(t);
    }
    // Emission instants are t* for the delayed predictor, so shift by the
    // future half before asking it.
    const auto& w = model->meta.window;
    const std::int64_t lag = w.future_steps() * w.sub_span_ms();
    auto samples = log.samples;
    std::stable_sort(samples.begin(), samples.end(),
                     [](const auto& a, const auto& b) { return a.t_ms != b.t_ms ? a.t_ms < b.t_ms : a.seq < b.seq; });
    std::sort(instants.begin(), instants.end());
    std::size_t next = 0;
    for (const auto t : instants) {
      while (next < samples.size() && samples[next].t_ms < t + lag) predictor.add_sample(samples[next++]);
      auto p = predictor.tick(t + lag);
      events.push_back({p.t_ms, std::move(p)});
    }
  }
  std::stable_sort(events.begin(), events.end(), [](const ReplayEvent& a, const ReplayEvent& b) {
    if (a.t_ms != b.t_ms) return a.t_ms < b.t_ms;
    return a.position.source == PositionSource::Label && b.position.source != PositionSource::Label;
  });
  return events;
}

std::chrono::steady_clock::duration play(const std::vector<ReplayEvent>& events, double speed,
                                         const std::function<void(const ReplayEvent&)>& emit,
                                         const std::function<bool()>& cancelled) {
  if (!(speed > 0.0) || !std::isfinite(speed)) throw Error(Errc::InvalidConfig, "replay speed must be positive");
  const auto start = std::chrono::steady_clock::now();
  if (events.empty()) return std::chrono::steady_clock::duration::zero();
  const std::int64_t t0 = events.front().t_ms;
  for (const auto& e : events) {
    const auto offset = std::chrono::duration<double, std::milli>(static_cast<double>(e.t_ms - t0) / speed);
    const auto due = start + std::chrono::duration_cast<std::chrono::steady_clock::duration>(offset);
    // Sleep in slices so cancellation stays responsive.
    while (std::chrono::steady_clock::now() < due) {
      if (cancelled && cancelled()) return std::chrono::steady_clock::now() - start;
      std::this_thread::sleep_until(std::min(due, std::chrono::steady_clock::now() + std::chrono::milliseconds(50)));
    }
    if (cancelled && cancelled()) break;
    emit(e);
  }
  return std::chrono::steady_clock::now() - start;
}

}  // namespace rssiloc::service
