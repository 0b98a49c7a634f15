#include "rssiloc/service/live.hpp"

#include "json.hpp"
#include "rssiloc/error.hpp"
#include "rssiloc/segmentation.hpp"

namespace rssiloc::service {

using nlohmann::json;

std::string position_to_json_text(const LivePosition& p) {
  json j{{"type", "position"},
         {"t_ms", p.t_ms},
         {"tag_id", p.tag_id},
         {"source", p.source == PositionSource::Model ? "model" : "label"},
         {"gap", p.is_gap()}};
  if (p.estimate) {
    j["x_px"] = p.estimate->x_px;
    j["y_px"] = p.estimate->y_px;
    j["x_norm"] = p.estimate->x_norm;
    j["y_norm"] = p.estimate->y_norm;
    j["t_star_ms"] = p.estimate->t_star_ms;
  }
  j["room"] = p.room ? json(p.room->name) : json(nullptr);
  if (p.room) j["room_index"] = p.room->index;
  return j.dump();
}

LivePosition position_from_json_text(const std::string& text) {
  try {
    const auto j = json::parse(text);
    LivePosition p;
    p.t_ms = j.at("t_ms").get<std::int64_t>();
    p.tag_id = j.at("tag_id").get<std::string>();
    p.source = j.at("source").get<std::string>() == "label" ? PositionSource::Label : PositionSource::Model;
    if (j.contains("x_px")) {
      p.estimate = model::PositionEstimate{j.at("t_star_ms").get<std::int64_t>(), j.at("x_norm").get<double>(),
                                           j.at("y_norm").get<double>(), j.at("x_px").get<double>(),
                                           j.at("y_px").get<double>()};
    }
    if (!j.at("room").is_null()) p.room = RoomLabel{j.at("room").get<std::string>(), j.at("room_index").get<int>()};
    return p;
  } catch (const json::exception& e) {
    throw Error(Errc::CorruptFile, std::string("position record: ") + e.what());
  }
}

std::string label_event_json_text(const LabelSample& label) {
  return json{{"type", "label"},
              {"session_id", label.session_id},
              {"t_ms", label.t_ms},
              {"x_px", label.x_px},
              {"y_px", label.y_px}}
      .dump();
}

void check_live_mode(const model::TrainedModel& model, bool delayed) {
  const auto& w = model.meta.window;
  if (w.mode == WindowMode::PastAndFuture && !delayed) {
    throw Error(Errc::ModeMismatch, "model uses a " + w.describe() +
                                        " window; live prediction has no future samples. Train an only-past "
                                        "model or enable delayed output (emits " +
                                        format_number(w.future_steps() * w.sub_span_s) + " s late)");
  }
}

LivePredictor::LivePredictor(std::string tag_id, const FloorPlan& plan, bool delayed)
    : tag_(std::move(tag_id)), plan_(&plan), delayed_(delayed) {}

void LivePredictor::set_model(std::shared_ptr<const model::TrainedModel> model) {
  if (model) check_live_mode(*model, delayed_);
  std::lock_guard lock(mutex_);
  model_ = std::move(model);
}

std::shared_ptr<const model::TrainedModel> LivePredictor::model() const {
  std::lock_guard lock(mutex_);
  return model_;
}

void LivePredictor::add_sample(const RssiSample& sample) {
  std::lock_guard lock(mutex_);
  streams_[sample.source_id].append(sample);
  last_sample_ = std::max(last_sample_.value_or(sample.t_ms), sample.t_ms);
}

std::optional<std::int64_t> LivePredictor::last_sample_ms() const {
  std::lock_guard lock(mutex_);
  return last_sample_;
}

LivePosition LivePredictor::tick(std::int64_t now_ms) {
  std::lock_guard lock(mutex_);
  if (!model_) throw Error(Errc::ModelNotLoaded, "no model loaded for live prediction");
  const auto model = model_;
  const auto& spec = model->meta.window;
  const std::int64_t sub = spec.sub_span_ms();
  const std::int64_t t_star = delayed_ ? now_ms - spec.future_steps() * sub : now_ms;

  LivePosition out;
  out.t_ms = t_star;
  out.tag_id = tag_;
  std::vector<const SampleStream*> per_source;
  static const SampleStream empty;
  for (const auto& id : model->meta.roster) {
    const auto it = streams_.find(id);
    per_source.push_back(it == streams_.end() ? &empty : &it->second);
  }
  if (const auto frame = try_build_feature_frame(per_source, spec, t_star, tag_)) {
    const auto pred = model->predict(*frame);
    if (pred.position) {
      out.estimate = pred.position;
      if (const auto room = room_of({pred.position->x_px, pred.position->y_px}, *plan_)) out.room = room;
    } else if (pred.rooms) {
      const auto idx = pred.rooms->argmax();
      const auto& names = model->meta.room_names;
      if (idx < names.size()) out.room = RoomLabel{names[idx], static_cast<int>(idx)};
    }
  }
  // Keep only what the next windows can still reach.
  const std::int64_t keep_from = t_star - spec.past_steps() * sub;
  for (auto& [id, stream] : streams_) stream.trim_before(keep_from);
  return out;
}

EventHub::~EventHub() { close(); }

std::shared_ptr<EventHub::Reader> EventHub::subscribe() {
  auto reader = std::make_shared<Reader>();
  std::lock_guard lock(mutex_);
  if (closed_) reader->closed_ = true;
  readers_.push_back(reader);
  return reader;
}

void EventHub::publish(const std::string& line) {
  std::lock_guard lock(mutex_);
  std::erase_if(readers_, [](const auto& w) { return w.expired(); });
  for (const auto& weak : readers_) {
    const auto r = weak.lock();
    if (!r) continue;
    {
      std::lock_guard rl(r->mutex_);
      if (r->lines_.size() >= capacity_) {
        r->lines_.pop_front();
        ++r->dropped_;
      }
      r->lines_.push_back(line);
    }
    r->cv_.notify_all();
  }
}

void EventHub::close() {
  std::lock_guard lock(mutex_);
  closed_ = true;
  for (const auto& weak : readers_) {
    if (const auto r = weak.lock()) {
      {
        std::lock_guard rl(r->mutex_);
        r->closed_ = true;
      }
      r->cv_.notify_all();
    }
  }
}

std::optional<std::string> EventHub::Reader::next(std::chrono::milliseconds timeout) {
  std::unique_lock lock(mutex_);
  cv_.wait_for(lock, timeout, [&] { return !lines_.empty() || closed_; });
  if (lines_.empty()) return std::nullopt;
  auto line = std::move(lines_.front());
  lines_.pop_front();
  return line;
}

bool EventHub::Reader::closed() const {
  std::lock_guard lock(mutex_);
  return closed_ && lines_.empty();
}

}  // namespace rssiloc::service
