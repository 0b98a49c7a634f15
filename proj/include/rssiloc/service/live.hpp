#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "rssiloc/floorplan.hpp"
#include "rssiloc/ingest.hpp"
#include "rssiloc/model/trained_model.hpp"

namespace rssiloc::service {

enum class PositionSource { Model, Label };

// A position for one tag at one instant. Neither estimate nor room means a gap
// marker: the window held no samples, so nothing is reported. Room-classifier
// models fill only the room.
struct LivePosition {
  std::int64_t t_ms = 0;
  std::string tag_id;
  std::optional<model::PositionEstimate> estimate;
  std::optional<RoomLabel> room;
  PositionSource source = PositionSource::Model;

  bool is_gap() const { return !estimate && !room; }
};

std::string position_to_json_text(const LivePosition& position);
LivePosition position_from_json_text(const std::string& text);
std::string label_event_json_text(const LabelSample& label);

// Rejects PAST_AND_FUTURE models unless delayed output is allowed. Throws
// ModeMismatch.
void check_live_mode(const model::TrainedModel& model, bool delayed);

// Buffers one tag's samples and turns them into positions on demand.
class LivePredictor {
 public:
  LivePredictor(std::string tag_id, const FloorPlan& plan, bool delayed);

  // Atomic replacement; throws ModeMismatch.
  void set_model(std::shared_ptr<const model::TrainedModel> model);
  std::shared_ptr<const model::TrainedModel> model() const;

  void add_sample(const RssiSample& sample);
  std::optional<std::int64_t> last_sample_ms() const;

  // Position for the window ending at now_ms, or at now_ms minus the future
  // half in delayed mode. Throws ModelNotLoaded.
  LivePosition tick(std::int64_t now_ms);

  const std::string& tag_id() const { return tag_; }

 private:
  std::string tag_;
  const FloorPlan* plan_;
  bool delayed_;
  mutable std::mutex mutex_;
  std::shared_ptr<const model::TrainedModel> model_;
  std::map<std::string, SampleStream> streams_;
  std::optional<std::int64_t> last_sample_;
};

// Fan-out of line-delimited JSON events to any number of readers. Each reader
// has its own bounded queue; a slow reader loses its oldest lines.
class EventHub {
 public:
  class Reader {
   public:
    // nullopt on timeout or once the hub is closed.
    std::optional<std::string> next(std::chrono::milliseconds timeout);
    bool closed() const;

   private:
    friend class EventHub;
    mutable std::mutex mutex_;
    std::condition_variable cv_;
    std::deque<std::string> lines_;
    bool closed_ = false;
    std::size_t dropped_ = 0;
  };

  explicit EventHub(std::size_t capacity = 4096) : capacity_(capacity) {}
  ~EventHub();

  std::shared_ptr<Reader> subscribe();
  void publish(const std::string& line);
  void close();

 private:
  std::size_t capacity_;
  std::mutex mutex_;
  std::vector<std::weak_ptr<Reader>> readers_;
  bool closed_ = false;
};

}  // namespace rssiloc::service
