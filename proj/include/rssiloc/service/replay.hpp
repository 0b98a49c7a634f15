#pragma once

#include <chrono>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "rssiloc/model/trained_model.hpp"
#include "rssiloc/service/session_store.hpp"

namespace rssiloc::service {

enum class ReplaySource { Recorded, Recomputed };

std::string_view replay_source_name(ReplaySource source);
ReplaySource parse_replay_source(std::string_view text);

struct ReplayEvent {
  std::int64_t t_ms = 0;
  LivePosition position;  // source Label for ground truth
  std::string to_json_text(ReplaySource source) const;
};

// Labels and predictions of a session, merged by timestamp (labels first on
// ties). Recomputed predictions run the model over the logged samples at the
// recorded prediction instants, or on a 1 s grid when none were recorded.
std::vector<ReplayEvent> replay_timeline(const SessionLog& log, const FloorPlan& plan, ReplaySource source,
                                         const model::TrainedModel* model);

// Emits the events on their original timeline divided by speed. Returns the
// elapsed wall time. `cancelled` is polled between events.
std::chrono::steady_clock::duration play(const std::vector<ReplayEvent>& events, double speed,
                                         const std::function<void(const ReplayEvent&)>& emit,
                                         const std::function<bool()>& cancelled = {});

}  // namespace rssiloc::service
