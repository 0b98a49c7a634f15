#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "rssiloc/floorplan.hpp"
#include "rssiloc/ingest.hpp"
#include "rssiloc/service/live.hpp"

namespace rssiloc::service {

enum class SessionState { Recording, Stopped };

std::string_view session_state_name(SessionState state);

struct Session {
  std::string session_id;
  std::string flat;
  std::string tag_id;
  SessionState state = SessionState::Recording;
  std::int64_t started_at = 0;
  std::optional<std::int64_t> stopped_at;
};

std::string session_to_json_text(const Session& session);

// Everything a session log holds, in append order per stream kind.
struct SessionLog {
  Session session;
  std::vector<LabelSample> labels;
  std::vector<RssiSample> samples;
  std::vector<LivePosition> positions;
};

// Registry of recording sessions backed by one directory per session:
//   session.json      metadata, rewritten on start and stop
//   labels.txt        LABEL records
//   uwb.txt, ble.txt  RSSI records; the session fixes the tag, so the BLE
//                     file keeps the anchor id in its MAC column
//   positions.jsonl   emitted LivePositions, one JSON object per line
// All appends are serialised; readers get copies.
class SessionStore {
 public:
  SessionStore(std::filesystem::path root, Clock clock);
  ~SessionStore();

  // Throws AlreadyRecording.
  Session start(const std::string& flat, const std::string& tag_id);
  // Throws NoSuchSession, SessionNotRecording.
  Session stop(const std::string& session_id);

  std::vector<Session> list() const;
  // Throws NoSuchSession.
  Session get(const std::string& session_id) const;
  std::optional<Session> recording_for(const std::string& tag_id) const;

  // Throws NoSuchSession, SessionNotRecording, OutOfCanvas.
  LabelSample submit_label(const std::string& session_id, std::int64_t t_ms, double x_px, double y_px,
                           const FloorPlan& plan);

  // Appended to the tag's recording session, if any.
  void record_sample(const RssiSample& sample);
  void record_position(const LivePosition& position);

  // Throws NoSuchSession.
  SessionLog read_log(const std::string& session_id) const;

  const std::filesystem::path& root() const { return root_; }

 private:
  struct Open;
  void write_meta(const Session& session) const;
  Open& open_for(const std::string& session_id);

  std::filesystem::path root_;
  Clock clock_;
  mutable std::mutex mutex_;
  std::map<std::string, Session> sessions_;
  std::map<std::string, std::unique_ptr<Open>> open_;
  std::uint64_t counter_ = 0;
};

}  // namespace rssiloc::service
