#include "rssiloc/service/session_store.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"
#include "rssiloc/error.hpp"

namespace rssiloc::service {

using nlohmann::json;

std::string_view session_state_name(SessionState state) {
  return state == SessionState::Recording ? "RECORDING" : "STOPPED";
}

namespace {

json session_json(const Session& s) {
  json j{{"session_id", s.session_id},
         {"flat", s.flat},
         {"tag_id", s.tag_id},
         {"state", session_state_name(s.state)},
         {"started_at", s.started_at}};
  j["stopped_at"] = s.stopped_at ? json(*s.stopped_at) : json(nullptr);
  return j;
}

Session session_from_json(const json& j) {
  Session s;
  s.session_id = j.at("session_id").get<std::string>();
  s.flat = j.at("flat").get<std::string>();
  s.tag_id = j.at("tag_id").get<std::string>();
  s.state = j.at("state").get<std::string>() == "RECORDING" ? SessionState::Recording : SessionState::Stopped;
  s.started_at = j.at("started_at").get<std::int64_t>();
  if (!j.at("stopped_at").is_null()) s.stopped_at = j.at("stopped_at").get<std::int64_t>();
  return s;
}

bool valid_id(const std::string& id) {
  if (id.empty() || id.size() > 64) return false;
  for (const char c : id) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') return false;
  }
  return true;
}

}  // namespace

std::string session_to_json_text(const Session& session) { return session_json(session).dump(); }

struct SessionStore::Open {
  RecordLog labels;
  RecordLog uwb;
  RecordLog ble;
  RecordLog positions;

  explicit Open(const std::filesystem::path& dir)
      : labels(dir / "labels.txt"), uwb(dir / "uwb.txt"), ble(dir / "ble.txt"), positions(dir / "positions.jsonl") {}
};

SessionStore::SessionStore(std::filesystem::path root, Clock clock) : root_(std::move(root)), clock_(std::move(clock)) {
  std::error_code ec;
  std::filesystem::create_directories(root_, ec);
  if (ec) throw Error(Errc::Io, "cannot create " + root_.string() + ": " + ec.message());
  // Sessions left RECORDING by an earlier process are closed at their last
  // logged activity.
  for (const auto& entry : std::filesystem::directory_iterator(root_)) {
    const auto meta = entry.path() / "session.json";
    if (!entry.is_directory() || !std::filesystem::exists(meta)) continue;
    std::ifstream in(meta);
    Session s;
    try {
      s = session_from_json(json::parse(in));
    } catch (const std::exception& e) {
      throw Error(Errc::CorruptFile, meta.string() + ": " + e.what());
    }
    if (s.state == SessionState::Recording) {
      s.state = SessionState::Stopped;
      sessions_[s.session_id] = s;
      const auto log = read_log(s.session_id);
      std::int64_t last = s.started_at;
      for (const auto& l : log.labels) last = std::max(last, l.t_ms);
      for (const auto& x : log.samples) last = std::max(last, x.t_ms);
      for (const auto& p : log.positions) last = std::max(last, p.t_ms);
      s.stopped_at = last;
      write_meta(s);
    }
    sessions_[s.session_id] = s;
    const auto dash = s.session_id.rfind('-');
    if (dash != std::string::npos) {
      try {
        counter_ = std::max<std::uint64_t>(counter_, std::stoull(s.session_id.substr(dash + 1)));
      } catch (const std::exception&) {
      }
    }
  }
}

SessionStore::~SessionStore() = default;

void SessionStore::write_meta(const Session& session) const {
  const auto dir = root_ / session.session_id;
  std::filesystem::create_directories(dir);
  const auto tmp = dir / "session.json.tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw Error(Errc::Io, "cannot write " + tmp.string());
    out << session_json(session).dump(2) << "\n";
  }
  std::filesystem::rename(tmp, dir / "session.json");
}

SessionStore::Open& SessionStore::open_for(const std::string& session_id) {
  auto& slot = open_[session_id];
  if (!slot) slot = std::make_unique<Open>(root_ / session_id);
  return *slot;
}

Session SessionStore::start(const std::string& flat, const std::string& tag_id) {
  std::lock_guard lock(mutex_);
  for (const auto& [id, s] : sessions_) {
    if (s.tag_id == tag_id && s.state == SessionState::Recording) {
      throw Error(Errc::AlreadyRecording, "tag " + tag_id + " is already recording in " + id);
    }
  }
  Session s;
  s.flat = flat;
  s.tag_id = tag_id;
  s.started_at = clock_();
  do {
    s.session_id = "s" + std::to_string(s.started_at) + "-" + std::to_string(++counter_);
  } while (sessions_.count(s.session_id));
  write_meta(s);
  open_for(s.session_id);
  sessions_[s.session_id] = s;
  return s;
}

Session SessionStore::stop(const std::string& session_id) {
  std::lock_guard lock(mutex_);
  const auto it = sessions_.find(session_id);
  if (it == sessions_.end()) throw Error(Errc::NoSuchSession, session_id);
  Session& s = it->second;
  if (s.state != SessionState::Recording) throw Error(Errc::SessionNotRecording, session_id + " is already stopped");
  s.state = SessionState::Stopped;
  s.stopped_at = std::max(s.started_at, clock_());
  write_meta(s);
  open_.erase(session_id);
  return s;
}

std::vector<Session> SessionStore::list() const {
  std::lock_guard lock(mutex_);
  std::vector<Session> out;
  for (const auto& [id, s] : sessions_) out.push_back(s);
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.started_at < b.started_at; });
  return out;
}

Session SessionStore::get(const std::string& session_id) const {
  std::lock_guard lock(mutex_);
  const auto it = sessions_.find(session_id);
  if (it == sessions_.end()) throw Error(Errc::NoSuchSession, session_id);
  return it->second;
}

std::optional<Session> SessionStore::recording_for(const std::string& tag_id) const {
  std::lock_guard lock(mutex_);
  for (const auto& [id, s] : sessions_) {
    if (s.tag_id == tag_id && s.state == SessionState::Recording) return s;
  }
  return std::nullopt;
}

LabelSample SessionStore::submit_label(const std::string& session_id, std::int64_t t_ms, double x_px, double y_px,
                                       const FloorPlan& plan) {
  std::lock_guard lock(mutex_);
  const auto it = sessions_.find(session_id);
  if (it == sessions_.end()) throw Error(Errc::NoSuchSession, session_id);
  if (it->second.state != SessionState::Recording) {
    throw Error(Errc::SessionNotRecording, session_id + " is stopped");
  }
  const PointPx p{x_px, y_px};
  if (!std::isfinite(x_px) || !std::isfinite(y_px) || !plan.in_canvas(p)) {
    throw Error(Errc::OutOfCanvas, "(" + format_number(x_px) + ", " + format_number(y_px) + ") is outside the " +
                                       std::to_string(plan.width_px) + "x" + std::to_string(plan.height_px) +
                                       " canvas");
  }
  LabelSample label{t_ms, x_px, y_px, session_id};
  open_for(session_id).labels.append(format_label_record(label));
  return label;
}

void SessionStore::record_sample(const RssiSample& sample) {
  std::lock_guard lock(mutex_);
  for (const auto& [id, s] : sessions_) {
    if (s.tag_id != sample.tag_id || s.state != SessionState::Recording) continue;
    auto& open = open_for(id);
    (sample.tech == Tech::Uwb ? open.uwb : open.ble).append(format_rssi_record(sample));
    return;
  }
}

void SessionStore::record_position(const LivePosition& position) {
  std::lock_guard lock(mutex_);
  for (const auto& [id, s] : sessions_) {
    if (s.tag_id != position.tag_id || s.state != SessionState::Recording) continue;
    open_for(id).positions.append(position_to_json_text(position));
    return;
  }
}

SessionLog SessionStore::read_log(const std::string& session_id) const {
  SessionLog log;
  {
    std::lock_guard lock(mutex_);
    const auto it = sessions_.find(session_id);
    if (it == sessions_.end() || !valid_id(session_id)) throw Error(Errc::NoSuchSession, session_id);
    log.session = it->second;
  }
  const auto dir = root_ / session_id;
  auto lines = [&](const char* name) {
    const auto path = dir / name;
    return std::filesystem::exists(path) ? RecordLog::read_lines(path) : std::vector<std::string>{};
  };
  RecordSchema label_schema;
  label_schema.kind = RecordKind::Label;
  label_schema.session_id = session_id;
  label_schema.epoch_unit = EpochUnit::Milliseconds;
  for (const auto& line : lines("labels.txt")) log.labels.push_back(parse_label_record(line, label_schema));
  std::uint64_t seq = 0;
  for (const auto kind : {RecordKind::Uwb, RecordKind::Ble}) {
    RecordSchema schema;
    schema.kind = kind;
    schema.tag_id = log.session.tag_id;
    schema.epoch_unit = EpochUnit::Milliseconds;
    for (const auto& line : lines(kind == RecordKind::Uwb ? "uwb.txt" : "ble.txt")) {
      auto s = parse_rssi_record(line, schema);
      s.seq = seq++;
      log.samples.push_back(std::move(s));
    }
  }
  for (const auto& line : lines("positions.jsonl")) log.positions.push_back(position_from_json_text(line));
  return log;
}

}  // namespace rssiloc::service
