#include <atomic>
#include <thread>

#include "doctest.h"
#include "helpers.hpp"
#include "httplib.h"
#include "json.hpp"
#include "rssiloc/model/train.hpp"
#include "rssiloc/service/server.hpp"
#include "rssiloc/synthetic.hpp"

using namespace rssiloc;
using namespace rssiloc::service;
using nlohmann::json;

namespace {

struct ManualClock {
  std::shared_ptr<std::atomic<std::int64_t>> now = std::make_shared<std::atomic<std::int64_t>>(1'668'519'000'000);
  Clock clock() const {
    return [n = now] { return n->load(); };
  }
  void advance(std::int64_t ms) { *now += ms; }
};

struct Fixture {
  SyntheticFlat flat;
  std::shared_ptr<const model::TrainedModel> model;
};

// kNN keeps these tests fast; the live path is identical for every kind.
const Fixture& fixture(WindowMode mode = WindowMode::OnlyPast) {
  static std::map<WindowMode, Fixture> cache;
  auto& f = cache[mode];
  if (!f.model) {
    SyntheticOptions o;
    o.anchors = 6;
    o.sessions = 1;
    o.session_duration_s = 120;
    f.flat = generate_synthetic(o);
    WindowSpec spec;
    spec.total_span_s = 4;
    spec.mode = mode;
    const auto set = generate_training_set(f.flat.data, f.flat.plan, Tech::Uwb, f.flat.plan.roster(Tech::Uwb), o.tag,
                                           spec);
    model::ModelConfig cfg;
    cfg.kind = model::ModelKind::Knn;
    f.model = std::make_shared<const model::TrainedModel>(model::train(cfg, set));
  }
  return f;
}

RssiSample sample(std::int64_t t, const std::string& anchor, double rssi, const std::string& tag = "tag0") {
  RssiSample s;
  s.t_ms = t;
  s.source_id = anchor;
  s.rssi_dbm = rssi;
  s.tag_id = tag;
  return s;
}

ServiceOptions options(const testutil::TempDir& dir, const ManualClock& clock) {
  ServiceOptions o;
  o.flats = {fixture().flat.plan};
  o.data_dir = dir.path() / "sessions";
  o.clock = clock.clock();
  return o;
}

}  // namespace

TEST_CASE("sessions: lifecycle and errors") {
  testutil::TempDir dir;
  ManualClock clock;
  SessionStore store(dir.path(), clock.clock());
  const auto s = store.start("flatA", "tag0");
  CHECK(s.state == SessionState::Recording);
  CHECK_ERRC(store.start("flatA", "tag0"), Errc::AlreadyRecording);
  CHECK_NOTHROW(store.start("flatA", "tag1"));
  clock.advance(5000);
  const auto stopped = store.stop(s.session_id);
  CHECK(stopped.state == SessionState::Stopped);
  CHECK(*stopped.stopped_at == s.started_at + 5000);
  CHECK_ERRC(store.stop("nope"), Errc::NoSuchSession);
  CHECK_ERRC(store.stop(s.session_id), Errc::SessionNotRecording);
  CHECK_NOTHROW(store.start("flatA", "tag0"));

  SessionStore reopened(dir.path(), clock.clock());
  const auto back = reopened.get(s.session_id);
  CHECK(back.stopped_at == stopped.stopped_at);
  CHECK(reopened.list().size() == 3);
  for (const auto& x : reopened.list()) CHECK(x.state == SessionState::Stopped);
  CHECK_ERRC(reopened.read_log("../etc"), Errc::NoSuchSession);
}

TEST_CASE("labels: stored, echoed in order, validated") {
  testutil::TempDir dir;
  ManualClock clock;
  Service svc(options(dir, clock));
  auto reader = svc.events().subscribe();
  const auto s = svc.sessions().start(svc.default_flat().name, "tag0");
  const auto l = svc.submit_label(s.session_id, std::nullopt, 288, 525);
  CHECK(l.t_ms == clock.now->load());
  for (int i = 0; i < 20; ++i) svc.submit_label(s.session_id, 1'668'519'001'000 + i, i, i);
  const auto first = json::parse(*reader->next(std::chrono::milliseconds(100)));
  CHECK(first["type"] == "label");
  CHECK(first["x_px"] == 288);
  CHECK(first["y_px"] == 525);
  for (int i = 0; i < 20; ++i) CHECK(json::parse(*reader->next(std::chrono::milliseconds(100)))["x_px"] == i);

  CHECK_ERRC(svc.submit_label(s.session_id, std::nullopt, -1, 10), Errc::OutOfCanvas);
  CHECK_ERRC(svc.submit_label(s.session_id, std::nullopt, 10, 753.5), Errc::OutOfCanvas);
  CHECK_ERRC(svc.submit_label("missing", std::nullopt, 1, 1), Errc::NoSuchSession);
  svc.sessions().stop(s.session_id);
  CHECK_ERRC(svc.submit_label(s.session_id, std::nullopt, 1, 1), Errc::SessionNotRecording);

  const auto log = svc.sessions().read_log(s.session_id);
  REQUIRE(log.labels.size() == 21);
  CHECK(log.labels[0].x_px == 288);
  CHECK(log.labels[0].y_px == 525);
  CHECK(log.labels[20].t_ms == 1'668'519'001'019);
}

TEST_CASE("live predictor: cadence, gaps, mode checks") {
  const auto& fx = fixture();
  LivePredictor p("tag0", fx.flat.plan, false);
  CHECK_ERRC(p.tick(0), Errc::ModelNotLoaded);
  p.set_model(fx.model);
  const auto roster = fx.model->meta.roster;
  REQUIRE(roster.size() == 6);

  std::int64_t t = 1'668'519'000'000;
  int positions = 0;
  for (int second = 0; second < 10; ++second) {
    for (int k = 0; k < 5; ++k) {
      for (std::size_t a = 0; a < roster.size(); ++a) p.add_sample(sample(t + k * 200, roster[a], -60 - 3.0 * a));
    }
    t += 1000;
    const auto pos = p.tick(t);
    CHECK(pos.t_ms == t);
    CHECK(!pos.is_gap());
    REQUIRE(pos.estimate);
    CHECK(pos.estimate->t_star_ms == t);
    CHECK(pos.room == room_of({pos.estimate->x_px, pos.estimate->y_px}, fx.flat.plan));
    ++positions;
  }
  CHECK(positions == 10);
  const auto gap = p.tick(t + 4000);  // a whole window without samples
  CHECK(gap.is_gap());
  CHECK(position_to_json_text(gap).find("\"gap\":true") != std::string::npos);

  const auto& both = fixture(WindowMode::PastAndFuture);
  CHECK_ERRC(p.set_model(both.model), Errc::ModeMismatch);
  CHECK(p.model() == fx.model);  // unchanged after a rejected swap
  LivePredictor delayed("tag0", fx.flat.plan, true);
  delayed.set_model(both.model);
  for (std::size_t a = 0; a < roster.size(); ++a) delayed.add_sample(sample(t + 100, roster[a], -70));
  const auto late = delayed.tick(t + 3000);
  CHECK(late.t_ms == t + 3000 - both.model->meta.window.future_steps() * 1000);
  CHECK(!late.is_gap());
}

TEST_CASE("position records round-trip through JSON") {
  LivePosition p;
  p.t_ms = 5;
  p.tag_id = "t";
  p.estimate = model::PositionEstimate{5, 0.25, 0.5, 115, 376.5};
  p.room = RoomLabel{"kitchen", 1};
  const auto back = position_from_json_text(position_to_json_text(p));
  CHECK(position_to_json_text(back) == position_to_json_text(p));
  LivePosition g;
  g.tag_id = "t";
  CHECK(position_from_json_text(position_to_json_text(g)).is_gap());
  CHECK_ERRC(position_from_json_text("{}"), Errc::CorruptFile);
}

TEST_CASE("service ticks persist exactly what clients saw") {
  testutil::TempDir dir;
  ManualClock clock;
  Service svc(options(dir, clock));
  svc.set_model(fixture().model);
  auto reader = svc.events().subscribe();
  const auto s = svc.sessions().start(svc.default_flat().name, "tag0");
  const auto roster = fixture().model->meta.roster;
  std::vector<std::string> seen;
  for (int second = 0; second < 8; ++second) {
    for (std::size_t a = 0; a < roster.size(); ++a) {
      if (second < 4) svc.ingest_sample(sample(clock.now->load() + 100, roster[a], -65 - double(a)));
    }
    if (second == 2) svc.submit_label(s.session_id, std::nullopt, 100, 200);
    clock.advance(1000);
    const auto out = svc.tick(clock.now->load());
    CHECK(out.size() <= 1);
    while (auto line = reader->next(std::chrono::milliseconds(0))) seen.push_back(*line);
  }
  CHECK(svc.latest("tag0"));
  CHECK(!svc.latest("other"));
  svc.sessions().stop(s.session_id);

  const auto log = svc.sessions().read_log(s.session_id);
  CHECK(log.samples.size() == 4 * roster.size());
  CHECK(log.labels.size() == 1);
  std::vector<std::string> persisted;
  for (const auto& p : log.positions) persisted.push_back(position_to_json_text(p));
  std::vector<std::string> observed;
  for (const auto& line : seen) {
    if (json::parse(line)["type"] == "position") observed.push_back(line);
  }
  CHECK(observed == persisted);
  CHECK(!observed.empty());
  CHECK(log.positions.back().is_gap());
}

TEST_CASE("model swap under load") {
  testutil::TempDir dir;
  ManualClock clock;
  Service svc(options(dir, clock));
  svc.set_model(fixture().model);
  const auto roster = fixture().model->meta.roster;
  const auto bytes = model::serialize_model(*fixture().model);
  std::atomic<bool> done{false};
  std::thread swapper([&] {
    while (!done) svc.set_model(std::make_shared<const model::TrainedModel>(model::deserialize_model(bytes)));
  });
  for (int i = 0; i < 200; ++i) {
    for (const auto& a : roster) svc.ingest_sample(sample(clock.now->load(), a, -70));
    clock.advance(100);
    CHECK_NOTHROW(svc.tick(clock.now->load()));
  }
  done = true;
  swapper.join();
  CHECK_ERRC(svc.set_model(fixture(WindowMode::PastAndFuture).model), Errc::ModeMismatch);
}

TEST_CASE("replay keeps the recorded rhythm, scaled by speed") {
  testutil::TempDir dir;
  ManualClock clock;
  SessionStore store(dir.path(), clock.clock());
  const auto& plan = fixture().flat.plan;
  const auto s = store.start(plan.name, "tag0");
  for (int i = 0; i < 7; ++i) store.submit_label(s.session_id, 1'000'000 + i * 150, 10 + i, 20, plan);
  store.stop(s.session_id);
  const auto events = replay_timeline(store.read_log(s.session_id), plan, ReplaySource::Recorded, nullptr);
  REQUIRE(events.size() == 7);

  for (double speed : {1.0, 3.0}) {
    std::vector<std::chrono::steady_clock::time_point> at;
    const auto elapsed = play(events, speed, [&](const ReplayEvent&) { at.push_back(std::chrono::steady_clock::now()); });
    REQUIRE(at.size() == 7);
    for (std::size_t i = 1; i < at.size(); ++i) {
      const double gap = std::chrono::duration<double, std::milli>(at[i] - at[i - 1]).count();
      CHECK(std::abs(gap - 150.0 / speed) < 50.0);
    }
    const double total = std::chrono::duration<double, std::milli>(elapsed).count();
    CHECK(total == doctest::Approx(900.0 / speed).epsilon(0.1));
  }

  const auto empty = store.start(plan.name, "tag9");
  store.stop(empty.session_id);
  const auto none = replay_timeline(store.read_log(empty.session_id), plan, ReplaySource::Recorded, nullptr);
  CHECK(none.empty());
  CHECK(play(none, 1.0, [](const ReplayEvent&) {}) < std::chrono::milliseconds(5));
  CHECK_ERRC(play(events, 0.0, [](const ReplayEvent&) {}), Errc::InvalidConfig);
  CHECK_ERRC(replay_timeline(store.read_log(s.session_id), plan, ReplaySource::Recomputed, nullptr),
             Errc::ModelNotLoaded);
}

TEST_CASE("recomputed replay runs the model over the logged samples") {
  testutil::TempDir dir;
  ManualClock clock;
  Service svc(options(dir, clock));
  svc.set_model(fixture().model);
  const auto s = svc.sessions().start(svc.default_flat().name, "tag0");
  const auto roster = fixture().model->meta.roster;
  for (int second = 0; second < 6; ++second) {
    for (std::size_t a = 0; a < roster.size(); ++a) svc.ingest_sample(sample(clock.now->load() + 10, roster[a], -62 - 2.0 * a));
    clock.advance(1000);
    svc.tick(clock.now->load());
  }
  svc.sessions().stop(s.session_id);
  const auto log = svc.sessions().read_log(s.session_id);
  const auto recorded = replay_timeline(log, svc.default_flat(), ReplaySource::Recorded, nullptr);
  const auto recomputed = replay_timeline(log, svc.default_flat(), ReplaySource::Recomputed, fixture().model.get());
  REQUIRE(recorded.size() == recomputed.size());
  for (std::size_t i = 0; i < recorded.size(); ++i) {
    CHECK(recorded[i].t_ms == recomputed[i].t_ms);
    CHECK(recorded[i].position.is_gap() == recomputed[i].position.is_gap());
    if (recorded[i].position.estimate) {
      CHECK(recorded[i].position.estimate->x_px == doctest::Approx(recomputed[i].position.estimate->x_px));
    }
  }
}

TEST_CASE("http api: endpoints, errors, event channel, replay") {
  testutil::TempDir dir;
  ManualClock clock;
  Service svc(options(dir, clock));
  HttpApi api(svc);
  const int port = api.bind("127.0.0.1", 0);
  api.start_background();
  httplib::Client cli("127.0.0.1", port);
  cli.set_read_timeout(10, 0);
  const std::string flat = svc.default_flat().name;

  auto fp = cli.Get("/floorplan/" + flat);
  REQUIRE(fp);
  CHECK(fp->status == 200);
  const auto fpj = json::parse(fp->body);
  CHECK(fpj["width_px"] == 460);
  CHECK(fpj["scale_x_mm_per_px"].get<double>() == doctest::Approx(5800.0 / 460));
  CHECK(fpj["rooms"].size() == 4);
  CHECK(cli.Get("/floorplan/nowhere")->status == 422);

  CHECK(cli.Get("/live/tag0")->status == 503);  // no model yet

  std::vector<std::string> streamed;
  std::mutex streamed_mutex;
  std::thread listener([&] {
    httplib::Client ev("127.0.0.1", port);
    ev.set_read_timeout(10, 0);
    std::string buffer;
    ev.Get("/events", [&](const char* data, std::size_t n) {
      buffer.append(data, n);
      std::size_t nl;
      while ((nl = buffer.find('\n')) != std::string::npos) {
        std::lock_guard lock(streamed_mutex);
        streamed.push_back(buffer.substr(0, nl));
        buffer.erase(0, nl + 1);
      }
      return true;
    });
  });
  std::this_thread::sleep_for(std::chrono::milliseconds(200));  // let the listener attach

  auto started = cli.Post("/sessions", R"({"tag_id": "tag0"})", "application/json");
  REQUIRE(started);
  CHECK(started->status == 201);
  const auto id = json::parse(started->body)["session_id"].get<std::string>();
  CHECK(cli.Post("/sessions", R"({"tag_id": "tag0"})", "application/json")->status == 409);
  CHECK(cli.Post("/sessions", "not json", "application/json")->status == 422);

  const std::vector<std::pair<double, double>> clicks{{288, 525}, {230, 376.5}, {10, 10}};
  for (std::size_t i = 0; i < clicks.size(); ++i) {
    json body{{"t_ms", 1'668'519'100'000 + static_cast<std::int64_t>(i) * 300}, {"x_px", clicks[i].first},
              {"y_px", clicks[i].second}};
    auto r = cli.Post("/sessions/" + id + "/labels", body.dump(), "application/json");
    REQUIRE(r);
    CHECK(r->status == 201);
  }
  auto bad = cli.Post("/sessions/" + id + "/labels", R"({"x_px": -1, "y_px": 10})", "application/json");
  CHECK(bad->status == 422);
  CHECK(json::parse(bad->body)["error"] == "OutOfCanvas");
  CHECK(cli.Post("/sessions/zzz/labels", R"({"x_px": 1, "y_px": 1})", "application/json")->status == 404);

  auto listed = json::parse(cli.Get("/sessions")->body);
  REQUIRE(listed.size() == 1);
  CHECK(listed[0]["state"] == "RECORDING");
  auto stop = cli.Post("/sessions/" + id + "/stop");
  CHECK(stop->status == 200);
  CHECK(json::parse(stop->body)["state"] == "STOPPED");
  CHECK(cli.Post("/sessions/" + id + "/stop")->status == 409);
  CHECK(cli.Post("/sessions/" + id + "/labels", R"({"x_px": 1, "y_px": 1})", "application/json")->status == 409);

  const auto t0 = std::chrono::steady_clock::now();
  auto replay = cli.Post("/sessions/" + id + "/replay?speed=3.0");
  const double wall = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  REQUIRE(replay);
  CHECK(replay->status == 200);
  std::vector<json> lines;
  std::istringstream in(replay->body);
  for (std::string line; std::getline(in, line);) lines.push_back(json::parse(line));
  REQUIRE(lines.size() == 4);
  CHECK(lines[0]["type"] == "replay_label");
  CHECK(lines[1]["x_px"] == 230);
  CHECK(lines[3]["type"] == "replay_end");
  CHECK(wall == doctest::Approx(200.0).epsilon(0.5));
  CHECK(cli.Post("/sessions/" + id + "/replay?speed=-1")->status == 422);
  CHECK(cli.Post("/sessions/nope/replay")->status == 404);

  auto model_path = dir.path() / "m.rlmd";
  model::save_model(*fixture().model, model_path);
  CHECK(cli.Post("/model", json{{"path", model_path.string()}}.dump(), "application/json")->status == 200);
  auto both_path = dir.path() / "pf.rlmd";
  model::save_model(*fixture(WindowMode::PastAndFuture).model, both_path);
  auto mismatch = cli.Post("/model", json{{"path", both_path.string()}}.dump(), "application/json");
  CHECK(mismatch->status == 409);
  CHECK(json::parse(mismatch->body)["error"] == "ModeMismatch");
  CHECK(cli.Get("/live/tag0")->status == 404);
  for (const auto& a : fixture().model->meta.roster) svc.ingest_sample(sample(clock.now->load() - 500, a, -70));
  svc.tick(clock.now->load());
  auto live = cli.Get("/live/tag0");
  CHECK(live->status == 200);
  CHECK(json::parse(live->body)["source"] == "model");

  std::this_thread::sleep_for(std::chrono::milliseconds(300));
  api.stop();
  listener.join();
  std::vector<json> labels;
  for (const auto& line : streamed) {
    const auto j = json::parse(line);
    if (j["type"] == "label") labels.push_back(j);
  }
  REQUIRE(labels.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(labels[i]["x_px"].get<double>() == clicks[i].first);
    CHECK(labels[i]["y_px"].get<double>() == clicks[i].second);
  }
}
