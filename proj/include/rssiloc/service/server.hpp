#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <thread>
#include <vector>

#include "rssiloc/bus.hpp"
#include "rssiloc/error.hpp"
#include "rssiloc/service/live.hpp"
#include "rssiloc/service/replay.hpp"
#include "rssiloc/service/session_store.hpp"

namespace httplib {
class Server;
}

namespace rssiloc::service {

struct ServiceOptions {
  std::vector<FloorPlan> flats;  // the first one is the default
  std::optional<std::filesystem::path> model_path;
  std::optional<std::string> bus_uri;
  TimestampMode timestamps = TimestampMode::Live;
  std::filesystem::path data_dir = "sessions";
  bool delayed = false;
  std::chrono::milliseconds cadence{1000};
  Clock clock;  // defaults to the system clock
};

// Ingestion, per-tag prediction, sessions and the event channel. Readers of
// the latest positions get snapshots and never wait on the predict loop.
class Service {
 public:
  explicit Service(ServiceOptions options);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  // Starts the bus subscription (if any) and the predict loop.
  void start();
  void stop();

  // Throws ModeMismatch; the previous model stays active on failure.
  void load_model(const std::filesystem::path& path);
  void set_model(std::shared_ptr<const model::TrainedModel> model);
  std::shared_ptr<const model::TrainedModel> model() const;

  void ingest_sample(RssiSample sample);
  LabelSample submit_label(const std::string& session_id, std::optional<std::int64_t> t_ms, double x_px,
                           double y_px);

  // One cadence step over every tag that has sent data recently.
  std::vector<LivePosition> tick(std::int64_t now_ms);

  std::optional<LivePosition> latest(const std::string& tag_id) const;
  // Throws InvalidConfig for an unknown flat.
  const FloorPlan& flat(const std::string& name) const;
  const FloorPlan& default_flat() const { return options_.flats.front(); }

  SessionStore& sessions() { return *store_; }
  EventHub& events() { return hub_; }
  const ServiceOptions& options() const { return options_; }
  std::int64_t now() const { return options_.clock(); }
  std::optional<SubscriptionStats> bus_stats() const;

 private:
  LivePredictor& predictor_for(const std::string& tag_id);
  void loop();

  ServiceOptions options_;
  std::unique_ptr<SessionStore> store_;
  EventHub hub_;
  mutable std::mutex model_mutex_;
  std::shared_ptr<const model::TrainedModel> model_;
  mutable std::mutex predictors_mutex_;
  std::map<std::string, std::unique_ptr<LivePredictor>> predictors_;
  mutable std::shared_mutex latest_mutex_;
  std::map<std::string, LivePosition> latest_;
  std::unique_ptr<Subscription> subscription_;
  std::atomic<bool> running_{false};
  std::mutex loop_mutex_;
  std::condition_variable loop_cv_;
  std::thread loop_thread_;
};

// HTTP front end:
//   GET  /floorplan/{flat}
//   POST /sessions                 {"tag_id", "flat"?}
//   POST /sessions/{id}/stop
//   GET  /sessions
//   POST /sessions/{id}/labels     {"t_ms"?, "x_px", "y_px"}
//   GET  /live/{tag}
//   GET  /events                   line-delimited JSON, kept open
//   POST /sessions/{id}/replay?speed=3.0&source=recorded|recomputed
//   POST /model                    {"path"}
// Errors come back as {"error": <code>, "message": <text>}.
class HttpApi {
 public:
  explicit HttpApi(Service& service);
  ~HttpApi();

  // Returns the bound port (0 picks a free one).
  int bind(const std::string& host, int port);
  // Blocks until stop().
  void listen();
  void start_background();
  void stop();

 private:
  void routes();

  Service& service_;
  std::unique_ptr<httplib::Server> server_;
  std::atomic<bool> stopping_{false};
  std::thread thread_;
};

int http_status_for(Errc code);

}  // namespace rssiloc::service
