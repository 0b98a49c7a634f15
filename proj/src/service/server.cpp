#include "rssiloc/service/server.hpp"

#include <sstream>

#include "httplib.h"
#include "json.hpp"
#include "rssiloc/error.hpp"

namespace rssiloc::service {

using nlohmann::json;

Service::Service(ServiceOptions options) : options_(std::move(options)) {
  if (options_.flats.empty()) throw Error(Errc::InvalidConfig, "service needs at least one flat");
  if (!options_.clock) options_.clock = system_clock_ms();
  if (options_.cadence.count() <= 0) throw Error(Errc::InvalidConfig, "cadence must be positive");
  store_ = std::make_unique<SessionStore>(options_.data_dir, options_.clock);
  if (options_.model_path) load_model(*options_.model_path);
}

Service::~Service() { stop(); }

void Service::load_model(const std::filesystem::path& path) {
  set_model(std::make_shared<const model::TrainedModel>(model::load_model(path)));
}

void Service::set_model(std::shared_ptr<const model::TrainedModel> model) {
  if (!model) throw Error(Errc::ModelNotLoaded, "null model");
  check_live_mode(*model, options_.delayed);
  {
    std::lock_guard lock(predictors_mutex_);
    for (auto& [tag, p] : predictors_) p->set_model(model);
  }
  std::lock_guard lock(model_mutex_);
  model_ = std::move(model);
}

std::shared_ptr<const model::TrainedModel> Service::model() const {
  std::lock_guard lock(model_mutex_);
  return model_;
}

const FloorPlan& Service::flat(const std::string& name) const {
  for (const auto& f : options_.flats) {
    if (f.name == name) return f;
  }
  throw Error(Errc::InvalidConfig, "unknown flat '" + name + "'");
}

LivePredictor& Service::predictor_for(const std::string& tag_id) {
  std::lock_guard lock(predictors_mutex_);
  auto& slot = predictors_[tag_id];
  if (!slot) {
    slot = std::make_unique<LivePredictor>(tag_id, default_flat(), options_.delayed);
    if (const auto m = model()) slot->set_model(m);
  }
  return *slot;
}

void Service::ingest_sample(RssiSample sample) {
  store_->record_sample(sample);
  predictor_for(sample.tag_id).add_sample(sample);
}

LabelSample Service::submit_label(const std::string& session_id, std::optional<std::int64_t> t_ms, double x_px,
                                  double y_px) {
  const auto session = store_->get(session_id);
  const auto& plan = flat(session.flat);
  const auto label = store_->submit_label(session_id, t_ms.value_or(now()), x_px, y_px, plan);
  hub_.publish(label_event_json_text(label));
  return label;
}

std::vector<LivePosition> Service::tick(std::int64_t now_ms) {
  std::vector<LivePosition> out;
  if (!model()) return out;
  std::vector<LivePredictor*> active;
  {
    std::lock_guard lock(predictors_mutex_);
    for (auto& [tag, p] : predictors_) active.push_back(p.get());
  }
  for (auto* p : active) {
    const auto last = p->last_sample_ms();
    const auto m = p->model();
    if (!last || !m) continue;
    // Tags that went quiet get gap markers until their last sample leaves
    // the window.
    const std::int64_t reach = static_cast<std::int64_t>(m->meta.window.total_span_s * 1000.0);
    if (now_ms - *last > reach + options_.cadence.count()) continue;
    auto pos = p->tick(now_ms);
    store_->record_position(pos);
    hub_.publish(position_to_json_text(pos));
    {
      std::unique_lock lock(latest_mutex_);
      latest_[pos.tag_id] = pos;
    }
    out.push_back(std::move(pos));
  }
  return out;
}

std::optional<LivePosition> Service::latest(const std::string& tag_id) const {
  std::shared_lock lock(latest_mutex_);
  const auto it = latest_.find(tag_id);
  if (it == latest_.end()) return std::nullopt;
  return it->second;
}

std::optional<SubscriptionStats> Service::bus_stats() const {
  if (!subscription_) return std::nullopt;
  return subscription_->stats();
}

void Service::start() {
  if (running_.exchange(true)) return;
  if (options_.bus_uri) {
    BusConfig config;
    config.uri = *options_.bus_uri;
    config.mode = options_.timestamps;
    config.clock = options_.clock;
    LiveSink sink;
    sink.on_sample = [this](const RssiSample& s) { ingest_sample(s); };
    sink.on_label = [this](const LabelSample& l) {
      try {
        submit_label(l.session_id, l.t_ms, l.x_px, l.y_px);
      } catch (const Error&) {
        // Labels for unknown or stopped sessions are dropped.
      }
    };
    subscription_ = subscribe_live(config, std::move(sink));
  }
  loop_thread_ = std::thread([this] { loop(); });
}

void Service::loop() {
  auto next = std::chrono::steady_clock::now() + options_.cadence;
  std::unique_lock lock(loop_mutex_);
  while (running_) {
    if (loop_cv_.wait_until(lock, next, [&] { return !running_; })) break;
    lock.unlock();
    try {
      tick(now());
    } catch (const std::exception&) {
      // A bad frame must not stop the loop; the next tick retries.
    }
    lock.lock();
    next += options_.cadence;
    const auto now_tp = std::chrono::steady_clock::now();
    if (next < now_tp) next = now_tp + options_.cadence;  // overran: skip ahead, never burst
  }
}

void Service::stop() {
  if (running_.exchange(false)) {
    loop_cv_.notify_all();
    if (loop_thread_.joinable()) loop_thread_.join();
    if (subscription_) subscription_->stop();
  }
  hub_.close();
}

int http_status_for(Errc code) {
  switch (code) {
    case Errc::NoSuchSession: return 404;
    case Errc::AlreadyRecording:
    case Errc::SessionNotRecording:
    case Errc::ModeMismatch: return 409;
    case Errc::OutOfCanvas:
    case Errc::MalformedRecord:
    case Errc::InvalidConfig: return 422;
    case Errc::ModelNotLoaded: return 503;
    case Errc::Io:
    case Errc::CorruptFile: return 500;
    default: return 400;
  }
}

namespace {

void send_json(httplib::Response& res, const json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, Errc code, const std::string& message) {
  send_json(res, {{"error", errc_name(code)}, {"message", message}}, http_status_for(code));
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  try {
    auto j = json::parse(req.body);
    if (!j.is_object()) throw Error(Errc::MalformedRecord, "request body must be a JSON object");
    return j;
  } catch (const json::exception& e) {
    throw Error(Errc::MalformedRecord, std::string("request body: ") + e.what());
  }
}

json floorplan_view(const FloorPlan& plan) {
  auto j = json::parse(floorplan_to_json_text(plan));
  j.erase("data_files");
  j["scale_x_mm_per_px"] = plan.scale_x();
  j["scale_y_mm_per_px"] = plan.scale_y();
  return j;
}

}  // namespace

HttpApi::HttpApi(Service& service) : service_(service), server_(std::make_unique<httplib::Server>()) { routes(); }

HttpApi::~HttpApi() { stop(); }

void HttpApi::routes() {
  auto& s = *server_;
  s.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    try {
      std::rethrow_exception(ep);
    } catch (const Error& e) {
      send_error(res, e.code(), e.what());
    } catch (const std::exception& e) {
      send_json(res, {{"error", "Internal"}, {"message", e.what()}}, 500);
    }
  });

  s.Get("/floorplan/:flat", [this](const httplib::Request& req, httplib::Response& res) {
    send_json(res, floorplan_view(service_.flat(req.path_params.at("flat"))));
  });

  s.Get("/sessions", [this](const httplib::Request&, httplib::Response& res) {
    json list = json::array();
    for (const auto& session : service_.sessions().list()) list.push_back(json::parse(session_to_json_text(session)));
    send_json(res, list);
  });

  s.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) {
    const auto body = parse_body(req);
    const std::string flat = body.value("flat", service_.default_flat().name);
    service_.flat(flat);
    const std::string tag = body.value("tag_id", service_.default_flat().default_tag);
    send_json(res, json::parse(session_to_json_text(service_.sessions().start(flat, tag))), 201);
  });

  s.Post("/sessions/:id/stop", [this](const httplib::Request& req, httplib::Response& res) {
    send_json(res, json::parse(session_to_json_text(service_.sessions().stop(req.path_params.at("id")))));
  });

  s.Post("/sessions/:id/labels", [this](const httplib::Request& req, httplib::Response& res) {
    const auto body = parse_body(req);
    if (!body.contains("x_px") || !body.contains("y_px") || !body["x_px"].is_number() || !body["y_px"].is_number()) {
      throw Error(Errc::MalformedRecord, "label needs numeric x_px and y_px");
    }
    std::optional<std::int64_t> t;
    if (body.contains("t_ms") && !body["t_ms"].is_null()) t = body["t_ms"].get<std::int64_t>();
    const auto label = service_.submit_label(req.path_params.at("id"), t, body["x_px"].get<double>(),
                                             body["y_px"].get<double>());
    send_json(res, json::parse(label_event_json_text(label)), 201);
  });

  s.Get("/live/:tag", [this](const httplib::Request& req, httplib::Response& res) {
    if (!service_.model()) throw Error(Errc::ModelNotLoaded, "no model loaded");
    const auto p = service_.latest(req.path_params.at("tag"));
    if (!p) {
      send_json(res, {{"error", "NoPosition"}, {"message", "no position yet for this tag"}}, 404);
      return;
    }
    res.set_content(position_to_json_text(*p), "application/json");
  });

  s.Get("/events", [this](const httplib::Request&, httplib::Response& res) {
    auto reader = service_.events().subscribe();
    res.set_header("Cache-Control", "no-cache");
    res.set_chunked_content_provider("application/x-ndjson", [this, reader](std::size_t, httplib::DataSink& sink) {
      while (!stopping_) {
        if (!sink.is_writable()) return false;
        if (auto line = reader->next(std::chrono::milliseconds(250))) {
          *line += '\n';
          return sink.write(line->data(), line->size());
        }
        if (reader->closed()) break;
      }
      sink.done();
      return true;
    });
  });

  s.Post("/sessions/:id/replay", [this](const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.path_params.at("id");
    double speed = 1.0;
    if (req.has_param("speed")) {
      try {
        speed = std::stod(req.get_param_value("speed"));
      } catch (const std::exception&) {
        throw Error(Errc::InvalidConfig, "speed must be a number");
      }
    }
    if (!(speed > 0.0) || !std::isfinite(speed)) throw Error(Errc::InvalidConfig, "speed must be positive");
    const auto source = req.has_param("source") ? parse_replay_source(req.get_param_value("source"))
                                                : ReplaySource::Recorded;
    const auto log = service_.sessions().read_log(id);
    const auto model = service_.model();
    auto events = std::make_shared<std::vector<ReplayEvent>>(
        replay_timeline(log, service_.flat(log.session.flat), source, model.get()));
    res.set_chunked_content_provider(
        "application/x-ndjson", [this, events, speed, source](std::size_t, httplib::DataSink& sink) {
          bool ok = true;
          const auto elapsed = play(
              *events, speed,
              [&](const ReplayEvent& e) {
                const auto line = e.to_json_text(source) + "\n";
                ok = ok && sink.write(line.data(), line.size());
              },
              [&] { return stopping_.load() || !ok; });
          const auto tail = json{{"type", "replay_end"},
                                 {"events", events->size()},
                                 {"speed", speed},
                                 {"elapsed_ms", std::chrono::duration<double, std::milli>(elapsed).count()}}
                                .dump() +
                            "\n";
          if (ok) sink.write(tail.data(), tail.size());
          sink.done();
          return true;
        });
  });

  s.Post("/model", [this](const httplib::Request& req, httplib::Response& res) {
    const auto body = parse_body(req);
    if (!body.contains("path") || !body["path"].is_string()) throw Error(Errc::MalformedRecord, "need a path");
    service_.load_model(body["path"].get<std::string>());
    const auto m = service_.model();
    send_json(res, {{"loaded", body["path"]},
                    {"model", model::model_kind_name(m->config.kind)},
                    {"window", m->meta.window.describe()}});
  });
}

int HttpApi::bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = server_->bind_to_any_port(host);
    if (bound < 0) throw Error(Errc::Io, "cannot bind " + host);
    return bound;
  }
  if (!server_->bind_to_port(host, port)) throw Error(Errc::Io, "cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void HttpApi::listen() { server_->listen_after_bind(); }

void HttpApi::start_background() {
  thread_ = std::thread([this] { listen(); });
  server_->wait_until_ready();
}

void HttpApi::stop() {
  stopping_ = true;
  service_.events().close();
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace rssiloc::service
