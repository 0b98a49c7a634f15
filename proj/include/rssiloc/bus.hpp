#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "rssiloc/ingest.hpp"

namespace rssiloc {

struct BusMessage {
  std::string topic;
  std::string payload;
};

// One subscriber connection. Both calls throw Error(ConnectionLost) when the
// link is gone.
class BusConnection {
 public:
  virtual ~BusConnection() = default;
  virtual void connect() = 0;
  virtual std::optional<BusMessage> receive(std::chrono::milliseconds timeout) = 0;
  virtual void close() = 0;
};

using ConnectionFactory = std::function<std::unique_ptr<BusConnection>()>;

// In-process bus with MQTT QoS 0 semantics: messages published while no
// subscriber is connected are lost.
class LoopbackBus : public std::enable_shared_from_this<LoopbackBus> {
 public:
  static std::shared_ptr<LoopbackBus> create();
  // Process-wide registry used by "loopback://name" URIs.
  static std::shared_ptr<LoopbackBus> named(const std::string& name);

  void publish(const std::string& topic, const std::string& payload);
  std::unique_ptr<BusConnection> open();
  // Breaks every live connection; subscribers see ConnectionLost.
  void drop_connections();
  std::size_t subscriber_count() const;

 private:
  struct Queue;
  friend class LoopbackConnection;

  mutable std::mutex mutex_;
  std::vector<std::weak_ptr<Queue>> queues_;
};

// Minimal MQTT 3.1.1 subscriber over TCP (QoS 0/1 receive, keep-alive pings).
class MqttConnection : public BusConnection {
 public:
  MqttConnection(std::string host, int port, std::string client_id, std::vector<std::string> topic_filters,
                 int keepalive_s = 30);
  ~MqttConnection() override;

  void connect() override;
  std::optional<BusMessage> receive(std::chrono::milliseconds timeout) override;
  void close() override;

 private:
  void send_all(const std::vector<std::uint8_t>& bytes);
  bool read_exact(std::uint8_t* out, std::size_t n, int timeout_ms);
  // Reads one packet; returns (type byte, body) or nullopt on timeout.
  std::optional<std::pair<std::uint8_t, std::vector<std::uint8_t>>> read_packet(int timeout_ms);

  std::string host_;
  int port_;
  std::string client_id_;
  std::vector<std::string> filters_;
  int keepalive_s_;
  int fd_ = -1;
  std::chrono::steady_clock::time_point last_send_{};
};

std::vector<std::uint8_t> mqtt_encode_length(std::size_t length);

// Topic filters the subscriber listens on.
std::vector<std::string> default_topic_filters();

// Accepts "loopback://<name>" and "mqtt://host[:port]".
ConnectionFactory open_bus(const std::string& uri);

using BusRecord = std::variant<RssiSample, LabelSample>;

// Topics: tags/{tag}/uwb "epoch anchor_id rssi"; tags/{tag}/ble "epoch rssi mac";
// labels/{session} "epoch x_px y_px". Throws MalformedRecord / NonFiniteRssi.
BusRecord parse_bus_message(const BusMessage& message, TimestampMode mode, const Clock& clock);

struct LiveSink {
  std::function<void(const RssiSample&)> on_sample;
  std::function<void(const LabelSample&)> on_label;
};

struct BusConfig {
  std::string uri;
  TimestampMode mode = TimestampMode::Live;
  Clock clock;
  std::chrono::milliseconds backoff_initial{100};
  std::chrono::milliseconds backoff_max{5000};
  std::chrono::milliseconds poll{50};
};

struct SubscriptionStats {
  std::size_t received = 0;
  std::size_t delivered = 0;
  std::size_t malformed = 0;
  std::size_t reconnects = 0;
  std::vector<std::pair<std::int64_t, std::int64_t>> gaps;
};

// Background receiver. Malformed payloads are counted and skipped; a lost
// connection is retried with exponential backoff and the outage recorded.
class Subscription {
 public:
  Subscription(ConnectionFactory factory, BusConfig config, LiveSink sink);
  ~Subscription();
  Subscription(const Subscription&) = delete;
  Subscription& operator=(const Subscription&) = delete;

  void stop();
  SubscriptionStats stats() const;
  // Blocks until at least `n` messages were handled (delivered or malformed).
  bool wait_handled(std::size_t n, std::chrono::milliseconds timeout) const;
  bool connected() const { return connected_.load(); }

 private:
  void run();

  ConnectionFactory factory_;
  BusConfig config_;
  LiveSink sink_;
  std::atomic<bool> stop_{false};
  std::atomic<bool> connected_{false};
  mutable std::mutex mutex_;
  mutable std::condition_variable cv_;
  SubscriptionStats stats_;
  std::uint64_t next_seq_ = 0;
  std::thread thread_;
};

std::unique_ptr<Subscription> subscribe_live(const BusConfig& config, LiveSink sink);

}  // namespace rssiloc
