#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <mutex>
#include <thread>

#include "doctest.h"
#include "helpers.hpp"
#include "rssiloc/bus.hpp"

using namespace rssiloc;
using namespace std::chrono_literals;

namespace {

struct Collector {
  std::mutex mutex;
  std::vector<RssiSample> samples;
  std::vector<LabelSample> labels;

  LiveSink sink() {
    return LiveSink{[this](const RssiSample& s) {
                      std::lock_guard lock(mutex);
                      samples.push_back(s);
                    },
                    [this](const LabelSample& l) {
                      std::lock_guard lock(mutex);
                      labels.push_back(l);
                    }};
  }
};

BusConfig config_for(const std::string& uri, TimestampMode mode = TimestampMode::Recorded) {
  BusConfig c;
  c.uri = uri;
  c.mode = mode;
  c.poll = 10ms;
  c.backoff_initial = 10ms;
  return c;
}

bool wait_for(const std::function<bool()>& pred, std::chrono::milliseconds timeout = 3000ms) {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  while (std::chrono::steady_clock::now() < deadline) {
    if (pred()) return true;
    std::this_thread::sleep_for(2ms);
  }
  return pred();
}

}  // namespace

TEST_CASE("bus payloads parse per topic") {
  const Clock clock = [] { return std::int64_t{1'700'000'000'000}; };
  auto r = parse_bus_message({"tags/t1/uwb", "1668519249 4842 -95.53"}, TimestampMode::Recorded, clock);
  const auto& s = std::get<RssiSample>(r);
  CHECK(s.t_ms == 1668519249000);
  CHECK(s.source_id == "4842");
  CHECK(s.tag_id == "t1");
  CHECK(s.rssi_dbm == -95.53);

  r = parse_bus_message({"tags/t1/ble", "1668519251 -74 c8:5b:4f:86:ed:a2"}, TimestampMode::Live, clock);
  CHECK(std::get<RssiSample>(r).t_ms == 1'700'000'000'000);
  CHECK(std::get<RssiSample>(r).tech == Tech::Ble);

  r = parse_bus_message({"labels/s9", "1668521779 288 525"}, TimestampMode::Recorded, clock);
  CHECK(std::get<LabelSample>(r).session_id == "s9");
  CHECK(std::get<LabelSample>(r).x_px == 288);

  CHECK_ERRC(parse_bus_message({"tags/t1/uwb", "1668519249 4842"}, TimestampMode::Recorded, clock),
             Errc::MalformedRecord);
  CHECK_ERRC(parse_bus_message({"weather/x", "1 2 3"}, TimestampMode::Recorded, clock), Errc::MalformedRecord);
  CHECK_ERRC(parse_bus_message({"tags/t1/ble", "1668519251 inf aa"}, TimestampMode::Recorded, clock),
             Errc::NonFiniteRssi);
}

TEST_CASE("loopback subscription delivers one sample per message and skips malformed ones") {
  auto bus = LoopbackBus::named("unit-basic");
  Collector got;
  auto sub = subscribe_live(config_for("loopback://unit-basic"), got.sink());
  REQUIRE(wait_for([&] { return bus->subscriber_count() == 1; }));

  bus->publish("tags/t1/uwb", "1668519249 4842 -95.53");
  REQUIRE(sub->wait_handled(1, 2000ms));
  bus->publish("tags/t1/uwb", "not a payload");
  REQUIRE(sub->wait_handled(2, 2000ms));
  const auto stats = sub->stats();
  CHECK(stats.delivered == 1);
  CHECK(stats.malformed == 1);
  std::lock_guard lock(got.mutex);
  CHECK(got.samples.size() == 1);
}

TEST_CASE("loopback preserves publish order for 100 messages, including equal stamps") {
  auto bus = LoopbackBus::named("unit-order");
  Collector got;
  auto cfg = config_for("loopback://unit-order", TimestampMode::Live);
  cfg.clock = [] { return std::int64_t{1'700'000'000'000}; };  // every arrival stamped alike
  auto sub = subscribe_live(cfg, got.sink());
  REQUIRE(wait_for([&] { return bus->subscriber_count() == 1; }));
  for (int i = 0; i < 100; ++i) bus->publish("tags/t/uwb", "1668519249 " + std::to_string(i) + " -80");
  REQUIRE(sub->wait_handled(100, 3000ms));
  std::lock_guard lock(got.mutex);
  REQUIRE(got.samples.size() == 100);
  for (int i = 0; i < 100; ++i) {
    CHECK(got.samples[static_cast<std::size_t>(i)].source_id == std::to_string(i));
    CHECK(got.samples[static_cast<std::size_t>(i)].seq == static_cast<std::uint64_t>(i));
  }
}

TEST_CASE("dropped connections reconnect and record the gap") {
  auto bus = LoopbackBus::named("unit-drop");
  Collector got;
  auto sub = subscribe_live(config_for("loopback://unit-drop"), got.sink());
  REQUIRE(wait_for([&] { return bus->subscriber_count() == 1; }));
  bus->drop_connections();
  REQUIRE(wait_for([&] { return sub->stats().reconnects >= 1 && bus->subscriber_count() == 1; }));
  bus->publish("labels/s1", "1668521779 288 525");
  REQUIRE(sub->wait_handled(1, 2000ms));
  const auto stats = sub->stats();
  REQUIRE(stats.gaps.size() >= 1);
  CHECK(stats.gaps[0].second >= stats.gaps[0].first);
  std::lock_guard lock(got.mutex);
  CHECK(got.labels.size() == 1);
}

TEST_CASE("remaining-length encoding") {
  CHECK(mqtt_encode_length(0) == std::vector<std::uint8_t>{0});
  CHECK(mqtt_encode_length(127) == std::vector<std::uint8_t>{127});
  CHECK(mqtt_encode_length(128) == std::vector<std::uint8_t>{0x80, 0x01});
  CHECK(mqtt_encode_length(16383) == std::vector<std::uint8_t>{0xFF, 0x7F});
  CHECK(mqtt_encode_length(2097152) == std::vector<std::uint8_t>{0x80, 0x80, 0x80, 0x01});
}

namespace {

// Single-client broker stub speaking just enough MQTT 3.1.1.
class FakeBroker {
 public:
  FakeBroker() {
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = 0;
    ::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr);
    ::listen(listen_fd_, 1);
    socklen_t len = sizeof addr;
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
  }
  ~FakeBroker() {
    if (client_fd_ >= 0) ::close(client_fd_);
    ::close(listen_fd_);
  }
  int port() const { return port_; }

  // Accepts, answers CONNECT and SUBSCRIBE; returns the subscribed filters.
  std::vector<std::string> handshake() {
    client_fd_ = ::accept(listen_fd_, nullptr, nullptr);
    auto [type, body] = read_packet();
    CHECK((type & 0xF0) == 0x10);
    write({0x20, 0x02, 0x00, 0x00});
    auto [stype, sbody] = read_packet();
    CHECK((stype & 0xF0) == 0x80);
    std::vector<std::string> filters;
    std::size_t i = 2;
    while (i + 2 <= sbody.size()) {
      const std::size_t n = (sbody[i] << 8) | sbody[i + 1];
      filters.emplace_back(sbody.begin() + static_cast<std::ptrdiff_t>(i + 2),
                           sbody.begin() + static_cast<std::ptrdiff_t>(i + 2 + n));
      i += 3 + n;
    }
    write({0x90, 0x03, sbody[0], sbody[1], 0x00});
    return filters;
  }

  void publish(const std::string& topic, const std::string& payload, int qos = 0, std::uint16_t id = 1) {
    std::vector<std::uint8_t> body;
    body.push_back(static_cast<std::uint8_t>(topic.size() >> 8));
    body.push_back(static_cast<std::uint8_t>(topic.size() & 0xFF));
    body.insert(body.end(), topic.begin(), topic.end());
    if (qos > 0) {
      body.push_back(static_cast<std::uint8_t>(id >> 8));
      body.push_back(static_cast<std::uint8_t>(id & 0xFF));
    }
    body.insert(body.end(), payload.begin(), payload.end());
    std::vector<std::uint8_t> pkt{static_cast<std::uint8_t>(0x30 | (qos << 1))};
    const auto len = mqtt_encode_length(body.size());
    pkt.insert(pkt.end(), len.begin(), len.end());
    pkt.insert(pkt.end(), body.begin(), body.end());
    write(pkt);
  }

  std::pair<std::uint8_t, std::vector<std::uint8_t>> read_packet() {
    std::uint8_t type = 0;
    read_exact(&type, 1);
    std::size_t length = 0;
    std::size_t mult = 1;
    for (;;) {
      std::uint8_t b = 0;
      read_exact(&b, 1);
      length += (b & 0x7F) * mult;
      mult *= 128;
      if (!(b & 0x80)) break;
    }
    std::vector<std::uint8_t> body(length);
    if (length) read_exact(body.data(), length);
    return {type, body};
  }

  void disconnect() {
    ::close(client_fd_);
    client_fd_ = -1;
  }

 private:
  void write(const std::vector<std::uint8_t>& bytes) { ::send(client_fd_, bytes.data(), bytes.size(), MSG_NOSIGNAL); }
  void read_exact(std::uint8_t* out, std::size_t n) {
    std::size_t got = 0;
    while (got < n) {
      const auto r = ::recv(client_fd_, out + got, n - got, 0);
      if (r <= 0) throw std::runtime_error("fake broker: client closed");
      got += static_cast<std::size_t>(r);
    }
  }

  int listen_fd_ = -1;
  int client_fd_ = -1;
  int port_ = 0;
};

}  // namespace

TEST_CASE("MQTT client subscribes, receives QoS 0 and 1, and acknowledges QoS 1") {
  FakeBroker broker;
  MqttConnection conn("127.0.0.1", broker.port(), "unit", default_topic_filters(), 0);
  std::vector<std::string> filters;
  std::thread server([&] { filters = broker.handshake(); });
  conn.connect();
  server.join();
  CHECK(filters == default_topic_filters());

  broker.publish("tags/t1/uwb", "1668519249 4842 -95.53");
  auto m = conn.receive(2000ms);
  REQUIRE(m);
  CHECK(m->topic == "tags/t1/uwb");
  CHECK(m->payload == "1668519249 4842 -95.53");

  broker.publish("labels/s1", "1668521779 288 525", 1, 0x1234);
  m = conn.receive(2000ms);
  REQUIRE(m);
  CHECK(m->payload == "1668521779 288 525");
  auto [type, body] = broker.read_packet();
  CHECK(type == 0x40);
  CHECK(body == std::vector<std::uint8_t>{0x12, 0x34});

  CHECK_FALSE(conn.receive(20ms));
  broker.disconnect();
  CHECK_ERRC(conn.receive(500ms), Errc::ConnectionLost);
}

TEST_CASE("subscription over MQTT delivers parsed samples") {
  FakeBroker broker;
  Collector got;
  std::thread server([&] {
    broker.handshake();
    broker.publish("tags/t1/ble", "1668519251 -74 c8:5b:4f:86:ed:a2");
  });
  auto sub = subscribe_live(config_for("mqtt://127.0.0.1:" + std::to_string(broker.port())), got.sink());
  server.join();
  REQUIRE(sub->wait_handled(1, 3000ms));
  sub->stop();
  std::lock_guard lock(got.mutex);
  REQUIRE(got.samples.size() == 1);
  CHECK(got.samples[0].rssi_dbm == -74);
}

TEST_CASE("unknown bus schemes are rejected") { CHECK_ERRC(open_bus("amqp://x"), Errc::InvalidConfig); }
