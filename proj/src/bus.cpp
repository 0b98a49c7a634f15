#include "rssiloc/bus.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <map>

#include "rssiloc/error.hpp"

namespace rssiloc {

// ---------------------------------------------------------------- loopback

struct LoopbackBus::Queue {
  std::mutex mutex;
  std::condition_variable cv;
  std::deque<BusMessage> messages;
  bool broken = false;
};

class LoopbackConnection : public BusConnection {
 public:
  explicit LoopbackConnection(std::shared_ptr<LoopbackBus> bus) : bus_(std::move(bus)) {}
  ~LoopbackConnection() override { close(); }

  void connect() override {
    queue_ = std::make_shared<LoopbackBus::Queue>();
    std::lock_guard lock(bus_->mutex_);
    bus_->queues_.push_back(queue_);
  }

  std::optional<BusMessage> receive(std::chrono::milliseconds timeout) override {
    if (!queue_) throw Error(Errc::ConnectionLost, "loopback connection not open");
    std::unique_lock lock(queue_->mutex);
    queue_->cv.wait_for(lock, timeout, [&] { return queue_->broken || !queue_->messages.empty(); });
    if (!queue_->messages.empty()) {
      BusMessage m = std::move(queue_->messages.front());
      queue_->messages.pop_front();
      return m;
    }
    if (queue_->broken) throw Error(Errc::ConnectionLost, "loopback connection dropped");
    return std::nullopt;
  }

  void close() override { queue_.reset(); }

 private:
  std::shared_ptr<LoopbackBus> bus_;
  std::shared_ptr<LoopbackBus::Queue> queue_;
};

std::shared_ptr<LoopbackBus> LoopbackBus::create() { return std::shared_ptr<LoopbackBus>(new LoopbackBus()); }

std::shared_ptr<LoopbackBus> LoopbackBus::named(const std::string& name) {
  static std::mutex registry_mutex;
  static std::map<std::string, std::shared_ptr<LoopbackBus>> registry;
  std::lock_guard lock(registry_mutex);
  auto& slot = registry[name];
  if (!slot) slot = create();
  return slot;
}

void LoopbackBus::publish(const std::string& topic, const std::string& payload) {
  std::lock_guard lock(mutex_);
  std::erase_if(queues_, [](const auto& w) { return w.expired(); });
  for (const auto& weak : queues_) {
    if (auto q = weak.lock()) {
      std::lock_guard qlock(q->mutex);
      if (q->broken) continue;
      q->messages.push_back(BusMessage{topic, payload});
      q->cv.notify_all();
    }
  }
}

std::unique_ptr<BusConnection> LoopbackBus::open() { return std::make_unique<LoopbackConnection>(shared_from_this()); }

void LoopbackBus::drop_connections() {
  std::lock_guard lock(mutex_);
  for (const auto& weak : queues_) {
    if (auto q = weak.lock()) {
      std::lock_guard qlock(q->mutex);
      q->broken = true;
      q->cv.notify_all();
    }
  }
  queues_.clear();
}

std::size_t LoopbackBus::subscriber_count() const {
  std::lock_guard lock(mutex_);
  return static_cast<std::size_t>(std::count_if(queues_.begin(), queues_.end(), [](const auto& w) {
    auto q = w.lock();
    return q && !q->broken;
  }));
}

// ---------------------------------------------------------------- mqtt

namespace {

constexpr std::uint8_t kConnect = 0x10;
constexpr std::uint8_t kConnack = 0x20;
constexpr std::uint8_t kPublish = 0x30;
constexpr std::uint8_t kPuback = 0x40;
constexpr std::uint8_t kSubscribe = 0x82;
constexpr std::uint8_t kSuback = 0x90;
constexpr std::uint8_t kPingreq = 0xC0;
constexpr std::uint8_t kDisconnect = 0xE0;

void put_u16(std::vector<std::uint8_t>& out, std::size_t v) {
  out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xFF));
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
}

void put_string(std::vector<std::uint8_t>& out, const std::string& s) {
  put_u16(out, s.size());
  out.insert(out.end(), s.begin(), s.end());
}

std::vector<std::uint8_t> packet(std::uint8_t type, const std::vector<std::uint8_t>& body) {
  std::vector<std::uint8_t> out{type};
  const auto len = mqtt_encode_length(body.size());
  out.insert(out.end(), len.begin(), len.end());
  out.insert(out.end(), body.begin(), body.end());
  return out;
}

}  // namespace

std::vector<std::uint8_t> mqtt_encode_length(std::size_t length) {
  std::vector<std::uint8_t> out;
  do {
    std::uint8_t byte = length % 128;
    length /= 128;
    if (length > 0) byte |= 0x80;
    out.push_back(byte);
  } while (length > 0);
  return out;
}

MqttConnection::MqttConnection(std::string host, int port, std::string client_id,
                               std::vector<std::string> topic_filters, int keepalive_s)
    : host_(std::move(host)),
      port_(port),
      client_id_(std::move(client_id)),
      filters_(std::move(topic_filters)),
      keepalive_s_(keepalive_s) {}

MqttConnection::~MqttConnection() { close(); }

void MqttConnection::send_all(const std::vector<std::uint8_t>& bytes) {
  std::size_t sent = 0;
  while (sent < bytes.size()) {
    const ssize_t n = ::send(fd_, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
    if (n <= 0) {
      if (n < 0 && errno == EINTR) continue;
      throw Error(Errc::ConnectionLost, "mqtt send failed");
    }
    sent += static_cast<std::size_t>(n);
  }
  last_send_ = std::chrono::steady_clock::now();
}

bool MqttConnection::read_exact(std::uint8_t* out, std::size_t n, int timeout_ms) {
  std::size_t got = 0;
  while (got < n) {
    pollfd pfd{fd_, POLLIN, 0};
    const int ready = ::poll(&pfd, 1, timeout_ms);
    if (ready < 0 && errno == EINTR) continue;
    if (ready < 0) throw Error(Errc::ConnectionLost, "mqtt poll failed");
    if (ready == 0) {
      if (got == 0) return false;
      continue;  // mid-packet: keep waiting
    }
    const ssize_t r = ::recv(fd_, out + got, n - got, 0);
    if (r <= 0) {
      if (r < 0 && errno == EINTR) continue;
      throw Error(Errc::ConnectionLost, "mqtt connection closed by broker");
    }
    got += static_cast<std::size_t>(r);
  }
  return true;
}

std::optional<std::pair<std::uint8_t, std::vector<std::uint8_t>>> MqttConnection::read_packet(int timeout_ms) {
  std::uint8_t type = 0;
  if (!read_exact(&type, 1, timeout_ms)) return std::nullopt;
  std::size_t length = 0;
  std::size_t multiplier = 1;
  for (int i = 0; i < 4; ++i) {
    std::uint8_t b = 0;
    read_exact(&b, 1, -1);
    length += (b & 0x7F) * multiplier;
    multiplier *= 128;
    if ((b & 0x80) == 0) break;
    if (i == 3) throw Error(Errc::ConnectionLost, "mqtt malformed remaining length");
  }
  std::vector<std::uint8_t> body(length);
  if (length > 0) read_exact(body.data(), length, -1);
  return std::make_pair(type, std::move(body));
}

void MqttConnection::connect() {
  close();
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (::getaddrinfo(host_.c_str(), std::to_string(port_).c_str(), &hints, &res) != 0 || res == nullptr) {
    throw Error(Errc::ConnectionLost, "cannot resolve " + host_);
  }
  for (addrinfo* ai = res; ai != nullptr; ai = ai->ai_next) {
    fd_ = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (fd_ < 0) continue;
    if (::connect(fd_, ai->ai_addr, ai->ai_addrlen) == 0) break;
    ::close(fd_);
    fd_ = -1;
  }
  ::freeaddrinfo(res);
  if (fd_ < 0) throw Error(Errc::ConnectionLost, "cannot connect to " + host_ + ":" + std::to_string(port_));
  int one = 1;
  ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);

  std::vector<std::uint8_t> body;
  put_string(body, "MQTT");
  body.push_back(4);     // protocol level 3.1.1
  body.push_back(0x02);  // clean session
  put_u16(body, static_cast<std::size_t>(keepalive_s_));
  put_string(body, client_id_);
  send_all(packet(kConnect, body));

  const auto connack = read_packet(5000);
  if (!connack || (connack->first & 0xF0) != kConnack || connack->second.size() < 2 || connack->second[1] != 0) {
    close();
    throw Error(Errc::ConnectionLost, "broker refused CONNECT");
  }

  std::vector<std::uint8_t> sub;
  put_u16(sub, 1);  // packet id
  for (const auto& f : filters_) {
    put_string(sub, f);
    sub.push_back(0);  // requested QoS 0
  }
  send_all(packet(kSubscribe, sub));
  const auto suback = read_packet(5000);
  if (!suback || (suback->first & 0xF0) != kSuback) {
    close();
    throw Error(Errc::ConnectionLost, "broker did not acknowledge SUBSCRIBE");
  }
}

std::optional<BusMessage> MqttConnection::receive(std::chrono::milliseconds timeout) {
  if (fd_ < 0) throw Error(Errc::ConnectionLost, "mqtt not connected");
  const auto now = std::chrono::steady_clock::now();
  if (keepalive_s_ > 0 && now - last_send_ > std::chrono::seconds(keepalive_s_) / 2) {
    send_all({kPingreq, 0});
  }
  const auto pkt = read_packet(static_cast<int>(timeout.count()));
  if (!pkt) return std::nullopt;
  const auto& [type, body] = *pkt;
  if ((type & 0xF0) != kPublish) return std::nullopt;  // PINGRESP and friends
  const int qos = (type >> 1) & 0x3;
  if (body.size() < 2) throw Error(Errc::ConnectionLost, "mqtt short PUBLISH");
  const std::size_t topic_len = (static_cast<std::size_t>(body[0]) << 8) | body[1];
  std::size_t offset = 2 + topic_len;
  if (offset > body.size()) throw Error(Errc::ConnectionLost, "mqtt bad topic length");
  BusMessage msg;
  msg.topic.assign(body.begin() + 2, body.begin() + static_cast<std::ptrdiff_t>(offset));
  if (qos > 0) {
    if (offset + 2 > body.size()) throw Error(Errc::ConnectionLost, "mqtt bad packet id");
    std::vector<std::uint8_t> ack{body[offset], body[offset + 1]};
    offset += 2;
    if (qos == 1) send_all(packet(kPuback, ack));
  }
  msg.payload.assign(body.begin() + static_cast<std::ptrdiff_t>(offset), body.end());
  return msg;
}

void MqttConnection::close() {
  if (fd_ >= 0) {
    const std::uint8_t bye[2] = {kDisconnect, 0};
    ::send(fd_, bye, 2, MSG_NOSIGNAL);
    ::close(fd_);
    fd_ = -1;
  }
}

std::vector<std::string> default_topic_filters() { return {"tags/+/uwb", "tags/+/ble", "labels/+"}; }

ConnectionFactory open_bus(const std::string& uri) {
  const auto scheme_end = uri.find("://");
  if (scheme_end == std::string::npos) throw Error(Errc::InvalidConfig, "bus uri needs a scheme: " + uri);
  const std::string scheme = uri.substr(0, scheme_end);
  const std::string rest = uri.substr(scheme_end + 3);
  if (scheme == "loopback") {
    auto bus = LoopbackBus::named(rest);
    return [bus] { return bus->open(); };
  }
  if (scheme == "mqtt" || scheme == "tcp") {
    std::string host = rest;
    int port = 1883;
    const auto colon = rest.rfind(':');
    if (colon != std::string::npos) {
      host = rest.substr(0, colon);
      port = std::stoi(rest.substr(colon + 1));
    }
    return [host, port] {
      return std::make_unique<MqttConnection>(host, port, "rssiloc-" + std::to_string(::getpid()),
                                              default_topic_filters());
    };
  }
  throw Error(Errc::InvalidConfig, "unsupported bus scheme '" + scheme + "'");
}

// ---------------------------------------------------------------- parsing

BusRecord parse_bus_message(const BusMessage& message, TimestampMode mode, const Clock& clock) {
  const auto parts = split_fields(message.topic, '/');
  const auto fields = split_fields(message.payload, '\0');
  if (parts.size() == 3 && parts[0] == "tags" && (parts[2] == "uwb" || parts[2] == "ble")) {
    if (fields.size() != 3) throw Error(Errc::MalformedRecord, "payload needs 3 fields on " + message.topic);
    const bool uwb = parts[2] == "uwb";
    // Reuse the file parsers by rebuilding a record in file column order.
    std::string line;
    RecordSchema schema;
    schema.tag_id = std::string(parts[1]);
    if (uwb) {
      schema.kind = RecordKind::Uwb;
      line = std::string(fields[0]) + " - - " + std::string(fields[1]) + " " + std::string(fields[2]);
    } else {
      schema.kind = RecordKind::Ble;
      line = std::string(message.payload);
    }
    RssiSample s = parse_rssi_record(line, schema);
    s.t_ms = stamp_receive_time(s.t_ms, mode, clock);
    return s;
  }
  if (parts.size() == 2 && parts[0] == "labels") {
    if (fields.size() != 3) throw Error(Errc::MalformedRecord, "label payload needs 3 fields");
    RecordSchema schema;
    schema.kind = RecordKind::Label;
    schema.session_id = std::string(parts[1]);
    LabelSample l = parse_label_record("- - " + message.payload, schema);
    l.t_ms = stamp_receive_time(l.t_ms, mode, clock);
    return l;
  }
  throw Error(Errc::MalformedRecord, "unknown topic " + message.topic);
}

// ---------------------------------------------------------------- subscription

Subscription::Subscription(ConnectionFactory factory, BusConfig config, LiveSink sink)
    : factory_(std::move(factory)), config_(std::move(config)), sink_(std::move(sink)) {
  if (!config_.clock) config_.clock = system_clock_ms();
  thread_ = std::thread([this] { run(); });
}

Subscription::~Subscription() { stop(); }

void Subscription::stop() {
  stop_ = true;
  if (thread_.joinable()) thread_.join();
}

SubscriptionStats Subscription::stats() const {
  std::lock_guard lock(mutex_);
  return stats_;
}

bool Subscription::wait_handled(std::size_t n, std::chrono::milliseconds timeout) const {
  std::unique_lock lock(mutex_);
  return cv_.wait_for(lock, timeout, [&] { return stats_.delivered + stats_.malformed >= n; });
}

void Subscription::run() {
  auto backoff = config_.backoff_initial;
  constexpr std::int64_t kConnected = -1;
  std::int64_t lost_at = kConnected;  // epoch ms of the outage start
  while (!stop_) {
    std::unique_ptr<BusConnection> conn;
    try {
      conn = factory_();
      conn->connect();
    } catch (const Error&) {
      if (lost_at == kConnected) lost_at = config_.clock();
      const auto deadline = std::chrono::steady_clock::now() + backoff;
      while (!stop_ && std::chrono::steady_clock::now() < deadline) {
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
      }
      backoff = std::min(backoff * 2, config_.backoff_max);
      continue;
    }
    connected_ = true;
    backoff = config_.backoff_initial;
    if (lost_at != kConnected) {
      std::lock_guard lock(mutex_);
      stats_.gaps.emplace_back(lost_at, config_.clock());
      ++stats_.reconnects;
      lost_at = kConnected;
    }
    try {
      while (!stop_) {
        auto msg = conn->receive(config_.poll);
        if (!msg) continue;
        std::optional<BusRecord> record;
        {
          std::lock_guard lock(mutex_);
          ++stats_.received;
        }
        try {
          record = parse_bus_message(*msg, config_.mode, config_.clock);
        } catch (const Error&) {
          std::lock_guard lock(mutex_);
          ++stats_.malformed;
          cv_.notify_all();
          continue;
        }
        if (auto* s = std::get_if<RssiSample>(&*record)) {
          s->seq = next_seq_++;
          if (sink_.on_sample) sink_.on_sample(*s);
        } else if (sink_.on_label) {
          sink_.on_label(std::get<LabelSample>(*record));
        }
        std::lock_guard lock(mutex_);
        ++stats_.delivered;
        cv_.notify_all();
      }
    } catch (const Error&) {
      connected_ = false;
      lost_at = config_.clock();
    }
    conn->close();
    connected_ = false;
  }
}

std::unique_ptr<Subscription> subscribe_live(const BusConfig& config, LiveSink sink) {
  return std::make_unique<Subscription>(open_bus(config.uri), config, std::move(sink));
}

}  // namespace rssiloc
