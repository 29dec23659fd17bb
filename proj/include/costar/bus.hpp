#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace costar {

struct BusMessage {
  std::string topic;
  nlohmann::json payload;
  std::uint64_t sequence = 0;  // per topic, starting at 0
  double timestamp = 0.0;      // seconds since the bus was created
};

nlohmann::json messageToJson(const BusMessage& m);

/// In-process publish/subscribe with per-topic replay.
class Bus {
 public:
  /// With autoCreate, subscribing to an unknown topic creates it instead of failing.
  explicit Bus(bool autoCreate = false);

  std::uint64_t publish(const std::string& topic, nlohmann::json payload);
  void createTopic(const std::string& topic);
  bool hasTopic(const std::string& topic) const;
  std::vector<std::string> topics() const;
  /// Sequence the next message on `topic` will get.
  std::uint64_t nextSequence(const std::string& topic) const;

  /// Messages with sequence >= from, at most `max`. Throws Error(UnknownTopic).
  std::vector<BusMessage> read(const std::string& topic, std::uint64_t from,
                               std::size_t max = static_cast<std::size_t>(-1)) const;
  /// Like read(), but blocks up to `timeout` for at least one message.
  std::vector<BusMessage> wait(const std::string& topic, std::uint64_t from, std::chrono::milliseconds timeout) const;

  class Subscription {
   public:
    std::optional<BusMessage> next(std::chrono::milliseconds timeout = std::chrono::milliseconds(0));
    std::uint64_t cursor() const { return cursor_; }

   private:
    friend class Bus;
    Subscription(const Bus& bus, std::string topic, std::uint64_t from) : bus_(&bus), topic_(std::move(topic)), cursor_(from) {}
    const Bus* bus_;
    std::string topic_;
    std::uint64_t cursor_;
  };

  /// Throws Error(UnknownTopic) unless the topic exists or autoCreate is on.
  Subscription subscribe(const std::string& topic, std::uint64_t from = 0);

 private:
  const std::vector<BusMessage>& topicLocked(const std::string& topic) const;

  bool autoCreate_;
  std::chrono::steady_clock::time_point epoch_;
  mutable std::mutex mutex_;
  mutable std::condition_variable cv_;
  std::map<std::string, std::vector<BusMessage>> topics_;
};

}  // namespace costar
