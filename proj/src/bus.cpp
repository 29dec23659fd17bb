#include "costar/bus.hpp"

#include "costar/error.hpp"

namespace costar {

nlohmann::json messageToJson(const BusMessage& m) {
  return {{"topic", m.topic}, {"sequence", m.sequence}, {"timestamp", m.timestamp}, {"payload", m.payload}};
}

Bus::Bus(bool autoCreate) : autoCreate_(autoCreate), epoch_(std::chrono::steady_clock::now()) {}

std::uint64_t Bus::publish(const std::string& topic, nlohmann::json payload) {
  std::uint64_t seq = 0;
  {
    std::lock_guard lock(mutex_);
    auto& msgs = topics_[topic];
    seq = msgs.size();
    const double t = std::chrono::duration<double>(std::chrono::steady_clock::now() - epoch_).count();
    msgs.push_back({topic, std::move(payload), seq, t});
  }
  cv_.notify_all();
  return seq;
}

void Bus::createTopic(const std::string& topic) {
  std::lock_guard lock(mutex_);
  topics_[topic];
}

bool Bus::hasTopic(const std::string& topic) const {
  std::lock_guard lock(mutex_);
  return topics_.count(topic) > 0;
}

std::vector<std::string> Bus::topics() const {
  std::lock_guard lock(mutex_);
  std::vector<std::string> out;
  for (const auto& [t, m] : topics_) out.push_back(t);
  return out;
}

std::uint64_t Bus::nextSequence(const std::string& topic) const {
  std::lock_guard lock(mutex_);
  auto it = topics_.find(topic);
  return it == topics_.end() ? 0 : it->second.size();
}

const std::vector<BusMessage>& Bus::topicLocked(const std::string& topic) const {
  static const std::vector<BusMessage> empty;
  auto it = topics_.find(topic);
  if (it != topics_.end()) return it->second;
  if (autoCreate_) return empty;
  throw Error(ErrorCode::UnknownTopic, "no topic '" + topic + "'");
}

std::vector<BusMessage> Bus::read(const std::string& topic, std::uint64_t from, std::size_t max) const {
  std::lock_guard lock(mutex_);
  const auto& msgs = topicLocked(topic);
  std::vector<BusMessage> out;
  for (std::uint64_t i = from; i < msgs.size() && out.size() < max; ++i) out.push_back(msgs[i]);
  return out;
}

std::vector<BusMessage> Bus::wait(const std::string& topic, std::uint64_t from, std::chrono::milliseconds timeout) const {
  std::unique_lock lock(mutex_);
  topicLocked(topic);
  cv_.wait_for(lock, timeout, [&] {
    auto it = topics_.find(topic);
    return it != topics_.end() && it->second.size() > from;
  });
  std::vector<BusMessage> out;
  auto it = topics_.find(topic);
  if (it == topics_.end()) return out;
  for (std::uint64_t i = from; i < it->second.size(); ++i) out.push_back(it->second[i]);
  return out;
}

Bus::Subscription Bus::subscribe(const std::string& topic, std::uint64_t from) {
  std::lock_guard lock(mutex_);
  if (!topics_.count(topic)) {
    if (!autoCreate_) throw Error(ErrorCode::UnknownTopic, "no topic '" + topic + "'");
    topics_[topic];
  }
  return Subscription(*this, topic, from);
}

std::optional<BusMessage> Bus::Subscription::next(std::chrono::milliseconds timeout) {
  auto msgs = bus_->wait(topic_, cursor_, timeout);
  if (msgs.empty()) return std::nullopt;
  ++cursor_;
  return std::move(msgs.front());
}

}  // namespace costar
