#pragma once

#include <filesystem>
#include <memory>
#include <mutex>
#include <string>

#include "costar/bus.hpp"
#include "costar/components.hpp"
#include "costar/runtime.hpp"

namespace httplib {
class Server;
}

namespace costar {

struct ServerConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::filesystem::path scenesDir = "data/scenes";
  /// Plan store directory; empty keeps plans in memory.
  std::filesystem::path plansDir;
  /// Scene for the live workcell behind /components, /symbols and /query.
  std::string liveScene;
  /// SSE keepalive and poll interval.
  int eventPollMs = 250;
};

/// HTTP + JSON API over one live workcell, a plan store and the event bus.
class ApiServer {
 public:
  explicit ApiServer(ServerConfig config);
  ~ApiServer();

  /// Binds and serves until stop(). Returns false if the port cannot be bound.
  bool listen();
  /// Binds to an ephemeral port; returns it, or -1.
  int bindAnyPort();
  /// Serves on a socket bound by bindAnyPort().
  bool listenAfterBind();
  void stop();
  bool running() const;

  Bus& bus() { return bus_; }
  PlanStore& plans() { return plans_; }

  /// Scene by name (file stem in scenesDir). Throws Error(NotFound).
  Scene scene(const std::string& name) const;
  std::vector<std::string> sceneNames() const;

 private:
  void routes();

  ServerConfig config_;
  Bus bus_{true};
  PlanStore plans_;
  std::unique_ptr<Workcell> live_;
  std::mutex liveMutex_;
  std::unique_ptr<httplib::Server> http_;
};

}  // namespace costar
