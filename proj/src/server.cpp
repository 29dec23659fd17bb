#include "costar/server.hpp"

#include <httplib.h>

#include "costar/calibration.hpp"

#include <algorithm>
#include <thread>

namespace costar {

namespace {

int httpStatus(ErrorCode code) {
  switch (code) {
    case ErrorCode::NotFound:
    case ErrorCode::UnknownSymbol:
    case ErrorCode::UnknownPredicate:
    case ErrorCode::UnknownTopic:
      return 404;
    case ErrorCode::ValidationFailed:
    case ErrorCode::MalformedTree:
    case ErrorCode::UnboundOperation:
      return 422;
    default:
      return 400;
  }
}

void sendJson(httplib::Response& res, const nlohmann::json& j, int status = 200) {
  res.status = status;
  res.set_content(j.dump(2) + "\n", "application/json");
}

void sendError(httplib::Response& res, ErrorCode code, const std::string& message,
               nlohmann::json extra = nlohmann::json::object()) {
  extra["error"] = std::string(toString(code));
  extra["message"] = message;
  sendJson(res, extra, httpStatus(code));
}

nlohmann::json bodyJson(const httplib::Request& req) {
  if (req.body.empty()) return nlohmann::json::object();
  try {
    return nlohmann::json::parse(req.body);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidParameter, std::string("request body is not JSON: ") + e.what());
  }
}

RunOptions runOptions(const nlohmann::json& body) {
  RunOptions o;
  if (body.contains("noisePos")) o.noisePos = body["noisePos"].get<double>();
  if (body.contains("noiseRot")) o.noiseRot = body["noiseRot"].get<double>();
  if (body.contains("dropout")) o.dropout = body["dropout"].get<double>();
  if (body.contains("tickBudget")) o.tickBudget = body["tickBudget"].get<std::uint64_t>();
  if (body.contains("calibration")) o.calibratedCamera = cameraFromCalibrationJson(body["calibration"]);
  return o;
}

std::string sseFrame(const BusMessage& m) {
  std::string out = "id: " + std::to_string(m.sequence) + "\n";
  out += "event: " + m.payload.value("type", std::string("message")) + "\n";
  out += "data: " + messageToJson(m).dump() + "\n\n";
  return out;
}

/// Wraps a handler so costar and JSON errors become structured responses.
template <class F>
httplib::Server::Handler guarded(F f) {
  return [f](const httplib::Request& req, httplib::Response& res) {
    try {
      f(req, res);
    } catch (const PlanSyntaxError& e) {
      const auto& s = e.span();
      sendError(res, ErrorCode::SyntaxError, e.detail(),
                {{"span", {{"line", s.line}, {"column", s.column}, {"offset", s.offset}, {"length", s.length}}}});
    } catch (const Error& e) {
      sendError(res, e.code(), e.what());
    } catch (const nlohmann::json::exception& e) {
      sendError(res, ErrorCode::InvalidParameter, e.what());
    }
  };
}

}  // namespace

ApiServer::ApiServer(ServerConfig config)
    : config_(std::move(config)), plans_(config_.plansDir), http_(std::make_unique<httplib::Server>()) {
  bus_.createTopic(kEventsTopic);
  Scene liveScene;
  liveScene.name = "empty";
  if (!config_.liveScene.empty()) {
    liveScene = scene(config_.liveScene);
  } else if (auto names = sceneNames(); !names.empty()) {
    liveScene = scene(names.front());
  }
  live_ = std::make_unique<Workcell>(liveScene, liveScene.seed);
  routes();
}

ApiServer::~ApiServer() { stop(); }

bool ApiServer::listen() { return http_->listen(config_.host, config_.port); }

int ApiServer::bindAnyPort() { return http_->bind_to_any_port(config_.host); }

bool ApiServer::listenAfterBind() { return http_->listen_after_bind(); }

void ApiServer::stop() {
  if (http_) http_->stop();
}

bool ApiServer::running() const { return http_ && http_->is_running(); }

std::vector<std::string> ApiServer::sceneNames() const {
  std::vector<std::string> out;
  if (config_.scenesDir.empty() || !std::filesystem::is_directory(config_.scenesDir)) return out;
  for (const auto& e : std::filesystem::directory_iterator(config_.scenesDir)) {
    const auto ext = e.path().extension();
    if (ext == ".yaml" || ext == ".yml" || ext == ".json") out.push_back(e.path().stem().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

Scene ApiServer::scene(const std::string& name) const {
  for (const char* ext : {".yaml", ".yml", ".json"}) {
    const auto p = config_.scenesDir / (name + ext);
    if (std::filesystem::exists(p)) return loadScene(p);
  }
  throw Error(ErrorCode::NotFound, "no scene '" + name + "'");
}

void ApiServer::routes() {
  auto& s = *http_;

  s.Get("/components", guarded([this](const httplib::Request&, httplib::Response& res) {
          std::lock_guard lock(liveMutex_);
          nlohmann::json arr = nlohmann::json::array();
          for (const auto& d : live_->components().descriptors()) arr.push_back(descriptorToJson(d));
          sendJson(res, arr);
        }));

  s.Post(R"(/components/([^/]+)/ops/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
           const auto body = bodyJson(req);
           OpBinding b{req.matches[1], req.matches[2], {}};
           const auto& params = body.contains("params") ? body["params"] : body;
           for (const auto& [k, v] : params.items()) b.params[k] = paramFromJson(v);
           std::lock_guard lock(liveMutex_);
           const auto out = invokeOperation(*live_, b);
           if (live_->components().hasOperation(b.component, b.operation)) {
             bus_.publish(kEventsTopic, {{"type", "sim_state"}, {"state", live_->sim().snapshot()}});
           }
           sendJson(res, {{"status", std::string(toString(out.status))}, {"ticks", out.ticks}, {"reason", out.reason}});
         }));

  s.Get("/symbols", guarded([this](const httplib::Request&, httplib::Response& res) {
          std::lock_guard lock(liveMutex_);
          nlohmann::json arr = nlohmann::json::array();
          for (const auto& sym : live_->kb().symbols()) arr.push_back(symbolToJson(sym));
          sendJson(res, arr);
        }));

  s.Get("/predicates", guarded([this](const httplib::Request&, httplib::Response& res) {
          std::lock_guard lock(liveMutex_);
          nlohmann::json truths = nlohmann::json::array();
          for (const auto& st : live_->kb().listTruePredicates()) truths.push_back(st.str());
          sendJson(res, {{"definitions", live_->kb().predicateNames()}, {"true", truths}});
        }));

  s.Post("/query", guarded([this](const httplib::Request& req, httplib::Response& res) {
           const auto body = bodyJson(req);
           std::vector<PredicateStatement> templates;
           const auto& p = body.at("predicates");
           if (p.is_string()) {
             templates = parseConjunction(p.get<std::string>());
           } else {
             for (const auto& item : p) templates.push_back(parseStatement(item.get<std::string>()));
           }
           std::lock_guard lock(liveMutex_);
           sendJson(res, {{"symbols", live_->kb().querySymbols(templates)}});
         }));

  s.Post("/plan", guarded([this](const httplib::Request& req, httplib::Response& res) {
           const auto first = req.body.find_first_not_of(" \t\r\n");
           PlanDocument doc = first != std::string::npos && req.body[first] == '{'
                                  ? planFromJson(bodyJson(req))
                                  : parsePlan(req.body);
           const std::string id = plans_.put(doc);
           sendJson(res, {{"id", id}, {"name", doc.name}, {"text", serializePlan(doc)}, {"ast", planToJson(doc)}}, 201);
         }));

  auto lookupPlan = [this](const httplib::Request& req) {
    auto doc = plans_.get(req.matches[1]);
    if (!doc) throw Error(ErrorCode::NotFound, "no plan '" + std::string(req.matches[1]) + "'");
    return *doc;
  };
  auto sceneFor = [this](const nlohmann::json& body) {
    if (body.contains("scene")) {
      const auto& sc = body["scene"];
      return sc.is_string() ? scene(sc.get<std::string>()) : sceneFromJson(sc);
    }
    std::lock_guard lock(liveMutex_);
    return live_->sim().scene();
  };

  s.Post(R"(/plan/([^/]+)/validate)", guarded([=](const httplib::Request& req, httplib::Response& res) {
           const auto doc = lookupPlan(req);
           const auto diags = validatePlan(doc, sceneFor(bodyJson(req)));
           sendJson(res, {{"id", req.matches[1]}, {"valid", diags.empty()}, {"diagnostics", diagnosticsToJson(diags, &doc)}});
         }));

  s.Post(R"(/plan/([^/]+)/run)", guarded([=, this](const httplib::Request& req, httplib::Response& res) {
           const auto doc = lookupPlan(req);
           const auto body = bodyJson(req);
           const Scene sc = sceneFor(body);
           const auto diags = validatePlan(doc, sc);
           if (!diags.empty()) {
             sendError(res, ErrorCode::ValidationFailed, "plan does not validate",
                       {{"diagnostics", diagnosticsToJson(diags, &doc)}});
             return;
           }
           const std::uint64_t seed = body.value("seed", sc.seed);
           sendJson(res, reportToJson(runPlan(doc, sc, seed, runOptions(body), &bus_)));
         }));

  s.Post(R"(/plan/([^/]+)/batch)", guarded([=, this](const httplib::Request& req, httplib::Response& res) {
           const auto doc = lookupPlan(req);
           const auto body = bodyJson(req);
           const Scene sc = sceneFor(body);
           const auto diags = validatePlan(doc, sc);
           if (!diags.empty()) {
             sendError(res, ErrorCode::ValidationFailed, "plan does not validate",
                       {{"diagnostics", diagnosticsToJson(diags, &doc)}});
             return;
           }
           const auto trials = body.value("trials", std::size_t{10});
           const auto seedBase = body.value("seedBase", std::uint64_t{0});
           sendJson(res, reportToJson(runBatch(doc, sc, trials, seedBase, runOptions(body), &bus_)));
         }));

  s.Get("/scenes", guarded([this](const httplib::Request&, httplib::Response& res) {
          sendJson(res, sceneNames());
        }));

  // Server-sent events. Replays from ?from=N or Last-Event-ID + 1, then follows.
  s.Get("/events", [this](const httplib::Request& req, httplib::Response& res) {
    std::uint64_t from = 0;
    try {
      if (req.has_param("from")) {
        from = std::stoull(req.get_param_value("from"));
      } else if (req.has_header("Last-Event-ID")) {
        from = std::stoull(req.get_header_value("Last-Event-ID")) + 1;
      }
    } catch (const std::exception&) {
      sendError(res, ErrorCode::InvalidParameter, "bad event sequence");
      return;
    }
    res.set_header("Cache-Control", "no-cache");
    auto cursor = std::make_shared<std::uint64_t>(from);
    const auto poll = std::chrono::milliseconds(config_.eventPollMs);
    res.set_chunked_content_provider("text/event-stream", [this, cursor, poll](std::size_t, httplib::DataSink& sink) {
      if (!http_->is_running()) {
        sink.done();
        return true;
      }
      const auto msgs = bus_.wait(kEventsTopic, *cursor, poll);
      if (msgs.empty()) {
        const std::string keepalive = ": keepalive\n\n";
        return sink.write(keepalive.data(), keepalive.size());
      }
      for (const auto& m : msgs) {
        const std::string frame = sseFrame(m);
        if (!sink.write(frame.data(), frame.size())) return false;
        *cursor = m.sequence + 1;
      }
      return true;
    });
  });
}

}  // namespace costar
