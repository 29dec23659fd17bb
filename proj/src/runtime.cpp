#include "costar/runtime.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace costar {

namespace {

std::optional<std::string> runningLeaf(const BehaviorTree& bt, const BTNode& n) {
  if (bt.state(n.id).phase != NodePhase::Running) return std::nullopt;
  if (n.kind == NodeKind::Leaf) return n.id;
  for (const auto& c : n.children) {
    if (auto id = runningLeaf(bt, c)) return id;
  }
  return n.id;
}

nlohmann::json symbolsJson(const Predicator& kb) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& s : kb.symbols()) arr.push_back(symbolToJson(s));
  return arr;
}

}  // namespace

std::size_t TrialReport::successes() const {
  std::size_t n = 0;
  for (const auto& t : perTrial) n += t.status == TickStatus::Success ? 1 : 0;
  return n;
}

nlohmann::json reportToJson(const TrialReport& r) {
  nlohmann::json per = nlohmann::json::array();
  for (const auto& t : r.perTrial) {
    per.push_back({{"seed", t.seed},
                   {"status", std::string(toString(t.status))},
                   {"tickCount", t.tickCount},
                   {"failureNode", t.failureNode ? nlohmann::json(*t.failureNode) : nlohmann::json(nullptr)},
                   {"failureReason", t.failureReason}});
  }
  return {{"planId", r.planId},
          {"scene", r.scene},
          {"trials", r.trials()},
          {"successes", r.successes()},
          {"perTrial", per}};
}

std::string reportToString(const TrialReport& r) { return reportToJson(r).dump(2) + "\n"; }

std::string planId(const PlanDocument& doc) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : serializePlan(doc)) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::vector<Diagnostic> validatePlan(const PlanDocument& doc, const Scene& scene) {
  Workcell cell(scene, scene.seed);
  return validate(doc.tree, &cell.components());
}

nlohmann::json diagnosticsToJson(const std::vector<Diagnostic>& diags, const PlanDocument* doc) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& d : diags) {
    nlohmann::json j{{"nodeId", d.nodeId}, {"code", std::string(toString(d.code))}, {"message", d.message}};
    if (doc) {
      auto it = doc->spans.find(d.nodeId);
      if (it != doc->spans.end()) {
        j["span"] = {{"line", it->second.line},
                     {"column", it->second.column},
                     {"offset", it->second.offset},
                     {"length", it->second.length}};
      }
    }
    arr.push_back(std::move(j));
  }
  return arr;
}

Scene withOverrides(Scene scene, const RunOptions& opts) {
  if (opts.noisePos) scene.noise.posSigma = *opts.noisePos;
  if (opts.noiseRot) scene.noise.rotSigma = *opts.noiseRot;
  if (opts.dropout) scene.noise.dropoutProb = *opts.dropout;
  scene.validate();
  return scene;
}

TrialResult runTrial(const PlanDocument& doc, const Scene& baseScene, std::uint64_t seed, const RunOptions& opts,
                     Bus* bus) {
  const Scene scene = withOverrides(baseScene, opts);
  Workcell cell(scene, seed);
  if (opts.calibratedCamera) cell.sim().setCalibratedCamera(opts.calibratedCamera);

  const auto diags = validate(doc.tree, &cell.components());
  if (!diags.empty()) {
    throw Error(ErrorCode::ValidationFailed, diags.front().nodeId + ": " + diags.front().message);
  }
  const std::string id = planId(doc);
  auto publish = [&](const std::string& type, nlohmann::json body) {
    if (!bus) return;
    body["type"] = type;
    body["planId"] = id;
    body["seed"] = seed;
    bus->publish(kEventsTopic, std::move(body));
  };

  BehaviorTree bt(doc.tree, cell.components());
  bt.setEventSink([&](const NodeEvent& e) {
    publish("node_transition", {{"nodeId", e.nodeId}, {"status", std::string(toString(e.status))}, {"tickIndex", e.tickIndex}});
  });
  auto simState = [&] { publish("sim_state", {{"tickIndex", bt.tickCount()}, {"state", cell.sim().snapshot()}}); };

  TrialResult result;
  result.seed = seed;
  simState();
  std::uint64_t epoch = cell.context().knowledgeEpoch;
  TickStatus s = TickStatus::Busy;
  for (;;) {
    if (bt.tickCount() >= opts.tickBudget) {
      result.failureNode = runningLeaf(bt, bt.root());
      result.failureReason = std::string(toString(ErrorCode::TickBudgetExceeded)) + ": no terminal status after " +
                             std::to_string(opts.tickBudget) + " ticks";
      s = TickStatus::Failure;
      break;
    }
    s = bt.tick();
    if (cell.context().knowledgeEpoch != epoch) {
      epoch = cell.context().knowledgeEpoch;
      publish("symbols_updated", {{"tickIndex", bt.tickCount()}, {"symbols", symbolsJson(cell.kb())}});
    }
    if (s != TickStatus::Busy) break;
    cell.step();
    if (opts.simStateEvery > 0 && bt.tickCount() % opts.simStateEvery == 0) simState();
  }
  result.status = s;
  result.tickCount = bt.tickCount();
  if (s == TickStatus::Failure && !result.failureNode) {
    if (const auto& f = bt.lastFailure()) {
      result.failureNode = f->nodeId;
      result.failureReason = f->reason;
    } else {
      result.failureNode = bt.root().id;
    }
  }
  simState();
  publish("trial_finished", {{"status", std::string(toString(result.status))},
                             {"tickCount", result.tickCount},
                             {"failureNode", result.failureNode ? nlohmann::json(*result.failureNode) : nlohmann::json()}});
  return result;
}

TrialReport runPlan(const PlanDocument& doc, const Scene& scene, std::uint64_t seed, const RunOptions& opts, Bus* bus) {
  return runBatch(doc, scene, 1, seed, opts, bus);
}

TrialReport runBatch(const PlanDocument& doc, const Scene& scene, std::size_t trials, std::uint64_t seedBase,
                     const RunOptions& opts, Bus* bus) {
  if (trials < 1) throw Error(ErrorCode::InvalidParameter, "trials must be at least 1");
  TrialReport report;
  report.planId = planId(doc);
  report.scene = scene.name;
  for (std::size_t i = 0; i < trials; ++i) report.perTrial.push_back(runTrial(doc, scene, seedBase + i, opts, bus));
  return report;
}

OperationOutcome invokeOperation(Workcell& cell, const OpBinding& binding, std::uint64_t tickBudget) {
  OperationOutcome out;
  const auto problems = cell.components().checkParams(binding);
  if (!cell.components().hasOperation(binding.component, binding.operation)) {
    throw Error(ErrorCode::UnboundOperation, "unknown operation '" + binding.component + "." + binding.operation + "'");
  }
  if (!problems.empty()) throw Error(ErrorCode::InvalidParameter, problems.front());
  std::unique_ptr<ActionTask> task;
  try {
    task = cell.components().start(binding);
  } catch (const Error& e) {
    out.reason = e.what();
    return out;
  }
  for (;;) {
    ++out.ticks;
    out.status = task->tick();
    if (out.status != TickStatus::Busy) break;
    if (out.ticks >= tickBudget) {
      task->halt();
      out.status = TickStatus::Failure;
      out.reason = std::string(toString(ErrorCode::TickBudgetExceeded));
      return out;
    }
    cell.step();
  }
  if (out.status == TickStatus::Failure) out.reason = task->failureReason();
  return out;
}

// ---------------------------------------------------------------------------

PlanStore::PlanStore(std::filesystem::path dir) : dir_(std::move(dir)) {
  if (!dir_.empty()) {
    std::filesystem::create_directories(dir_);
    load();
  }
}

void PlanStore::load() {
  for (const auto& entry : std::filesystem::directory_iterator(dir_)) {
    if (entry.path().extension() != ".bt") continue;
    try {
      PlanDocument doc = loadPlanFile(entry.path().string());
      plans_[planId(doc)] = std::move(doc);
    } catch (const Error&) {
      // Corrupt files are skipped; they stay on disk for inspection.
    }
  }
}

std::string PlanStore::put(const PlanDocument& doc) {
  const std::string id = planId(doc);
  std::lock_guard lock(mutex_);
  if (plans_.count(id)) return id;
  plans_[id] = doc;
  if (!dir_.empty()) {
    std::ofstream(dir_ / (id + ".bt")) << serializePlan(doc);
    saveIndex();
  }
  return id;
}

std::optional<PlanDocument> PlanStore::get(const std::string& id) const {
  std::lock_guard lock(mutex_);
  auto it = plans_.find(id);
  if (it == plans_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::string> PlanStore::ids() const {
  std::lock_guard lock(mutex_);
  std::vector<std::string> out;
  for (const auto& [id, d] : plans_) out.push_back(id);
  return out;
}

nlohmann::json PlanStore::index() const {
  std::lock_guard lock(mutex_);
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [id, d] : plans_) j[id] = {{"name", d.name}, {"file", id + ".bt"}};
  return j;
}

void PlanStore::saveIndex() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [id, d] : plans_) j[id] = {{"name", d.name}, {"file", id + ".bt"}};
  std::ofstream(dir_ / "index.json") << j.dump(2) << "\n";
}

}  // namespace costar
