#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "costar/bus.hpp"
#include "costar/components.hpp"
#include "costar/plan_dsl.hpp"
#include "costar/world_sim.hpp"

namespace costar {

inline constexpr std::uint64_t kDefaultTickBudget = 10000;
inline constexpr const char* kEventsTopic = "events";

struct RunOptions {
  std::uint64_t tickBudget = kDefaultTickBudget;
  std::optional<double> noisePos;
  std::optional<double> noiseRot;
  std::optional<double> dropout;
  /// Camera estimate from a calibration run; detections go through it.
  std::optional<Pose> calibratedCamera;
  /// A sim_state event is published every this many ticks (0 disables).
  std::uint64_t simStateEvery = 10;
};

struct TrialResult {
  std::uint64_t seed = 0;
  TickStatus status = TickStatus::Failure;
  std::uint64_t tickCount = 0;
  std::optional<std::string> failureNode;
  std::string failureReason;
};

struct TrialReport {
  std::string planId;
  std::string scene;
  std::vector<TrialResult> perTrial;

  std::size_t trials() const { return perTrial.size(); }
  std::size_t successes() const;
  bool allSucceeded() const { return successes() == trials(); }
};

/// Stable field order and no timings, so equal inputs give equal text.
nlohmann::json reportToJson(const TrialReport& r);
std::string reportToString(const TrialReport& r);

/// 16 hex digits of FNV-1a over the canonical plan text.
std::string planId(const PlanDocument& doc);

/// Semantic diagnostics of a plan against the components of `scene`.
std::vector<Diagnostic> validatePlan(const PlanDocument& doc, const Scene& scene);
nlohmann::json diagnosticsToJson(const std::vector<Diagnostic>& diags, const PlanDocument* doc = nullptr);

/// Applies noise overrides to a copy of the scene.
Scene withOverrides(Scene scene, const RunOptions& opts);

/// One trial. Throws Error(ValidationFailed) before the first tick if the plan
/// does not validate; every other problem ends up in the result.
TrialResult runTrial(const PlanDocument& doc, const Scene& scene, std::uint64_t seed, const RunOptions& opts = {},
                     Bus* bus = nullptr);

TrialReport runPlan(const PlanDocument& doc, const Scene& scene, std::uint64_t seed, const RunOptions& opts = {},
                    Bus* bus = nullptr);

/// Trials use seeds seedBase .. seedBase + trials - 1.
TrialReport runBatch(const PlanDocument& doc, const Scene& scene, std::size_t trials, std::uint64_t seedBase,
                     const RunOptions& opts = {}, Bus* bus = nullptr);

/// Runs one component operation to completion on a live workcell.
struct OperationOutcome {
  TickStatus status = TickStatus::Failure;
  std::uint64_t ticks = 0;
  std::string reason;
};
OperationOutcome invokeOperation(Workcell& cell, const OpBinding& binding,
                                 std::uint64_t tickBudget = kDefaultTickBudget);

/// Content-addressed plan files plus an index, or memory only when `dir` is empty.
class PlanStore {
 public:
  explicit PlanStore(std::filesystem::path dir = {});

  /// Returns the plan id; storing the same plan twice is a no-op.
  std::string put(const PlanDocument& doc);
  std::optional<PlanDocument> get(const std::string& id) const;
  std::vector<std::string> ids() const;
  nlohmann::json index() const;

 private:
  void load();
  void saveIndex() const;

  std::filesystem::path dir_;
  mutable std::mutex mutex_;
  std::map<std::string, PlanDocument> plans_;
};

}  // namespace costar
