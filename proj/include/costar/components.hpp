#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "costar/btree.hpp"
#include "costar/predicator.hpp"
#include "costar/spatial_index.hpp"
#include "costar/world_sim.hpp"

namespace costar {

struct ParamSpec {
  std::string name;
  std::string type;  // "symbol", "number", "string", "bool", "predicate"
  bool required = false;
  std::string doc;
};

struct OperationSignature {
  std::string name;
  std::vector<ParamSpec> params;
  std::string doc;
  /// Unknown parameter names are rejected unless this is set.
  bool openParams = false;
};

struct ComponentDescriptor {
  std::string name;
  std::string type;  // base class: Arm, Gripper, PowerTool, Perception, Predicator
  std::vector<OperationSignature> operations;
  std::vector<std::string> predicates;
  std::vector<std::string> symbolKinds;
  std::vector<std::string> inputTopics;
  std::vector<std::string> outputTopics;
};

nlohmann::json descriptorToJson(const ComponentDescriptor& d);

/// Mode-to-radius table used by Close.
double graspRadius(GripperMode mode);

/// Mutable state shared by the components of one workcell.
struct WorkcellContext {
  Simulator& sim;
  Predicator& kb;
  /// Bumped whenever a component changes waypoint or object symbols.
  std::uint64_t knowledgeEpoch = 0;
};

/// C = <I, O, p, s, u>: streams, predicates, symbols and operations behind one name.
class Component {
 public:
  explicit Component(WorkcellContext& ctx) : ctx_(ctx) {}
  virtual ~Component() = default;

  virtual ComponentDescriptor descriptor() const = 0;
  /// Starts an operation. Throws Error for invalid parameters or refused requests.
  virtual std::unique_ptr<ActionTask> start(const std::string& op, const ParamMap& params) = 0;
  /// Refreshes continuously published symbols. Called once per simulation tick.
  virtual void publish() {}

 protected:
  WorkcellContext& ctx_;
};

/// Resolves "component.Operation" bindings for the behavior tree.
class ComponentRegistry : public OperationProvider {
 public:
  void add(std::unique_ptr<Component> c);
  Component* get(const std::string& name) const;
  std::vector<std::string> names() const;
  std::vector<ComponentDescriptor> descriptors() const;
  void publishAll();

  bool hasOperation(const std::string& component, const std::string& operation) const override;
  std::vector<std::string> checkParams(const OpBinding& b) const override;
  std::unique_ptr<ActionTask> start(const OpBinding& b) override;

 private:
  std::map<std::string, std::unique_ptr<Component>> components_;
};

// Parameter access helpers shared by the components.
std::optional<double> numberParam(const ParamMap& p, const std::string& key);
std::optional<std::string> stringParam(const ParamMap& p, const std::string& key);
std::optional<bool> boolParam(const ParamMap& p, const std::string& key);

/// Task that is already finished when started.
class ImmediateTask : public ActionTask {
 public:
  explicit ImmediateTask(TickStatus s, std::string reason = {}) : status_(s), reason_(std::move(reason)) {}
  TickStatus tick() override { return status_; }
  std::string failureReason() const override { return reason_; }

 private:
  TickStatus status_;
  std::string reason_;
};

/// Waits for the current simulator motion to finish.
class MoveTask : public ActionTask {
 public:
  explicit MoveTask(Simulator& sim) : sim_(sim) {}
  TickStatus tick() override;
  void halt() override { sim_.cancelMotion(); }

 private:
  Simulator& sim_;
};

class ArmComponent : public Component {
 public:
  using Component::Component;
  ComponentDescriptor descriptor() const override;
  std::unique_ptr<ActionTask> start(const std::string& op, const ParamMap& params) override;
  /// Publishes the "endpoint" frame symbol.
  void publish() override;

 private:
  std::unique_ptr<ActionTask> move(const ParamMap& params);
  std::unique_ptr<ActionTask> teach(const ParamMap& params);
  std::unique_ptr<ActionTask> smartMove(const ParamMap& params);
  int taught_ = 0;
};

class GripperComponent : public Component {
 public:
  GripperComponent(WorkcellContext& ctx, GripperKind kind);
  ComponentDescriptor descriptor() const override;
  std::unique_ptr<ActionTask> start(const std::string& op, const ParamMap& params) override;
  bool supports(GripperMode m) const;

 private:
  GripperKind kind_;
};

class PowerToolComponent : public Component {
 public:
  explicit PowerToolComponent(WorkcellContext& ctx);
  ComponentDescriptor descriptor() const override;
  std::unique_ptr<ActionTask> start(const std::string& op, const ParamMap& params) override;
};

/// DetectObjects: detection, persistence matching and symbol replacement.
class PerceptionComponent : public Component {
 public:
  explicit PerceptionComponent(WorkcellContext& ctx, double dmax = kDefaultMatchDistance);
  ComponentDescriptor descriptor() const override;
  std::unique_ptr<ActionTask> start(const std::string& op, const ParamMap& params) override;

  void detectObjects();
  const RStarTree& index() const { return index_; }

 private:
  double dmax_;
  RStarTree index_;
  IdAllocator ids_;
};

/// Exposes predicate checks as leaf operations.
class PredicatorComponent : public Component {
 public:
  using Component::Component;
  ComponentDescriptor descriptor() const override;
  std::unique_ptr<ActionTask> start(const std::string& op, const ParamMap& params) override;
};

// ---------------------------------------------------------------------------
// SmartMove goal selection

inline constexpr double kDefaultSmartMoveLambda = 0.1;  // meters per radian
/// Costs within this distance of the minimum count as tied.
inline constexpr double kSmartMoveTieTolerance = 1e-12;

struct SmartMoveObject {
  std::string id;
  Pose pose;
  SymmetryGroup symmetry;
  Pose relative;  // T
};

struct SmartMoveCandidate {
  std::string objectId;
  std::size_t element = 0;
  Pose goal;
  double cost = 0.0;
  bool feasible = false;
};

double smartMoveCost(const Pose& goal, const Pose& endpoint, double lambda);

/// Enumerates o * s * T over every object and symmetry element, drops
/// infeasible goals and returns the cheapest. Ties go to the smaller object
/// id, then the smaller element index. `all` receives every candidate.
std::optional<SmartMoveCandidate> selectSmartMoveGoal(
    const std::vector<SmartMoveObject>& objects, const Pose& endpoint, double lambda,
    const std::function<bool(const Pose&)>& feasible, std::vector<SmartMoveCandidate>* all = nullptr);

/// Relative transform from optional dx/dy/dz (m) and rx/ry/rz (deg) params,
/// applied on top of `base`.
Pose relativeFromParams(const ParamMap& params, const Pose& base);

/// Templates from the class / predicate params. Throws Error(InvalidParameter).
std::vector<PredicateStatement> smartMoveTemplates(const ParamMap& params);

/// Everything needed to run plans against one simulated scene.
class Workcell {
 public:
  explicit Workcell(Scene scene, std::optional<std::uint64_t> seed = std::nullopt);
  Workcell(const Workcell&) = delete;
  Workcell& operator=(const Workcell&) = delete;

  Simulator& sim() { return sim_; }
  Predicator& kb() { return kb_; }
  ComponentRegistry& components() { return registry_; }
  WorkcellContext& context() { return ctx_; }

  /// Advances the simulator one tick and republishes continuous symbols.
  void step();

 private:
  Simulator sim_;
  Predicator kb_;
  WorkcellContext ctx_;
  ComponentRegistry registry_;
};

}  // namespace costar
