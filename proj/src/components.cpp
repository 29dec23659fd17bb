#include "costar/components.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <limits>

#include "costar/serialization.hpp"

namespace costar {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

const OperationSignature* findOp(const ComponentDescriptor& d, const std::string& op) {
  for (const auto& o : d.operations) {
    if (o.name == op) return &o;
  }
  return nullptr;
}

bool typeMatches(const ParamValue& v, const std::string& type) {
  if (type == "symbol") return std::holds_alternative<SymbolRef>(v) || std::holds_alternative<std::string>(v);
  if (type == "number") return std::holds_alternative<double>(v);
  if (type == "bool") return std::holds_alternative<bool>(v);
  return std::holds_alternative<std::string>(v);
}

std::string describe(const ParamValue& v) {
  if (std::holds_alternative<SymbolRef>(v)) return "symbol";
  if (std::holds_alternative<double>(v)) return "number";
  if (std::holds_alternative<bool>(v)) return "bool";
  return "string";
}

/// Succeeds after a fixed number of ticks.
class WaitTask : public ActionTask {
 public:
  explicit WaitTask(int ticks) : remaining_(ticks) {}
  TickStatus tick() override { return remaining_-- > 1 ? TickStatus::Busy : TickStatus::Success; }

 private:
  int remaining_;
};

Symbol poseSymbol(std::string name, SymbolKind kind, const Pose& pose, std::string source) {
  Symbol s;
  s.name = std::move(name);
  s.kind = kind;
  s.pose = pose;
  s.source = std::move(source);
  return s;
}

// State predicate of one component; the optional argument names the component.
PredicateDef componentState(std::string name, std::string source, std::function<bool()> f) {
  return {std::move(name), {ParamKind::Label}, 0, true, source,
          [f = std::move(f), source](const std::vector<PredicateArg>& a) {
            return (a.empty() || std::get<std::string>(a[0]) == source) && f();
          }};
}

}  // namespace

nlohmann::json descriptorToJson(const ComponentDescriptor& d) {
  nlohmann::json ops = nlohmann::json::array();
  for (const auto& o : d.operations) {
    nlohmann::json params = nlohmann::json::array();
    for (const auto& p : o.params) {
      params.push_back({{"name", p.name}, {"type", p.type}, {"required", p.required}, {"doc", p.doc}});
    }
    ops.push_back({{"name", o.name}, {"params", params}, {"doc", o.doc}});
  }
  return {{"name", d.name},
          {"type", d.type},
          {"operations", ops},
          {"predicates", d.predicates},
          {"symbolKinds", d.symbolKinds},
          {"inputTopics", d.inputTopics},
          {"outputTopics", d.outputTopics}};
}

double graspRadius(GripperMode mode) {
  switch (mode) {
    case GripperMode::Pinch: return 0.015;
    case GripperMode::Basic: return 0.020;
    case GripperMode::Wide: return 0.030;
    case GripperMode::Scissor: return 0.010;
  }
  return 0.0;
}

std::optional<double> numberParam(const ParamMap& p, const std::string& key) {
  auto it = p.find(key);
  if (it == p.end()) return std::nullopt;
  if (auto* d = std::get_if<double>(&it->second)) return *d;
  throw Error(ErrorCode::InvalidParameter, "parameter '" + key + "' must be a number");
}

std::optional<std::string> stringParam(const ParamMap& p, const std::string& key) {
  auto it = p.find(key);
  if (it == p.end()) return std::nullopt;
  if (auto* s = std::get_if<std::string>(&it->second)) return *s;
  if (auto* r = std::get_if<SymbolRef>(&it->second)) return r->name;
  throw Error(ErrorCode::InvalidParameter, "parameter '" + key + "' must be a string");
}

std::optional<bool> boolParam(const ParamMap& p, const std::string& key) {
  auto it = p.find(key);
  if (it == p.end()) return std::nullopt;
  if (auto* b = std::get_if<bool>(&it->second)) return *b;
  throw Error(ErrorCode::InvalidParameter, "parameter '" + key + "' must be true or false");
}

// ---------------------------------------------------------------------------

void ComponentRegistry::add(std::unique_ptr<Component> c) {
  auto name = c->descriptor().name;
  if (components_.count(name)) throw Error(ErrorCode::DuplicateId, "component '" + name + "' already registered");
  components_[name] = std::move(c);
}

Component* ComponentRegistry::get(const std::string& name) const {
  auto it = components_.find(name);
  return it == components_.end() ? nullptr : it->second.get();
}

std::vector<std::string> ComponentRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& [n, c] : components_) out.push_back(n);
  return out;
}

std::vector<ComponentDescriptor> ComponentRegistry::descriptors() const {
  std::vector<ComponentDescriptor> out;
  for (const auto& [n, c] : components_) out.push_back(c->descriptor());
  return out;
}

void ComponentRegistry::publishAll() {
  for (auto& [n, c] : components_) c->publish();
}

bool ComponentRegistry::hasOperation(const std::string& component, const std::string& operation) const {
  const Component* c = get(component);
  return c && findOp(c->descriptor(), operation);
}

std::vector<std::string> ComponentRegistry::checkParams(const OpBinding& b) const {
  std::vector<std::string> problems;
  const Component* c = get(b.component);
  if (!c) return {"unknown component '" + b.component + "'"};
  const auto d = c->descriptor();
  const OperationSignature* sig = findOp(d, b.operation);
  if (!sig) return {"unknown operation '" + b.component + "." + b.operation + "'"};
  for (const auto& spec : sig->params) {
    auto it = b.params.find(spec.name);
    if (it == b.params.end()) {
      if (spec.required) problems.push_back("missing required parameter '" + spec.name + "'");
      continue;
    }
    if (!typeMatches(it->second, spec.type)) {
      problems.push_back("parameter '" + spec.name + "' expects " + spec.type + ", got " + describe(it->second));
    } else if (spec.type == "predicate") {
      try {
        parseConjunction(std::get<std::string>(it->second));
      } catch (const Error& e) {
        problems.push_back("parameter '" + spec.name + "': " + e.what());
      }
    }
  }
  if (!sig->openParams) {
    for (const auto& [k, v] : b.params) {
      const bool known = std::any_of(sig->params.begin(), sig->params.end(),
                                     [&](const ParamSpec& s) { return s.name == k; });
      if (!known) problems.push_back("unknown parameter '" + k + "' for " + b.component + "." + b.operation);
    }
  }
  return problems;
}

std::unique_ptr<ActionTask> ComponentRegistry::start(const OpBinding& b) {
  Component* c = get(b.component);
  if (!c || !findOp(c->descriptor(), b.operation)) {
    throw Error(ErrorCode::UnboundOperation, "unknown operation '" + b.component + "." + b.operation + "'");
  }
  return c->start(b.operation, b.params);
}

// ---------------------------------------------------------------------------

TickStatus MoveTask::tick() {
  switch (sim_.motionStatus()) {
    case MotionStatus::Success: return TickStatus::Success;
    case MotionStatus::Busy: return TickStatus::Busy;
    case MotionStatus::Idle: break;
  }
  return TickStatus::Failure;
}

ComponentDescriptor ArmComponent::descriptor() const {
  const std::vector<ParamSpec> offsets{
      {"dx", "number", false, "offset along x (m)"}, {"dy", "number", false, "offset along y (m)"},
      {"dz", "number", false, "offset along z (m)"}, {"rx", "number", false, "rotation about x (deg)"},
      {"ry", "number", false, "rotation about y (deg)"}, {"rz", "number", false, "rotation about z (deg)"}};
  OperationSignature move{"Move",
                          {{"goal", "symbol", false, "target waypoint or frame"},
                           {"x", "number", false, "absolute x (m)"},
                           {"y", "number", false, "absolute y (m)"},
                           {"z", "number", false, "absolute z (m)"},
                           {"speed", "number", false, "m/s"}},
                          "move the endpoint to a goal; dx/dy/dz shift it in the base frame, "
                          "rx/ry/rz set an absolute orientation"};
  move.params.insert(move.params.end(), offsets.begin(), offsets.end());
  OperationSignature smart{"SmartMove",
                           {{"class", "string", false, "object class filter"},
                            {"predicate", "predicate", false, "conjunction over one variable"},
                            {"lambda", "number", false, "cost weight of rotation (m/rad)"},
                            {"speed", "number", false, "m/s"}},
                           "move to the cheapest symmetric grasp of an object matching the templates; "
                           "dx..rz define T relative to the class grasp offset"};
  smart.params.insert(smart.params.end(), offsets.begin(), offsets.end());
  return {"arm",
          "Arm",
          {move, {"Teach", {{"name", "string", false, "waypoint name"}}, "store the endpoint as a waypoint"}, smart},
          {},
          {"waypoint", "frame"},
          {"joint_command"},
          {"joint_state", "endpoint"}};
}

std::unique_ptr<ActionTask> ArmComponent::start(const std::string& op, const ParamMap& params) {
  if (op == "Move") return move(params);
  if (op == "Teach") return teach(params);
  if (op == "SmartMove") return smartMove(params);
  throw Error(ErrorCode::UnboundOperation, "arm has no operation '" + op + "'");
}

void ArmComponent::publish() {
  const Pose& p = ctx_.sim.robot().endpoint;
  auto current = ctx_.kb.symbol("endpoint");
  if (current && current->pose && poseDistance(*current->pose, p) == 0.0) return;
  ctx_.kb.upsertSymbol(poseSymbol("endpoint", SymbolKind::Frame, p, "arm"));
}

std::unique_ptr<ActionTask> ArmComponent::move(const ParamMap& params) {
  const Pose& here = ctx_.sim.robot().endpoint;
  Pose goal;
  if (auto name = stringParam(params, "goal")) {
    auto s = ctx_.kb.symbol(*name);
    if (!s) throw Error(ErrorCode::UnknownSymbol, "no symbol '" + *name + "'");
    if (!s->pose) throw Error(ErrorCode::InvalidParameter, "symbol '" + *name + "' has no pose");
    goal = *s->pose;
  } else {
    auto x = numberParam(params, "x");
    auto y = numberParam(params, "y");
    auto z = numberParam(params, "z");
    const bool anyOffset = params.count("dx") || params.count("dy") || params.count("dz");
    if ((x || y || z) && !(x && y && z)) {
      throw Error(ErrorCode::InvalidParameter, "Move needs all of x, y and z");
    }
    if (!x && !anyOffset) throw Error(ErrorCode::InvalidParameter, "Move needs a goal, x/y/z, or an offset");
    goal = here;
    if (x) goal.position = Eigen::Vector3d(*x, *y, *z);
  }
  goal.position += Eigen::Vector3d(numberParam(params, "dx").value_or(0.0), numberParam(params, "dy").value_or(0.0),
                                   numberParam(params, "dz").value_or(0.0));
  if (params.count("rx") || params.count("ry") || params.count("rz")) {
    goal = Pose(goal.position, rotZ(numberParam(params, "rz").value_or(0.0) * kDeg) *
                                   rotY(numberParam(params, "ry").value_or(0.0) * kDeg) *
                                   rotX(numberParam(params, "rx").value_or(0.0) * kDeg));
  }
  ctx_.sim.executeMove(goal, numberParam(params, "speed"));
  return std::make_unique<MoveTask>(ctx_.sim);
}

std::unique_ptr<ActionTask> ArmComponent::teach(const ParamMap& params) {
  std::string name;
  if (auto n = stringParam(params, "name")) {
    name = *n;
  } else {
    do {
      name = "waypoint_" + std::to_string(++taught_);
    } while (ctx_.kb.symbol(name));
  }
  ctx_.kb.upsertSymbol(poseSymbol(name, SymbolKind::Waypoint, ctx_.sim.robot().endpoint, "arm"));
  ++ctx_.knowledgeEpoch;
  return std::make_unique<ImmediateTask>(TickStatus::Success);
}

std::unique_ptr<ActionTask> ArmComponent::smartMove(const ParamMap& params) {
  const auto templates = smartMoveTemplates(params);
  const double lambda = numberParam(params, "lambda").value_or(kDefaultSmartMoveLambda);
  if (lambda < 0) throw Error(ErrorCode::InvalidParameter, "lambda must be non-negative");
  const auto& classes = ctx_.sim.scene().classes;

  std::vector<SmartMoveObject> objects;
  for (const auto& name : ctx_.kb.querySymbols(templates)) {
    auto s = ctx_.kb.symbol(name);
    if (!s || s->kind != SymbolKind::Object || !s->pose) continue;
    const ObjectClass& cls = classes.get(s->classLabel.value_or(""));
    objects.push_back({s->name, *s->pose, cls.symmetry, relativeFromParams(params, cls.graspOffset)});
  }
  const auto best = selectSmartMoveGoal(objects, ctx_.sim.robot().endpoint, lambda,
                                        [this](const Pose& g) { return ctx_.sim.reachable(g); });
  if (!best) {
    throw Error(ErrorCode::NoFeasibleGoal, objects.empty() ? "no object satisfies the predicates"
                                                           : "no reachable candidate goal");
  }
  ctx_.sim.executeMove(best->goal, numberParam(params, "speed"));
  return std::make_unique<MoveTask>(ctx_.sim);
}

// ---------------------------------------------------------------------------

GripperComponent::GripperComponent(WorkcellContext& ctx, GripperKind kind) : Component(ctx), kind_(kind) {
  ctx_.sim.setGripperMode(kind_ == GripperKind::Parallel ? GripperMode::Pinch : GripperMode::Basic);
  Simulator* sim = &ctx_.sim;
  ctx_.kb.registerPredicate(componentState("GripperClosed", "gripper", [sim] { return sim->robot().gripper.closed; }));
  ctx_.kb.registerPredicate(componentState("HoldingObject", "gripper", [sim] { return sim->heldObject().has_value(); }));
}

bool GripperComponent::supports(GripperMode m) const {
  return kind_ == GripperKind::ThreeFinger || m == GripperMode::Pinch;
}

ComponentDescriptor GripperComponent::descriptor() const {
  return {"gripper",
          "Gripper",
          {{"Open", {}, "open and release any held object"},
           {"Close",
            {{"expect_object", "bool", false, "fail when nothing is grasped (default true)"}},
            "close, grasping the nearest object within the mode's grasp radius"},
           {"SetMode", {{"mode", "string", true, "BasicMode, PinchMode, WideMode or ScissorMode"}}, "change grasp mode"},
           {"GetState", {}, "report open/closed state and mode"},
           {"Reset", {}, "open, release and return to the default mode"}},
          {"GripperClosed", "HoldingObject"},
          {},
          {"gripper_command"},
          {kind_ == GripperKind::Parallel ? "parallel_gripper_state" : "three_finger_gripper_state"}};
}

std::unique_ptr<ActionTask> GripperComponent::start(const std::string& op, const ParamMap& params) {
  Simulator& sim = ctx_.sim;
  if (op == "Open") {
    sim.executeRelease();
    sim.setGripperClosed(false);
  } else if (op == "Close") {
    sim.setGripperClosed(true);
    if (!sim.heldObject()) {
      try {
        sim.executeGrasp(graspRadius(sim.robot().gripper.mode));
      } catch (const Error& e) {
        if (boolParam(params, "expect_object").value_or(true)) throw;
      }
    }
  } else if (op == "SetMode") {
    const auto name = stringParam(params, "mode");
    if (!name) throw Error(ErrorCode::InvalidParameter, "SetMode needs a mode");
    const auto mode = gripperModeFromString(*name);
    if (!mode) throw Error(ErrorCode::InvalidParameter, "unknown gripper mode '" + *name + "'");
    if (!supports(*mode)) {
      throw Error(ErrorCode::UnsupportedMode, std::string(toString(*mode)) + " is not supported by this gripper");
    }
    sim.setGripperMode(*mode);
  } else if (op == "Reset") {
    sim.executeRelease();
    sim.setGripperClosed(false);
    sim.setGripperMode(kind_ == GripperKind::Parallel ? GripperMode::Pinch : GripperMode::Basic);
  } else if (op != "GetState") {
    throw Error(ErrorCode::UnboundOperation, "gripper has no operation '" + op + "'");
  }
  return std::make_unique<ImmediateTask>(TickStatus::Success);
}

// ---------------------------------------------------------------------------

PowerToolComponent::PowerToolComponent(WorkcellContext& ctx) : Component(ctx) {
  Simulator* sim = &ctx_.sim;
  ctx_.kb.registerPredicate(componentState("ToolPowered", "tool", [sim] { return sim->robot().toolPowered; }));
  ctx_.kb.registerPredicate(componentState("ToolInPosition", "tool", [sim] { return sim->toolInPosition(); }));
}

ComponentDescriptor PowerToolComponent::descriptor() const {
  return {"tool",
          "PowerTool",
          {{"ToolOn", {}, "power the tool"}, {"ToolOff", {}, "stop the tool"}},
          {"ToolPowered", "ToolInPosition"},
          {},
          {"tool_command"},
          {"tool_state"}};
}

std::unique_ptr<ActionTask> PowerToolComponent::start(const std::string& op, const ParamMap&) {
  if (op == "ToolOn") {
    ctx_.sim.setToolPower(true);
  } else if (op == "ToolOff") {
    ctx_.sim.setToolPower(false);
  } else {
    throw Error(ErrorCode::UnboundOperation, "tool has no operation '" + op + "'");
  }
  return std::make_unique<ImmediateTask>(TickStatus::Success);
}

// ---------------------------------------------------------------------------

PerceptionComponent::PerceptionComponent(WorkcellContext& ctx, double dmax) : Component(ctx), dmax_(dmax) {}

ComponentDescriptor PerceptionComponent::descriptor() const {
  return {"perception",
          "Perception",
          {{"DetectObjects", {}, "refresh object symbols from the camera"}},
          {"IsClass"},
          {"object"},
          {"camera_points"},
          {"detected_objects"}};
}

std::unique_ptr<ActionTask> PerceptionComponent::start(const std::string& op, const ParamMap&) {
  if (op != "DetectObjects") throw Error(ErrorCode::UnboundOperation, "perception has no operation '" + op + "'");
  detectObjects();
  return std::make_unique<ImmediateTask>(TickStatus::Success);
}

void PerceptionComponent::detectObjects() {
  const auto detections = ctx_.sim.simulateDetection();
  auto result = persistenceUpdate(index_, detections, dmax_, true, ids_, ctx_.sim.scene().classes);
  index_ = std::move(result.tree);
  std::vector<Symbol> fresh;
  fresh.reserve(result.renamed.size());
  for (const auto& o : result.renamed) {
    Symbol s = poseSymbol(o.id, SymbolKind::Object, o.pose, "perception");
    s.classLabel = o.classLabel;
    s.attributes["symmetry"] = o.symmetry;
    fresh.push_back(std::move(s));
  }
  ctx_.kb.replaceSymbols("perception", SymbolKind::Object, std::move(fresh));
  ++ctx_.knowledgeEpoch;
}

// ---------------------------------------------------------------------------

ComponentDescriptor PredicatorComponent::descriptor() const {
  return {"predicator",
          "Predicator",
          {{"Check", {{"predicate", "predicate", true, "ground conjunction"}}, "succeed iff every statement holds"},
           {"Wait", {{"ticks", "number", true, "tick count"}}, "stay busy for a number of ticks"}},
          {},
          {},
          {},
          {"predicates"}};
}

std::unique_ptr<ActionTask> PredicatorComponent::start(const std::string& op, const ParamMap& params) {
  if (op == "Wait") {
    const double n = numberParam(params, "ticks").value_or(1.0);
    if (n < 1 || n != std::floor(n)) throw Error(ErrorCode::InvalidParameter, "ticks must be a positive integer");
    return std::make_unique<WaitTask>(static_cast<int>(n));
  }
  if (op != "Check") throw Error(ErrorCode::UnboundOperation, "predicator has no operation '" + op + "'");
  const auto text = stringParam(params, "predicate");
  if (!text) throw Error(ErrorCode::InvalidParameter, "Check needs a predicate");
  const auto statements = parseConjunction(*text);
  for (const auto& st : statements) {
    for (const auto& t : st.args) {
      if (t.kind == Term::Kind::Variable) {
        throw Error(ErrorCode::InvalidParameter, "Check needs ground statements, found variable " + t.text);
      }
    }
    if (!ctx_.kb.evaluate(st)) return std::make_unique<ImmediateTask>(TickStatus::Failure, st.str() + " is false");
  }
  return std::make_unique<ImmediateTask>(TickStatus::Success);
}

// ---------------------------------------------------------------------------

double smartMoveCost(const Pose& goal, const Pose& endpoint, double lambda) {
  return (goal.position - endpoint.position).norm() + lambda * geodesicAngle(goal.orientation, endpoint.orientation);
}

std::optional<SmartMoveCandidate> selectSmartMoveGoal(const std::vector<SmartMoveObject>& objects,
                                                      const Pose& endpoint, double lambda,
                                                      const std::function<bool(const Pose&)>& feasible,
                                                      std::vector<SmartMoveCandidate>* all) {
  std::vector<SmartMoveCandidate> candidates;
  for (const auto& o : objects) {
    for (std::size_t k = 0; k < o.symmetry.size(); ++k) {
      SmartMoveCandidate c;
      c.objectId = o.id;
      c.element = k;
      c.goal = o.pose * Pose::rotation(o.symmetry.elements[k]) * o.relative;
      c.cost = smartMoveCost(c.goal, endpoint, lambda);
      c.feasible = feasible(c.goal);
      candidates.push_back(std::move(c));
    }
  }
  double minCost = std::numeric_limits<double>::infinity();
  for (const auto& c : candidates) {
    if (c.feasible) minCost = std::min(minCost, c.cost);
  }
  std::optional<SmartMoveCandidate> best;
  for (const auto& c : candidates) {
    if (!c.feasible || c.cost > minCost + kSmartMoveTieTolerance) continue;
    if (!best || c.objectId < best->objectId || (c.objectId == best->objectId && c.element < best->element)) {
      best = c;
    }
  }
  if (all) *all = std::move(candidates);
  return best;
}

Pose relativeFromParams(const ParamMap& params, const Pose& base) {
  const Eigen::Vector3d d(numberParam(params, "dx").value_or(0.0), numberParam(params, "dy").value_or(0.0),
                          numberParam(params, "dz").value_or(0.0));
  const Eigen::Quaterniond r = rotZ(numberParam(params, "rz").value_or(0.0) * kDeg) *
                               rotY(numberParam(params, "ry").value_or(0.0) * kDeg) *
                               rotX(numberParam(params, "rx").value_or(0.0) * kDeg);
  return Pose(d, r) * base;
}

std::vector<PredicateStatement> smartMoveTemplates(const ParamMap& params) {
  std::vector<PredicateStatement> templates;
  if (auto p = stringParam(params, "predicate")) templates = parseConjunction(*p);
  std::string var = "X";
  for (const auto& t : templates) {
    for (const auto& a : t.args) {
      if (a.kind == Term::Kind::Variable) var = a.text;
    }
  }
  if (auto cls = stringParam(params, "class")) {
    templates.insert(templates.begin(), PredicateStatement{"IsClass", {Term::variable(var), Term::name(*cls)}});
  }
  if (templates.empty()) throw Error(ErrorCode::InvalidParameter, "SmartMove needs a class or predicate");
  return templates;
}

// ---------------------------------------------------------------------------

Workcell::Workcell(Scene scene, std::optional<std::uint64_t> seed)
    : sim_(std::move(scene), seed), ctx_{sim_, kb_, 0} {
  const Scene& sc = sim_.scene();
  kb_.upsertSymbol(poseSymbol("home", SymbolKind::Waypoint, sc.robot.home, "scene"));
  for (const auto& f : sc.frames) {
    kb_.upsertSymbol(poseSymbol(f.name, f.kind == "frame" ? SymbolKind::Frame : SymbolKind::Waypoint, f.pose, "scene"));
  }
  for (const auto& r : sc.regions) {
    Symbol s = poseSymbol(r.name, SymbolKind::Region, Pose(0.5 * (r.min + r.max), Eigen::Quaterniond::Identity()),
                          "scene");
    s.attributes["min"] = vectorToJson(r.min).dump();
    s.attributes["max"] = vectorToJson(r.max).dump();
    kb_.upsertSymbol(std::move(s));
  }
  registry_.add(std::make_unique<ArmComponent>(ctx_));
  registry_.add(std::make_unique<GripperComponent>(ctx_, sc.robot.gripper));
  registry_.add(std::make_unique<PowerToolComponent>(ctx_));
  registry_.add(std::make_unique<PerceptionComponent>(ctx_));
  registry_.add(std::make_unique<PredicatorComponent>(ctx_));
  registry_.publishAll();
}

void Workcell::step() {
  sim_.step();
  registry_.publishAll();
}

}  // namespace costar
