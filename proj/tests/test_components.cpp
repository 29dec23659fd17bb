#include <gtest/gtest.h>

#include <algorithm>
#include <numbers>
#include <random>

#include "costar/components.hpp"
#include "costar/error.hpp"
#include "oracles.hpp"

using namespace costar;

namespace {

constexpr double kPi = std::numbers::pi;

Scene quietScene() {
  Scene s;
  s.name = "unit";
  s.noise = NoiseModel{0.0, 0.0, 0.0};
  s.frames.push_back({"table_center", "frame", Pose::translation(0.5, 0.0, 0.0)});
  return s;
}

ObjectInstance part(const std::string& id, const std::string& cls, const Pose& p) {
  ObjectInstance o;
  o.id = id;
  o.classLabel = cls;
  o.pose = p;
  o.symmetry = ObjectClassRegistry::withDefaults().get(cls).symmetry.name;
  return o;
}

struct Outcome {
  TickStatus status = TickStatus::Busy;
  int ticks = 0;
};

/// Ticks a started task against the workcell clock until it finishes.
Outcome drive(Workcell& wc, ActionTask& task, int limit = 2000) {
  Outcome r;
  while (r.ticks < limit) {
    ++r.ticks;
    r.status = task.tick();
    if (r.status != TickStatus::Busy) break;
    wc.step();
  }
  return r;
}

Outcome invoke(Workcell& wc, const std::string& comp, const std::string& op, ParamMap params = {}) {
  auto task = wc.components().start(OpBinding{comp, op, std::move(params)});
  return drive(wc, *task);
}

ErrorCode codeOf(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::NotFound;
}

std::vector<std::string> objectSymbols(const Predicator& kb) {
  std::vector<std::string> out;
  for (const auto& s : kb.symbols()) {
    if (s.kind == SymbolKind::Object) out.push_back(s.name);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<oracle::SmartObject> toOracle(const std::vector<SmartMoveObject>& objs) {
  std::vector<oracle::SmartObject> out;
  for (const auto& o : objs) {
    out.push_back({o.id, oracle::toIso(o.pose), oracle::groupMatrices(o.symmetry), oracle::toIso(o.relative)});
  }
  return out;
}

}  // namespace

TEST(Arm, TeachStoresEndpoint) {
  Workcell wc(quietScene());
  const Pose here = wc.sim().robot().endpoint;
  EXPECT_EQ(invoke(wc, "arm", "Teach", {{"name", std::string("grab")}}).status, TickStatus::Success);
  const auto s = wc.kb().symbol("grab");
  ASSERT_TRUE(s);
  EXPECT_EQ(s->kind, SymbolKind::Waypoint);
  EXPECT_LT(poseDistance(*s->pose, here), 1e-12);
  invoke(wc, "arm", "Teach");
  EXPECT_TRUE(wc.kb().symbol("waypoint_1"));
}

TEST(Arm, MoveHomeWhenHomeIsOneTick) {
  Workcell wc(quietScene());
  const Outcome r = invoke(wc, "arm", "Move", {{"goal", SymbolRef{"home"}}});
  EXPECT_EQ(r.status, TickStatus::Success);
  EXPECT_EQ(r.ticks, 1);
}

TEST(Arm, MoveOffsetArrives) {
  Workcell wc(quietScene());
  const Pose start = wc.sim().robot().endpoint;
  const Outcome r = invoke(wc, "arm", "Move", {{"dx", 0.1}});
  EXPECT_EQ(r.status, TickStatus::Success);
  EXPECT_GT(r.ticks, 1);
  EXPECT_NEAR((wc.sim().robot().endpoint.position - start.position).x(), 0.1, 1e-4);
  const auto ep = wc.kb().symbol("endpoint");
  ASSERT_TRUE(ep);
  EXPECT_LT(poseDistance(*ep->pose, wc.sim().robot().endpoint), 1e-12);
}

TEST(Arm, OutOfShellIsUnreachable) {
  Workcell wc(quietScene());
  EXPECT_EQ(codeOf([&] { invoke(wc, "arm", "Move", {{"x", 2.0}, {"y", 0.0}, {"z", 0.3}}); }),
            ErrorCode::Unreachable);
  EXPECT_EQ(codeOf([&] { invoke(wc, "arm", "Move", {{"goal", SymbolRef{"nowhere"}}}); }), ErrorCode::UnknownSymbol);
  EXPECT_EQ(codeOf([&] { invoke(wc, "arm", "Move", {{"x", 0.4}}); }), ErrorCode::InvalidParameter);
}

TEST(Gripper, ParallelModes) {
  Workcell wc(quietScene());
  EXPECT_EQ(invoke(wc, "gripper", "SetMode", {{"mode", std::string("PinchMode")}}).status, TickStatus::Success);
  EXPECT_EQ(codeOf([&] { invoke(wc, "gripper", "SetMode", {{"mode", std::string("ScissorMode")}}); }),
            ErrorCode::UnsupportedMode);
  EXPECT_EQ(wc.sim().robot().gripper.mode, GripperMode::Pinch);
}

TEST(Gripper, ModeRadiusTable) {
  EXPECT_DOUBLE_EQ(graspRadius(GripperMode::Pinch), 0.015);
  EXPECT_DOUBLE_EQ(graspRadius(GripperMode::Basic), 0.020);
  EXPECT_DOUBLE_EQ(graspRadius(GripperMode::Wide), 0.030);
  EXPECT_DOUBLE_EQ(graspRadius(GripperMode::Scissor), 0.010);
}

TEST(Gripper, ThreeFingerWideReachesFurther) {
  Scene s = quietScene();
  s.robot.gripper = GripperKind::ThreeFinger;
  const Pose home = s.robot.home;
  // 25 mm from the endpoint: outside Basic (20 mm), inside Wide (30 mm).
  s.objects.push_back(part("n", "node", Pose(home.position + Eigen::Vector3d(0.025, 0, 0), Eigen::Quaterniond::Identity())));
  {
    Workcell wc(s);
    EXPECT_EQ(codeOf([&] { invoke(wc, "gripper", "Close"); }), ErrorCode::NothingToGrasp);
  }
  Workcell wc(s);
  EXPECT_EQ(invoke(wc, "gripper", "SetMode", {{"mode", std::string("WideMode")}}).status, TickStatus::Success);
  EXPECT_EQ(invoke(wc, "gripper", "Close").status, TickStatus::Success);
  EXPECT_EQ(wc.sim().heldObject(), std::optional<std::string>("n"));
  EXPECT_TRUE(wc.kb().evaluate(parseStatement("GripperClosed()")));
  EXPECT_EQ(invoke(wc, "gripper", "Open").status, TickStatus::Success);
  EXPECT_FALSE(wc.sim().heldObject());
  EXPECT_EQ(invoke(wc, "gripper", "Close", {{"expect_object", false}}).status, TickStatus::Success);
}

TEST(PowerTool, OnOffIdempotent) {
  Workcell wc(quietScene());
  invoke(wc, "tool", "ToolOn");
  EXPECT_TRUE(wc.sim().robot().toolPowered);
  invoke(wc, "tool", "ToolOn");
  EXPECT_TRUE(wc.sim().robot().toolPowered);
  EXPECT_TRUE(wc.kb().evaluate(parseStatement("ToolPowered(tool)")));
  invoke(wc, "tool", "ToolOff");
  EXPECT_FALSE(wc.sim().robot().toolPowered);
}

TEST(Predicator, CheckAndWait) {
  Workcell wc(quietScene());
  EXPECT_EQ(invoke(wc, "predicator", "Check", {{"predicate", std::string("ToolInPosition()")}}).status,
            TickStatus::Success);
  EXPECT_EQ(invoke(wc, "predicator", "Check", {{"predicate", std::string("ToolPowered()")}}).status,
            TickStatus::Failure);
  EXPECT_EQ(invoke(wc, "predicator", "Wait", {{"ticks", 5.0}}).ticks, 5);
  EXPECT_EQ(codeOf([&] { invoke(wc, "predicator", "Check", {{"predicate", std::string("IsClass(X, node)")}}); }),
            ErrorCode::InvalidParameter);
}

TEST(Perception, StaticSceneKeepsNames) {
  Scene s = quietScene();
  s.noise.posSigma = 0.004;
  s.objects = {part("a", "node", Pose::translation(0.45, -0.1, 0.02)),
               part("b", "link", Pose::translation(0.55, -0.2, 0.01))};
  Workcell wc(s, 5);
  invoke(wc, "perception", "DetectObjects");
  const auto first = objectSymbols(wc.kb());
  invoke(wc, "perception", "DetectObjects");
  EXPECT_EQ(objectSymbols(wc.kb()), first);
  EXPECT_EQ(first, (std::vector<std::string>{"link_1", "node_1"}));
  EXPECT_TRUE(wc.kb().evaluate(parseStatement("IsClass(node_1, node)")));
}

TEST(Perception, EmptyScene) {
  Workcell wc(quietScene());
  invoke(wc, "perception", "DetectObjects");
  EXPECT_TRUE(objectSymbols(wc.kb()).empty());
}

TEST(Perception, AddedObjectGetsOneNewName) {
  Scene s = quietScene();
  s.objects = {part("a", "node", Pose::translation(0.45, -0.1, 0.02))};
  Scene s2 = s;
  s2.objects.push_back(part("b", "node", Pose::translation(0.55, -0.2, 0.02)));
  Workcell wc(s);
  invoke(wc, "perception", "DetectObjects");
  EXPECT_EQ(objectSymbols(wc.kb()), (std::vector<std::string>{"node_1"}));
  // Swap in the richer scene's detections by reusing the same perception index.
  auto* perception = dynamic_cast<PerceptionComponent*>(wc.components().get("perception"));
  ASSERT_TRUE(perception);
  const RStarTree prior = perception->index();
  IdAllocator ids;
  Simulator sim2(s2);
  const auto upd = persistenceUpdate(prior, sim2.simulateDetection(), kDefaultMatchDistance, true, ids,
                                     s2.classes);
  std::vector<std::string> names;
  for (const auto& o : upd.renamed) names.push_back(o.id);
  std::sort(names.begin(), names.end());
  EXPECT_EQ(names, (std::vector<std::string>{"node_1", "node_2"}));
}

TEST(Perception, OnlyDetectMutatesObjects) {
  Scene s = quietScene();
  s.objects = {part("a", "node", Pose::translation(0.45, -0.1, 0.02))};
  Workcell wc(s);
  invoke(wc, "perception", "DetectObjects");
  const auto before = wc.kb().querySymbols({parseStatement("IsClass(X, node)")});
  invoke(wc, "arm", "Move", {{"dz", 0.05}});
  invoke(wc, "tool", "ToolOn");
  invoke(wc, "arm", "Teach");
  EXPECT_EQ(wc.kb().querySymbols({parseStatement("IsClass(X, node)")}), before);
}

TEST(SmartMove, TwentyFourCandidatesForOneCube) {
  Scene s = quietScene();
  s.objects = {part("a", "node", Pose(Eigen::Vector3d(0.55, -0.1, 0.02), rotZ(0.3)))};
  Workcell wc(s);
  invoke(wc, "perception", "DetectObjects");
  const auto templates = smartMoveTemplates({{"class", std::string("node")},
                                             {"predicate", std::string("RightOf(X, table_center)")}});
  ASSERT_EQ(wc.kb().querySymbols(templates), (std::vector<std::string>{"node_1"}));
  const auto sym = wc.kb().symbol("node_1");
  const ObjectClass& cls = s.classes.get("node");
  const std::vector<SmartMoveObject> objs{{"node_1", *sym->pose, cls.symmetry,
                                           relativeFromParams({{"dz", 0.1}}, cls.graspOffset)}};
  std::vector<SmartMoveCandidate> all;
  const Pose endpoint = wc.sim().robot().endpoint;
  const auto best = selectSmartMoveGoal(objs, endpoint, kDefaultSmartMoveLambda,
                                        [&](const Pose& g) { return wc.sim().reachable(g); }, &all);
  EXPECT_EQ(all.size(), 24u);
  ASSERT_TRUE(best);
  const auto brute = oracle::bruteSmartMove(toOracle(objs), oracle::toIso(endpoint), kDefaultSmartMoveLambda,
                                            oracle::Shell{}, kSmartMoveTieTolerance);
  ASSERT_TRUE(brute);
  EXPECT_EQ(best->element, brute->element);
  EXPECT_LT((best->goal.position - brute->goal.translation()).norm(), 1e-12);

  // The arm dispatches exactly that goal.
  const Outcome r = invoke(wc, "arm", "SmartMove",
                       {{"class", std::string("node")}, {"predicate", std::string("RightOf(X, table_center)")},
                        {"dz", 0.1}});
  EXPECT_EQ(r.status, TickStatus::Success);
  EXPECT_LT((wc.sim().robot().endpoint.position - best->goal.position).norm(), 1e-4);
  EXPECT_LT(geodesicAngle(wc.sim().robot().endpoint.orientation, best->goal.orientation), 1e-4);
}

TEST(SmartMove, NoMatchingObject) {
  Workcell wc(quietScene());
  invoke(wc, "perception", "DetectObjects");
  EXPECT_EQ(codeOf([&] { invoke(wc, "arm", "SmartMove", {{"class", std::string("node")}}); }),
            ErrorCode::NoFeasibleGoal);
  EXPECT_EQ(codeOf([&] { invoke(wc, "arm", "SmartMove"); }), ErrorCode::InvalidParameter);
}

TEST(SmartMove, OutOfReachObjectIsInfeasible) {
  Scene s = quietScene();
  s.objects = {part("far", "node", Pose::translation(0.95, 0.0, 0.02))};
  Workcell wc(s);
  invoke(wc, "perception", "DetectObjects");
  EXPECT_EQ(codeOf([&] { invoke(wc, "arm", "SmartMove", {{"class", std::string("node")}}); }),
            ErrorCode::NoFeasibleGoal);
}

TEST(SmartMove, EquidistantTieGoesToSmallerId) {
  const Pose endpoint(Eigen::Vector3d(0.5, 0.0, 0.3), rotX(kPi));
  const auto cube = cubeGroup();
  const Pose T = Pose::rotation(rotX(kPi));
  const std::vector<SmartMoveObject> objs{{"node_b", Pose::translation(0.5, 0.1, 0.02), cube, T},
                                          {"node_a", Pose::translation(0.5, -0.1, 0.02), cube, T}};
  const auto best = selectSmartMoveGoal(objs, endpoint, 0.1, [](const Pose&) { return true; });
  ASSERT_TRUE(best);
  EXPECT_EQ(best->objectId, "node_a");
  const auto brute = oracle::bruteSmartMove(toOracle(objs), oracle::toIso(endpoint), 0.1, oracle::Shell{}, 1e-12);
  EXPECT_EQ(brute->id, "node_a");
  EXPECT_EQ(brute->element, best->element);
}

TEST(SmartMove, MatchesBruteForceOnRandomScenes) {
  std::mt19937_64 rng(404);
  std::uniform_real_distribution<double> ux(0.25, 0.7), uy(-0.4, 0.4), uz(0.0, 0.1), lam(0.0, 0.5);
  const Simulator sim(quietScene());
  const auto reg = ObjectClassRegistry::withDefaults();
  for (int scene = 0; scene < 100; ++scene) {
    std::vector<SmartMoveObject> objs;
    const int n = 1 + scene % 5;
    for (int i = 0; i < n; ++i) {
      const std::string cls = i % 2 ? "link" : "node";
      const Pose T = relativeFromParams({{"dz", uz(rng)}}, reg.get(cls).graspOffset);
      objs.push_back({"o" + std::to_string(i), Pose(Eigen::Vector3d(ux(rng), uy(rng), uz(rng)), oracle::randomRotation(rng)),
                      reg.get(cls).symmetry, T});
    }
    const Pose endpoint(Eigen::Vector3d(ux(rng), uy(rng), 0.3), oracle::randomRotation(rng));
    const double lambda = lam(rng);
    const auto best = selectSmartMoveGoal(objs, endpoint, lambda, [&](const Pose& g) { return sim.reachable(g); });
    const auto brute = oracle::bruteSmartMove(toOracle(objs), oracle::toIso(endpoint), lambda, oracle::Shell{},
                                              kSmartMoveTieTolerance);
    ASSERT_EQ(best.has_value(), brute.has_value()) << scene;
    if (!best) continue;
    EXPECT_EQ(best->objectId, brute->id) << scene;
    EXPECT_EQ(best->element, brute->element) << scene;
    EXPECT_NEAR(best->cost, brute->cost, 1e-12) << scene;
  }
}

TEST(SmartMove, RelabelingDoesNotMoveTheGoal) {
  std::mt19937_64 rng(405);
  std::uniform_real_distribution<double> ux(0.3, 0.6), uy(-0.3, 0.3);
  const auto cube = cubeGroup();
  const auto all = [](const Pose&) { return true; };
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<SmartMoveObject> objs;
    for (int i = 0; i < 4; ++i) {
      objs.push_back({"p" + std::to_string(i), Pose(Eigen::Vector3d(ux(rng), uy(rng), 0.02), oracle::randomRotation(rng)),
                      cube, Pose::rotation(rotX(kPi))});
    }
    const Pose endpoint(Eigen::Vector3d(0.45, 0.0, 0.3), rotX(kPi));
    const auto a = selectSmartMoveGoal(objs, endpoint, 0.1, all);
    std::vector<std::string> names{"zeta", "alpha", "mid", "beta"};
    std::shuffle(names.begin(), names.end(), rng);
    for (std::size_t i = 0; i < objs.size(); ++i) objs[i].id = names[i];
    const auto b = selectSmartMoveGoal(objs, endpoint, 0.1, all);
    ASSERT_TRUE(a && b);
    EXPECT_LT(poseDistance(a->goal, b->goal), 1e-12) << trial;
  }
}

TEST(Registry, DescriptorsAndBindings) {
  Workcell wc(quietScene());
  EXPECT_EQ(wc.components().names(),
            (std::vector<std::string>{"arm", "gripper", "perception", "predicator", "tool"}));
  EXPECT_TRUE(wc.components().hasOperation("gripper", "GetState"));
  EXPECT_TRUE(wc.components().hasOperation("gripper", "Reset"));
  EXPECT_FALSE(wc.components().hasOperation("arm", "FlyToMoon"));
  EXPECT_FALSE(wc.components().checkParams({"arm", "Move", {{"bogus", 1.0}}}).empty());
  EXPECT_FALSE(wc.components().checkParams({"arm", "Move", {{"dx", true}}}).empty());
  EXPECT_TRUE(wc.components().checkParams({"arm", "Move", {{"dx", 0.1}}}).empty());
  EXPECT_FALSE(wc.components().checkParams({"predicator", "Check", {}}).empty());
  const auto j = descriptorToJson(wc.components().descriptors().front());
  EXPECT_EQ(j.at("name"), "arm");
  EXPECT_TRUE(j.contains("operations"));
}
