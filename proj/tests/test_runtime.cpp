#include <gtest/gtest.h>

#include <filesystem>
#include <thread>

#include "costar/error.hpp"
#include "costar/runtime.hpp"

using namespace costar;
using namespace std::chrono_literals;

namespace {

Scene assemblyScene() { return loadScene(std::string(COSTAR_SOURCE_DIR) + "/data/scenes/assembly.yaml"); }

PlanDocument assemblyPlan() { return loadPlanFile(std::string(COSTAR_SOURCE_DIR) + "/data/plans/assembly.bt"); }

Scene emptyScene() {
  Scene s;
  s.name = "empty";
  return s;
}

std::vector<nlohmann::json> eventsOfType(const Bus& bus, const std::string& type) {
  std::vector<nlohmann::json> out;
  for (const auto& m : bus.read(kEventsTopic, 0)) {
    if (m.payload.at("type") == type) out.push_back(m.payload);
  }
  return out;
}

}  // namespace

TEST(Bus, ReplayFromStart) {
  Bus bus;
  bus.createTopic("t");
  for (int i = 0; i < 3; ++i) bus.publish("t", i);
  auto sub = bus.subscribe("t", 0);
  for (int i = 0; i < 3; ++i) {
    const auto m = sub.next();
    ASSERT_TRUE(m);
    EXPECT_EQ(m->payload, i);
    EXPECT_EQ(m->sequence, static_cast<std::uint64_t>(i));
  }
  EXPECT_FALSE(sub.next());
}

TEST(Bus, TwoSubscribersSeeTheSameStream) {
  Bus bus(true);
  auto a = bus.subscribe("t");
  auto b = bus.subscribe("t");
  for (int i = 0; i < 5; ++i) bus.publish("t", {{"i", i}});
  for (int i = 0; i < 5; ++i) {
    const auto ma = a.next(), mb = b.next();
    ASSERT_TRUE(ma && mb);
    EXPECT_EQ(ma->payload, mb->payload);
    EXPECT_EQ(ma->sequence, mb->sequence);
  }
}

TEST(Bus, SubscribeFromMiddle) {
  Bus bus(true);
  for (int i = 0; i < 3; ++i) bus.publish("t", i);
  auto sub = bus.subscribe("t", 2);
  const auto m = sub.next();
  ASSERT_TRUE(m);
  EXPECT_EQ(m->sequence, 2u);
  EXPECT_FALSE(sub.next());
}

TEST(Bus, UnknownTopic) {
  Bus bus;
  EXPECT_THROW(bus.subscribe("nope"), Error);
  EXPECT_THROW(bus.read("nope", 0), Error);
  EXPECT_NO_THROW(Bus(true).subscribe("nope"));
}

TEST(Bus, ConcurrentPublisherKeepsFifo) {
  Bus bus(true);
  auto sub = bus.subscribe("t");
  std::thread producer([&] {
    for (int i = 0; i < 500; ++i) bus.publish("t", i);
  });
  int expected = 0;
  while (expected < 500) {
    const auto m = sub.next(1000ms);
    ASSERT_TRUE(m) << "lost message " << expected;
    EXPECT_EQ(m->payload, expected);
    ++expected;
  }
  producer.join();
  EXPECT_TRUE(bus.wait("t", 500, 10ms).empty());
}

TEST(Runtime, TeachPlanAddsWaypoint) {
  Bus bus;
  bus.createTopic(kEventsTopic);
  const auto report = runPlan(parsePlan("sequence { arm.Teach() }"), emptyScene(), 1, {}, &bus);
  EXPECT_TRUE(report.allSucceeded());
  const auto updates = eventsOfType(bus, "symbols_updated");
  ASSERT_EQ(updates.size(), 1u);
  int waypoints = 0;
  for (const auto& s : updates[0].at("symbols")) waypoints += s.at("name") == "waypoint_1" ? 1 : 0;
  EXPECT_EQ(waypoints, 1);
}

TEST(Runtime, AssemblyNoiselessSucceeds) {
  RunOptions opts;
  opts.noisePos = 0.0;
  opts.noiseRot = 0.0;
  const auto report = runPlan(assemblyPlan(), assemblyScene(), 42, opts);
  ASSERT_EQ(report.trials(), 1u);
  EXPECT_EQ(report.perTrial[0].status, TickStatus::Success) << report.perTrial[0].failureReason;
}

TEST(Runtime, MissingComponentFailsValidation) {
  Bus bus;
  bus.createTopic(kEventsTopic);
  try {
    runPlan(parsePlan("sequence { welder.Weld() }"), emptyScene(), 1, {}, &bus);
    ADD_FAILURE() << "ran an unbound plan";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ValidationFailed);
  }
  EXPECT_TRUE(bus.read(kEventsTopic, 0).empty());
  const auto diags = validatePlan(parsePlan("sequence { welder.Weld() }"), emptyScene());
  ASSERT_EQ(diags.size(), 1u);
  EXPECT_EQ(diags[0].code, ErrorCode::UnboundOperation);
}

TEST(Runtime, SingleTrialBatchEqualsRunPlan) {
  const auto doc = assemblyPlan();
  const auto scene = assemblyScene();
  EXPECT_EQ(reportToString(runBatch(doc, scene, 1, 7)), reportToString(runPlan(doc, scene, 7)));
  const auto batch = runBatch(doc, scene, 3, 100);
  ASSERT_EQ(batch.trials(), 3u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(batch.perTrial[i].seed, 100 + i);
  EXPECT_THROW(runBatch(doc, scene, 0, 1), Error);
}

TEST(Runtime, BatchIsDeterministic) {
  RunOptions opts;
  opts.noisePos = 0.02;
  const auto doc = assemblyPlan();
  const auto scene = assemblyScene();
  EXPECT_EQ(reportToString(runBatch(doc, scene, 4, 9, opts)), reportToString(runBatch(doc, scene, 4, 9, opts)));
}

TEST(Runtime, TickBudget) {
  RunOptions opts;
  opts.tickBudget = 10;
  const auto report = runPlan(parsePlan("sequence { predicator.Wait(ticks=50) }"), emptyScene(), 1, opts);
  const auto& t = report.perTrial.at(0);
  EXPECT_EQ(t.status, TickStatus::Failure);
  EXPECT_EQ(t.tickCount, 10u);
  EXPECT_EQ(t.failureNode, std::optional<std::string>("root.0.0"));
  EXPECT_NE(t.failureReason.find("TickBudgetExceeded"), std::string::npos);
}

TEST(Runtime, FailureNamesLeaf) {
  const auto report = runPlan(parsePlan("sequence { tool.ToolOn() arm.Move(x=3, y=0, z=0.3) }"), emptyScene(), 1);
  const auto& t = report.perTrial.at(0);
  EXPECT_EQ(t.status, TickStatus::Failure);
  EXPECT_EQ(t.failureNode, std::optional<std::string>("root.0.1"));
  EXPECT_NE(t.failureReason.find("Unreachable"), std::string::npos) << t.failureReason;
}

TEST(Runtime, EventStreamHasEveryTransitionOnce) {
  const auto doc = assemblyPlan();
  const auto scene = assemblyScene();
  Bus bus;
  bus.createTopic(kEventsTopic);
  const auto report = runPlan(doc, scene, 42, {}, &bus);

  // Independent replay of the same trial with a direct event sink.
  Workcell cell(scene, 42);
  BehaviorTree bt(doc.tree, cell.components());
  std::vector<nlohmann::json> direct;
  bt.setEventSink([&](const NodeEvent& e) {
    direct.push_back({{"nodeId", e.nodeId}, {"status", std::string(toString(e.status))}, {"tickIndex", e.tickIndex}});
  });
  while (bt.tick() == TickStatus::Busy) cell.step();

  std::vector<nlohmann::json> streamed;
  for (auto e : eventsOfType(bus, "node_transition")) {
    streamed.push_back({{"nodeId", e.at("nodeId")}, {"status", e.at("status")}, {"tickIndex", e.at("tickIndex")}});
  }
  EXPECT_EQ(streamed, direct);
  EXPECT_EQ(bt.tickCount(), report.perTrial[0].tickCount);
  const auto finished = eventsOfType(bus, "trial_finished");
  ASSERT_EQ(finished.size(), 1u);
  EXPECT_EQ(finished[0].at("status"), std::string(toString(report.perTrial[0].status)));
}

TEST(Runtime, InvokeOperation) {
  Workcell cell(emptyScene());
  const auto ok = invokeOperation(cell, {"arm", "Move", {{"dz", 0.05}}});
  EXPECT_EQ(ok.status, TickStatus::Success);
  EXPECT_GT(ok.ticks, 1u);
  const auto bad = invokeOperation(cell, {"arm", "Move", {{"x", 5.0}, {"y", 0.0}, {"z", 0.0}}});
  EXPECT_EQ(bad.status, TickStatus::Failure);
  EXPECT_FALSE(bad.reason.empty());
  EXPECT_THROW(invokeOperation(cell, {"arm", "Dance", {}}), Error);
  EXPECT_THROW(invokeOperation(cell, {"arm", "Move", {{"dx", std::string("far")}}}), Error);
  const auto slow = invokeOperation(cell, {"predicator", "Wait", {{"ticks", 100.0}}}, 5);
  EXPECT_EQ(slow.status, TickStatus::Failure);
}

TEST(Runtime, OverridesOnlyTouchNoise) {
  RunOptions opts;
  opts.noisePos = 0.05;
  opts.dropout = 0.2;
  const Scene s = withOverrides(assemblyScene(), opts);
  EXPECT_DOUBLE_EQ(s.noise.posSigma, 0.05);
  EXPECT_DOUBLE_EQ(s.noise.dropoutProb, 0.2);
  EXPECT_DOUBLE_EQ(s.noise.rotSigma, assemblyScene().noise.rotSigma);
}

TEST(PlanIds, StableAndContentAddressed) {
  const auto a = parsePlan("sequence { arm.Move(dz=0.1, dx=0.2) }");
  const auto b = parsePlan("sequence {\n  arm.Move(dx=0.2, dz=0.1)\n}\n");
  EXPECT_EQ(planId(a), planId(b));
  EXPECT_EQ(planId(a).size(), 16u);
  EXPECT_EQ(planId(a).find_first_not_of("0123456789abcdef"), std::string::npos);
  EXPECT_NE(planId(a), planId(parsePlan("sequence { arm.Move(dz=0.1) }")));
}

TEST(PlanStore, PersistsAcrossInstances) {
  const auto dir = std::filesystem::path(testing::TempDir()) / "costar_plan_store";
  std::filesystem::remove_all(dir);
  const auto doc = assemblyPlan();
  std::string id;
  {
    PlanStore store(dir);
    id = store.put(doc);
    EXPECT_EQ(store.put(doc), id);
    EXPECT_EQ(store.ids().size(), 1u);
  }
  PlanStore reopened(dir);
  const auto back = reopened.get(id);
  ASSERT_TRUE(back);
  EXPECT_EQ(back->tree, doc.tree);
  EXPECT_EQ(back->name, "assembly");
  EXPECT_FALSE(reopened.get("0000000000000000"));
  EXPECT_TRUE(reopened.index().is_array() || reopened.index().is_object());
  PlanStore memory;
  EXPECT_EQ(memory.put(doc), id);
  std::filesystem::remove_all(dir);
}

TEST(Scenarios, PolishingFallsBackToWaitThenRecovers) {
  const std::string root = std::string(COSTAR_SOURCE_DIR) + "/data/";
  const auto doc = loadPlanFile(root + "plans/polishing.bt");
  const auto scene = loadScene(root + "scenes/polishing.yaml");
  EXPECT_TRUE(validatePlan(doc, scene).empty());
  Bus bus;
  bus.createTopic(kEventsTopic);
  ASSERT_TRUE(runPlan(doc, scene, 1, {}, &bus).allSucceeded());
  std::vector<std::pair<std::string, std::string>> selectorChildren;
  for (const auto& e : eventsOfType(bus, "node_transition")) {
    const std::string id = e.at("nodeId");
    if ((id == "root.0.1.0.0" || id == "root.0.1.0.1") && e.at("status") != "BUSY") {
      selectorChildren.emplace_back(id, e.at("status"));
    }
  }
  // Round one: the tool leaves position, the reset reports failure, the wait branch runs.
  // Round two: the passes complete.
  const std::vector<std::pair<std::string, std::string>> want{
      {"root.0.1.0.0", "FAILURE"}, {"root.0.1.0.1", "SUCCESS"}, {"root.0.1.0.0", "SUCCESS"}};
  EXPECT_EQ(selectorChildren, want);
}

TEST(Scenarios, WireBendingSucceeds) {
  const std::string root = std::string(COSTAR_SOURCE_DIR) + "/data/";
  const auto doc = loadPlanFile(root + "plans/wire_bending.bt");
  const auto scene = loadScene(root + "scenes/wire_bending.yaml");
  EXPECT_TRUE(validatePlan(doc, scene).empty());
  const auto report = runBatch(doc, scene, 5, 0);
  EXPECT_TRUE(report.allSucceeded()) << reportToString(report);
}
