#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "costar/plan_dsl.hpp"
#include "oracles.hpp"

using namespace costar;

namespace {

const BTNode& top(const PlanDocument& d) { return d.tree.children.at(0); }

BTNode withIds(BTNode n) {
  n = makeRoot(std::move(n));
  assignNodeIds(n);
  return n;
}

struct Fixture {
  std::string file;
  std::string text;
  std::size_t line = 0, column = 0;
  std::string fragment;
};

std::vector<Fixture> badPlanFixtures() {
  std::vector<Fixture> out;
  const auto dir = std::filesystem::path(COSTAR_SOURCE_DIR) / "tests" / "fixtures" / "bad_plans";
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    std::ifstream in(e.path());
    std::stringstream ss;
    ss << in.rdbuf();
    Fixture f{e.path().filename().string(), ss.str()};
    std::istringstream header(f.text.substr(0, f.text.find('\n')));
    std::string hash, word, pos;
    header >> hash >> word >> pos;
    f.line = std::stoul(pos.substr(0, pos.find(':')));
    f.column = std::stoul(pos.substr(pos.find(':') + 1));
    std::getline(header >> std::ws, f.fragment);
    out.push_back(f);
  }
  std::sort(out.begin(), out.end(), [](const Fixture& a, const Fixture& b) { return a.file < b.file; });
  return out;
}

}  // namespace

TEST(Parse, SequenceWithOneLeaf) {
  const auto d = parsePlan("sequence { arm.Move(goal=@home) }");
  EXPECT_EQ(d.tree.kind, NodeKind::Root);
  EXPECT_EQ(top(d).kind, NodeKind::Sequence);
  ASSERT_EQ(top(d).children.size(), 1u);
  const auto& b = top(d).children[0].binding;
  EXPECT_EQ(b.component, "arm");
  EXPECT_EQ(b.operation, "Move");
  EXPECT_EQ(b.params.at("goal"), ParamValue(SymbolRef{"home"}));
  EXPECT_EQ(d.tree, withIds(sequence({leaf("arm", "Move", {{"goal", SymbolRef{"home"}}})})));
}

TEST(Parse, RepeatWrapsLeaf) {
  const auto d = parsePlan("repeat 3 { gripper.Close() }");
  EXPECT_EQ(top(d).kind, NodeKind::Repeat);
  EXPECT_EQ(top(d).count, 3);
  EXPECT_FALSE(top(d).strict);
  EXPECT_EQ(d.tree, withIds(repeat(3, leaf("gripper", "Close"))));
  EXPECT_TRUE(top(parsePlan("repeat 2 strict { gripper.Close() }")).strict);
}

TEST(Parse, PolishingShape) {
  const std::string text = R"plan(plan "polishing"
# keep polishing until the tool leaves position; the wait gesture takes over otherwise
selector {
  reset 3 {
    sequence {
      predicator.Check(predicate="ToolInPosition()")
      tool.ToolOn()
      arm.Move(dx=0.05)
      arm.Move(dx=-0.05)
      tool.ToolOff()
    }
  }
  sequence {
    tool.ToolOff()
    predicator.Wait(ticks=20)
  }
}
)plan";
  const auto d = parsePlan(text);
  EXPECT_EQ(d.name, "polishing");
  const BTNode& sel = top(d);
  ASSERT_EQ(sel.kind, NodeKind::Selector);
  ASSERT_EQ(sel.children.size(), 2u);
  EXPECT_EQ(sel.children[0].kind, NodeKind::Reset);
  EXPECT_EQ(sel.children[0].count, 3);
  ASSERT_EQ(sel.children[0].children.size(), 1u);
  EXPECT_EQ(sel.children[0].children[0].kind, NodeKind::Sequence);
  EXPECT_EQ(sel.children[0].children[0].children.size(), 5u);
  EXPECT_EQ(sel.children[1].kind, NodeKind::Sequence);
  EXPECT_EQ(sel.children[1].children[1].binding.params.at("ticks"), ParamValue(20.0));
  EXPECT_EQ(sel.children[0].id, "root.0.0");
  // Every node has a span that covers its own source text.
  for (const auto& [id, span] : d.spans) {
    EXPECT_LE(span.offset + span.length, text.size()) << id;
  }
  EXPECT_EQ(text.substr(d.spans.at("root.0.1").offset, 8), "sequence");
  EXPECT_EQ(d.spans.at("root.0.0").line, 4u);
  EXPECT_EQ(d.spans.at("root.0.0").column, 3u);
}

TEST(Parse, ValueForms) {
  const auto d = parsePlan(R"(t.Op(a=1.5e-3, b=true, c=false, d=node, e="q\"x\\\n", f=@s_1, g=-2))");
  const auto& p = top(d).binding.params;
  EXPECT_EQ(p.at("a"), ParamValue(1.5e-3));
  EXPECT_EQ(p.at("b"), ParamValue(true));
  EXPECT_EQ(p.at("c"), ParamValue(false));
  EXPECT_EQ(p.at("d"), ParamValue(std::string("node")));
  EXPECT_EQ(p.at("e"), ParamValue(std::string("q\"x\\\n")));
  EXPECT_EQ(p.at("f"), ParamValue(SymbolRef{"s_1"}));
  EXPECT_EQ(p.at("g"), ParamValue(-2.0));
}

TEST(Parse, AssemblyPlanFile) {
  const auto d = loadPlanFile(std::string(COSTAR_SOURCE_DIR) + "/data/plans/assembly.bt");
  EXPECT_EQ(d.name, "assembly");
  EXPECT_EQ(top(d).kind, NodeKind::Sequence);
  EXPECT_TRUE(validate(d.tree).empty());
}

TEST(Serialize, EmptySequence) {
  PlanDocument d;
  d.tree = makeRoot(sequence({}));
  EXPECT_EQ(serializePlan(d), "sequence { }\n");
}

TEST(Serialize, CanonicalLayout) {
  PlanDocument d;
  d.name = "demo";
  d.tree = withIds(sequence({repeat(2, leaf("gripper", "Close")), leaf("arm", "Move", {{"goal", SymbolRef{"home"}}})}));
  EXPECT_EQ(serializePlan(d),
            "plan \"demo\"\n\n"
            "sequence {\n"
            "  repeat 2 {\n"
            "    gripper.Close()\n"
            "  }\n"
            "  arm.Move(goal=@home)\n"
            "}\n");
}

TEST(Serialize, KeyOrderIsCanonical) {
  const auto a = parsePlan("arm.Move(z=1, a=2, m=@x)");
  const auto b = parsePlan("arm.Move(m=@x, z=1, a=2)");
  EXPECT_EQ(serializePlan(a), serializePlan(b));
  EXPECT_EQ(serializePlan(a), "arm.Move(a=2, m=@x, z=1)\n");
}

TEST(Properties, RandomRoundTrip) {
  std::mt19937_64 rng(31);
  for (int i = 0; i < 500; ++i) {
    const PlanDocument d = oracle::randomPlan(rng);
    const std::string text = serializePlan(d);
    PlanDocument back;
    ASSERT_NO_THROW(back = parsePlan(text)) << text;
    EXPECT_EQ(back.name, d.name);
    ASSERT_EQ(back.tree, d.tree) << text;
    EXPECT_EQ(serializePlan(back), text);
  }
}

TEST(Properties, JsonMirrorRoundTrip) {
  std::mt19937_64 rng(32);
  for (int i = 0; i < 200; ++i) {
    const PlanDocument d = oracle::randomPlan(rng);
    const PlanDocument back = planFromJson(nlohmann::json::parse(planToJson(d).dump()));
    EXPECT_EQ(back.name, d.name);
    EXPECT_EQ(back.tree, d.tree);
  }
}

TEST(Errors, FixturesReportSpans) {
  const auto fixtures = badPlanFixtures();
  ASSERT_GE(fixtures.size(), 10u);
  for (const auto& f : fixtures) {
    try {
      parsePlan(f.text);
      ADD_FAILURE() << f.file << " parsed";
    } catch (const PlanSyntaxError& e) {
      EXPECT_EQ(e.code(), ErrorCode::SyntaxError);
      EXPECT_EQ(e.span().line, f.line) << f.file << ": " << e.what();
      EXPECT_EQ(e.span().column, f.column) << f.file << ": " << e.what();
      EXPECT_NE(e.detail().find(f.fragment), std::string::npos) << f.file << ": " << e.what();
      EXPECT_LE(e.span().offset, f.text.size()) << f.file;
    }
  }
}

TEST(Errors, TruncationsFailInsideText) {
  std::mt19937_64 rng(33);
  for (int i = 0; i < 100; ++i) {
    const std::string text = serializePlan(oracle::randomPlan(rng));
    const std::size_t cut = std::uniform_int_distribution<std::size_t>(0, text.size() - 1)(rng);
    const std::string part = text.substr(0, cut);
    try {
      parsePlan(part);
    } catch (const PlanSyntaxError& e) {
      EXPECT_LE(e.span().offset, part.size());
      EXPECT_GE(e.span().line, 1u);
      EXPECT_GE(e.span().column, 1u);
    }
  }
}

TEST(Errors, UnknownKeywordIsNeverALeaf) {
  EXPECT_THROW(parsePlan("parallel { arm.Open() }"), PlanSyntaxError);
  EXPECT_THROW(parsePlan("Sequence { arm.Open() }"), PlanSyntaxError);
  EXPECT_THROW(parsePlan("arm { }"), PlanSyntaxError);
}

TEST(Json, SchemaViolations) {
  EXPECT_THROW(planFromJson(nlohmann::json::parse(R"({"tree": {"kind": "loop"}})")), Error);
  EXPECT_THROW(nodeFromJson(nlohmann::json::parse(R"({"kind": "repeat", "children": []})")), Error);
  EXPECT_THROW(nodeFromJson(nlohmann::json::parse(R"({"kind": "leaf"})")), Error);
  EXPECT_EQ(paramFromJson(paramToJson(SymbolRef{"home"})), ParamValue(SymbolRef{"home"}));
}
