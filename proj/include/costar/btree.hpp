#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "costar/error.hpp"

namespace costar {

enum class TickStatus { Success, Busy, Failure };

std::string_view toString(TickStatus s);

enum class NodeKind { Root, Sequence, Selector, Repeat, Reset, Leaf };

std::string_view toString(NodeKind k);

struct SymbolRef {
  std::string name;
  bool operator==(const SymbolRef&) const = default;
};

/// Leaf parameters are scalars or late-bound symbol references.
using ParamValue = std::variant<std::string, double, bool, SymbolRef>;
using ParamMap = std::map<std::string, ParamValue>;

struct OpBinding {
  std::string component;
  std::string operation;
  ParamMap params;

  bool operator==(const OpBinding&) const = default;
};

/// Tree structure only; execution state lives in BehaviorTree.
struct BTNode {
  std::string id;
  NodeKind kind = NodeKind::Sequence;
  int count = 0;        // N of Repeat / Reset
  bool strict = false;  // Repeat: stop with FAILURE on the first child failure
  OpBinding binding;    // Leaf only
  std::vector<BTNode> children;

  bool operator==(const BTNode&) const = default;
};

/// Equality ignoring node ids.
bool structurallyEqual(const BTNode& a, const BTNode& b);

/// Gives every node a path id: "root", "root.0", "root.0.2", ...
void assignNodeIds(BTNode& root, const std::string& rootId = "root");

/// Wraps `top` in a Root node unless it already is one.
BTNode makeRoot(BTNode top);

BTNode leaf(std::string component, std::string operation, ParamMap params = {});
BTNode sequence(std::vector<BTNode> children);
BTNode selector(std::vector<BTNode> children);
BTNode repeat(int n, BTNode child, bool strict = false);
BTNode resetNode(int n, BTNode child);

/// A running operation. Polled once per tick until it reports a terminal status.
class ActionTask {
 public:
  virtual ~ActionTask() = default;
  virtual TickStatus tick() = 0;
  /// Called when the owning leaf is reset while the task is still running.
  virtual void halt() {}
  virtual std::string failureReason() const { return {}; }
};

/// Resolves leaf bindings to runnable tasks.
class OperationProvider {
 public:
  virtual ~OperationProvider() = default;
  virtual bool hasOperation(const std::string& component, const std::string& operation) const = 0;
  /// Problems with the parameter map, empty when acceptable.
  virtual std::vector<std::string> checkParams(const OpBinding&) const { return {}; }
  /// May throw costar::Error; the leaf then fails with that error as reason.
  virtual std::unique_ptr<ActionTask> start(const OpBinding& binding) = 0;
};

struct Diagnostic {
  std::string nodeId;
  ErrorCode code = ErrorCode::MalformedTree;
  std::string message;
};

/// Arity violations, unknown operations (when `ops` is given), bad parameters,
/// duplicate ids and unreachable nodes. Empty iff the tree is executable.
std::vector<Diagnostic> validate(const BTNode& root, const OperationProvider* ops = nullptr);

struct NodeEvent {
  std::string nodeId;
  TickStatus status = TickStatus::Busy;
  std::uint64_t tickIndex = 0;
};

enum class NodePhase { Fresh, Running, Done };

struct NodeState {
  NodePhase phase = NodePhase::Fresh;
  std::optional<TickStatus> last;
  std::size_t childIndex = 0;  // Sequence / Selector resume point
  int counter = 0;             // Repeat: terminal child results seen
  int resetsUsed = 0;          // Reset: budget consumed
};

struct LeafFailure {
  std::string nodeId;
  std::string reason;
  std::uint64_t tickIndex = 0;
};

/// Tick-driven executor with memory: Sequence and Selector resume at the child
/// that reported BUSY. A node that finished is restarted the next time it is
/// ticked. Repeat N finishes after N terminal child results; Reset N turns up
/// to N child failures into a child reset plus FAILURE.
class BehaviorTree {
 public:
  /// Throws Error(MalformedTree | UnboundOperation) if validate() reports anything.
  BehaviorTree(BTNode root, OperationProvider& ops);
  ~BehaviorTree();
  BehaviorTree(const BehaviorTree&) = delete;
  BehaviorTree& operator=(const BehaviorTree&) = delete;

  TickStatus tick();
  std::uint64_t tickCount() const { return tick_; }

  /// Returns a node and its descendants to Fresh with all counters cleared.
  void resetSubtree(const std::string& nodeId);
  void reset() { resetSubtree(root_.id); }

  const BTNode& root() const { return root_; }
  NodeState state(const std::string& nodeId) const;
  const std::optional<LeafFailure>& lastFailure() const { return lastFailure_; }

  void setEventSink(std::function<void(const NodeEvent&)> sink) { sink_ = std::move(sink); }

 private:
  struct Runtime {
    const BTNode* node = nullptr;
    std::vector<std::size_t> children;
    NodeState state;
    std::unique_ptr<ActionTask> task;
  };

  std::size_t build(const BTNode& n);
  TickStatus tickNode(std::size_t i);
  TickStatus tickLeaf(Runtime& rt);
  void restart(std::size_t i);
  void resetIndex(std::size_t i);
  void emit(Runtime& rt, TickStatus s);

  BTNode root_;
  OperationProvider& ops_;
  std::vector<Runtime> nodes_;
  std::map<std::string, std::size_t> byId_;
  std::uint64_t tick_ = 0;
  std::optional<LeafFailure> lastFailure_;
  std::function<void(const NodeEvent&)> sink_;
};

}  // namespace costar
