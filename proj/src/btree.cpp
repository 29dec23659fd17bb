#include "costar/btree.hpp"

#include <set>

namespace costar {

std::string_view toString(TickStatus s) {
  switch (s) {
    case TickStatus::Success: return "SUCCESS";
    case TickStatus::Busy: return "BUSY";
    case TickStatus::Failure: return "FAILURE";
  }
  return "?";
}

std::string_view toString(NodeKind k) {
  switch (k) {
    case NodeKind::Root: return "Root";
    case NodeKind::Sequence: return "Sequence";
    case NodeKind::Selector: return "Selector";
    case NodeKind::Repeat: return "Repeat";
    case NodeKind::Reset: return "Reset";
    case NodeKind::Leaf: return "Leaf";
  }
  return "?";
}

bool structurallyEqual(const BTNode& a, const BTNode& b) {
  if (a.kind != b.kind || a.children.size() != b.children.size()) return false;
  if ((a.kind == NodeKind::Repeat || a.kind == NodeKind::Reset) && a.count != b.count) return false;
  if (a.kind == NodeKind::Repeat && a.strict != b.strict) return false;
  if (a.kind == NodeKind::Leaf && !(a.binding == b.binding)) return false;
  for (std::size_t i = 0; i < a.children.size(); ++i) {
    if (!structurallyEqual(a.children[i], b.children[i])) return false;
  }
  return true;
}

void assignNodeIds(BTNode& root, const std::string& rootId) {
  root.id = rootId;
  for (std::size_t i = 0; i < root.children.size(); ++i) {
    assignNodeIds(root.children[i], rootId + "." + std::to_string(i));
  }
}

BTNode makeRoot(BTNode top) {
  if (top.kind == NodeKind::Root) return top;
  BTNode root;
  root.kind = NodeKind::Root;
  root.children.push_back(std::move(top));
  return root;
}

BTNode leaf(std::string component, std::string operation, ParamMap params) {
  BTNode n;
  n.kind = NodeKind::Leaf;
  n.binding = {std::move(component), std::move(operation), std::move(params)};
  return n;
}

BTNode sequence(std::vector<BTNode> children) {
  BTNode n;
  n.kind = NodeKind::Sequence;
  n.children = std::move(children);
  return n;
}

BTNode selector(std::vector<BTNode> children) {
  BTNode n;
  n.kind = NodeKind::Selector;
  n.children = std::move(children);
  return n;
}

BTNode repeat(int count, BTNode child, bool strict) {
  BTNode n;
  n.kind = NodeKind::Repeat;
  n.count = count;
  n.strict = strict;
  n.children.push_back(std::move(child));
  return n;
}

BTNode resetNode(int count, BTNode child) {
  BTNode n;
  n.kind = NodeKind::Reset;
  n.count = count;
  n.children.push_back(std::move(child));
  return n;
}

namespace {

void validateNode(const BTNode& n, bool isTop, const OperationProvider* ops,
                  std::set<std::string>& seen, std::vector<Diagnostic>& out) {
  auto report = [&](ErrorCode code, std::string msg) { out.push_back({n.id, code, std::move(msg)}); };

  if (!n.id.empty() && !seen.insert(n.id).second) {
    report(ErrorCode::DuplicateId, "duplicate node id '" + n.id + "'");
  }
  const std::string kind(toString(n.kind));
  switch (n.kind) {
    case NodeKind::Root:
      if (!isTop) report(ErrorCode::MalformedTree, "Root may only appear at the top of a tree");
      if (n.children.size() != 1) report(ErrorCode::MalformedTree, "Root requires exactly one child");
      break;
    case NodeKind::Sequence:
    case NodeKind::Selector:
      if (n.children.empty()) report(ErrorCode::MalformedTree, kind + " requires at least one child");
      break;
    case NodeKind::Repeat:
    case NodeKind::Reset:
      if (n.children.size() != 1) report(ErrorCode::MalformedTree, kind + " requires exactly one child");
      if (n.count < 0) report(ErrorCode::MalformedTree, kind + " count must be non-negative");
      if (n.kind == NodeKind::Repeat && n.count == 0 && !n.children.empty()) {
        out.push_back({n.children.front().id, ErrorCode::MalformedTree,
                       "unreachable: parent Repeat 0 never ticks its child"});
      }
      break;
    case NodeKind::Leaf:
      if (!n.children.empty()) report(ErrorCode::MalformedTree, "Leaf must not have children");
      if (ops) {
        const auto& b = n.binding;
        if (!ops->hasOperation(b.component, b.operation)) {
          report(ErrorCode::UnboundOperation,
                 "unknown operation '" + b.component + "." + b.operation + "'");
        } else {
          for (auto& problem : ops->checkParams(b)) report(ErrorCode::InvalidParameter, problem);
        }
      }
      break;
  }
  for (const auto& c : n.children) validateNode(c, false, ops, seen, out);
}

}  // namespace

std::vector<Diagnostic> validate(const BTNode& root, const OperationProvider* ops) {
  std::vector<Diagnostic> out;
  std::set<std::string> seen;
  validateNode(root, true, ops, seen, out);
  return out;
}

BehaviorTree::BehaviorTree(BTNode root, OperationProvider& ops)
    : root_(makeRoot(std::move(root))), ops_(ops) {
  if (root_.id.empty()) assignNodeIds(root_);
  auto diags = validate(root_, &ops_);
  if (!diags.empty()) {
    const auto& d = diags.front();
    throw Error(d.code == ErrorCode::UnboundOperation ? ErrorCode::UnboundOperation
                                                      : ErrorCode::MalformedTree,
                d.nodeId + ": " + d.message);
  }
  build(root_);
}

BehaviorTree::~BehaviorTree() = default;

std::size_t BehaviorTree::build(const BTNode& n) {
  const std::size_t i = nodes_.size();
  nodes_.emplace_back();
  nodes_[i].node = &n;
  byId_[n.id] = i;
  for (const auto& c : n.children) {
    const std::size_t ci = build(c);
    nodes_[i].children.push_back(ci);
  }
  return i;
}

TickStatus BehaviorTree::tick() {
  ++tick_;
  return tickNode(0);
}

void BehaviorTree::emit(Runtime& rt, TickStatus s) {
  if (rt.state.last == s) return;
  rt.state.last = s;
  if (sink_) sink_({rt.node->id, s, tick_});
}

void BehaviorTree::restart(std::size_t i) {
  auto& rt = nodes_[i];
  switch (rt.node->kind) {
    case NodeKind::Sequence:
    case NodeKind::Selector:
      rt.state.childIndex = 0;
      for (auto c : rt.children) resetIndex(c);
      break;
    case NodeKind::Repeat:
      rt.state.counter = 0;
      for (auto c : rt.children) resetIndex(c);
      break;
    case NodeKind::Root:
    case NodeKind::Reset:
    case NodeKind::Leaf:
      break;
  }
}

TickStatus BehaviorTree::tickNode(std::size_t i) {
  auto& rt = nodes_[i];
  if (rt.state.phase == NodePhase::Done) restart(i);
  rt.state.phase = NodePhase::Running;

  TickStatus s = TickStatus::Busy;
  switch (rt.node->kind) {
    case NodeKind::Root:
      s = tickNode(rt.children.front());
      break;
    case NodeKind::Sequence:
    case NodeKind::Selector: {
      // Sequence stops on the first FAILURE, Selector on the first SUCCESS.
      const TickStatus stopOn =
          rt.node->kind == NodeKind::Sequence ? TickStatus::Failure : TickStatus::Success;
      const TickStatus exhausted =
          rt.node->kind == NodeKind::Sequence ? TickStatus::Success : TickStatus::Failure;
      s = exhausted;
      while (rt.state.childIndex < rt.children.size()) {
        const TickStatus cs = tickNode(rt.children[rt.state.childIndex]);
        if (cs == TickStatus::Busy || cs == stopOn) {
          s = cs;
          break;
        }
        ++rt.state.childIndex;
      }
      break;
    }
    case NodeKind::Repeat: {
      if (rt.state.counter >= rt.node->count) {
        s = TickStatus::Success;
        break;
      }
      const std::size_t c = rt.children.front();
      const TickStatus cs = tickNode(c);
      if (cs == TickStatus::Busy) {
        s = TickStatus::Busy;
      } else if (cs == TickStatus::Failure && rt.node->strict) {
        s = TickStatus::Failure;
      } else {
        ++rt.state.counter;
        resetIndex(c);
        s = rt.state.counter >= rt.node->count ? TickStatus::Success : TickStatus::Busy;
      }
      break;
    }
    case NodeKind::Reset: {
      const std::size_t c = rt.children.front();
      s = tickNode(c);
      if (s == TickStatus::Failure && rt.state.resetsUsed < rt.node->count) {
        ++rt.state.resetsUsed;
        resetIndex(c);
      }
      break;
    }
    case NodeKind::Leaf:
      s = tickLeaf(rt);
      break;
  }

  if (s != TickStatus::Busy) rt.state.phase = NodePhase::Done;
  emit(rt, s);
  return s;
}

TickStatus BehaviorTree::tickLeaf(Runtime& rt) {
  std::string reason;
  TickStatus s = TickStatus::Failure;
  try {
    if (!rt.task) rt.task = ops_.start(rt.node->binding);
    s = rt.task->tick();
    if (s == TickStatus::Failure) reason = rt.task->failureReason();
  } catch (const Error& e) {
    reason = e.what();
  }
  if (s != TickStatus::Busy) rt.task.reset();
  if (s == TickStatus::Failure) lastFailure_ = LeafFailure{rt.node->id, reason, tick_};
  return s;
}

void BehaviorTree::resetIndex(std::size_t i) {
  auto& rt = nodes_[i];
  if (rt.task) {
    rt.task->halt();
    rt.task.reset();
  }
  rt.state = NodeState{};
  for (auto c : rt.children) resetIndex(c);
}

void BehaviorTree::resetSubtree(const std::string& nodeId) {
  auto it = byId_.find(nodeId);
  if (it == byId_.end()) throw Error(ErrorCode::NotFound, "no node '" + nodeId + "'");
  resetIndex(it->second);
}

NodeState BehaviorTree::state(const std::string& nodeId) const {
  auto it = byId_.find(nodeId);
  if (it == byId_.end()) throw Error(ErrorCode::NotFound, "no node '" + nodeId + "'");
  return nodes_[it->second].state;
}

}  // namespace costar
