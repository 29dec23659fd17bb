#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <set>

namespace oracle {

using costar::BTNode;
using costar::NodeKind;
using costar::TickStatus;

// ----- geometry -----------------------------------------------------------

Eigen::Quaterniond randomRotation(std::mt19937_64& rng) {
  // Shoemake's uniform sampling.
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double u1 = u(rng), u2 = u(rng), u3 = u(rng);
  const double a = std::sqrt(1.0 - u1), b = std::sqrt(u1);
  const double t2 = 2.0 * std::numbers::pi * u2, t3 = 2.0 * std::numbers::pi * u3;
  return Eigen::Quaterniond(b * std::cos(t3), a * std::sin(t2), a * std::cos(t2), b * std::sin(t3));
}

double matrixAngle(const Eigen::Matrix3d& r) { return Eigen::AngleAxisd(r).angle(); }

double angleBetween(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b) { return matrixAngle(a.transpose() * b); }

std::vector<Eigen::Matrix3d> groupMatrices(const costar::SymmetryGroup& g) {
  std::vector<Eigen::Matrix3d> out;
  for (const auto& q : g.elements) out.push_back(q.toRotationMatrix());
  return out;
}

namespace {

std::array<double, 4> signedCoeffs(const Eigen::Matrix3d& r) {
  Eigen::Quaterniond q(r);
  q.normalize();
  std::array<double, 4> c{q.w(), q.x(), q.y(), q.z()};
  for (double v : c) {
    if (std::abs(v) < 1e-12) continue;
    if (v < 0) {
      for (double& x : c) x = -x;
    }
    break;
  }
  return c;
}

}  // namespace

Eigen::Matrix3d bruteCanonical(const Eigen::Matrix3d& rp, const std::vector<Eigen::Matrix3d>& group) {
  constexpr double tol = 1e-9;
  std::vector<Eigen::Matrix3d> cands;
  for (const auto& s : group) cands.push_back(rp * s);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& c : cands) best = std::min(best, matrixAngle(c));
  std::vector<Eigen::Matrix3d> tied;
  for (const auto& c : cands) {
    if (matrixAngle(c) <= best + tol) tied.push_back(c);
  }
  // Keep the candidates whose diagonal entry is maximal, axis by axis.
  for (int k : {2, 0, 1}) {
    double top = -2.0;
    for (const auto& c : tied) top = std::max(top, c(k, k));
    std::vector<Eigen::Matrix3d> next;
    for (const auto& c : tied) {
      if (c(k, k) >= top - tol) next.push_back(c);
    }
    tied = next;
  }
  return *std::max_element(tied.begin(), tied.end(), [](const Eigen::Matrix3d& a, const Eigen::Matrix3d& b) {
    const auto ca = signedCoeffs(a), cb = signedCoeffs(b);
    for (int i = 0; i < 4; ++i) {
      if (ca[i] > cb[i] + tol) return false;
      if (cb[i] > ca[i] + tol) return true;
    }
    return false;
  });
}

// ----- spatial index --------------------------------------------------------

std::optional<costar::IndexEntry> linearNearest(const std::vector<costar::IndexEntry>& entries,
                                                const Eigen::Vector3d& pos, const costar::NearestFilter& f) {
  std::optional<costar::IndexEntry> best;
  double bestD = 0.0;
  for (const auto& e : entries) {
    if (f.classLabel && e.classLabel != *f.classLabel) continue;
    const double d = (e.position - pos).norm();
    if (f.maxDistance && d > *f.maxDistance) continue;
    if (!best || d < bestD || (d == bestD && e.id < best->id)) {
      best = e;
      bestD = d;
    }
  }
  return best;
}

std::vector<GreedyMatcher::Item> GreedyMatcher::update(const std::vector<Item>& prior,
                                                       const std::vector<Item>& detected, double dmax) {
  std::vector<Item> pool = prior;
  std::set<std::string> taken;
  for (const auto& p : prior) taken.insert(p.id);
  std::vector<Item> out;
  for (const auto& d : detected) {
    auto best = pool.end();
    double bestD = 0.0;
    for (auto it = pool.begin(); it != pool.end(); ++it) {
      if (it->classLabel != d.classLabel) continue;
      const double dist = (it->position - d.position).norm();
      if (dist > dmax) continue;
      if (best == pool.end() || dist < bestD || (dist == bestD && it->id < best->id)) {
        best = it;
        bestD = dist;
      }
    }
    Item o = d;
    if (best != pool.end()) {
      o.id = best->id;
      pool.erase(best);
    } else {
      do {
        o.id = d.classLabel + "_" + std::to_string(++counters_[d.classLabel]);
      } while (taken.count(o.id));
    }
    taken.insert(o.id);
    out.push_back(o);
  }
  return out;
}

// ----- behavior trees -------------------------------------------------------

namespace {

struct RefNode {
  bool finished = false;
  std::size_t next = 0;
  int seen = 0;
  int resets = 0;
};

class Reference {
 public:
  Reference(const Scripts& s, std::vector<TraceRow>& rows) : scripts_(s), rows_(rows) {}

  TickStatus run(const BTNode& n) {
    RefNode& st = state_[&n];
    if (st.finished) {
      // Re-entry after completion: composites and Repeat start over, Reset keeps its budget.
      if (n.kind == NodeKind::Sequence || n.kind == NodeKind::Selector || n.kind == NodeKind::Repeat) clear(n);
    }
    RefNode& s = state_[&n];
    TickStatus r = TickStatus::Busy;
    switch (n.kind) {
      case NodeKind::Root:
        r = run(n.children[0]);
        break;
      case NodeKind::Sequence:
        r = TickStatus::Success;
        for (; s.next < n.children.size(); ++s.next) {
          const TickStatus c = run(n.children[s.next]);
          if (c != TickStatus::Success) {
            r = c;
            break;
          }
        }
        break;
      case NodeKind::Selector:
        r = TickStatus::Failure;
        for (; s.next < n.children.size(); ++s.next) {
          const TickStatus c = run(n.children[s.next]);
          if (c != TickStatus::Failure) {
            r = c;
            break;
          }
        }
        break;
      case NodeKind::Repeat:
        if (s.seen >= n.count) {
          r = TickStatus::Success;
        } else {
          const TickStatus c = run(n.children[0]);
          if (c == TickStatus::Busy) {
            r = TickStatus::Busy;
          } else if (c == TickStatus::Failure && n.strict) {
            r = TickStatus::Failure;
          } else {
            ++s.seen;
            clear(n.children[0]);
            r = s.seen == n.count ? TickStatus::Success : TickStatus::Busy;
          }
        }
        break;
      case NodeKind::Reset:
        r = run(n.children[0]);
        if (r == TickStatus::Failure && s.resets < n.count) {
          ++s.resets;
          clear(n.children[0]);
        }
        break;
      case NodeKind::Leaf: {
        const std::string name = std::get<std::string>(n.binding.params.at("name"));
        const auto& script = scripts_.byLeaf.at(name);
        r = script[cursor_[name]++ % script.size()];
        rows_.push_back({tick, name, r});
        break;
      }
    }
    state_[&n].finished = r != TickStatus::Busy;
    return r;
  }

  std::uint64_t tick = 0;

 private:
  void clear(const BTNode& n) {
    state_[&n] = RefNode{};
    for (const auto& c : n.children) clear(c);
  }

  const Scripts& scripts_;
  std::vector<TraceRow>& rows_;
  std::map<const BTNode*, RefNode> state_;
  std::map<std::string, std::size_t> cursor_;
};

class ScriptedTask : public costar::ActionTask {
 public:
  ScriptedTask(ScriptedOps& ops, std::string name, const std::vector<TickStatus>& script, std::size_t& cursor)
      : ops_(ops), name_(std::move(name)), script_(script), cursor_(cursor) {}
  TickStatus tick() override {
    const TickStatus r = script_[cursor_++ % script_.size()];
    ops_.rows.push_back({ops_.tick, name_, r});
    return r;
  }

 private:
  ScriptedOps& ops_;
  std::string name_;
  const std::vector<TickStatus>& script_;
  std::size_t& cursor_;
};

}  // namespace

std::unique_ptr<costar::ActionTask> ScriptedOps::start(const costar::OpBinding& b) {
  const std::string name = std::get<std::string>(b.params.at("name"));
  return std::make_unique<ScriptedTask>(*this, name, scripts_.byLeaf.at(name), cursor_[name]);
}

BTNode scriptedLeaf(const std::string& name) { return costar::leaf("test", "Leaf", {{"name", name}}); }

std::vector<TraceRow> referenceTrace(const BTNode& root, const Scripts& scripts, int ticks) {
  std::vector<TraceRow> rows;
  const BTNode top = costar::makeRoot(root);
  Reference ref(scripts, rows);
  for (int t = 0; t < ticks; ++t) {
    ref.tick = static_cast<std::uint64_t>(t);
    const TickStatus r = ref.run(top);
    rows.push_back({ref.tick, "", r});
  }
  return rows;
}

std::vector<TraceRow> engineTrace(const BTNode& root, const Scripts& scripts, int ticks) {
  ScriptedOps ops(scripts);
  costar::BehaviorTree tree(root, ops);
  for (int t = 0; t < ticks; ++t) {
    ops.tick = static_cast<std::uint64_t>(t);
    const TickStatus r = tree.tick();
    ops.rows.push_back({ops.tick, "", r});
  }
  return ops.rows;
}

BTNode randomTree(std::mt19937_64& rng, int maxDepth, Scripts& scripts) {
  std::uniform_int_distribution<int> kindPick(0, 9);
  std::uniform_int_distribution<int> width(1, 4);
  std::uniform_int_distribution<int> small(1, 3);
  std::uniform_int_distribution<int> budget(0, 3);
  std::uniform_int_distribution<int> scriptLen(1, 4);
  std::uniform_int_distribution<int> status(0, 2);
  std::bernoulli_distribution coin(0.5);

  std::function<BTNode(int)> make = [&](int depth) -> BTNode {
    const int k = depth >= maxDepth ? 9 : kindPick(rng);
    if (k <= 3) {
      std::vector<BTNode> kids;
      const int w = width(rng);
      for (int i = 0; i < w; ++i) kids.push_back(make(depth + 1));
      return k <= 1 ? costar::sequence(std::move(kids)) : costar::selector(std::move(kids));
    }
    if (k == 4 || k == 5) return costar::repeat(small(rng), make(depth + 1), coin(rng));
    if (k == 6) return costar::resetNode(budget(rng), make(depth + 1));
    const std::string name = "l" + std::to_string(scripts.byLeaf.size());
    std::vector<TickStatus> script;
    const int len = scriptLen(rng);
    for (int i = 0; i < len; ++i) script.push_back(static_cast<TickStatus>(status(rng)));
    scripts.byLeaf[name] = script;
    return scriptedLeaf(name);
  };
  return make(0);
}

// ----- plan DSL -------------------------------------------------------------

costar::PlanDocument randomPlan(std::mt19937_64& rng) {
  static const std::vector<std::string> comps{"arm", "gripper", "tool", "perception", "predicator", "c_9", "X1"};
  static const std::vector<std::string> ops{"Move", "Open", "Close", "SmartMove", "Check", "Wait", "op_2"};
  static const std::vector<std::string> keys{"goal", "x", "dz", "speed", "class", "predicate", "name", "k_1", "Z"};
  static const std::string alphabet = "abcXYZ019 _-.,(){}[]@#\"\\\n\t:;=+*/'<>!?";
  std::uniform_int_distribution<int> kindPick(0, 6);
  std::uniform_int_distribution<int> width(1, 3);
  std::uniform_int_distribution<int> small(0, 5);
  std::uniform_int_distribution<int> valueKind(0, 5);
  std::uniform_real_distribution<double> real(-1e3, 1e3);
  std::uniform_int_distribution<int> expo(-12, 12);
  std::bernoulli_distribution coin(0.5);

  auto pick = [&](const std::vector<std::string>& v) {
    return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
  };
  auto randomString = [&] {
    std::string s;
    const int n = small(rng) * 2;
    for (int i = 0; i < n; ++i) s += alphabet[std::uniform_int_distribution<std::size_t>(0, alphabet.size() - 1)(rng)];
    return s;
  };
  auto randomValue = [&]() -> costar::ParamValue {
    switch (valueKind(rng)) {
      case 0: return real(rng);
      case 1: return std::ldexp(real(rng), expo(rng) * 4);
      case 2: return static_cast<double>(small(rng) - 2);
      case 3: return coin(rng);
      case 4: return costar::SymbolRef{pick(keys) + "_" + std::to_string(small(rng))};
      default: return coin(rng) ? randomString() : pick(comps);
    }
  };

  std::function<BTNode(int)> make = [&](int depth) -> BTNode {
    const int k = depth >= 4 ? 6 : kindPick(rng);
    if (k <= 3) {
      std::vector<BTNode> kids;
      const int w = width(rng);
      for (int i = 0; i < w; ++i) kids.push_back(make(depth + 1));
      return k <= 1 ? costar::sequence(std::move(kids)) : costar::selector(std::move(kids));
    }
    if (k == 4) return costar::repeat(small(rng), make(depth + 1), coin(rng));
    if (k == 5) return costar::resetNode(small(rng), make(depth + 1));
    costar::ParamMap params;
    const int n = small(rng) % 4;
    for (int i = 0; i < n; ++i) params[pick(keys)] = randomValue();
    return costar::leaf(pick(comps), pick(ops), std::move(params));
  };

  costar::PlanDocument doc;
  if (coin(rng)) doc.name = randomString();
  doc.tree = costar::makeRoot(make(0));
  costar::assignNodeIds(doc.tree);
  return doc;
}

// ----- SmartMove --------------------------------------------------------------

Eigen::Isometry3d toIso(const costar::Pose& p) {
  Eigen::Isometry3d t = Eigen::Isometry3d::Identity();
  t.linear() = p.orientation.toRotationMatrix();
  t.translation() = p.position;
  return t;
}

std::optional<SmartChoice> bruteSmartMove(const std::vector<SmartObject>& objs, const Eigen::Isometry3d& endpoint,
                                          double lambda, const Shell& shell, double tieTol) {
  std::vector<SmartChoice> all;
  for (const auto& o : objs) {
    for (std::size_t k = 0; k < o.symmetry.size(); ++k) {
      Eigen::Isometry3d s = Eigen::Isometry3d::Identity();
      s.linear() = o.symmetry[k];
      const Eigen::Isometry3d g = o.pose * s * o.relative;
      const double r = g.translation().norm();
      if (r < shell.rMin || r > shell.rMax || g.translation().z() < shell.table) continue;
      const double cost = (g.translation() - endpoint.translation()).norm() +
                          lambda * angleBetween(g.linear(), endpoint.linear());
      all.push_back({o.id, k, g, cost});
    }
  }
  if (all.empty()) return std::nullopt;
  double best = std::numeric_limits<double>::infinity();
  for (const auto& c : all) best = std::min(best, c.cost);
  std::optional<SmartChoice> out;
  for (const auto& c : all) {
    if (c.cost > best + tieTol) continue;
    if (!out || std::tie(c.id, c.element) < std::tie(out->id, out->element)) out = c;
  }
  return out;
}

// ----- calibration ------------------------------------------------------------

namespace {

Eigen::Isometry3d randomTransform(std::mt19937_64& rng, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Eigen::Isometry3d t = Eigen::Isometry3d::Identity();
  t.linear() = randomRotation(rng).toRotationMatrix();
  t.translation() = Eigen::Vector3d(u(rng), u(rng), u(rng));
  return t;
}

}  // namespace

HandEyeCase syntheticHandEye(std::uint64_t seed, int n, double sigmaDeg) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  HandEyeCase c;
  c.x = randomTransform(rng, 0.5);
  for (int i = 0; i < n; ++i) {
    const Eigen::Isometry3d a = randomTransform(rng, 0.3);
    Eigen::Isometry3d b = c.x.inverse() * a * c.x;
    if (sigmaDeg > 0.0) {
      const Eigen::Vector3d axis = Eigen::Vector3d(normal(rng), normal(rng), normal(rng)).normalized();
      const double angle = sigmaDeg * std::numbers::pi / 180.0 * normal(rng);
      b.linear() = b.linear() * Eigen::AngleAxisd(angle, axis).toRotationMatrix();
    }
    c.pairs.emplace_back(a, b);
  }
  return c;
}

double transformError(const Eigen::Isometry3d& a, const Eigen::Isometry3d& b) {
  return (a.translation() - b.translation()).norm() + angleBetween(a.linear(), b.linear());
}

}  // namespace oracle
