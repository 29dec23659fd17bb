#include "costar/spatial_index.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <sstream>
#include <stdexcept>
#include <utility>

#include "costar/error.hpp"

namespace costar {

// ---------------------------------------------------------------------------
// Box

void Box::expand(const Box& other) {
  lo = lo.cwiseMin(other.lo);
  hi = hi.cwiseMax(other.hi);
}

bool Box::contains(const Eigen::Vector3d& p) const {
  return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all();
}

bool Box::contains(const Box& other) const {
  return (other.lo.array() >= lo.array()).all() && (other.hi.array() <= hi.array()).all();
}

double Box::volume() const {
  if (!valid()) return 0.0;
  const Eigen::Vector3d d = hi - lo;
  return d.x() * d.y() * d.z();
}

double Box::margin() const {
  if (!valid()) return 0.0;
  return (hi - lo).sum();
}

double Box::overlap(const Box& other) const {
  double v = 1.0;
  for (int k = 0; k < 3; ++k) {
    const double extent = std::min(hi[k], other.hi[k]) - std::max(lo[k], other.lo[k]);
    if (extent <= 0.0) return 0.0;
    v *= extent;
  }
  return v;
}

double Box::minDistanceSquared(const Eigen::Vector3d& p) const {
  double d2 = 0.0;
  for (int k = 0; k < 3; ++k) {
    double d = 0.0;
    if (p[k] < lo[k]) d = lo[k] - p[k];
    else if (p[k] > hi[k]) d = p[k] - hi[k];
    d2 += d * d;
  }
  return d2;
}

// ---------------------------------------------------------------------------
// Node

struct RStarTree::Node {
  bool leaf = true;
  Box box;
  std::vector<IndexEntry> entries;
  std::vector<std::unique_ptr<Node>> children;

  std::size_t count() const { return leaf ? entries.size() : children.size(); }

  void recomputeBox() {
    box = Box{};
    if (leaf) {
      for (const auto& e : entries) box.expand(Box::point(e.position));
    } else {
      for (const auto& c : children) box.expand(c->box);
    }
  }

  std::unique_ptr<Node> clone() const {
    auto n = std::make_unique<Node>();
    n->leaf = leaf;
    n->box = box;
    n->entries = entries;
    for (const auto& c : children) n->children.push_back(c->clone());
    return n;
  }

  void collect(std::vector<IndexEntry>& out) const {
    if (leaf) {
      out.insert(out.end(), entries.begin(), entries.end());
    } else {
      for (const auto& c : children) c->collect(out);
    }
  }
};

namespace {

double squaredDistance(const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
  const double dx = a.x() - b.x();
  const double dy = a.y() - b.y();
  const double dz = a.z() - b.z();
  return dx * dx + dy * dy + dz * dz;
}

void checkParams(const TreeParams& p) {
  if (p.maxChildren < 2 || p.minChildren < 1 || 2 * p.minChildren > p.maxChildren + 1) {
    throw std::invalid_argument("invalid R*-tree fan-out parameters");
  }
}

// Smallest s with s^3 >= n.
std::size_t cubeRootCeil(std::size_t n) {
  std::size_t s = 1;
  while (s * s * s < n) ++s;
  return s;
}

// Sort-Tile-Recursive grouping in three dimensions: slabs along x, runs along
// y inside each slab, groups of `cap` along z inside each run.
template <class T, class CenterFn, class TieLess>
std::vector<std::vector<T>> strTiles(std::vector<T> items, std::size_t cap, CenterFn center,
                                     TieLess tieLess) {
  std::vector<std::vector<T>> groups;
  if (items.empty()) return groups;
  const std::size_t pages = (items.size() + cap - 1) / cap;
  const std::size_t s = cubeRootCeil(pages);

  auto sortAxis = [&](auto first, auto last, int axis) {
    std::stable_sort(first, last, [&](const T& a, const T& b) {
      const double ca = center(a)[axis];
      const double cb = center(b)[axis];
      if (ca != cb) return ca < cb;
      return tieLess(a, b);
    });
  };

  sortAxis(items.begin(), items.end(), 0);
  const std::size_t slabSize = s * s * cap;
  const std::size_t runSize = s * cap;
  for (std::size_t slab = 0; slab < items.size(); slab += slabSize) {
    const auto slabEnd = items.begin() + static_cast<std::ptrdiff_t>(std::min(items.size(), slab + slabSize));
    const auto slabBegin = items.begin() + static_cast<std::ptrdiff_t>(slab);
    sortAxis(slabBegin, slabEnd, 1);
    for (auto run = slabBegin; run < slabEnd;) {
      const auto runEnd = run + std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(runSize), slabEnd - run);
      sortAxis(run, runEnd, 2);
      for (auto g = run; g < runEnd;) {
        const auto gEnd = g + std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(cap), runEnd - g);
        groups.emplace_back(std::make_move_iterator(g), std::make_move_iterator(gEnd));
        g = gEnd;
      }
      run = runEnd;
    }
  }
  return groups;
}

// R* split: pick the axis with the smallest summed margin over all legal
// distributions, then the distribution with least overlap (ties: least volume).
template <class T, class BoxFn>
std::pair<std::vector<T>, std::vector<T>> rstarSplit(std::vector<T> items, std::size_t minFill,
                                                     BoxFn boxOf) {
  const std::size_t n = items.size();
  auto sorted = [&](int axis, bool byUpper) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      const Box ba = boxOf(items[a]);
      const Box bb = boxOf(items[b]);
      const double ka = byUpper ? ba.hi[axis] : ba.lo[axis];
      const double kb = byUpper ? bb.hi[axis] : bb.lo[axis];
      return ka < kb;
    });
    return order;
  };

  auto groupBoxes = [&](const std::vector<std::size_t>& order, std::size_t k) {
    Box b1, b2;
    for (std::size_t i = 0; i < n; ++i) (i < k ? b1 : b2).expand(boxOf(items[order[i]]));
    return std::make_pair(b1, b2);
  };

  int bestAxis = 0;
  double bestMargin = std::numeric_limits<double>::infinity();
  for (int axis = 0; axis < 3; ++axis) {
    double marginSum = 0.0;
    for (bool byUpper : {false, true}) {
      const auto order = sorted(axis, byUpper);
      for (std::size_t k = minFill; k + minFill <= n; ++k) {
        const auto [b1, b2] = groupBoxes(order, k);
        marginSum += b1.margin() + b2.margin();
      }
    }
    if (marginSum < bestMargin) {
      bestMargin = marginSum;
      bestAxis = axis;
    }
  }

  std::vector<std::size_t> bestOrder;
  std::size_t bestK = minFill;
  double bestOverlap = std::numeric_limits<double>::infinity();
  double bestVolume = std::numeric_limits<double>::infinity();
  for (bool byUpper : {false, true}) {
    const auto order = sorted(bestAxis, byUpper);
    for (std::size_t k = minFill; k + minFill <= n; ++k) {
      const auto [b1, b2] = groupBoxes(order, k);
      const double ov = b1.overlap(b2);
      const double vol = b1.volume() + b2.volume();
      if (ov < bestOverlap || (ov == bestOverlap && vol < bestVolume)) {
        bestOverlap = ov;
        bestVolume = vol;
        bestOrder = order;
        bestK = k;
      }
    }
  }

  std::pair<std::vector<T>, std::vector<T>> out;
  for (std::size_t i = 0; i < n; ++i) {
    (i < bestK ? out.first : out.second).push_back(std::move(items[bestOrder[i]]));
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// RStarTree

RStarTree::RStarTree(TreeParams params) : root_(std::make_unique<Node>()), params_(params) {
  checkParams(params_);
}

RStarTree::RStarTree(const RStarTree& other)
    : root_(other.root_->clone()), params_(other.params_), positions_(other.positions_) {}

RStarTree& RStarTree::operator=(const RStarTree& other) {
  if (this != &other) {
    root_ = other.root_->clone();
    params_ = other.params_;
    positions_ = other.positions_;
  }
  return *this;
}

RStarTree::RStarTree(RStarTree&& other) noexcept
    : root_(std::move(other.root_)), params_(other.params_), positions_(std::move(other.positions_)) {
  other.root_ = std::make_unique<Node>();
  other.positions_.clear();
}

RStarTree& RStarTree::operator=(RStarTree&& other) noexcept {
  if (this != &other) {
    root_ = std::move(other.root_);
    params_ = other.params_;
    positions_ = std::move(other.positions_);
    other.root_ = std::make_unique<Node>();
    other.positions_.clear();
  }
  return *this;
}

RStarTree::~RStarTree() = default;

RStarTree RStarTree::bulkLoad(std::vector<IndexEntry> entries, TreeParams params) {
  RStarTree tree(params);
  for (const auto& e : entries) {
    if (!tree.positions_.emplace(e.id, e).second) {
      throw Error(ErrorCode::DuplicateId, "duplicate index entry id '" + e.id + "'");
    }
  }
  if (entries.empty()) return tree;

  const std::size_t cap = params.maxChildren;
  auto leafGroups = strTiles(
      std::move(entries), cap, [](const IndexEntry& e) -> const Eigen::Vector3d& { return e.position; },
      [](const IndexEntry& a, const IndexEntry& b) { return a.id < b.id; });

  std::vector<std::unique_ptr<Node>> level;
  for (auto& g : leafGroups) {
    auto leaf = std::make_unique<Node>();
    leaf->leaf = true;
    leaf->entries = std::move(g);
    leaf->recomputeBox();
    level.push_back(std::move(leaf));
  }

  while (level.size() > 1) {
    // Node centers can coincide; stable sorting keeps the packing deterministic.
    auto groups = strTiles(
        std::move(level), cap, [](const std::unique_ptr<Node>& n) { return n->box.center(); },
        [](const std::unique_ptr<Node>&, const std::unique_ptr<Node>&) { return false; });
    std::vector<std::unique_ptr<Node>> next;
    for (auto& g : groups) {
      auto parent = std::make_unique<Node>();
      parent->leaf = false;
      parent->children = std::move(g);
      parent->recomputeBox();
      next.push_back(std::move(parent));
    }
    level = std::move(next);
  }
  tree.root_ = std::move(level.front());
  return tree;
}

void RStarTree::insert(IndexEntry entry) {
  if (positions_.count(entry.id) > 0) {
    throw Error(ErrorCode::DuplicateId, "duplicate index entry id '" + entry.id + "'");
  }
  positions_.emplace(entry.id, entry);

  const std::size_t maxFill = params_.maxChildren;
  const std::size_t minFill = params_.minChildren;

  // Returns the new sibling when `node` had to split.
  std::function<std::unique_ptr<Node>(Node&, IndexEntry)> insertRec =
      [&](Node& node, IndexEntry e) -> std::unique_ptr<Node> {
    const Box eb = Box::point(e.position);
    if (node.leaf) {
      node.entries.push_back(std::move(e));
      node.box.expand(eb);
      if (node.entries.size() <= maxFill) return nullptr;
      auto [a, b] = rstarSplit(std::move(node.entries), minFill,
                               [](const IndexEntry& x) { return Box::point(x.position); });
      node.entries = std::move(a);
      node.recomputeBox();
      auto sib = std::make_unique<Node>();
      sib->leaf = true;
      sib->entries = std::move(b);
      sib->recomputeBox();
      return sib;
    }

    // Choose subtree: least overlap enlargement when children are leaves,
    // least volume enlargement otherwise.
    const bool childrenAreLeaves = node.children.front()->leaf;
    std::size_t best = 0;
    double bestPrimary = std::numeric_limits<double>::infinity();
    double bestSecondary = std::numeric_limits<double>::infinity();
    double bestTertiary = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < node.children.size(); ++i) {
      const Box& cb = node.children[i]->box;
      Box enlarged = cb;
      enlarged.expand(eb);
      const double volEnl = enlarged.volume() - cb.volume();
      const double marginEnl = enlarged.margin() - cb.margin();
      double primary = volEnl;
      double secondary = marginEnl;
      if (childrenAreLeaves) {
        double ovEnl = 0.0;
        for (std::size_t j = 0; j < node.children.size(); ++j) {
          if (j == i) continue;
          const Box& other = node.children[j]->box;
          ovEnl += enlarged.overlap(other) - cb.overlap(other);
        }
        primary = ovEnl;
        secondary = volEnl + marginEnl;
      }
      const double tertiary = cb.volume() + cb.margin();
      if (primary < bestPrimary ||
          (primary == bestPrimary &&
           (secondary < bestSecondary || (secondary == bestSecondary && tertiary < bestTertiary)))) {
        best = i;
        bestPrimary = primary;
        bestSecondary = secondary;
        bestTertiary = tertiary;
      }
    }

    auto split = insertRec(*node.children[best], std::move(e));
    if (split) node.children.push_back(std::move(split));
    node.recomputeBox();
    if (node.children.size() <= maxFill) return nullptr;
    auto [a, b] = rstarSplit(std::move(node.children), minFill,
                             [](const std::unique_ptr<Node>& x) { return x->box; });
    node.children = std::move(a);
    node.recomputeBox();
    auto sib = std::make_unique<Node>();
    sib->leaf = false;
    sib->children = std::move(b);
    sib->recomputeBox();
    return sib;
  };

  auto sibling = insertRec(*root_, std::move(entry));
  if (sibling) {
    auto newRoot = std::make_unique<Node>();
    newRoot->leaf = false;
    newRoot->children.push_back(std::move(root_));
    newRoot->children.push_back(std::move(sibling));
    newRoot->recomputeBox();
    root_ = std::move(newRoot);
  }
}

bool RStarTree::remove(const std::string& id) {
  auto it = positions_.find(id);
  if (it == positions_.end()) return false;
  const IndexEntry target = it->second;
  positions_.erase(it);

  std::vector<IndexEntry> orphans;
  std::function<bool(Node&)> removeRec = [&](Node& node) -> bool {
    if (node.leaf) {
      auto e = std::find_if(node.entries.begin(), node.entries.end(),
                            [&](const IndexEntry& x) { return x.id == id; });
      if (e == node.entries.end()) return false;
      node.entries.erase(e);
      node.recomputeBox();
      return true;
    }
    for (std::size_t i = 0; i < node.children.size(); ++i) {
      Node& child = *node.children[i];
      if (!child.box.contains(target.position)) continue;
      if (removeRec(child)) {
        if (child.count() < params_.minChildren) {
          child.collect(orphans);
          node.children.erase(node.children.begin() + static_cast<std::ptrdiff_t>(i));
        }
        node.recomputeBox();
        return true;
      }
    }
    return false;
  };

  removeRec(*root_);
  while (!root_->leaf && root_->children.size() == 1) {
    root_ = std::move(root_->children.front());
  }
  if (!root_->leaf && root_->children.empty()) root_ = std::make_unique<Node>();

  for (auto& o : orphans) {
    positions_.erase(o.id);
    insert(std::move(o));
  }
  return true;
}

std::optional<IndexEntry> RStarTree::queryNearest(const Eigen::Vector3d& pos,
                                                  const NearestFilter& filter) const {
  if (filter.maxDistance && *filter.maxDistance < 0.0) {
    throw std::invalid_argument("maxDistance must be non-negative");
  }
  if (empty()) return std::nullopt;

  using Item = std::pair<double, const Node*>;
  auto cmp = [](const Item& a, const Item& b) { return a.first > b.first; };
  std::priority_queue<Item, std::vector<Item>, decltype(cmp)> queue(cmp);
  queue.emplace(root_->box.minDistanceSquared(pos), root_.get());

  const IndexEntry* best = nullptr;
  double bestD2 = std::numeric_limits<double>::infinity();
  auto withinLimit = [&](double d2) {
    return !filter.maxDistance || std::sqrt(d2) <= *filter.maxDistance;
  };

  while (!queue.empty()) {
    const auto [boxD2, node] = queue.top();
    queue.pop();
    if (boxD2 > bestD2) break;
    if (!withinLimit(boxD2)) continue;
    if (node->leaf) {
      for (const auto& e : node->entries) {
        if (filter.classLabel && e.classLabel != *filter.classLabel) continue;
        const double d2 = squaredDistance(e.position, pos);
        if (!withinLimit(d2)) continue;
        if (d2 < bestD2 || (d2 == bestD2 && best != nullptr && e.id < best->id)) {
          best = &e;
          bestD2 = d2;
        }
      }
    } else {
      for (const auto& c : node->children) {
        const double d2 = c->box.minDistanceSquared(pos);
        if (d2 <= bestD2) queue.emplace(d2, c.get());
      }
    }
  }
  if (best == nullptr) return std::nullopt;
  return *best;
}

std::vector<IndexEntry> RStarTree::queryBox(const Box& box) const {
  std::vector<IndexEntry> out;
  std::function<void(const Node&)> visit = [&](const Node& n) {
    for (int k = 0; k < 3; ++k) {
      if (n.box.hi[k] < box.lo[k] || n.box.lo[k] > box.hi[k]) return;
    }
    if (n.leaf) {
      for (const auto& e : n.entries) {
        if (box.contains(e.position)) out.push_back(e);
      }
    } else {
      for (const auto& c : n.children) visit(*c);
    }
  };
  visit(*root_);
  std::sort(out.begin(), out.end(), [](const IndexEntry& a, const IndexEntry& b) { return a.id < b.id; });
  return out;
}

std::optional<IndexEntry> RStarTree::find(const std::string& id) const {
  auto it = positions_.find(id);
  if (it == positions_.end()) return std::nullopt;
  return it->second;
}

std::size_t RStarTree::height() const {
  if (empty()) return 0;
  std::size_t h = 1;
  for (const Node* n = root_.get(); !n->leaf; n = n->children.front().get()) ++h;
  return h;
}

std::vector<IndexEntry> RStarTree::entries() const {
  std::vector<IndexEntry> out;
  out.reserve(positions_.size());
  for (const auto& [id, e] : positions_) out.push_back(e);
  return out;
}

std::string RStarTree::checkInvariants() const {
  std::ostringstream err;
  std::map<std::string, int> seen;
  std::optional<std::size_t> leafDepth;

  std::function<void(const Node&, std::size_t, bool)> visit = [&](const Node& n, std::size_t depth,
                                                                 bool isRoot) {
    if (n.count() > params_.maxChildren) err << "node over capacity at depth " << depth << "; ";
    if (!isRoot && n.count() == 0) err << "empty non-root node; ";
    if (n.leaf) {
      if (leafDepth && *leafDepth != depth) err << "leaves at different depths; ";
      leafDepth = depth;
      for (const auto& e : n.entries) {
        if (!n.box.contains(e.position)) err << "leaf box misses " << e.id << "; ";
        ++seen[e.id];
      }
    } else {
      for (const auto& c : n.children) {
        if (!n.box.contains(c->box)) err << "internal box misses child; ";
        visit(*c, depth + 1, false);
      }
    }
  };
  visit(*root_, 0, true);

  for (const auto& [id, count] : seen) {
    if (count != 1) err << id << " reachable " << count << " times; ";
    if (positions_.count(id) == 0) err << id << " in tree but not indexed; ";
  }
  if (seen.size() != positions_.size()) err << "size mismatch; ";
  return err.str();
}

// ---------------------------------------------------------------------------
// Persistence

std::string IdAllocator::allocate(const std::string& classLabel,
                                  const std::function<bool(const std::string&)>& taken) {
  std::size_t& counter = next_[classLabel];
  for (;;) {
    std::string id = classLabel + "_" + std::to_string(++counter);
    if (!taken || !taken(id)) return id;
  }
}

PersistenceResult persistenceUpdate(RStarTree prior, const std::vector<ObjectInstance>& detected,
                                    double dmax, bool canonicalize, IdAllocator& ids,
                                    const ObjectClassRegistry& classes) {
  if (dmax < 0.0) throw Error(ErrorCode::InvalidParameter, "dmax must be non-negative");

  std::set<std::string> used;
  for (const auto& e : prior.entries()) used.insert(e.id);

  PersistenceResult result;
  result.renamed.reserve(detected.size());
  std::vector<IndexEntry> persistent;
  persistent.reserve(detected.size());

  for (const ObjectInstance& det : detected) {
    ObjectInstance o = det;
    const ObjectClass& cls = classes.get(o.classLabel);
    o.symmetry = cls.symmetry.name;
    if (canonicalize) o.pose = setCanonicalOrientation(o.pose, cls.symmetry);

    const auto match = prior.queryNearest(o.pose.position, {dmax, o.classLabel});
    if (match) {
      prior.remove(match->id);
      o.id = match->id;
    } else {
      o.id = ids.allocate(o.classLabel, [&](const std::string& id) { return used.count(id) > 0; });
    }
    used.insert(o.id);
    persistent.push_back({o.id, o.classLabel, o.pose.position});
    result.renamed.push_back(std::move(o));
  }

  result.tree = RStarTree::bulkLoad(std::move(persistent), prior.params());
  return result;
}

}  // namespace costar
