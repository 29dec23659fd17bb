#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "costar/object.hpp"

namespace costar {

struct IndexEntry {
  std::string id;
  std::string classLabel;
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
};

struct TreeParams {
  std::size_t maxChildren = 8;
  std::size_t minChildren = 2;
};

struct NearestFilter {
  std::optional<double> maxDistance;  // inclusive, meters
  std::optional<std::string> classLabel;
};

/// Axis-aligned box over 3-D points.
struct Box {
  Eigen::Vector3d lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
  Eigen::Vector3d hi = Eigen::Vector3d::Constant(-std::numeric_limits<double>::infinity());

  static Box point(const Eigen::Vector3d& p) { return {p, p}; }
  bool valid() const { return (lo.array() <= hi.array()).all(); }
  void expand(const Box& other);
  bool contains(const Eigen::Vector3d& p) const;
  bool contains(const Box& other) const;
  double volume() const;
  double margin() const;
  double overlap(const Box& other) const;
  double minDistanceSquared(const Eigen::Vector3d& p) const;
  Eigen::Vector3d center() const { return 0.5 * (lo + hi); }
};

/// R*-tree over points. Built with Sort-Tile-Recursive packing; incremental
/// inserts use the R* subtree choice and split (no forced reinsertion).
class RStarTree {
 public:
  explicit RStarTree(TreeParams params = {});
  RStarTree(const RStarTree& other);
  RStarTree& operator=(const RStarTree& other);
  RStarTree(RStarTree&&) noexcept;
  RStarTree& operator=(RStarTree&&) noexcept;
  ~RStarTree();

  /// Throws Error(DuplicateId) if two entries share an id.
  static RStarTree bulkLoad(std::vector<IndexEntry> entries, TreeParams params = {});

  void insert(IndexEntry entry);
  bool remove(const std::string& id);

  /// Entry closest to pos among those passing the filter. Equal distances are
  /// resolved by the lexicographically smaller id.
  std::optional<IndexEntry> queryNearest(const Eigen::Vector3d& pos,
                                         const NearestFilter& filter = {}) const;
  std::vector<IndexEntry> queryBox(const Box& box) const;
  std::optional<IndexEntry> find(const std::string& id) const;
  bool contains(const std::string& id) const { return positions_.count(id) > 0; }

  std::size_t size() const { return positions_.size(); }
  bool empty() const { return positions_.empty(); }
  /// Number of levels, leaves included; 0 for an empty tree.
  std::size_t height() const;
  const TreeParams& params() const { return params_; }
  /// All entries ordered by id.
  std::vector<IndexEntry> entries() const;

  /// Structural check: boxes contain descendants, fan-out bounded, leaves at
  /// one depth, every entry reachable exactly once. Returns an empty string
  /// when the tree is sound.
  std::string checkInvariants() const;

 private:
  struct Node;
  std::unique_ptr<Node> root_;
  TreeParams params_;
  std::map<std::string, IndexEntry> positions_;
};

/// Produces `<class>_<n>` names with a per-class monotonic counter, skipping
/// any name the caller reports as taken.
class IdAllocator {
 public:
  std::string allocate(const std::string& classLabel,
                       const std::function<bool(const std::string&)>& taken);

 private:
  std::map<std::string, std::size_t> next_;
};

struct PersistenceResult {
  std::vector<ObjectInstance> renamed;
  RStarTree tree;
};

inline constexpr double kDefaultMatchDistance = 0.05;

/// Assigns stable names to a fresh set of detections.
///
/// Detections are processed in input order. Each one optionally has its
/// orientation canonicalized, then takes the name of the nearest prior entry
/// of the same class within dmax; a matched prior is removed so it cannot be
/// claimed twice. Unmatched detections get a new name. The returned tree is
/// bulk loaded from the output set only, so priors that were not seen again
/// are dropped.
PersistenceResult persistenceUpdate(RStarTree prior, const std::vector<ObjectInstance>& detected,
                                    double dmax, bool canonicalize, IdAllocator& ids,
                                    const ObjectClassRegistry& classes);

}  // namespace costar
