#pragma once

#include <map>
#include <optional>
#include <string>

#include "costar/geometry.hpp"

namespace costar {

/// A detected or ground-truth object.
struct ObjectInstance {
  std::string id;
  std::string classLabel;
  Pose pose;
  std::string symmetry;  // name of the class's symmetry group
  std::optional<std::string> graspedBy;
};

/// Per-class model data: the rotational symmetry of the part and the
/// object-to-gripper transform used when picking it.
struct ObjectClass {
  std::string label;
  SymmetryGroup symmetry = trivialGroup();
  Pose graspOffset;
};

class ObjectClassRegistry {
 public:
  /// Ships with "node" (cube symmetry) and "link" (two-fold bar symmetry); both
  /// grasped top-down.
  static ObjectClassRegistry withDefaults();

  void add(ObjectClass cls);
  /// Unknown labels resolve to a class with trivial symmetry and identity grasp.
  const ObjectClass& get(const std::string& label) const;
  bool contains(const std::string& label) const { return classes_.count(label) > 0; }
  const std::map<std::string, ObjectClass>& all() const { return classes_; }

 private:
  std::map<std::string, ObjectClass> classes_;
  ObjectClass fallback_{"", trivialGroup(), Pose{}};
};

}  // namespace costar
