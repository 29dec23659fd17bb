#include "costar/object.hpp"

#include <numbers>

namespace costar {

ObjectClassRegistry ObjectClassRegistry::withDefaults() {
  ObjectClassRegistry reg;
  const Pose topDown = Pose::rotation(rotX(std::numbers::pi));
  reg.add({"node", cubeGroup(), topDown});
  reg.add({"link", cylinderGroup(2), topDown});
  return reg;
}

void ObjectClassRegistry::add(ObjectClass cls) {
  const std::string label = cls.label;
  classes_.insert_or_assign(label, std::move(cls));
}

const ObjectClass& ObjectClassRegistry::get(const std::string& label) const {
  auto it = classes_.find(label);
  return it == classes_.end() ? fallback_ : it->second;
}

}  // namespace costar
