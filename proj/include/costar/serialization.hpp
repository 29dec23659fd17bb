#pragma once

#include <nlohmann/json.hpp>

#include "costar/geometry.hpp"

namespace costar {

/// Poses travel as [x, y, z, qw, qx, qy, qz].
nlohmann::json poseToJson(const Pose& p);
Pose poseFromJson(const nlohmann::json& j);

nlohmann::json vectorToJson(const Eigen::Vector3d& v);
Eigen::Vector3d vectorFromJson(const nlohmann::json& j);

}  // namespace costar
