#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include <nlohmann/json.hpp>

#include "costar/geometry.hpp"
#include "costar/world_sim.hpp"

namespace costar {

/// One relative motion seen by both sides: A by the robot, B by the camera.
struct MotionPair {
  Pose a;
  Pose b;
};

struct CalibrationResult {
  Pose x;  // camera pose in the robot base frame
  double residual = 0.0;
  std::size_t pairCount = 0;
};

struct HandEyeOptions {
  double parallelAxisTolerance = 1.0 * 3.141592653589793 / 180.0;     // rad
  double consistencyTolerance = 5.0 * 3.141592653589793 / 180.0;      // rad
};

/// Solves A X = X B. Throws Error(DegenerateMotions | InconsistentPair).
CalibrationResult solveHandEye(const std::vector<MotionPair>& pairs, const HandEyeOptions& opts = {});

/// Mean Frobenius norm of the homogeneous matrices A X - X B.
double handEyeResidual(const std::vector<MotionPair>& pairs, const Pose& x);

/// Unit dual quaternion (real, dual) of a rigid transform, real part with w >= 0.
struct DualQuaternion {
  Eigen::Quaterniond real;
  Eigen::Quaterniond dual;
};
DualQuaternion toDualQuaternion(const Pose& p);

struct StationOptions {
  std::size_t stations = 11;
  double noiseRotDeg = 0.0;  // per marker observation, about a random axis
  double noisePos = 0.0;     // per axis, meters
  bool allPairs = false;     // difference every station pair instead of consecutive ones
};

/// Drives the simulated arm through preset stations and differences the
/// recorded endpoint and marker poses. Throws Error(MarkerNotVisible).
std::vector<MotionPair> collectStations(Simulator& sim, const StationOptions& opts);

/// Endpoint poses of the preset stations.
std::vector<Pose> stationPoses(std::size_t n);

nlohmann::json calibrationToJson(const CalibrationResult& r);
/// Reads the "camera" pose from a calibration document.
Pose cameraFromCalibrationJson(const nlohmann::json& j);

}  // namespace costar
