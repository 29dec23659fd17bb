#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "costar/geometry.hpp"
#include "costar/object.hpp"

namespace costar {

using JointVector = std::array<double, 6>;

enum class GripperMode { Basic, Pinch, Wide, Scissor };
enum class GripperKind { Parallel, ThreeFinger };

std::string_view toString(GripperMode mode);
std::optional<GripperMode> gripperModeFromString(std::string_view s);

struct NoiseModel {
  double posSigma = 0.005;   // meters, per axis
  double rotSigma = 0.01;    // radians, about a random axis
  double dropoutProb = 0.0;  // [0, 1]
};

struct Region {
  std::string name;
  Eigen::Vector3d min = Eigen::Vector3d::Zero();
  Eigen::Vector3d max = Eigen::Vector3d::Zero();
};

/// Named pose that becomes a waypoint or frame symbol.
struct NamedFrame {
  std::string name;
  std::string kind = "waypoint";  // "waypoint" or "frame"
  Pose pose;
};

/// A scene change applied when the simulation clock reaches `tick`.
struct ScriptedEvent {
  std::uint64_t tick = 0;
  std::string property;  // "tool_in_position" or "marker_visible"
  bool value = false;
};

struct RobotConfig {
  Pose home = Pose(Eigen::Vector3d(0.4, 0.0, 0.3), rotX(3.141592653589793));
  GripperKind gripper = GripperKind::Parallel;
  double speed = 0.25;         // m/s
  double angularSpeed = 1.5;   // rad/s
  double tickPeriod = 0.05;    // s, 20 Hz
  double rMin = 0.2;
  double rMax = 0.85;
};

struct Scene {
  std::string name;
  std::uint64_t seed = 0;
  double tableHeight = 0.0;
  RobotConfig robot;
  NoiseModel noise;
  std::vector<ObjectInstance> objects;
  std::vector<Region> regions;
  std::vector<NamedFrame> frames;
  Pose camera = Pose(Eigen::Vector3d(0.5, 0.0, 1.2), rotX(3.141592653589793));
  Pose markerOffset = Pose::translation(0.0, 0.0, 0.05);
  bool markerVisible = true;
  bool toolInPosition = true;
  std::vector<ScriptedEvent> events;
  ObjectClassRegistry classes = ObjectClassRegistry::withDefaults();

  /// Throws Error(InvalidScene).
  void validate() const;
};

/// Reads a scene from .yaml/.yml or .json. Throws Error(InvalidScene).
Scene loadScene(const std::filesystem::path& path);
Scene sceneFromJson(const nlohmann::json& j);
nlohmann::json sceneToJson(const Scene& scene);

/// Base yaw, shoulder elevation, elbow, then a Z-Y-X wrist. The shoulder sits
/// at the base origin, so the reach shell is centered there.
class ArmKinematics {
 public:
  static constexpr double kUpperArm = 0.425;
  static constexpr double kForearm = 0.425;

  static Pose forward(const JointVector& q);
  /// Elbow-up solution; nullopt when the position is beyond reach.
  static std::optional<JointVector> inverse(const Pose& endpoint);
};

struct GripperState {
  bool closed = false;
  GripperMode mode = GripperMode::Pinch;
};

struct RobotState {
  Pose endpoint;
  JointVector joints{};
  GripperState gripper;
  bool toolPowered = false;
};

enum class MotionStatus { Idle, Busy, Success };

/// Deterministic stand-in for sensors and hardware. All randomness comes from
/// one generator seeded at construction, so a fixed seed replays bit-identically.
class Simulator {
 public:
  static constexpr double kArrivalTolerance = 1e-4;
  static constexpr double kDefaultGraspRadius = 0.02;

  explicit Simulator(Scene scene, std::optional<std::uint64_t> seed = std::nullopt);

  const Scene& scene() const { return scene_; }
  const RobotState& robot() const { return robot_; }
  const std::vector<ObjectInstance>& objects() const { return objects_; }
  std::uint64_t tickIndex() const { return tick_; }
  double time() const { return static_cast<double>(tick_) * scene_.robot.tickPeriod; }

  /// Ground truth minus dropouts and grasped objects, with sensor noise,
  /// ordered by ground-truth id. Ids are anonymous ("det_<k>").
  std::vector<ObjectInstance> simulateDetection();

  bool reachable(const Pose& goal) const;

  /// Starts a motion. Throws Error(Unreachable). Returns Success immediately
  /// when the endpoint is already at the goal.
  MotionStatus executeMove(const Pose& goal, std::optional<double> speed = std::nullopt);
  MotionStatus motionStatus() const { return motion_; }
  void cancelMotion();

  /// Grasps the nearest free object within radius of the endpoint and snaps
  /// it onto the grasp frame. Throws Error(NothingToGrasp). Returns its id.
  std::string executeGrasp(double radius = kDefaultGraspRadius);
  /// Detaches the held object (if any) where it is.
  std::optional<std::string> executeRelease();
  std::optional<std::string> heldObject() const { return held_; }

  void setGripperMode(GripperMode mode) { robot_.gripper.mode = mode; }
  void setGripperClosed(bool closed) { robot_.gripper.closed = closed; }
  void setToolPower(bool on) { robot_.toolPowered = on; }
  bool toolInPosition() const { return toolInPosition_; }
  void setToolInPosition(bool v) { toolInPosition_ = v; }
  bool markerVisible() const { return markerVisible_; }
  void setMarkerVisible(bool v) { markerVisible_ = v; }

  /// Teleports the arm to a joint configuration.
  void setJoints(const JointVector& q);
  /// Marker pose in the camera frame. Throws Error(MarkerNotVisible).
  Pose observeMarker() const;

  /// When set, detections are computed in the camera frame and mapped back
  /// through this estimate instead of the true camera pose.
  void setCalibratedCamera(std::optional<Pose> cam) { calibratedCamera_ = std::move(cam); }

  /// Advances the clock one tick: scripted events, motion, held object.
  void step();

  nlohmann::json snapshot() const;

  std::mt19937_64& rng() { return rng_; }

 private:
  void setEndpoint(const Pose& p);

  Scene scene_;
  RobotState robot_;
  std::vector<ObjectInstance> objects_;
  std::mt19937_64 rng_;
  std::uint64_t tick_ = 0;
  MotionStatus motion_ = MotionStatus::Idle;
  Pose goal_;
  double goalSpeed_ = 0.0;
  std::optional<std::string> held_;
  Pose heldOffset_;
  bool toolInPosition_ = true;
  bool markerVisible_ = true;
  std::optional<Pose> calibratedCamera_;
};

}  // namespace costar
