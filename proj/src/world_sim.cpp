#include "costar/world_sim.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "costar/error.hpp"
#include "costar/serialization.hpp"

namespace costar {

using nlohmann::json;

// ---------------------------------------------------------------------------
// JSON helpers

json poseToJson(const Pose& p) {
  const auto a = toArray(p);
  return json(std::vector<double>(a.begin(), a.end()));
}

Pose poseFromJson(const json& j) {
  if (!j.is_array() || j.size() != 7) {
    throw std::invalid_argument("pose must be a 7-element array [x,y,z,qw,qx,qy,qz]");
  }
  std::array<double, 7> v{};
  for (std::size_t i = 0; i < 7; ++i) v[i] = j.at(i).get<double>();
  return poseFromArray(v);
}

json vectorToJson(const Eigen::Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }

Eigen::Vector3d vectorFromJson(const json& j) {
  if (!j.is_array() || j.size() != 3) throw std::invalid_argument("expected a 3-element array");
  return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()};
}

std::string_view toString(GripperMode mode) {
  switch (mode) {
    case GripperMode::Basic: return "BasicMode";
    case GripperMode::Pinch: return "PinchMode";
    case GripperMode::Wide: return "WideMode";
    case GripperMode::Scissor: return "ScissorMode";
  }
  return "BasicMode";
}

std::optional<GripperMode> gripperModeFromString(std::string_view s) {
  for (GripperMode m : {GripperMode::Basic, GripperMode::Pinch, GripperMode::Wide, GripperMode::Scissor}) {
    const std::string_view full = toString(m);
    if (s == full || s == full.substr(0, full.size() - 4)) return m;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Scene files

namespace {

json yamlToJson(const YAML::Node& node) {
  switch (node.Type()) {
    case YAML::NodeType::Map: {
      json out = json::object();
      for (const auto& kv : node) out[kv.first.as<std::string>()] = yamlToJson(kv.second);
      return out;
    }
    case YAML::NodeType::Sequence: {
      json out = json::array();
      for (const auto& item : node) out.push_back(yamlToJson(item));
      return out;
    }
    case YAML::NodeType::Scalar: {
      const std::string s = node.Scalar();
      if (node.Tag() == "!") return s;  // quoted in the source
      if (s == "true" || s == "True") return true;
      if (s == "false" || s == "False") return false;
      std::int64_t i = 0;
      auto [ip, iec] = std::from_chars(s.data(), s.data() + s.size(), i);
      if (iec == std::errc() && ip == s.data() + s.size()) return i;
      double d = 0.0;
      auto [dp, dec] = std::from_chars(s.data(), s.data() + s.size(), d);
      if (dec == std::errc() && dp == s.data() + s.size()) return d;
      return s;
    }
    case YAML::NodeType::Null:
    case YAML::NodeType::Undefined:
      return nullptr;
  }
  return nullptr;
}

SymmetryGroup groupFromSpec(const std::string& name, int n) {
  if (name == "cube") return cubeGroup();
  if (name == "cylinder") return cylinderGroup(n);
  if (name == "trivial" || name.empty()) return trivialGroup();
  throw Error(ErrorCode::InvalidScene, "unknown symmetry '" + name + "'");
}

}  // namespace

Scene loadScene(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::InvalidScene, "cannot open scene file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string ext = path.extension().string();
  json j;
  try {
    if (ext == ".json") {
      j = json::parse(buf.str());
    } else {
      j = yamlToJson(YAML::Load(buf.str()));
    }
  } catch (const std::exception& e) {
    throw Error(ErrorCode::InvalidScene, path.string() + ": " + e.what());
  }
  Scene s = sceneFromJson(j);
  if (s.name.empty()) s.name = path.stem().string();
  return s;
}

Scene sceneFromJson(const json& j) {
  Scene s;
  try {
    s.name = j.value("name", "");
    s.seed = j.value("seed", std::uint64_t{0});
    s.tableHeight = j.value("table_height", 0.0);
    if (j.contains("robot")) {
      const json& r = j.at("robot");
      if (r.contains("home")) s.robot.home = poseFromJson(r.at("home"));
      const std::string gripper = r.value("gripper", "parallel");
      if (gripper == "parallel") s.robot.gripper = GripperKind::Parallel;
      else if (gripper == "three_finger") s.robot.gripper = GripperKind::ThreeFinger;
      else throw Error(ErrorCode::InvalidScene, "unknown gripper '" + gripper + "'");
      s.robot.speed = r.value("speed", s.robot.speed);
      s.robot.angularSpeed = r.value("angular_speed", s.robot.angularSpeed);
      s.robot.tickPeriod = r.value("tick_period", s.robot.tickPeriod);
      s.robot.rMin = r.value("r_min", s.robot.rMin);
      s.robot.rMax = r.value("r_max", s.robot.rMax);
    }
    if (j.contains("noise")) {
      const json& n = j.at("noise");
      s.noise.posSigma = n.value("pos_sigma", s.noise.posSigma);
      s.noise.rotSigma = n.value("rot_sigma", s.noise.rotSigma);
      s.noise.dropoutProb = n.value("dropout", s.noise.dropoutProb);
    }
    if (j.contains("camera")) s.camera = poseFromJson(j.at("camera"));
    if (j.contains("marker_offset")) s.markerOffset = poseFromJson(j.at("marker_offset"));
    s.markerVisible = j.value("marker_visible", true);
    s.toolInPosition = j.value("tool_in_position", true);

    for (const json& c : j.value("classes", json::array())) {
      ObjectClass cls;
      cls.label = c.at("label").get<std::string>();
      cls.symmetry = groupFromSpec(c.value("symmetry", "trivial"), c.value("n", 1));
      if (c.contains("grasp")) cls.graspOffset = poseFromJson(c.at("grasp"));
      s.classes.add(std::move(cls));
    }
    for (const json& f : j.value("frames", json::array())) {
      s.frames.push_back({f.at("name").get<std::string>(), f.value("kind", "waypoint"),
                          poseFromJson(f.at("pose"))});
    }
    for (const json& r : j.value("regions", json::array())) {
      s.regions.push_back({r.at("name").get<std::string>(), vectorFromJson(r.at("min")),
                           vectorFromJson(r.at("max"))});
    }
    for (const json& o : j.value("objects", json::array())) {
      ObjectInstance obj;
      obj.id = o.at("id").get<std::string>();
      obj.classLabel = o.at("class").get<std::string>();
      obj.pose = poseFromJson(o.at("pose"));
      obj.symmetry = s.classes.get(obj.classLabel).symmetry.name;
      s.objects.push_back(std::move(obj));
    }
    for (const json& e : j.value("events", json::array())) {
      s.events.push_back({e.at("tick").get<std::uint64_t>(), e.at("property").get<std::string>(),
                          e.at("value").get<bool>()});
    }
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw Error(ErrorCode::InvalidScene, e.what());
  }
  s.validate();
  return s;
}

json sceneToJson(const Scene& s) {
  json j;
  j["name"] = s.name;
  j["seed"] = s.seed;
  j["table_height"] = s.tableHeight;
  j["robot"] = {{"home", poseToJson(s.robot.home)},
                {"gripper", s.robot.gripper == GripperKind::Parallel ? "parallel" : "three_finger"},
                {"speed", s.robot.speed},
                {"angular_speed", s.robot.angularSpeed},
                {"tick_period", s.robot.tickPeriod},
                {"r_min", s.robot.rMin},
                {"r_max", s.robot.rMax}};
  j["noise"] = {{"pos_sigma", s.noise.posSigma},
                {"rot_sigma", s.noise.rotSigma},
                {"dropout", s.noise.dropoutProb}};
  j["camera"] = poseToJson(s.camera);
  j["marker_offset"] = poseToJson(s.markerOffset);
  j["marker_visible"] = s.markerVisible;
  j["tool_in_position"] = s.toolInPosition;
  j["frames"] = json::array();
  for (const auto& f : s.frames) {
    j["frames"].push_back({{"name", f.name}, {"kind", f.kind}, {"pose", poseToJson(f.pose)}});
  }
  j["regions"] = json::array();
  for (const auto& r : s.regions) {
    j["regions"].push_back({{"name", r.name}, {"min", vectorToJson(r.min)}, {"max", vectorToJson(r.max)}});
  }
  j["objects"] = json::array();
  for (const auto& o : s.objects) {
    j["objects"].push_back({{"id", o.id}, {"class", o.classLabel}, {"pose", poseToJson(o.pose)}});
  }
  j["events"] = json::array();
  for (const auto& e : s.events) {
    j["events"].push_back({{"tick", e.tick}, {"property", e.property}, {"value", e.value}});
  }
  return j;
}

void Scene::validate() const {
  std::set<std::string> ids;
  for (const auto& o : objects) {
    if (o.id.empty()) throw Error(ErrorCode::InvalidScene, "object with empty id");
    if (!ids.insert(o.id).second) throw Error(ErrorCode::InvalidScene, "duplicate object id '" + o.id + "'");
  }
  for (const auto& r : regions) {
    if (!((r.max.array() > r.min.array()).all())) {
      throw Error(ErrorCode::InvalidScene, "region '" + r.name + "' has non-positive extent");
    }
  }
  if (noise.posSigma < 0 || noise.rotSigma < 0 || noise.dropoutProb < 0 || noise.dropoutProb > 1) {
    throw Error(ErrorCode::InvalidScene, "noise parameters out of range");
  }
  if (robot.speed <= 0 || robot.tickPeriod <= 0 || robot.angularSpeed <= 0) {
    throw Error(ErrorCode::InvalidScene, "robot speed and tick period must be positive");
  }
  if (robot.rMin < 0 || robot.rMax <= robot.rMin) {
    throw Error(ErrorCode::InvalidScene, "robot reach shell must satisfy 0 <= r_min < r_max");
  }
  for (const auto& e : events) {
    if (e.property != "tool_in_position" && e.property != "marker_visible") {
      throw Error(ErrorCode::InvalidScene, "unknown scripted property '" + e.property + "'");
    }
  }
}

// ---------------------------------------------------------------------------
// Kinematics

Pose ArmKinematics::forward(const JointVector& q) {
  const double reach = kUpperArm * std::cos(q[1]) + kForearm * std::cos(q[1] + q[2]);
  const double z = kUpperArm * std::sin(q[1]) + kForearm * std::sin(q[1] + q[2]);
  const Eigen::Vector3d p(reach * std::cos(q[0]), reach * std::sin(q[0]), z);
  const Eigen::Quaterniond wrist = Eigen::AngleAxisd(q[3], Eigen::Vector3d::UnitZ()) *
                                   Eigen::AngleAxisd(q[4], Eigen::Vector3d::UnitY()) *
                                   Eigen::AngleAxisd(q[5], Eigen::Vector3d::UnitX());
  const Eigen::Quaterniond base(Eigen::AngleAxisd(q[0], Eigen::Vector3d::UnitZ()));
  return {p, base * wrist};
}

std::optional<JointVector> ArmKinematics::inverse(const Pose& endpoint) {
  const Eigen::Vector3d& p = endpoint.position;
  const double reach = std::hypot(p.x(), p.y());
  const double d2 = reach * reach + p.z() * p.z();
  double c2 = (d2 - kUpperArm * kUpperArm - kForearm * kForearm) / (2.0 * kUpperArm * kForearm);
  if (c2 > 1.0 + 1e-9 || c2 < -1.0 - 1e-9) return std::nullopt;
  c2 = std::clamp(c2, -1.0, 1.0);

  JointVector q{};
  q[0] = std::atan2(p.y(), p.x());
  q[2] = -std::acos(c2);
  q[1] = std::atan2(p.z(), reach) -
         std::atan2(kForearm * std::sin(q[2]), kUpperArm + kForearm * std::cos(q[2]));

  const Eigen::Matrix3d wrist =
      (Eigen::AngleAxisd(-q[0], Eigen::Vector3d::UnitZ()) * endpoint.orientation).toRotationMatrix();
  const Eigen::Vector3d zyx = wrist.eulerAngles(2, 1, 0);
  q[3] = zyx[0];
  q[4] = zyx[1];
  q[5] = zyx[2];
  return q;
}

// ---------------------------------------------------------------------------
// Simulator

Simulator::Simulator(Scene scene, std::optional<std::uint64_t> seed)
    : scene_(std::move(scene)), rng_(seed.value_or(scene_.seed)) {
  scene_.validate();
  objects_ = scene_.objects;
  std::sort(objects_.begin(), objects_.end(),
            [](const ObjectInstance& a, const ObjectInstance& b) { return a.id < b.id; });
  for (auto& o : objects_) o.symmetry = scene_.classes.get(o.classLabel).symmetry.name;
  toolInPosition_ = scene_.toolInPosition;
  markerVisible_ = scene_.markerVisible;
  robot_.gripper.mode =
      scene_.robot.gripper == GripperKind::Parallel ? GripperMode::Pinch : GripperMode::Basic;
  if (!reachable(scene_.robot.home)) {
    throw Error(ErrorCode::InvalidScene, "robot home pose is outside the reach shell");
  }
  setEndpoint(scene_.robot.home);
}

void Simulator::setEndpoint(const Pose& p) {
  robot_.endpoint = p;
  if (auto q = ArmKinematics::inverse(p)) robot_.joints = *q;
  if (held_) {
    auto it = std::find_if(objects_.begin(), objects_.end(),
                           [&](const ObjectInstance& o) { return o.id == *held_; });
    if (it != objects_.end()) it->pose = compose(robot_.endpoint, heldOffset_);
  }
}

std::vector<ObjectInstance> Simulator::simulateDetection() {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const NoiseModel& n = scene_.noise;

  std::vector<ObjectInstance> out;
  for (const ObjectInstance& truth : objects_) {
    // Draw every sample whether or not it is used, so the stream position
    // does not depend on which objects drop out.
    const double u = uniform(rng_);
    const Eigen::Vector3d dp(gauss(rng_), gauss(rng_), gauss(rng_));
    const Eigen::Vector3d axis(gauss(rng_), gauss(rng_), gauss(rng_));
    const double angle = gauss(rng_);
    if (truth.graspedBy) continue;
    if (u < n.dropoutProb) continue;

    Pose observed = truth.pose;
    if (calibratedCamera_) observed = compose(inverse(scene_.camera), observed);
    if (n.posSigma > 0) observed.position += n.posSigma * dp;
    if (n.rotSigma > 0 && axis.norm() > 0) {
      observed.orientation = canonicalSign(observed.orientation * axisAngle(axis, n.rotSigma * angle));
    }
    if (calibratedCamera_) observed = compose(*calibratedCamera_, observed);

    ObjectInstance det;
    det.id = "det_" + std::to_string(out.size());
    det.classLabel = truth.classLabel;
    det.pose = observed;
    det.symmetry = truth.symmetry;
    out.push_back(std::move(det));
  }
  return out;
}

bool Simulator::reachable(const Pose& goal) const {
  const double r = goal.position.norm();
  return r >= scene_.robot.rMin && r <= scene_.robot.rMax && goal.position.z() >= scene_.tableHeight;
}

MotionStatus Simulator::executeMove(const Pose& goal, std::optional<double> speed) {
  if (!reachable(goal)) {
    motion_ = MotionStatus::Idle;
    throw Error(ErrorCode::Unreachable, "goal outside the reachable workspace");
  }
  goal_ = goal;
  goalSpeed_ = speed.value_or(scene_.robot.speed);
  if (goalSpeed_ <= 0) throw Error(ErrorCode::InvalidParameter, "speed must be positive");
  const bool there = (robot_.endpoint.position - goal.position).norm() <= kArrivalTolerance &&
                     geodesicAngle(robot_.endpoint.orientation, goal.orientation) <= kArrivalTolerance;
  if (there) {
    setEndpoint(goal);
    motion_ = MotionStatus::Success;
  } else {
    motion_ = MotionStatus::Busy;
  }
  return motion_;
}

void Simulator::cancelMotion() {
  if (motion_ == MotionStatus::Busy) motion_ = MotionStatus::Idle;
}

std::string Simulator::executeGrasp(double radius) {
  if (held_) return *held_;
  const ObjectInstance* best = nullptr;
  double bestDist = std::numeric_limits<double>::infinity();
  for (const auto& o : objects_) {
    if (o.graspedBy) continue;
    const double d = (o.pose.position - robot_.endpoint.position).norm();
    if (d <= radius && d < bestDist) {
      best = &o;
      bestDist = d;
    }
  }
  if (best == nullptr) {
    throw Error(ErrorCode::NothingToGrasp, "no object within grasp radius");
  }
  const std::string id = best->id;
  auto it = std::find_if(objects_.begin(), objects_.end(), [&](const ObjectInstance& o) { return o.id == id; });
  // Closing the fingers centers the part: keep its relative rotation, drop the offset.
  heldOffset_ = compose(inverse(robot_.endpoint), it->pose);
  heldOffset_.position.setZero();
  it->graspedBy = "gripper";
  held_ = id;
  setEndpoint(robot_.endpoint);
  return id;
}

std::optional<std::string> Simulator::executeRelease() {
  if (!held_) return std::nullopt;
  auto it = std::find_if(objects_.begin(), objects_.end(), [&](const ObjectInstance& o) { return o.id == *held_; });
  if (it != objects_.end()) it->graspedBy.reset();
  auto released = held_;
  held_.reset();
  return released;
}

void Simulator::setJoints(const JointVector& q) {
  motion_ = MotionStatus::Idle;
  robot_.joints = q;
  robot_.endpoint = ArmKinematics::forward(q);
  setEndpoint(robot_.endpoint);
  robot_.joints = q;
}

Pose Simulator::observeMarker() const {
  if (!markerVisible_) throw Error(ErrorCode::MarkerNotVisible, "calibration marker is not visible");
  return compose(inverse(scene_.camera), compose(robot_.endpoint, scene_.markerOffset));
}

void Simulator::step() {
  ++tick_;
  for (const auto& e : scene_.events) {
    if (e.tick != tick_) continue;
    if (e.property == "tool_in_position") toolInPosition_ = e.value;
    if (e.property == "marker_visible") markerVisible_ = e.value;
  }
  if (motion_ != MotionStatus::Busy) return;

  const Pose& cur = robot_.endpoint;
  const double posRemaining = (goal_.position - cur.position).norm();
  const double angRemaining = geodesicAngle(cur.orientation, goal_.orientation);
  const double posStep = goalSpeed_ * scene_.robot.tickPeriod;
  const double angStep = scene_.robot.angularSpeed * scene_.robot.tickPeriod;
  double fraction = 1.0;
  if (posRemaining > 0) fraction = std::min(fraction, posStep / posRemaining);
  if (angRemaining > 0) fraction = std::min(fraction, angStep / angRemaining);

  const Pose next(cur.position + fraction * (goal_.position - cur.position),
                  cur.orientation.slerp(fraction, goal_.orientation));
  const bool arrived = (goal_.position - next.position).norm() <= kArrivalTolerance &&
                       geodesicAngle(next.orientation, goal_.orientation) <= kArrivalTolerance;
  if (arrived) {
    setEndpoint(goal_);
    motion_ = MotionStatus::Success;
  } else {
    setEndpoint(next);
  }
}

json Simulator::snapshot() const {
  json objs = json::array();
  for (const auto& o : objects_) {
    json jo = {{"id", o.id}, {"class", o.classLabel}, {"pose", poseToJson(o.pose)}};
    if (o.graspedBy) jo["grasped_by"] = *o.graspedBy;
    objs.push_back(std::move(jo));
  }
  return {{"tick", tick_},
          {"endpoint", poseToJson(robot_.endpoint)},
          {"joints", robot_.joints},
          {"gripper", {{"closed", robot_.gripper.closed}, {"mode", std::string(toString(robot_.gripper.mode))}}},
          {"tool_powered", robot_.toolPowered},
          {"tool_in_position", toolInPosition_},
          {"objects", std::move(objs)}};
}

}  // namespace costar
