#include "costar/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numbers>
#include <stdexcept>

#include "costar/error.hpp"

namespace costar {

std::string_view toString(ErrorCode code) {
  switch (code) {
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::Unreachable: return "Unreachable";
    case ErrorCode::NothingToGrasp: return "NothingToGrasp";
    case ErrorCode::UnknownPredicate: return "UnknownPredicate";
    case ErrorCode::UnknownSymbol: return "UnknownSymbol";
    case ErrorCode::ArityMismatch: return "ArityMismatch";
    case ErrorCode::MalformedTree: return "MalformedTree";
    case ErrorCode::UnboundOperation: return "UnboundOperation";
    case ErrorCode::SyntaxError: return "SyntaxError";
    case ErrorCode::UnsupportedMode: return "UnsupportedMode";
    case ErrorCode::NoFeasibleGoal: return "NoFeasibleGoal";
    case ErrorCode::InvalidParameter: return "InvalidParameter";
    case ErrorCode::DegenerateMotions: return "DegenerateMotions";
    case ErrorCode::InconsistentPair: return "InconsistentPair";
    case ErrorCode::MarkerNotVisible: return "MarkerNotVisible";
    case ErrorCode::ValidationFailed: return "ValidationFailed";
    case ErrorCode::TickBudgetExceeded: return "TickBudgetExceeded";
    case ErrorCode::UnknownTopic: return "UnknownTopic";
    case ErrorCode::InvalidScene: return "InvalidScene";
    case ErrorCode::NotFound: return "NotFound";
  }
  return "Unknown";
}

Eigen::Quaterniond canonicalSign(const Eigen::Quaterniond& q) {
  Eigen::Quaterniond n = q.normalized();
  const std::array<double, 4> c{n.w(), n.x(), n.y(), n.z()};
  for (double v : c) {
    if (v > 0.0) return n;
    if (v < 0.0) return Eigen::Quaterniond(-n.w(), -n.x(), -n.y(), -n.z());
  }
  return Eigen::Quaterniond::Identity();
}

Pose::Pose(const Eigen::Vector3d& p, const Eigen::Quaterniond& q)
    : position(p), orientation(canonicalSign(q)) {}

Pose Pose::translation(double x, double y, double z) {
  return {Eigen::Vector3d(x, y, z), Eigen::Quaterniond::Identity()};
}

Pose Pose::rotation(const Eigen::Quaterniond& q) { return {Eigen::Vector3d::Zero(), q}; }

Eigen::Vector3d Pose::apply(const Eigen::Vector3d& point) const {
  return orientation * point + position;
}

Pose compose(const Pose& a, const Pose& b) {
  return {a.position + a.orientation * b.position, a.orientation * b.orientation};
}

Pose inverse(const Pose& p) {
  const Eigen::Quaterniond qi = p.orientation.conjugate();
  return {-(qi * p.position), qi};
}

double geodesicAngle(const Eigen::Quaterniond& a, const Eigen::Quaterniond& b) {
  // 2*acos(|w|) of the relative rotation, evaluated through atan2 so that
  // angles near zero keep full precision.
  const Eigen::Quaterniond rel = a.normalized().conjugate() * b.normalized();
  return 2.0 * std::atan2(rel.vec().norm(), std::abs(rel.w()));
}

double rotationAngle(const Eigen::Quaterniond& q) {
  return geodesicAngle(Eigen::Quaterniond::Identity(), q);
}

Eigen::Quaterniond axisAngle(const Eigen::Vector3d& axis, double radians) {
  return canonicalSign(Eigen::Quaterniond(Eigen::AngleAxisd(radians, axis.normalized())));
}

Eigen::Quaterniond rotX(double radians) { return axisAngle(Eigen::Vector3d::UnitX(), radians); }
Eigen::Quaterniond rotY(double radians) { return axisAngle(Eigen::Vector3d::UnitY(), radians); }
Eigen::Quaterniond rotZ(double radians) { return axisAngle(Eigen::Vector3d::UnitZ(), radians); }

std::array<double, 7> toArray(const Pose& p) {
  return {p.position.x(),    p.position.y(),    p.position.z(),   p.orientation.w(),
          p.orientation.x(), p.orientation.y(), p.orientation.z()};
}

Pose poseFromArray(std::span<const double> v) {
  if (v.size() != 7) {
    throw std::invalid_argument("pose must have 7 components [x,y,z,qw,qx,qy,qz]");
  }
  const Eigen::Quaterniond q(v[3], v[4], v[5], v[6]);
  if (q.norm() < 1e-12) throw std::invalid_argument("pose quaternion has zero norm");
  return {Eigen::Vector3d(v[0], v[1], v[2]), q};
}

double poseDistance(const Pose& a, const Pose& b) {
  return std::max((a.position - b.position).norm(), geodesicAngle(a.orientation, b.orientation));
}

namespace {

bool containsRotation(const std::vector<Eigen::Quaterniond>& set, const Eigen::Quaterniond& q,
                      double tol) {
  return std::any_of(set.begin(), set.end(),
                     [&](const Eigen::Quaterniond& e) { return geodesicAngle(e, q) < tol; });
}

}  // namespace

bool SymmetryGroup::isClosed(double angleTolerance) const {
  for (const auto& a : elements) {
    for (const auto& b : elements) {
      if (!containsRotation(elements, a * b, angleTolerance)) return false;
    }
  }
  return true;
}

SymmetryGroup trivialGroup() { return {"trivial", {Eigen::Quaterniond::Identity()}}; }

SymmetryGroup cubeGroup() {
  // Close {rotX(90), rotZ(90)} under composition, breadth first.
  const std::array<Eigen::Quaterniond, 2> generators{rotX(std::numbers::pi / 2),
                                                     rotZ(std::numbers::pi / 2)};
  SymmetryGroup g{"cube", {Eigen::Quaterniond::Identity()}};
  std::deque<Eigen::Quaterniond> frontier{Eigen::Quaterniond::Identity()};
  while (!frontier.empty()) {
    const Eigen::Quaterniond cur = frontier.front();
    frontier.pop_front();
    for (const auto& gen : generators) {
      const Eigen::Quaterniond next = canonicalSign(cur * gen);
      if (!containsRotation(g.elements, next, 1e-6)) {
        g.elements.push_back(next);
        frontier.push_back(next);
      }
    }
  }
  return g;
}

SymmetryGroup cylinderGroup(int n) {
  if (n < 1) throw std::invalid_argument("cylinderGroup requires n >= 1");
  SymmetryGroup g{"cylinder" + std::to_string(n), {}};
  const Eigen::Quaterniond flip = rotX(std::numbers::pi);
  for (int k = 0; k < n; ++k) {
    g.elements.push_back(rotZ(2.0 * std::numbers::pi * k / n));
  }
  for (int k = 0; k < n; ++k) {
    g.elements.push_back(canonicalSign(rotZ(2.0 * std::numbers::pi * k / n) * flip));
  }
  return g;
}

namespace {

constexpr double kTieTolerance = 1e-9;

// Negative when a should be preferred over b.
int compareCandidates(const Eigen::Quaterniond& a, const Eigen::Quaterniond& b,
                      const AxisPriority& priority) {
  const double angleA = rotationAngle(a);
  const double angleB = rotationAngle(b);
  if (angleA < angleB - kTieTolerance) return -1;
  if (angleB < angleA - kTieTolerance) return 1;

  const Eigen::Matrix3d ra = a.toRotationMatrix();
  const Eigen::Matrix3d rb = b.toRotationMatrix();
  for (Axis axis : priority) {
    const int k = static_cast<int>(axis);
    // Body axis k expressed in world, dotted with world axis k.
    const double da = ra(k, k);
    const double db = rb(k, k);
    if (da > db + kTieTolerance) return -1;
    if (db > da + kTieTolerance) return 1;
  }

  const std::array<double, 4> ca{a.w(), a.x(), a.y(), a.z()};
  const std::array<double, 4> cb{b.w(), b.x(), b.y(), b.z()};
  for (std::size_t i = 0; i < 4; ++i) {
    if (ca[i] > cb[i] + kTieTolerance) return -1;
    if (cb[i] > ca[i] + kTieTolerance) return 1;
  }
  return 0;
}

}  // namespace

CanonicalChoice canonicalize(const Pose& p, const SymmetryGroup& g, const AxisPriority& priority) {
  if (g.elements.empty()) throw std::invalid_argument("symmetry group is empty");
  CanonicalChoice best{compose(p, Pose::rotation(g.elements[0])), 0};
  for (std::size_t i = 1; i < g.elements.size(); ++i) {
    Pose candidate = compose(p, Pose::rotation(g.elements[i]));
    if (compareCandidates(candidate.orientation, best.pose.orientation, priority) < 0) {
      best = {candidate, i};
    }
  }
  return best;
}

Pose setCanonicalOrientation(const Pose& p, const SymmetryGroup& g, const AxisPriority& priority) {
  return canonicalize(p, g, priority).pose;
}

}  // namespace costar
