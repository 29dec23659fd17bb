#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace costar {

/// Rigid transform: position in meters, unit-quaternion orientation.
///
/// Orientation is kept normalized with w >= 0 by every function in this header,
/// so q and -q never appear as two different values.
struct Pose {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Eigen::Quaterniond orientation = Eigen::Quaterniond::Identity();

  Pose() = default;
  Pose(const Eigen::Vector3d& p, const Eigen::Quaterniond& q);

  static Pose identity() { return {}; }
  static Pose translation(double x, double y, double z);
  static Pose rotation(const Eigen::Quaterniond& q);

  Eigen::Vector3d apply(const Eigen::Vector3d& point) const;
};

Pose compose(const Pose& a, const Pose& b);
Pose inverse(const Pose& p);
inline Pose operator*(const Pose& a, const Pose& b) { return compose(a, b); }

/// Normalizes and flips the sign so that w >= 0 (first non-zero component
/// positive when w == 0).
Eigen::Quaterniond canonicalSign(const Eigen::Quaterniond& q);

/// Geodesic angle between two rotations, in [0, pi].
double geodesicAngle(const Eigen::Quaterniond& a, const Eigen::Quaterniond& b);
double rotationAngle(const Eigen::Quaterniond& q);

Eigen::Quaterniond rotX(double radians);
Eigen::Quaterniond rotY(double radians);
Eigen::Quaterniond rotZ(double radians);
Eigen::Quaterniond axisAngle(const Eigen::Vector3d& axis, double radians);

/// [x, y, z, qw, qx, qy, qz]
std::array<double, 7> toArray(const Pose& p);
Pose poseFromArray(std::span<const double> v);

/// Max of translation distance (m) and rotation angle (rad) between a and b.
double poseDistance(const Pose& a, const Pose& b);

struct SymmetryGroup {
  std::string name;
  std::vector<Eigen::Quaterniond> elements;  // element 0 is the identity

  std::size_t size() const { return elements.size(); }
  bool isClosed(double angleTolerance = 1e-6) const;
};

SymmetryGroup trivialGroup();
/// The 24 proper rotations of an axis-aligned cube.
SymmetryGroup cubeGroup();
/// n rotations about the body z axis, each with and without a 180 degree flip
/// about body x. Requires n >= 1.
SymmetryGroup cylinderGroup(int n);

enum class Axis { X = 0, Y = 1, Z = 2 };

/// Order in which body axes are compared against their world counterparts
/// when two symmetry candidates are equally close to identity.
using AxisPriority = std::array<Axis, 3>;
inline constexpr AxisPriority kDefaultAxisPriority{Axis::Z, Axis::X, Axis::Y};

struct CanonicalChoice {
  Pose pose;
  std::size_t element = 0;
};

/// Picks q = p * s over s in g with the smallest rotation angle from identity.
/// Near-equal angles (within 1e-9 rad) fall through to the axis priority, and
/// finally to a lexicographic order on the quaternion coefficients, so the
/// result depends only on the candidate rotations and not on element order.
CanonicalChoice canonicalize(const Pose& p, const SymmetryGroup& g,
                             const AxisPriority& priority = kDefaultAxisPriority);

Pose setCanonicalOrientation(const Pose& p, const SymmetryGroup& g,
                             const AxisPriority& priority = kDefaultAxisPriority);

}  // namespace costar
