#include "costar/calibration.hpp"

#include <cmath>
#include <numbers>

#include <Eigen/SVD>

#include "costar/error.hpp"
#include "costar/serialization.hpp"

namespace costar {

namespace {

Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
  Eigen::Matrix3d m;
  m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return m;
}

Eigen::Quaterniond quat(const Eigen::Vector4d& v) { return Eigen::Quaterniond(v(0), v(1), v(2), v(3)); }

Eigen::Matrix4d homogeneous(const Pose& p) {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = p.orientation.toRotationMatrix();
  m.topRightCorner<3, 1>() = p.position;
  return m;
}

// Rotation axis and angle of a motion; axis is zero for a pure translation.
std::pair<Eigen::Vector3d, double> screwAxis(const Pose& p) {
  const double angle = rotationAngle(p.orientation);
  const Eigen::Vector3d v = p.orientation.vec();
  if (v.norm() < 1e-12) return {Eigen::Vector3d::Zero(), angle};
  return {v.normalized(), angle};
}

}  // namespace

DualQuaternion toDualQuaternion(const Pose& p) {
  const Eigen::Quaterniond r = canonicalSign(p.orientation);
  const Eigen::Quaterniond t(0.0, p.position.x(), p.position.y(), p.position.z());
  Eigen::Quaterniond d = t * r;
  d.coeffs() *= 0.5;
  return {r, d};
}

double handEyeResidual(const std::vector<MotionPair>& pairs, const Pose& x) {
  if (pairs.empty()) return 0.0;
  const Eigen::Matrix4d mx = homogeneous(x);
  double sum = 0.0;
  for (const auto& pr : pairs) sum += (homogeneous(pr.a) * mx - mx * homogeneous(pr.b)).norm();
  return sum / static_cast<double>(pairs.size());
}

CalibrationResult solveHandEye(const std::vector<MotionPair>& pairs, const HandEyeOptions& opts) {
  if (pairs.size() < 2) throw Error(ErrorCode::DegenerateMotions, "need at least two motion pairs");

  std::vector<Eigen::Vector3d> axes;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto [axisA, angleA] = screwAxis(pairs[i].a);
    const auto [axisB, angleB] = screwAxis(pairs[i].b);
    if (std::abs(angleA - angleB) > opts.consistencyTolerance) {
      throw Error(ErrorCode::InconsistentPair, "pair " + std::to_string(i) + " rotates " +
                                                   std::to_string(angleA * 180.0 / std::numbers::pi) +
                                                   " deg for the robot but " +
                                                   std::to_string(angleB * 180.0 / std::numbers::pi) +
                                                   " deg for the camera");
    }
    if (axisA.squaredNorm() > 0.0 && angleA > opts.parallelAxisTolerance) axes.push_back(axisA);
  }
  bool spread = false;
  for (std::size_t i = 0; i < axes.size() && !spread; ++i) {
    for (std::size_t j = i + 1; j < axes.size() && !spread; ++j) {
      const double c = std::min(1.0, std::abs(axes[i].dot(axes[j])));
      spread = std::acos(c) > opts.parallelAxisTolerance;
    }
  }
  if (!spread) throw Error(ErrorCode::DegenerateMotions, "rotation axes are parallel; vary the station orientations");

  Eigen::MatrixXd t(6 * pairs.size(), 8);
  t.setZero();
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const DualQuaternion qa = toDualQuaternion(pairs[i].a);
    const DualQuaternion qb = toDualQuaternion(pairs[i].b);
    const Eigen::Vector3d a = qa.real.vec(), ad = qa.dual.vec();
    const Eigen::Vector3d b = qb.real.vec(), bd = qb.dual.vec();
    auto block = t.block<6, 8>(6 * static_cast<Eigen::Index>(i), 0);
    block.block<3, 1>(0, 0) = a - b;
    block.block<3, 3>(0, 1) = skew(a + b);
    block.block<3, 1>(3, 0) = ad - bd;
    block.block<3, 3>(3, 1) = skew(ad + bd);
    block.block<3, 1>(3, 4) = a - b;
    block.block<3, 3>(3, 5) = skew(a + b);
  }

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(t, Eigen::ComputeFullV);
  const Eigen::Matrix<double, 8, 1> v7 = svd.matrixV().col(6);
  const Eigen::Matrix<double, 8, 1> v8 = svd.matrixV().col(7);
  const Eigen::Vector4d u1 = v7.head<4>(), w1 = v7.tail<4>();
  const Eigen::Vector4d u2 = v8.head<4>(), w2 = v8.tail<4>();

  // q = l1*u1 + l2*u2 must satisfy |q| = 1 and q . q' = 0. The second
  // condition is a homogeneous quadratic in (l1, l2); solve it for both
  // l1/l2 and l2/l1 so that neither coefficient being zero loses a root.
  const double qa = u1.dot(w1);
  const double qb = u1.dot(w2) + u2.dot(w1);
  const double qc = u2.dot(w2);
  auto quadRoots = [](double a, double b, double c) {
    std::vector<double> r;
    if (std::abs(a) < 1e-14) {
      if (std::abs(b) > 1e-14) r.push_back(-c / b);
      return r;
    }
    const double disc = std::sqrt(std::max(0.0, b * b - 4.0 * a * c));
    r.push_back((-b + disc) / (2.0 * a));
    r.push_back((-b - disc) / (2.0 * a));
    return r;
  };
  std::vector<Eigen::Vector2d> dirs;
  for (double s : quadRoots(qa, qb, qc)) dirs.push_back(Eigen::Vector2d(s, 1.0).normalized());
  for (double t : quadRoots(qc, qb, qa)) dirs.push_back(Eigen::Vector2d(1.0, t).normalized());
  if (dirs.empty()) throw Error(ErrorCode::DegenerateMotions, "hand-eye null space has no unit solution");

  Eigen::Vector4d q, qd;
  double bestNorm = -1.0;
  for (const auto& d : dirs) {
    const double n = (d.x() * u1 + d.y() * u2).squaredNorm();
    if (n > bestNorm) {
      bestNorm = n;
      const double scale = 1.0 / std::sqrt(n);
      q = scale * (d.x() * u1 + d.y() * u2);
      qd = scale * (d.x() * w1 + d.y() * w2);
    }
  }

  const Eigen::Quaterniond rot = quat(q);
  Eigen::Quaterniond trans = quat(qd) * rot.conjugate();
  const Eigen::Vector3d p = 2.0 * trans.vec();

  CalibrationResult r;
  r.x = Pose(p, rot);
  r.pairCount = pairs.size();
  r.residual = handEyeResidual(pairs, r.x);
  return r;
}

std::vector<Pose> stationPoses(std::size_t n) {
  // Positions on a small Lissajous loop, orientations tilted about axes that
  // sweep the sphere by the golden angle so consecutive motions differ.
  constexpr double golden = 2.399963229728653;
  std::vector<Pose> out;
  out.reserve(n);
  const Eigen::Vector3d center(0.45, 0.0, 0.35);
  for (std::size_t k = 0; k < n; ++k) {
    const double a = static_cast<double>(k) * golden;
    const Eigen::Vector3d pos = center + Eigen::Vector3d(0.08 * std::cos(a), 0.08 * std::sin(a), 0.05 * std::sin(2 * a));
    const double zk = 1.0 - 2.0 * (static_cast<double>(k) + 0.5) / static_cast<double>(n);
    const double rk = std::sqrt(std::max(0.0, 1.0 - zk * zk));
    const Eigen::Vector3d axis(rk * std::cos(a), rk * std::sin(a), zk);
    const double tilt = (0.25 + 0.15 * std::sin(1.7 * static_cast<double>(k))) * (k % 2 == 0 ? 1.0 : -1.0);
    out.emplace_back(pos, rotX(std::numbers::pi) * axisAngle(axis, tilt));
  }
  return out;
}

std::vector<MotionPair> collectStations(Simulator& sim, const StationOptions& opts) {
  std::vector<Pose> endpoints;
  std::vector<Pose> markers;
  std::normal_distribution<double> normal(0.0, 1.0);
  auto& rng = sim.rng();
  for (const Pose& target : stationPoses(opts.stations)) {
    const auto q = ArmKinematics::inverse(target);
    if (!q) throw Error(ErrorCode::Unreachable, "calibration station outside the arm's reach");
    sim.setJoints(*q);
    Pose m = sim.observeMarker();
    if (opts.noisePos > 0.0) {
      m.position += opts.noisePos * Eigen::Vector3d(normal(rng), normal(rng), normal(rng));
    }
    if (opts.noiseRotDeg > 0.0) {
      Eigen::Vector3d axis(normal(rng), normal(rng), normal(rng));
      if (axis.norm() < 1e-12) axis = Eigen::Vector3d::UnitZ();
      const double angle = opts.noiseRotDeg * std::numbers::pi / 180.0 * normal(rng);
      m = Pose(m.position, m.orientation * axisAngle(axis.normalized(), angle));
    }
    endpoints.push_back(sim.robot().endpoint);
    markers.push_back(m);
  }

  const Pose markerInv = inverse(sim.scene().markerOffset);
  std::vector<MotionPair> pairs;
  auto add = [&](std::size_t i, std::size_t j) {
    const Pose ni = markers[i] * markerInv;
    const Pose nj = markers[j] * markerInv;
    pairs.push_back({endpoints[i] * inverse(endpoints[j]), ni * inverse(nj)});
  };
  for (std::size_t i = 0; i + 1 < endpoints.size(); ++i) {
    if (opts.allPairs) {
      for (std::size_t j = i + 1; j < endpoints.size(); ++j) add(i, j);
    } else {
      add(i, i + 1);
    }
  }
  return pairs;
}

nlohmann::json calibrationToJson(const CalibrationResult& r) {
  return {{"camera", poseToJson(r.x)}, {"residual", r.residual}, {"pairCount", r.pairCount}};
}

Pose cameraFromCalibrationJson(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("camera")) {
    throw Error(ErrorCode::InvalidParameter, "calibration document has no 'camera' pose");
  }
  return poseFromJson(j["camera"]);
}

}  // namespace costar
