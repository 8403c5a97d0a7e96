#pragma once

// Pure 3D geometry: rigid transforms, pinhole/stereo camera math and
// least-squares rigid registration. Everything here is a pure function.

#include <cmath>
#include <utility>

#include <Eigen/Dense>

#include "aina/common.hpp"
#include "aina/rng.hpp"

namespace aina {

struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static RigidTransform identity() { return {}; }

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }

  RigidTransform compose(const RigidTransform& other) const {
    // (*this) * other: apply `other` first.
    return {rotation * other.rotation, rotation * other.translation + translation};
  }

  RigidTransform inverse() const {
    Mat3 rt = rotation.transpose();
    return {rt, -(rt * translation)};
  }

  bool is_valid_rotation(double tol = 1e-9) const {
    return (rotation * rotation.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff() <= tol &&
           std::abs(rotation.determinant() - 1.0) <= tol;
  }
};

inline RigidTransform rot_z(double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  RigidTransform T;
  T.rotation << c, -s, 0, s, c, 0, 0, 0, 1;
  return T;
}

inline RigidTransform translate(const Vec3& t) { return {Mat3::Identity(), t}; }

// Uniform random rotation (quaternion method, Shoemake).
inline Mat3 random_rotation(Rng& rng) {
  const double u1 = rng.uniform(), u2 = rng.uniform(), u3 = rng.uniform();
  const double two_pi = 6.283185307179586476925286766559;
  const double a = std::sqrt(1.0 - u1), b = std::sqrt(u1);
  Eigen::Quaterniond q(a * std::sin(two_pi * u2), a * std::cos(two_pi * u2),
                       b * std::sin(two_pi * u3), b * std::cos(two_pi * u3));
  return q.toRotationMatrix();
}

struct PinholeCamera {
  double fx = 0, fy = 0;  // pixels
  double cx = 0, cy = 0;  // pixels
  RigidTransform pose;    // camera-to-reference
};

// Rectified pair: identical intrinsics, right camera displaced by `baseline`
// along the left camera's +x axis.
struct StereoRig {
  PinholeCamera left;
  PinholeCamera right;
  double baseline = 0;  // meters
};

inline StereoRig make_rectified_rig(double fx, double fy, double cx, double cy,
                                    double baseline,
                                    const RigidTransform& left_pose = RigidTransform::identity()) {
  StereoRig rig;
  rig.left = {fx, fy, cx, cy, left_pose};
  rig.right = {fx, fy, cx, cy, left_pose.compose(translate(Vec3(baseline, 0, 0)))};
  rig.baseline = baseline;
  return rig;
}

// Z = f * B / d for a rectified pair, depth relative to the left frame.
inline double disparity_to_depth(double f, double B, double d, double epsilon_d = 1e-6) {
  if (!(f > 0) || !(B > 0)) throw DegenerateConfiguration("focal length and baseline must be positive");
  if (d <= epsilon_d) throw DegenerateDisparity("d=" + std::to_string(d));
  return f * B / d;
}

// Pixel + depth to a 3D point in the camera frame.
inline Vec3 unproject(const PinholeCamera& cam, double u, double v, double depth) {
  if (!(depth > 0)) throw NonPositiveDepth("depth=" + std::to_string(depth));
  return Vec3((u - cam.cx) * depth / cam.fx, (v - cam.cy) * depth / cam.fy, depth);
}

// Camera-frame point to pixel. Inverse of unproject.
inline Eigen::Vector2d project(const PinholeCamera& cam, const Vec3& p_cam) {
  if (!(p_cam.z() > 0)) throw NonPositiveDepth("z=" + std::to_string(p_cam.z()));
  return {cam.fx * p_cam.x() / p_cam.z() + cam.cx, cam.fy * p_cam.y() / p_cam.z() + cam.cy};
}

inline PointMatrix transform_points(const RigidTransform& T, const PointMatrix& points) {
  PointMatrix out = points * T.rotation.transpose();
  out.rowwise() += T.translation.transpose();
  return out;
}

inline Vec3 centroid(const PointMatrix& points) {
  if (points.rows() == 0) throw DegenerateConfiguration("centroid of empty point set");
  return points.colwise().mean().transpose();
}

// Least-squares rigid transform T with T(P) ~ Q for row-correspondent point
// sets (Kabsch). Reflections are forbidden by flipping the sign of the last
// singular vector when det < 0.
inline RigidTransform kabsch(const PointMatrix& P, const PointMatrix& Q) {
  if (P.rows() != Q.rows() || P.rows() < 3) throw DegenerateConfiguration("need >= 3 corresponding points");
  const Vec3 pc = centroid(P), qc = centroid(Q);
  PointMatrix Pc = P.rowwise() - pc.transpose();
  PointMatrix Qc = Q.rowwise() - qc.transpose();
  const Mat3 H = Pc.transpose() * Qc;  // cross-covariance
  Eigen::JacobiSVD<Mat3> svd(H, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 sv = svd.singularValues();
  // rank(centered P) < 2 leaves the rotation underdetermined.
  if (sv(1) <= 1e-12 * std::max(sv(0), 1e-300)) throw DegenerateConfiguration("centered points are rank < 2");
  Mat3 U = svd.matrixU(), V = svd.matrixV();
  Mat3 D = Mat3::Identity();
  D(2, 2) = (V * U.transpose()).determinant() < 0 ? -1.0 : 1.0;
  RigidTransform T;
  T.rotation = V * D * U.transpose();
  T.translation = qc - T.rotation * pc;
  return T;
}

// Rotation about +z closest to T.rotation in Frobenius norm:
// theta = atan2(R10 - R01, R00 + R11). Returns the angle and the pure
// z-rotation with zero translation.
inline std::pair<double, RigidTransform> extract_z_rotation(const RigidTransform& T) {
  const Mat3& R = T.rotation;
  const double s = R(1, 0) - R(0, 1);
  const double c = R(0, 0) + R(1, 1);
  if (std::abs(s) < 1e-12 && std::abs(c) < 1e-12)
    throw DegenerateConfiguration("rotation axis orthogonal to z");
  const double theta = std::atan2(s, c);
  return {theta, rot_z(theta)};
}

// Midpoint of the common perpendicular of the two back-projected rays.
// Pixels are in each camera's image; the result is in the reference frame.
inline Vec3 triangulate(const PinholeCamera& cam_a, const PinholeCamera& cam_b,
                        const Eigen::Vector2d& pix_a, const Eigen::Vector2d& pix_b) {
  const Vec3 oa = cam_a.pose.translation;
  const Vec3 ob = cam_b.pose.translation;
  // Coincident centers cannot triangulate anything, whatever the pixels.
  if ((oa - ob).norm() < 1e-12) throw ParallelRays("camera centers coincide");
  const Vec3 da = (cam_a.pose.rotation *
                   Vec3((pix_a.x() - cam_a.cx) / cam_a.fx, (pix_a.y() - cam_a.cy) / cam_a.fy, 1.0))
                      .normalized();
  const Vec3 db = (cam_b.pose.rotation *
                   Vec3((pix_b.x() - cam_b.cx) / cam_b.fx, (pix_b.y() - cam_b.cy) / cam_b.fy, 1.0))
                      .normalized();
  const Vec3 cross = da.cross(db);
  const double denom = cross.squaredNorm();
  if (denom < 1e-18) throw ParallelRays();  // |sin angle| < 1e-9
  // oa + s*da and ob + t*db at closest approach.
  const Vec3 w = ob - oa;
  const double s = w.cross(db).dot(cross) / denom;
  const double t = w.cross(da).dot(cross) / denom;
  return 0.5 * ((oa + s * da) + (ob + t * db));
}

}  // namespace aina
