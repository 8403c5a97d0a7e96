#pragma once

// Domain alignment: maps in-the-wild trajectories into the robot base frame
// using the single in-scene demonstration as the anchor. The translation is
// the first-frame object-centroid offset and the rotation is the z-component
// of the Kabsch transform between the initial hand poses.

#include <string>

#include "aina/common.hpp"
#include "aina/geom.hpp"
#include "aina/trajectory.hpp"

namespace aina {

enum class AlignMode {
  // O_hat = R_z * O + dO, exactly as written; rotation about the origin.
  literal,
  // O_hat = R_z * (O - c_w) + c_s; guarantees first-frame centroid
  // coincidence regardless of where c_w sits relative to the z-axis.
  pivoted,
};

inline AlignMode parse_align_mode(const std::string& s) {
  if (s == "literal") return AlignMode::literal;
  if (s == "pivoted") return AlignMode::pivoted;
  throw BadConfig("unknown align mode '" + s + "'");
}

struct AlignmentResult {
  Vec3 delta_o = Vec3::Zero();  // scene centroid - wild centroid, first frames
  double theta_z = 0;           // radians, in (-pi, pi]
  AlignMode mode = AlignMode::pivoted;
  Trajectory aligned;
};

// centroid(scene_first) - centroid(wild_first).
inline Vec3 centroid_offset(const PointMatrix& scene_first, const PointMatrix& wild_first) {
  return centroid(scene_first) - centroid(wild_first);
}

// Kabsch from the wild initial hand pose onto the scene one, then the
// z-rotation component. Returns (theta_z, R_z).
inline std::pair<double, RigidTransform> hand_yaw(const HandMatrix& scene_hand0,
                                                  const HandMatrix& wild_hand0) {
  const RigidTransform T = kabsch(wild_hand0, scene_hand0);
  return extract_z_rotation(T);
}

inline AlignmentResult align_trajectory(const Trajectory& wild, const Trajectory& scene,
                                        AlignMode mode = AlignMode::pivoted) {
  if (wild.source != Source::in_the_wild || scene.source != Source::in_scene)
    throw NonAlignedInput("align_trajectory expects (wild, scene) source tags");
  if (wild.frames.empty() || scene.frames.empty()) throw InvalidTrajectory("empty trajectory");
  if (wild.point_count() != scene.point_count())
    throw NMismatch("wild N=" + std::to_string(wild.point_count()) + " scene N=" +
                    std::to_string(scene.point_count()));

  const Vec3 c_w = centroid(wild.frames.front().objects);
  const Vec3 c_s = centroid(scene.frames.front().objects);

  AlignmentResult result;
  result.mode = mode;
  result.delta_o = c_s - c_w;
  auto [theta, rz] = hand_yaw(scene.frames.front().hand, wild.frames.front().hand);
  result.theta_z = theta;

  // Both modes are the same isometry family; they differ in the pivot.
  // literal:  p -> R_z p + dO
  // pivoted:  p -> R_z (p - c_w) + c_s
  RigidTransform map;
  map.rotation = rz.rotation;
  map.translation = mode == AlignMode::literal ? result.delta_o : c_s - rz.rotation * c_w;

  result.aligned = wild;
  // Aligned wild data keeps its wild source tag: it is not the in-scene demo.
  result.aligned.frame_of_reference = FrameOfReference::robot_base;
  for (Frame& f : result.aligned.frames) {
    f.objects = transform_points(map, f.objects);
    f.hand = transform_points(map, PointMatrix(f.hand));
  }
  return result;
}

// The "In-The-Wild Only" baseline transform: shift the trajectory so its
// first-frame object centroid lands on a manually measured operation-space
// center, with no rotation correction, and assert it is in the robot frame.
inline Trajectory naive_shift_align(const Trajectory& wild, const Vec3& operation_center) {
  Trajectory out = wild;
  const Vec3 shift = operation_center - centroid(wild.frames.front().objects);
  for (Frame& f : out.frames) {
    f.objects.rowwise() += shift.transpose();
    f.hand.rowwise() += shift.transpose();
  }
  out.frame_of_reference = FrameOfReference::robot_base;
  out.source = Source::in_the_wild;
  return out;
}

}  // namespace aina
