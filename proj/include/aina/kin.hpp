#pragma once

// 13-DOF arm+hand kinematic chain: forward kinematics to the five
// fingertips, damped-least-squares IK on the stacked 15x13 position
// Jacobian, and the grasp-threshold heuristic.

#include <array>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "aina/common.hpp"
#include "aina/geom.hpp"

namespace aina {
namespace kin {

using JointState = Eigen::VectorXd;

struct Joint {
  std::string name;
  int parent = -1;         // index of parent joint, -1 = robot base
  Vec3 axis = Vec3::UnitZ();
  RigidTransform origin;   // parent frame -> joint frame at zero angle
  double lo = -3.14, hi = 3.14;  // limits, radians
};

struct FingertipFrame {
  std::string name;
  int parent = -1;         // joint the tip frame is rigidly attached to
  RigidTransform origin;
};

struct KinematicChain {
  std::vector<Joint> joints;                       // parent index < own index
  std::array<FingertipFrame, kNumFingertips> fingertips;  // thumb..pinky
  int arm_dof = 7;
  int hand_dof = 6;

  int dof() const { return static_cast<int>(joints.size()); }

  JointState zero_state() const { return JointState::Zero(dof()); }

  JointState clamp(const JointState& q) const {
    JointState out = q;
    for (int i = 0; i < dof(); ++i) out[i] = std::min(std::max(out[i], joints[i].lo), joints[i].hi);
    return out;
  }

  bool within_limits(const JointState& q, double tol = 1e-9) const {
    for (int i = 0; i < dof(); ++i)
      if (q[i] < joints[i].lo - tol || q[i] > joints[i].hi + tol) return false;
    return true;
  }
};

namespace detail {

inline RigidTransform joint_motion(const Joint& j, double angle) {
  RigidTransform m;
  m.rotation = Eigen::AngleAxisd(angle, j.axis).toRotationMatrix();
  return j.origin.compose(m);
}

// World transform of every joint frame.
inline std::vector<RigidTransform> joint_transforms(const KinematicChain& chain, const JointState& q) {
  std::vector<RigidTransform> T(chain.joints.size());
  for (size_t i = 0; i < chain.joints.size(); ++i) {
    const Joint& j = chain.joints[i];
    const RigidTransform local = joint_motion(j, q[static_cast<Eigen::Index>(i)]);
    T[i] = j.parent < 0 ? local : T[j.parent].compose(local);
  }
  return T;
}

}  // namespace detail

// Forward kinematics: fingertip positions in the robot base frame,
// rows ordered thumb, index, middle, ring, pinky.
inline HandMatrix fk(const KinematicChain& chain, const JointState& q, bool strict = false) {
  if (q.size() != chain.dof()) throw ShapeMismatch("joint state size != chain dof");
  if (strict && !chain.within_limits(q)) throw JointLimitViolation();
  const auto T = detail::joint_transforms(chain, q);
  HandMatrix tips;
  for (int f = 0; f < kNumFingertips; ++f) {
    const FingertipFrame& tip = chain.fingertips[f];
    tips.row(f) = T[tip.parent].compose(tip.origin).translation.transpose();
  }
  return tips;
}

// Stacked 15 x dof position Jacobian (revolute joints): column j of block f
// is axis_j x (tip_f - origin_j) when joint j is an ancestor of tip f.
inline Eigen::MatrixXd fingertip_jacobian(const KinematicChain& chain, const JointState& q) {
  const auto T = detail::joint_transforms(chain, q);
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(3 * kNumFingertips, chain.dof());
  for (int f = 0; f < kNumFingertips; ++f) {
    const FingertipFrame& tipframe = chain.fingertips[f];
    const Vec3 tip = T[tipframe.parent].compose(tipframe.origin).translation;
    for (int j = tipframe.parent; j >= 0; j = chain.joints[j].parent) {
      const Vec3 axis_world = T[j].rotation * chain.joints[j].axis;
      J.block<3, 1>(3 * f, j) = axis_world.cross(tip - T[j].translation);
    }
  }
  return J;
}

struct IkOptions {
  double tol_rms = 1e-4;       // meters, per-fingertip RMS
  int max_iters = 200;
  double lambda0 = 1e-3;       // initial damping
  // Pull toward the warm start, resolving redundancy. The pull bounds the
  // reachable residual from below (~ weight * |dq| / sigma_max), so it must
  // stay well under tol_rms-equivalent scale.
  double reg_weight = 1e-6;
};

struct IkReport {
  bool converged = false;
  int iterations = 0;
  double residual_rms = 0;              // meters
  std::vector<double> residual_history; // accepted iterates, non-increasing
};

struct IkResult {
  JointState joints;
  IkReport report;
};

namespace detail {
inline double tip_rms(const HandMatrix& a, const HandMatrix& b) {
  return std::sqrt((a - b).squaredNorm() / kNumFingertips);
}
}  // namespace detail

// Damped least squares with residual-monotone acceptance: a step is kept
// only if the clamped candidate does not increase the residual; otherwise
// the damping is raised and the step retried. Best iterate is always
// returned; non-convergence is a report flag, never an exception.
inline IkResult ik(const KinematicChain& chain, const HandMatrix& target,
                   const JointState& warm_start, const IkOptions& opts = {}) {
  if (warm_start.size() != chain.dof()) throw ShapeMismatch("warm start size != chain dof");
  const int dof = chain.dof();
  JointState q = chain.clamp(warm_start);
  const JointState q_ref = q;

  HandMatrix tips = fk(chain, q);
  double rms = detail::tip_rms(tips, target);
  double lambda = opts.lambda0;

  IkResult result;
  result.report.residual_history.push_back(rms);

  int iter = 0;
  while (iter < opts.max_iters && rms >= opts.tol_rms) {
    const Eigen::MatrixXd J = fingertip_jacobian(chain, q);
    Eigen::VectorXd r(3 * kNumFingertips);
    for (int f = 0; f < kNumFingertips; ++f)
      r.segment<3>(3 * f) = (target.row(f) - tips.row(f)).transpose();

    bool accepted = false;
    while (!accepted && lambda < 1e8) {
      Eigen::MatrixXd A = J.transpose() * J;
      A.diagonal().array() += lambda + opts.reg_weight;
      const Eigen::VectorXd b = J.transpose() * r + opts.reg_weight * (q_ref - q);
      const JointState cand = chain.clamp(q + A.ldlt().solve(b));
      const HandMatrix cand_tips = fk(chain, cand);
      const double cand_rms = detail::tip_rms(cand_tips, target);
      if (cand_rms <= rms) {
        q = cand;
        tips = cand_tips;
        rms = cand_rms;
        lambda = std::max(lambda * 0.5, 1e-12);
        accepted = true;
      } else {
        lambda *= 10.0;
      }
    }
    ++iter;
    if (!accepted) break;  // damping exhausted, no improving step exists
    result.report.residual_history.push_back(rms);
  }

  result.joints = q;
  result.report.converged = rms < opts.tol_rms;
  result.report.iterations = iter;
  result.report.residual_rms = rms;
  return result;
}

// Grasp heuristic: human demos carry no force signal, so predicted grasps
// are tightened. Any non-thumb tip strictly closer than `threshold` to the
// thumb pulls both tips toward their mutual midpoint by `fraction` of the
// gap each, leaving (1 - 2*fraction) of the original distance.
inline HandMatrix grasp_adjust(const HandMatrix& tips, double threshold = 0.05,
                               double fraction = 0.4) {
  if (!(fraction >= 0.0 && fraction < 0.5)) throw BadConfig("grasp fraction must be in [0, 0.5)");
  HandMatrix out = tips;
  Vec3 thumb = out.row(0).transpose();
  for (int f = 1; f < kNumFingertips; ++f) {
    const Vec3 tip = out.row(f).transpose();
    const Vec3 gap = tip - thumb;
    const double d = gap.norm();
    if (d >= threshold || d == 0.0) continue;
    const Vec3 pull = fraction * gap;
    thumb += pull;
    out.row(f) = (tip - pull).transpose();
  }
  out.row(0) = thumb.transpose();
  return out;
}

// --- Chain file format -------------------------------------------------------

inline constexpr int kChainFormatVersion = 1;

namespace detail {
inline nlohmann::ordered_json transform_to_json(const RigidTransform& T) {
  std::array<double, 16> m{};
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) m[4 * r + c] = T.rotation(r, c);
    m[4 * r + 3] = T.translation[r];
  }
  m[15] = 1.0;
  return nlohmann::ordered_json(m);
}

inline RigidTransform transform_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 16) throw BadConfig("origin must be a 16-element row-major matrix");
  RigidTransform T;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) T.rotation(r, c) = j[4 * r + c].get<double>();
    T.translation[r] = j[4 * r + 3].get<double>();
  }
  if (!T.is_valid_rotation(1e-6)) throw BadConfig("origin rotation block is not a rotation");
  return T;
}
}  // namespace detail

inline void save_chain(const KinematicChain& chain, const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["format"] = "aina-chain";
  j["version"] = kChainFormatVersion;
  j["arm_dof"] = chain.arm_dof;
  j["hand_dof"] = chain.hand_dof;
  auto joints = nlohmann::ordered_json::array();
  for (const Joint& joint : chain.joints) {
    nlohmann::ordered_json je;
    je["name"] = joint.name;
    je["parent"] = joint.parent < 0 ? "" : chain.joints[joint.parent].name;
    je["axis"] = {joint.axis.x(), joint.axis.y(), joint.axis.z()};
    je["origin"] = detail::transform_to_json(joint.origin);
    je["limits"] = {joint.lo, joint.hi};
    joints.push_back(je);
  }
  j["joints"] = joints;
  auto tips = nlohmann::ordered_json::array();
  for (const FingertipFrame& tip : chain.fingertips) {
    nlohmann::ordered_json te;
    te["name"] = tip.name;
    te["parent"] = chain.joints[tip.parent].name;
    te["origin"] = detail::transform_to_json(tip.origin);
    tips.push_back(te);
  }
  j["fingertips"] = tips;
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

inline KinematicChain load_chain(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw BadConfig(std::string("chain parse: ") + e.what());
  }
  if (j.value("format", "") != "aina-chain") throw BadConfig("not a chain file");
  if (j.value("version", -1) != kChainFormatVersion) throw UnsupportedVersion("chain version");

  KinematicChain chain;
  chain.arm_dof = j.value("arm_dof", 7);
  chain.hand_dof = j.value("hand_dof", 6);
  auto index_of = [&](const std::string& name) -> int {
    if (name.empty()) return -1;
    for (size_t i = 0; i < chain.joints.size(); ++i)
      if (chain.joints[i].name == name) return static_cast<int>(i);
    throw BadConfig("unknown parent joint '" + name + "'");
  };
  for (const auto& je : j.at("joints")) {
    Joint joint;
    joint.name = je.at("name").get<std::string>();
    joint.parent = index_of(je.at("parent").get<std::string>());
    const auto& ax = je.at("axis");
    joint.axis = Vec3(ax[0].get<double>(), ax[1].get<double>(), ax[2].get<double>()).normalized();
    joint.origin = detail::transform_from_json(je.at("origin"));
    joint.lo = je.at("limits")[0].get<double>();
    joint.hi = je.at("limits")[1].get<double>();
    if (!(joint.lo < joint.hi)) throw BadConfig("joint limits must satisfy lo < hi");
    chain.joints.push_back(joint);
  }
  if (chain.dof() != chain.arm_dof + chain.hand_dof)
    throw BadConfig("joint count does not match arm_dof + hand_dof");
  const auto& tips = j.at("fingertips");
  if (tips.size() != kNumFingertips) throw BadConfig("expected 5 fingertip frames");
  for (size_t f = 0; f < kNumFingertips; ++f) {
    FingertipFrame tip;
    tip.name = tips[f].at("name").get<std::string>();
    tip.parent = index_of(tips[f].at("parent").get<std::string>());
    if (tip.parent < 0) throw BadConfig("fingertip must attach to a joint");
    tip.origin = detail::transform_from_json(tips[f].at("origin"));
    chain.fingertips[f] = tip;
  }
  return chain;
}

// Reference 7-DOF arm + 6-DOF five-finger hand. Link lengths: shoulder
// column 0.28, upper arm 0.21, forearm 0.21, wrist-to-palm 0.10; finger
// segments 0.042-0.052. The zero state is a ready pose over the desk with
// the palm approach axis pointing forward-down and the hand open.
inline KinematicChain default_chain() {
  KinematicChain chain;
  auto add = [&](const std::string& name, int parent, const Vec3& axis,
                 const RigidTransform& origin, double lo, double hi) {
    chain.joints.push_back({name, parent, axis.normalized(), origin, lo, hi});
    return static_cast<int>(chain.joints.size()) - 1;
  };
  auto rot_y = [](double a) {
    RigidTransform T;
    T.rotation = Eigen::AngleAxisd(a, Vec3::UnitY()).toRotationMatrix();
    return T;
  };
  auto trans = [](double x, double y, double z) { return translate(Vec3(x, y, z)); };

  // Arm: z-y-z-y-z-y-z with the ready-pose pitch baked into the origins.
  const int j0 = add("shoulder_pan", -1, Vec3::UnitZ(), trans(0, 0, 0.28), -2.9, 2.9);
  const int j1 = add("shoulder_lift", j0, Vec3::UnitY(), rot_y(0.9), -2.2, 2.2);
  const int j2 = add("upper_arm_roll", j1, Vec3::UnitZ(), trans(0, 0, 0.21), -2.9, 2.9);
  const int j3 = add("elbow", j2, Vec3::UnitY(), rot_y(0.9), -2.4, 2.4);
  const int j4 = add("forearm_roll", j3, Vec3::UnitZ(), trans(0, 0, 0.21), -2.9, 2.9);
  const int j5 = add("wrist_pitch", j4, Vec3::UnitY(), rot_y(0.8), -2.0, 2.0);
  const int j6 = add("wrist_roll", j5, Vec3::UnitZ(), trans(0, 0, 0.10), -2.9, 2.9);

  // Hand: thumb opposes the four fingers across the palm y axis. Positive
  // flexion closes every tip toward the thumb side.
  const int j7 = add("thumb_rot", j6, Vec3::UnitZ(), trans(0.0, -0.062, 0.0), -1.0, 1.0);
  const int j8 = add("thumb_flex", j7, -Vec3::UnitX(), trans(0.0, 0.0, 0.020), -0.3, 1.8);
  const int j9 = add("index_flex", j6, Vec3::UnitX(), trans(0.0, 0.060, 0.010), -0.3, 1.8);
  const int j10 = add("middle_flex", j6, Vec3::UnitX(), trans(0.0, 0.035, 0.012), -0.3, 1.8);
  const int j11 = add("ring_flex", j6, Vec3::UnitX(), trans(0.0, 0.010, 0.010), -0.3, 1.8);
  const int j12 = add("pinky_flex", j6, Vec3::UnitX(), trans(0.0, -0.002, 0.008), -0.3, 1.8);

  chain.fingertips = {FingertipFrame{"thumb", j8, trans(0, 0, 0.045)},
                      FingertipFrame{"index", j9, trans(0, 0, 0.050)},
                      FingertipFrame{"middle", j10, trans(0, 0, 0.052)},
                      FingertipFrame{"ring", j11, trans(0, 0, 0.048)},
                      FingertipFrame{"pinky", j12, trans(0, 0, 0.042)}};
  return chain;
}

}  // namespace kin
}  // namespace aina
