#pragma once

// Synthetic demonstrations: a scripted expert performs parameterized desk
// tasks (reach, pick-place, press) with a 13-DOF arm+hand. Expert fingertip
// trajectories are minimum-jerk point-to-point segments between IK-realized
// waypoints, object points are sampled once on a primitive surface and
// rigidly carried by the interaction. The generator is the verification
// oracle that stands in for human recordings.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "aina/common.hpp"
#include "aina/geom.hpp"
#include "aina/kin.hpp"
#include "aina/rng.hpp"
#include "aina/trajectory.hpp"

namespace aina {

enum class TaskKind { reach, pick_place, press };

inline TaskKind parse_task(const std::string& s) {
  if (s == "reach") return TaskKind::reach;
  if (s == "pick_place") return TaskKind::pick_place;
  if (s == "press") return TaskKind::press;
  throw BadConfig("unknown task '" + s + "'");
}

inline std::string task_name(TaskKind t) {
  switch (t) {
    case TaskKind::reach: return "reach";
    case TaskKind::pick_place: return "pick_place";
    default: return "press";
  }
}

struct TaskSpec {
  TaskKind task = TaskKind::reach;
  int n_points = 32;

  // Object placement box (x/y), objects rest on the surface.
  Vec3 workspace_center = Vec3(0.40, 0.0, 0.0);
  Vec3 workspace_half = Vec3(0.055, 0.07, 0.0);
  double surface_z = 0.0;

  // Wild demos live on arbitrary surfaces; episodes vary the robot desk less.
  double wild_height_lo = -0.15, wild_height_hi = 0.15;
  double episode_height_lo = -0.04, episode_height_hi = 0.04;

  std::string object_shape = "box";  // or "sphere"
  double object_size = 0.07;         // box edge / sphere diameter

  Vec3 goal = Vec3(0.38, -0.12, 0.055);  // pick_place drop target

  int max_steps = 80;
  double reach_tol = 0.03;
  double place_tol = 0.05;
  double press_depth = 0.02;

  std::string name = "reach";
  std::vector<std::string> prompts;

  double object_half_height() const { return object_size / 2.0; }

  void validate() const {
    if (n_points < 1) throw BadConfig("n_points must be >= 1");
    if (!workspace_half.allFinite() || !workspace_center.allFinite() ||
        workspace_half.minCoeff() < 0)
      throw InvalidWorkspace("degenerate placement box");
    if (!(wild_height_lo <= wild_height_hi) || !(episode_height_lo <= episode_height_hi))
      throw InvalidWorkspace("height range is inverted");
    if (!(object_size > 0)) throw InvalidWorkspace("object size must be positive");
    if (object_shape != "box" && object_shape != "sphere")
      throw BadConfig("object shape must be 'box' or 'sphere'");
    if (max_steps < 2) throw BadConfig("max_steps must be >= 2");
  }

  static TaskSpec preset(TaskKind kind) {
    TaskSpec s;
    s.task = kind;
    s.name = task_name(kind);
    switch (kind) {
      case TaskKind::reach: s.prompts = {"block"}; break;
      case TaskKind::pick_place: s.prompts = {"block", "bowl"}; break;
      case TaskKind::press: s.prompts = {"lever"}; break;
    }
    return s;
  }
};

inline nlohmann::ordered_json to_json(const TaskSpec& s) {
  nlohmann::ordered_json j;
  j["format"] = "aina-task";
  j["task"] = task_name(s.task);
  j["n_points"] = s.n_points;
  j["workspace"] = {{"center", {s.workspace_center.x(), s.workspace_center.y(), s.workspace_center.z()}},
                    {"half_extents", {s.workspace_half.x(), s.workspace_half.y(), s.workspace_half.z()}}};
  j["surface_z"] = s.surface_z;
  j["wild_height_range"] = {s.wild_height_lo, s.wild_height_hi};
  j["episode_height_range"] = {s.episode_height_lo, s.episode_height_hi};
  j["object"] = {{"shape", s.object_shape}, {"size", s.object_size}};
  j["goal"] = {s.goal.x(), s.goal.y(), s.goal.z()};
  j["max_steps"] = s.max_steps;
  j["success"] = {{"reach_tol", s.reach_tol}, {"place_tol", s.place_tol}, {"press_depth", s.press_depth}};
  j["task_name"] = s.name;
  j["prompts"] = s.prompts;
  return j;
}

inline TaskSpec task_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw BadConfig("task spec must be a JSON object");
  TaskSpec base = TaskSpec::preset(j.contains("task") ? parse_task(j.at("task").get<std::string>())
                                                      : TaskKind::reach);
  auto vec3 = [](const nlohmann::json& v) {
    if (!v.is_array() || v.size() != 3) throw BadConfig("expected a 3-vector");
    return Vec3(v[0].get<double>(), v[1].get<double>(), v[2].get<double>());
  };
  for (const auto& [key, value] : j.items()) {
    if (key == "format") {
      if (value.get<std::string>() != "aina-task") throw BadConfig("not a task spec");
    } else if (key == "task") {
      base.task = parse_task(value.get<std::string>());
    } else if (key == "n_points") base.n_points = value.get<int>();
    else if (key == "workspace") {
      for (const auto& [wk, wv] : value.items()) {
        if (wk == "center") base.workspace_center = vec3(wv);
        else if (wk == "half_extents") base.workspace_half = vec3(wv);
        else throw BadConfig("unknown workspace key '" + wk + "'");
      }
    }
    else if (key == "surface_z") base.surface_z = value.get<double>();
    else if (key == "wild_height_range") {
      base.wild_height_lo = value[0].get<double>();
      base.wild_height_hi = value[1].get<double>();
    }
    else if (key == "episode_height_range") {
      base.episode_height_lo = value[0].get<double>();
      base.episode_height_hi = value[1].get<double>();
    }
    else if (key == "object") {
      for (const auto& [ok, ov] : value.items()) {
        if (ok == "shape") base.object_shape = ov.get<std::string>();
        else if (ok == "size") base.object_size = ov.get<double>();
        else throw BadConfig("unknown object key '" + ok + "'");
      }
    }
    else if (key == "goal") base.goal = vec3(value);
    else if (key == "max_steps") base.max_steps = value.get<int>();
    else if (key == "success") {
      for (const auto& [sk, sv] : value.items()) {
        if (sk == "reach_tol") base.reach_tol = sv.get<double>();
        else if (sk == "place_tol") base.place_tol = sv.get<double>();
        else if (sk == "press_depth") base.press_depth = sv.get<double>();
        else throw BadConfig("unknown success key '" + sk + "'");
      }
    }
    else if (key == "task_name") base.name = value.get<std::string>();
    else if (key == "prompts") base.prompts = value.get<std::vector<std::string>>();
    else throw BadConfig("unknown task spec key '" + key + "'");
  }
  base.validate();
  return base;
}

inline TaskSpec load_task_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw BadConfig(std::string("task spec parse: ") + e.what());
  }
  return task_from_json(j);
}

// --- Object sampling ---------------------------------------------------------

// N points on the primitive surface, centered on `centroid_xy` at rest on
// the surface, with the cluster yawed about its center.
inline PointMatrix sample_cluster(const TaskSpec& spec, const Vec3& center, double yaw, Rng& rng) {
  PointMatrix pts(spec.n_points, 3);
  const double h = spec.object_size / 2.0;
  for (int i = 0; i < spec.n_points; ++i) {
    Vec3 p;
    if (spec.object_shape == "sphere") {
      // uniform direction via normalized Gaussians
      do {
        p = Vec3(rng.normal(), rng.normal(), rng.normal());
      } while (p.norm() < 1e-6);
      p = h * p.normalized();
    } else {
      const int face = static_cast<int>(rng.below(6));
      const double a = rng.uniform(-h, h), b = rng.uniform(-h, h);
      switch (face) {
        case 0: p = Vec3(+h, a, b); break;
        case 1: p = Vec3(-h, a, b); break;
        case 2: p = Vec3(a, +h, b); break;
        case 3: p = Vec3(a, -h, b); break;
        case 4: p = Vec3(a, b, +h); break;
        default: p = Vec3(a, b, -h); break;
      }
    }
    pts.row(i) = (rot_z(yaw).rotation * p + center).transpose();
  }
  return pts;
}

// --- Scripted expert ---------------------------------------------------------

struct ExpertDemo {
  std::vector<HandMatrix> fingertips;
  std::vector<PointMatrix> objects;
};

namespace detail {

inline double min_jerk(double tau) { return tau * tau * tau * (10.0 + tau * (-15.0 + 6.0 * tau)); }

inline void hold(std::vector<HandMatrix>& out, int frames) {
  for (int i = 0; i < frames; ++i) out.push_back(out.back());
}

inline void min_jerk_segment(std::vector<HandMatrix>& out, const HandMatrix& to, int frames) {
  const HandMatrix from = out.back();
  for (int i = 1; i <= frames; ++i) {
    const double s = min_jerk(static_cast<double>(i) / frames);
    out.push_back(from + s * (to - from));
  }
}

// Fingertip positions in the palm (wrist_roll joint) frame for a given hand
// joint configuration; independent of the arm state.
inline HandMatrix tips_in_palm(const kin::KinematicChain& chain, const Eigen::VectorXd& hand_joints) {
  kin::JointState q = chain.zero_state();
  q.tail(chain.hand_dof) = hand_joints;
  const auto T = kin::detail::joint_transforms(chain, q);
  const RigidTransform palm_inv = T[chain.arm_dof - 1].inverse();
  HandMatrix tips = kin::fk(chain, q);
  for (int f = 0; f < kNumFingertips; ++f)
    tips.row(f) = palm_inv.apply(tips.row(f).transpose()).transpose();
  return tips;
}

struct HandShapes {
  HandMatrix open_palm;    // palm-frame tips, fingers extended
  HandMatrix closed_palm;  // palm-frame tips, grasp posture
  Mat3 palm_rotation;      // zero-state palm orientation in the base frame
};

inline HandShapes hand_shapes(const kin::KinematicChain& chain) {
  HandShapes s;
  Eigen::VectorXd open = Eigen::VectorXd::Zero(chain.hand_dof);
  Eigen::VectorXd closed(chain.hand_dof);
  closed << 0.0, 1.2, 1.2, 1.2, 1.2, 1.2;  // thumb_rot, thumb_flex, four fingers
  s.open_palm = tips_in_palm(chain, open);
  s.closed_palm = tips_in_palm(chain, closed);
  const auto T = kin::detail::joint_transforms(chain, chain.zero_state());
  s.palm_rotation = T[chain.arm_dof - 1].rotation;
  return s;
}

// Fingertip formation with the palm placed so the thumb tip lands on target.
inline HandMatrix formation_at(const HandShapes& s, const HandMatrix& palm_tips,
                               const Vec3& thumb_target) {
  const Vec3 palm_pos = thumb_target - s.palm_rotation * palm_tips.row(0).transpose();
  RigidTransform pose{s.palm_rotation, palm_pos};
  HandMatrix out;
  for (int f = 0; f < kNumFingertips; ++f)
    out.row(f) = pose.apply(palm_tips.row(f).transpose()).transpose();
  return out;
}

// Realize a formation through IK so each waypoint is feasible for the chain.
inline HandMatrix realize(const kin::KinematicChain& chain, const HandMatrix& formation,
                          kin::JointState& warm) {
  const kin::IkResult res = kin::ik(chain, formation, warm);
  if (res.report.residual_rms > 0.01)
    throw Error("expert waypoint unreachable (residual " +
                std::to_string(res.report.residual_rms) + " m); shrink the workspace");
  warm = res.joints;
  return kin::fk(chain, res.joints);
}

}  // namespace detail

// Scripted expert interaction in the robot base frame. The object cluster is
// rigidly carried (pure translation with the thumb) while "held".
inline ExpertDemo script_expert(const kin::KinematicChain& chain, const TaskSpec& spec,
                                const PointMatrix& cluster) {
  const detail::HandShapes shapes = detail::hand_shapes(chain);
  const Vec3 c = centroid(cluster);
  const Vec3 above(0, 0, 0.06);
  const Vec3 touch(0, 0, 0.005);

  kin::JointState warm = chain.zero_state();
  ExpertDemo demo;
  demo.fingertips.push_back(kin::fk(chain, warm));

  switch (spec.task) {
    case TaskKind::reach: {
      // Static history prefix, approach above the object, descend to touch
      // with an open hand. No grasp, so the deployment-time grasp heuristic
      // leaves the hand untouched.
      const HandMatrix pre = detail::realize(
          chain, detail::formation_at(shapes, shapes.open_palm, c + above + touch), warm);
      kin::JointState warm2 = warm;
      const HandMatrix at = detail::realize(
          chain, detail::formation_at(shapes, shapes.open_palm, c + touch), warm2);
      detail::hold(demo.fingertips, 9);
      detail::min_jerk_segment(demo.fingertips, pre, 10);
      detail::min_jerk_segment(demo.fingertips, at, 6);
      detail::hold(demo.fingertips, 5);
      for (size_t i = 0; i < demo.fingertips.size(); ++i) demo.objects.push_back(cluster);
      break;
    }
    case TaskKind::pick_place: {
      const HandMatrix pre = detail::realize(
          chain, detail::formation_at(shapes, shapes.open_palm, c + above + touch), warm);
      kin::JointState w = warm;
      const HandMatrix grasp =
          detail::realize(chain, detail::formation_at(shapes, shapes.closed_palm, c + touch), w);
      const HandMatrix lift = detail::realize(
          chain, detail::formation_at(shapes, shapes.closed_palm, c + touch + Vec3(0, 0, 0.10)), w);
      const Vec3 goal_c = spec.goal;
      const HandMatrix over_goal = detail::realize(
          chain, detail::formation_at(shapes, shapes.closed_palm, goal_c + Vec3(0, 0, 0.08)), w);
      const HandMatrix at_goal = detail::realize(
          chain, detail::formation_at(shapes, shapes.closed_palm, goal_c + touch), w);
      const HandMatrix release = detail::realize(
          chain, detail::formation_at(shapes, shapes.open_palm, goal_c + touch + Vec3(0, 0, 0.02)), w);
      const HandMatrix retreat = detail::realize(
          chain, detail::formation_at(shapes, shapes.open_palm, goal_c + above + Vec3(0, 0, 0.04)), w);

      detail::hold(demo.fingertips, 9);
      detail::min_jerk_segment(demo.fingertips, pre, 9);
      detail::min_jerk_segment(demo.fingertips, grasp, 6);
      const size_t carry_start = demo.fingertips.size();
      detail::hold(demo.fingertips, 2);
      detail::min_jerk_segment(demo.fingertips, lift, 5);
      detail::min_jerk_segment(demo.fingertips, over_goal, 8);
      detail::min_jerk_segment(demo.fingertips, at_goal, 5);
      const size_t carry_end = demo.fingertips.size();  // release begins here
      detail::min_jerk_segment(demo.fingertips, release, 4);
      detail::min_jerk_segment(demo.fingertips, retreat, 4);

      const Vec3 thumb_ref = demo.fingertips[carry_start - 1].row(0).transpose();
      PointMatrix held = cluster;
      for (size_t i = 0; i < demo.fingertips.size(); ++i) {
        if (i >= carry_start && i < carry_end) {
          const Vec3 shift = demo.fingertips[i].row(0).transpose() - thumb_ref;
          held = cluster;
          held.rowwise() += shift.transpose();
        }
        demo.objects.push_back(held);
      }
      break;
    }
    case TaskKind::press: {
      // Approach with the pressing posture, then push straight down.
      const HandMatrix over = detail::realize(
          chain, detail::formation_at(shapes, shapes.closed_palm, c + above), warm);
      kin::JointState w = warm;
      const HandMatrix contact =
          detail::realize(chain, detail::formation_at(shapes, shapes.closed_palm, c), w);
      const HandMatrix pressed = detail::realize(
          chain, detail::formation_at(shapes, shapes.closed_palm, c - Vec3(0, 0, spec.press_depth + 0.012)),
          w);
      detail::hold(demo.fingertips, 9);
      detail::min_jerk_segment(demo.fingertips, over, 9);
      detail::min_jerk_segment(demo.fingertips, contact, 5);
      const size_t press_start = demo.fingertips.size();
      detail::min_jerk_segment(demo.fingertips, pressed, 5);
      detail::hold(demo.fingertips, 4);

      const Vec3 thumb_ref = demo.fingertips[press_start - 1].row(0).transpose();
      PointMatrix moved = cluster;
      for (size_t i = 0; i < demo.fingertips.size(); ++i) {
        if (i >= press_start) {
          const Vec3 shift = demo.fingertips[i].row(0).transpose() - thumb_ref;
          moved = cluster;
          moved.rowwise() += shift.transpose();
        }
        demo.objects.push_back(moved);
      }
      break;
    }
  }
  return demo;
}

// --- Dataset generation ------------------------------------------------------

inline constexpr const char* kGeneratorVersion = "aina-synth-1";

namespace detail {
inline constexpr uint64_t kDemoStream = 0x5E;

inline Trajectory demo_to_trajectory(const ExpertDemo& demo, const TaskSpec& spec) {
  Trajectory t;
  t.source = Source::in_scene;
  t.frame_of_reference = FrameOfReference::robot_base;
  t.task_name = spec.name;
  t.prompts = spec.prompts;
  t.rate_hz = static_cast<float>(kFrameRateHz);
  t.frames.resize(demo.fingertips.size());
  for (size_t i = 0; i < demo.fingertips.size(); ++i) {
    t.frames[i].timestamp = static_cast<double>(i) / kFrameRateHz;
    t.frames[i].objects = demo.objects[i];
    t.frames[i].hand = demo.fingertips[i];
  }
  return t;
}
}  // namespace detail

// 1 in-scene + (count-1) in-the-wild demonstrations. Each demo randomizes
// the object placement inside the workspace box and the cluster yaw; wild
// demos are additionally expressed in their own world frame = RotZ(yaw) then
// a surface height offset, mirroring an arbitrary gravity-aligned capture
// frame. Deterministic in (spec, count, seed).
inline Dataset synth_generate(const TaskSpec& spec, int count, uint64_t seed,
                              const kin::KinematicChain& chain) {
  spec.validate();
  if (count < 1) throw BadConfig("count must be >= 1");

  Dataset ds;
  ds.n = spec.n_points;
  ds.seed = seed;
  ds.generator_version = kGeneratorVersion;

  for (int k = 0; k < count; ++k) {
    Rng rng(Rng::derive(seed, detail::kDemoStream, static_cast<uint64_t>(k)));
    const double px = rng.uniform(spec.workspace_center.x() - spec.workspace_half.x(),
                                  spec.workspace_center.x() + spec.workspace_half.x());
    const double py = rng.uniform(spec.workspace_center.y() - spec.workspace_half.y(),
                                  spec.workspace_center.y() + spec.workspace_half.y());
    const Vec3 center(px, py, spec.surface_z + spec.object_half_height());
    const double cluster_yaw = rng.uniform(-M_PI, M_PI);
    const PointMatrix cluster = sample_cluster(spec, center, cluster_yaw, rng);

    Trajectory t = detail::demo_to_trajectory(script_expert(chain, spec, cluster), spec);
    if (k == 0) {
      ds.in_scene = std::move(t);
      continue;
    }
    // world frame assigned at capture start: arbitrary yaw, arbitrary surface height
    const double world_yaw = rng.uniform(-M_PI, M_PI);
    const double height = rng.uniform(spec.wild_height_lo, spec.wild_height_hi);
    const RigidTransform world = translate(Vec3(0, 0, height)).compose(rot_z(world_yaw));
    for (Frame& f : t.frames) {
      f.objects = transform_points(world, f.objects);
      f.hand = transform_points(world, PointMatrix(f.hand));
    }
    t.source = Source::in_the_wild;
    t.frame_of_reference = FrameOfReference::world_gravity_aligned;
    ds.in_the_wild.push_back(std::move(t));
  }
  return ds;
}

inline Dataset synth_generate(const TaskSpec& spec, int count, uint64_t seed) {
  return synth_generate(spec, count, seed, kin::default_chain());
}

}  // namespace aina
