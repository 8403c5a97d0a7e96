#pragma once

// Closed-loop kinematic deployment: at each 10 Hz tick the actor predicts a
// fingertip trajectory from its observation history, the grasp heuristic
// tightens predicted grasps, IK turns the first exec_prefix frames into
// joint states, and the scene follows a force-free attachment model: an
// object whose centroid is near the thumb while the grasp condition holds
// moves rigidly with the hand.

#include <deque>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "aina/common.hpp"
#include "aina/geom.hpp"
#include "aina/kin.hpp"
#include "aina/policy.hpp"
#include "aina/synth.hpp"
#include "aina/trajectory.hpp"
#include "aina/trajectory_io.hpp"

namespace aina {
namespace rollout {

inline constexpr double kAttachRadius = 0.04;    // thumb-to-centroid, meters
inline constexpr double kGraspThreshold = 0.05;  // thumb-to-finger, meters
inline constexpr double kIkAbortResidual = 0.05; // meters; episode fails beyond this

struct SimScene {
  std::vector<PointMatrix> objects;  // rigid clusters, pooled count = policy N
  double surface_z = 0;
  std::optional<int> attached;       // cluster currently carried by the hand

  PointMatrix pooled() const {
    Eigen::Index n = 0;
    for (const auto& o : objects) n += o.rows();
    PointMatrix all(n, 3);
    Eigen::Index at = 0;
    for (const auto& o : objects) {
      all.middleRows(at, o.rows()) = o;
      at += o.rows();
    }
    return all;
  }
};

inline bool grasp_condition(const HandMatrix& tips, double threshold = kGraspThreshold) {
  for (int f = 1; f < kNumFingertips; ++f)
    if ((tips.row(f) - tips.row(0)).norm() < threshold) return true;
  return false;
}

// An actor plans T_p future fingertip frames from the observation history.
struct Observation {
  HandMatrix fingertips;
  PointMatrix objects;
};

class Actor {
 public:
  virtual ~Actor() = default;
  virtual std::vector<HandMatrix> plan(const std::deque<Observation>& history, int tick) = 0;
};

class PolicyActor final : public Actor {
 public:
  explicit PolicyActor(const policy::PolicyModel& model) : model_(model) {}
  std::vector<HandMatrix> plan(const std::deque<Observation>& history, int) override {
    std::vector<HandMatrix> fingertips;
    std::vector<PointMatrix> objects;
    for (const Observation& o : history) {
      fingertips.push_back(o.fingertips);
      objects.push_back(o.objects);
    }
    return policy::predict(model_, fingertips, objects);
  }

 private:
  const policy::PolicyModel& model_;
};

// Replays a reference fingertip sequence open-loop; the canonical success
// oracle for generator-produced episodes.
class ReplayActor final : public Actor {
 public:
  ReplayActor(std::vector<HandMatrix> reference, int horizon)
      : reference_(std::move(reference)), horizon_(horizon) {}
  std::vector<HandMatrix> plan(const std::deque<Observation>&, int tick) override {
    std::vector<HandMatrix> out;
    const int last = static_cast<int>(reference_.size()) - 1;
    for (int k = 1; k <= horizon_; ++k) out.push_back(reference_[std::min(tick + k, last)]);
    return out;
  }

 private:
  std::vector<HandMatrix> reference_;
  int horizon_;
};

// Predicts the current fingertips forever; never moves.
class ZeroMotionActor final : public Actor {
 public:
  explicit ZeroMotionActor(int horizon) : horizon_(horizon) {}
  std::vector<HandMatrix> plan(const std::deque<Observation>& history, int) override {
    return std::vector<HandMatrix>(horizon_, history.back().fingertips);
  }

 private:
  int horizon_;
};

struct RolloutOptions {
  int t_o = 10;          // history length
  int exec_prefix = 10;  // executed frames per replanning cycle
  double grasp_fraction = 0.4;
  kin::IkOptions ik;
};

struct RolloutReport {
  bool success = false;
  bool ik_diverged = false;
  int steps = 0;
  double final_fingertip_rms = 0;  // vs the expert reference final frame
  std::vector<double> ik_residuals;
  std::string trace_path;
};

inline nlohmann::ordered_json to_json(const RolloutReport& r) {
  nlohmann::ordered_json j;
  j["success"] = r.success;
  j["ik_diverged"] = r.ik_diverged;
  j["steps"] = r.steps;
  j["final_fingertip_rms"] = r.final_fingertip_rms;
  double worst = 0;
  for (double v : r.ik_residuals) worst = std::max(worst, v);
  j["ik_residual_max"] = worst;
  j["ik_residuals"] = r.ik_residuals;
  j["trace"] = r.trace_path;
  return j;
}

namespace detail {

inline bool task_success(const TaskSpec& spec, const HandMatrix& tips, const SimScene& scene,
                         const std::vector<Vec3>& initial_centroids) {
  switch (spec.task) {
    case TaskKind::reach:
      return (tips.row(0).transpose() - centroid(scene.objects.front())).norm() < spec.reach_tol;
    case TaskKind::pick_place:
      return (centroid(scene.objects.front()) - spec.goal).norm() < spec.place_tol;
    case TaskKind::press:
      return initial_centroids.front().z() - centroid(scene.objects.front()).z() >=
             spec.press_depth;
  }
  return false;
}

}  // namespace detail

// Runs one episode to success, IK divergence, or max_steps. The expert
// reference supplies the final-frame RMS metric only.
inline RolloutReport run_episode(Actor& actor, const kin::KinematicChain& chain, SimScene scene,
                                 const TaskSpec& spec, const RolloutOptions& opts,
                                 const std::vector<HandMatrix>* expert_reference = nullptr,
                                 const std::filesystem::path& trace_path = {}) {
  kin::JointState joints = chain.zero_state();
  HandMatrix tips = kin::fk(chain, joints);

  // History warm-up: the first T_o ticks observe the scene at rest.
  std::deque<Observation> history;
  for (int i = 0; i < opts.t_o; ++i) history.push_back({tips, scene.pooled()});

  std::vector<Vec3> initial_centroids;
  for (const auto& o : scene.objects) initial_centroids.push_back(centroid(o));

  Trajectory trace;
  trace.source = Source::in_scene;
  trace.frame_of_reference = FrameOfReference::robot_base;
  trace.task_name = spec.name;
  trace.prompts = spec.prompts;
  auto record = [&](int tick) {
    Frame f;
    f.timestamp = static_cast<double>(tick) / kFrameRateHz;
    f.objects = scene.pooled();
    f.hand = tips;
    trace.frames.push_back(std::move(f));
  };
  record(0);

  RolloutReport report;
  int tick = 0;
  while (tick < spec.max_steps && !report.success && !report.ik_diverged) {
    const std::vector<HandMatrix> plan = actor.plan(history, tick);
    const int exec = std::min<int>(opts.exec_prefix, static_cast<int>(plan.size()));
    for (int i = 0; i < exec && tick < spec.max_steps; ++i) {
      const HandMatrix target = kin::grasp_adjust(plan[i], kGraspThreshold, opts.grasp_fraction);
      const kin::IkResult res = kin::ik(chain, target, joints, opts.ik);
      report.ik_residuals.push_back(res.report.residual_rms);
      if (res.report.residual_rms > kIkAbortResidual) {
        report.ik_diverged = true;
        break;
      }
      joints = res.joints;
      const HandMatrix prev_tips = tips;
      tips = kin::fk(chain, joints);

      // Attached objects move rigidly with the hand between ticks.
      if (scene.attached) {
        const RigidTransform motion = kabsch(PointMatrix(prev_tips), PointMatrix(tips));
        auto& obj = scene.objects[*scene.attached];
        obj = transform_points(motion, obj);
      }
      const bool grasp = grasp_condition(tips);
      if (scene.attached && !grasp) {
        scene.attached.reset();
      } else if (!scene.attached && grasp) {
        for (size_t oi = 0; oi < scene.objects.size(); ++oi) {
          if ((tips.row(0).transpose() - centroid(scene.objects[oi])).norm() < kAttachRadius) {
            scene.attached = static_cast<int>(oi);
            break;
          }
        }
      }

      history.push_back({tips, scene.pooled()});
      while (static_cast<int>(history.size()) > opts.t_o) history.pop_front();
      ++tick;
      record(tick);
      if (detail::task_success(spec, tips, scene, initial_centroids)) {
        report.success = true;
        break;
      }
    }
  }
  report.steps = tick;
  if (expert_reference && !expert_reference->empty())
    report.final_fingertip_rms =
        std::sqrt((tips - expert_reference->back()).squaredNorm() / kNumFingertips);
  if (!trace_path.empty()) {
    save(trace, trace_path);
    report.trace_path = trace_path.string();
  }
  return report;
}

struct EvaluationResult {
  double success_rate = 0;
  std::vector<RolloutReport> reports;
};

inline nlohmann::ordered_json to_json(const EvaluationResult& e, const TaskSpec& spec,
                                      uint64_t seed) {
  nlohmann::ordered_json j;
  j["task"] = task_name(spec.task);
  j["episodes"] = e.reports.size();
  j["seed"] = seed;
  j["success_rate"] = e.success_rate;
  auto reports = nlohmann::ordered_json::array();
  for (const auto& r : e.reports) reports.push_back(to_json(r));
  j["reports"] = reports;
  return j;
}

namespace detail {
inline constexpr uint64_t kEpisodeStream = 0xE9;
}

// Episodes with independently randomized placement, surface height and
// cluster yaw. Deterministic in (actor, spec, seed).
inline EvaluationResult evaluate(const std::function<std::unique_ptr<Actor>()>& make_actor,
                                 const kin::KinematicChain& chain, const TaskSpec& spec,
                                 int episodes, uint64_t seed, const RolloutOptions& opts,
                                 const std::filesystem::path& trace_dir = {}) {
  if (episodes < 1) throw BadConfig("episodes must be >= 1");
  spec.validate();
  EvaluationResult result;
  int successes = 0;
  for (int e = 0; e < episodes; ++e) {
    Rng rng(Rng::derive(seed, detail::kEpisodeStream, static_cast<uint64_t>(e)));
    const double px = rng.uniform(spec.workspace_center.x() - spec.workspace_half.x(),
                                  spec.workspace_center.x() + spec.workspace_half.x());
    const double py = rng.uniform(spec.workspace_center.y() - spec.workspace_half.y(),
                                  spec.workspace_center.y() + spec.workspace_half.y());
    const double height = rng.uniform(spec.episode_height_lo, spec.episode_height_hi);
    const double yaw = rng.uniform(-M_PI, M_PI);
    TaskSpec ep_spec = spec;
    ep_spec.surface_z = spec.surface_z + height;
    const Vec3 center(px, py, ep_spec.surface_z + spec.object_half_height());
    SimScene scene;
    scene.surface_z = ep_spec.surface_z;
    scene.objects.push_back(sample_cluster(spec, center, yaw, rng));

    const ExpertDemo reference = script_expert(chain, ep_spec, scene.objects.front());
    std::filesystem::path trace;
    if (!trace_dir.empty()) {
      char name[32];
      std::snprintf(name, sizeof(name), "episode_%04d.traj", e);
      trace = trace_dir / name;
    }
    auto actor = make_actor();
    RolloutReport report = run_episode(*actor, chain, std::move(scene), ep_spec, opts,
                                       &reference.fingertips, trace);
    successes += report.success ? 1 : 0;
    result.reports.push_back(std::move(report));
  }
  result.success_rate = static_cast<double>(successes) / episodes;
  return result;
}

}  // namespace rollout
}  // namespace aina
