#pragma once

// Demonstration data model. A Trajectory is the universal currency of the
// pipeline: a timestamped sequence of (object points, fingertip points) with
// a source tag and reference-frame id.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "aina/common.hpp"

namespace aina {

enum class Source : uint8_t { in_the_wild = 0, in_scene = 1 };
enum class FrameOfReference : uint8_t { world_gravity_aligned = 0, robot_base = 1 };

// Sanity bound on the hand span; anything wider is a tracking failure.
inline constexpr double kMaxFingertipSpread = 0.4;  // meters

struct Frame {
  double timestamp = 0;   // seconds
  PointMatrix objects;    // N x 3
  HandMatrix hand = HandMatrix::Zero();  // thumb, index, middle, ring, pinky
};

struct Trajectory {
  std::vector<Frame> frames;
  Source source = Source::in_scene;
  FrameOfReference frame_of_reference = FrameOfReference::robot_base;
  std::string task_name;
  std::vector<std::string> prompts;
  float rate_hz = static_cast<float>(kFrameRateHz);

  Eigen::Index point_count() const { return frames.empty() ? 0 : frames.front().objects.rows(); }
};

struct Dataset {
  Trajectory in_scene;
  std::vector<Trajectory> in_the_wild;
  Eigen::Index n = 0;  // object point count shared by all trajectories
  uint64_t seed = 0;
  std::string generator_version;

  std::vector<const Trajectory*> all() const {
    std::vector<const Trajectory*> t{&in_scene};
    for (const auto& w : in_the_wild) t.push_back(&w);
    return t;
  }
};

struct Violation {
  std::string code;
  int trajectory = -1;  // 0 = in-scene, 1.. = in-the-wild index + 1
  int frame = -1;
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
};

namespace detail {

inline void validate_trajectory(const Trajectory& t, int ti, Eigen::Index expected_n,
                                std::vector<Violation>& out) {
  auto add = [&](const std::string& code, int fi, const std::string& msg) {
    out.push_back({code, ti, fi, msg});
  };
  if (t.frames.size() < 2) add("frame_count", -1, "trajectory has fewer than 2 frames");
  // In-scene demos are captured in the robot frame. Wild demos start in the
  // gravity-aligned world frame but may legitimately carry robot_base after
  // alignment, so only the in-scene pairing is enforced.
  if (t.source == Source::in_scene && t.frame_of_reference != FrameOfReference::robot_base)
    add("frame_source_pair", -1, "in-scene trajectory not in robot_base frame");

  double prev_ts = -std::numeric_limits<double>::infinity();
  for (size_t fi = 0; fi < t.frames.size(); ++fi) {
    const Frame& f = t.frames[fi];
    const int fidx = static_cast<int>(fi);
    if (!std::isfinite(f.timestamp)) add("finite", fidx, "non-finite timestamp");
    if (!(f.timestamp > prev_ts)) add("timestamps", fidx, "timestamps not strictly increasing");
    prev_ts = f.timestamp;
    if (f.objects.rows() != expected_n)
      add("n_consistency", fidx, "expected N=" + std::to_string(expected_n) + " object points, got " +
                                     std::to_string(f.objects.rows()));
    if (!f.objects.allFinite()) add("finite", fidx, "non-finite object point");
    if (!f.hand.allFinite()) {
      add("finite", fidx, "non-finite fingertip");
    } else {
      double max_spread = 0;
      for (int a = 0; a < kNumFingertips; ++a)
        for (int b = a + 1; b < kNumFingertips; ++b)
          max_spread = std::max(max_spread, (f.hand.row(a) - f.hand.row(b)).norm());
      if (max_spread >= kMaxFingertipSpread)
        add("hand_spread", fidx, "fingertip spread " + std::to_string(max_spread) + " m exceeds sanity bound");
    }
  }
}

}  // namespace detail

// Checks all type invariants. Violations are report entries, never throws.
inline ValidationReport validate(const Dataset& ds) {
  ValidationReport report;
  if (ds.in_scene.source != Source::in_scene)
    report.violations.push_back({"dataset", 0, -1, "in_scene slot holds a non-in-scene trajectory"});
  detail::validate_trajectory(ds.in_scene, 0, ds.n, report.violations);
  for (size_t i = 0; i < ds.in_the_wild.size(); ++i) {
    const auto& w = ds.in_the_wild[i];
    if (w.source != Source::in_the_wild)
      report.violations.push_back({"dataset", static_cast<int>(i) + 1, -1, "wild slot holds an in-scene trajectory"});
    detail::validate_trajectory(w, static_cast<int>(i) + 1, ds.n, report.violations);
  }
  return report;
}

inline ValidationReport validate(const Trajectory& t) {
  ValidationReport report;
  detail::validate_trajectory(t, 0, t.point_count(), report.violations);
  return report;
}

}  // namespace aina
