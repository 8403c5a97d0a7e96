#pragma once

// Perception-output ingestion. Segmentation, point tracking, stereo
// disparity and hand-pose estimation run elsewhere; their outputs arrive as
// a directory of per-frame files (the PerceptionBundle) and are lifted here
// into a 3D Trajectory: depth lookup (disparity or direct), unprojection,
// transform into the declared reference frame, and two-view hand
// triangulation. A synthetic renderer produces bundles from a known
// trajectory; it is the round-trip oracle for this module.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "aina/common.hpp"
#include "aina/geom.hpp"
#include "aina/trajectory.hpp"

namespace aina {

enum class DepthKind { stereo_disparity, direct_depth };
enum class HandKind { two_view_pixels, points3d };

inline DepthKind parse_depth_kind(const std::string& s) {
  if (s == "stereo_disparity" || s == "disparity") return DepthKind::stereo_disparity;
  if (s == "direct_depth" || s == "depth") return DepthKind::direct_depth;
  throw BadConfig("unknown depth mode '" + s + "'");
}

struct TrackFrame {
  Eigen::MatrixX2d uv;           // N x 2 pixels
  std::vector<uint8_t> visible;  // N flags
};

struct HandFrame {
  Eigen::Matrix<double, kNumFingertips, 2> left_px;
  Eigen::Matrix<double, kNumFingertips, 2> right_px;
  HandMatrix points3d = HandMatrix::Zero();
};

struct PerceptionBundle {
  int width = 0, height = 0;
  double fx = 0, fy = 0, cx = 0, cy = 0;
  double baseline = 0;
  DepthKind depth_kind = DepthKind::stereo_disparity;
  HandKind hand_kind = HandKind::two_view_pixels;
  FrameOfReference reference = FrameOfReference::world_gravity_aligned;
  double rate_hz = kFrameRateHz;
  std::string task_name;
  std::vector<std::string> prompts;

  std::vector<Eigen::MatrixXf> grids;          // per frame, height x width
  std::vector<RigidTransform> camera_poses;    // left camera-to-reference
  std::vector<TrackFrame> tracks;
  std::vector<HandFrame> hands;
};

namespace detail {

// Bilinear sample of a depth/disparity grid at a non-integer pixel. Values
// <= 0 mean "no data". Throws MissingDepth outside the grid or on a missing
// corner.
inline double bilinear_grid(const Eigen::MatrixXf& grid, double u, double v) {
  const int w = static_cast<int>(grid.cols());
  const int h = static_cast<int>(grid.rows());
  if (!(u >= 0.0) || !(v >= 0.0) || !(u <= w - 1.0) || !(v <= h - 1.0))
    throw MissingDepth("pixel (" + std::to_string(u) + ", " + std::to_string(v) + ") outside grid");
  const int u0 = std::min(static_cast<int>(std::floor(u)), w - 2);
  const int v0 = std::min(static_cast<int>(std::floor(v)), h - 2);
  const double fu = u - u0, fv = v - v0;
  const double g00 = grid(v0, u0), g01 = grid(v0, u0 + 1);
  const double g10 = grid(v0 + 1, u0), g11 = grid(v0 + 1, u0 + 1);
  if (g00 <= 0 || g01 <= 0 || g10 <= 0 || g11 <= 0)
    throw MissingDepth("no data in the interpolation footprint");
  return (1 - fv) * ((1 - fu) * g00 + fu * g01) + fv * ((1 - fu) * g10 + fu * g11);
}

}  // namespace detail

inline void validate_bundle(const PerceptionBundle& b) {
  const size_t frames = b.grids.size();
  if (b.camera_poses.size() != frames || b.tracks.size() != frames || b.hands.size() != frames)
    throw FrameCountMismatch("grids=" + std::to_string(frames) + " poses=" +
                             std::to_string(b.camera_poses.size()) + " tracks=" +
                             std::to_string(b.tracks.size()) + " hands=" +
                             std::to_string(b.hands.size()));
  if (frames < 2) throw InvalidTrajectory("bundle has fewer than 2 frames");
  const Eigen::Index n = b.tracks.front().uv.rows();
  for (const TrackFrame& t : b.tracks)
    if (t.uv.rows() != n || static_cast<Eigen::Index>(t.visible.size()) != n)
      throw FrameCountMismatch("track table row count varies across frames");
}

// Lifts a bundle into a Trajectory. Invisible points carry the last visible
// 3D position forward; a leading invisible stretch is backfilled from the
// first visible one. A track that is never visible cannot be placed at all.
inline Trajectory ingest(const PerceptionBundle& b, DepthKind mode) {
  if (mode != b.depth_kind) throw BadConfig("bundle stores a different depth kind than requested");
  validate_bundle(b);
  const size_t frames = b.grids.size();
  const Eigen::Index n = b.tracks.front().uv.rows();
  const PinholeCamera intrinsics{b.fx, b.fy, b.cx, b.cy, RigidTransform::identity()};

  // 3D positions of visible observations, in the declared reference frame.
  std::vector<std::vector<std::optional<Vec3>>> seen(frames);
  for (size_t fi = 0; fi < frames; ++fi) {
    seen[fi].resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!b.tracks[fi].visible[i]) continue;
      const double u = b.tracks[fi].uv(i, 0), v = b.tracks[fi].uv(i, 1);
      const double raw = detail::bilinear_grid(b.grids[fi], u, v);
      const double z =
          mode == DepthKind::stereo_disparity ? disparity_to_depth(b.fx, b.baseline, raw) : raw;
      seen[fi][i] = b.camera_poses[fi].apply(unproject(intrinsics, u, v, z));
    }
  }

  Trajectory out;
  out.frame_of_reference = b.reference;
  out.source = b.reference == FrameOfReference::robot_base ? Source::in_scene : Source::in_the_wild;
  out.task_name = b.task_name;
  out.prompts = b.prompts;
  out.rate_hz = static_cast<float>(b.rate_hz);
  out.frames.resize(frames);

  for (Eigen::Index i = 0; i < n; ++i) {
    // first visible observation backfills any leading gap
    std::optional<Vec3> last;
    for (size_t fi = 0; fi < frames && !last; ++fi) last = seen[fi][i];
    if (!last) throw AllPointsInvisible("track " + std::to_string(i) + " has no visible frame");
    for (size_t fi = 0; fi < frames; ++fi) {
      if (seen[fi][i]) last = seen[fi][i];
      if (out.frames[fi].objects.rows() == 0) out.frames[fi].objects.resize(n, 3);
      out.frames[fi].objects.row(i) = last->transpose();
    }
  }

  for (size_t fi = 0; fi < frames; ++fi) {
    out.frames[fi].timestamp = static_cast<double>(fi) / b.rate_hz;
    if (b.hand_kind == HandKind::points3d) {
      out.frames[fi].hand = b.hands[fi].points3d;
    } else {
      const PinholeCamera left{b.fx, b.fy, b.cx, b.cy, b.camera_poses[fi]};
      const PinholeCamera right{b.fx, b.fy, b.cx, b.cy,
                                b.camera_poses[fi].compose(translate(Vec3(b.baseline, 0, 0)))};
      for (int f = 0; f < kNumFingertips; ++f)
        out.frames[fi].hand.row(f) =
            triangulate(left, right, b.hands[fi].left_px.row(f), b.hands[fi].right_px.row(f))
                .transpose();
    }
  }
  return out;
}

// --- Synthetic renderer ------------------------------------------------------

// Renders a bundle from a known trajectory through a rectified rig moving
// along `camera_poses`. Every projected point writes its exact value into
// the four neighboring grid cells, so bilinear lookup at the track pixel is
// exact; overlapping footprints with conflicting values are rejected.
inline PerceptionBundle render_bundle(const Trajectory& traj,
                                      const std::vector<RigidTransform>& camera_poses, int width,
                                      int height, double fx, double fy, double cx, double cy,
                                      double baseline, DepthKind kind,
                                      HandKind hand_kind = HandKind::two_view_pixels) {
  if (camera_poses.size() != traj.frames.size())
    throw FrameCountMismatch("camera poses vs trajectory frames");
  PerceptionBundle b;
  b.width = width;
  b.height = height;
  b.fx = fx;
  b.fy = fy;
  b.cx = cx;
  b.cy = cy;
  b.baseline = baseline;
  b.depth_kind = kind;
  b.hand_kind = hand_kind;
  b.reference = traj.frame_of_reference;
  b.rate_hz = traj.rate_hz;
  b.task_name = traj.task_name;
  b.prompts = traj.prompts;
  b.camera_poses = camera_poses;

  const PinholeCamera intrinsics{fx, fy, cx, cy, RigidTransform::identity()};
  const Eigen::Index n = traj.point_count();
  for (size_t fi = 0; fi < traj.frames.size(); ++fi) {
    const Frame& frame = traj.frames[fi];
    const RigidTransform cam_from_ref = camera_poses[fi].inverse();
    Eigen::MatrixXf grid = Eigen::MatrixXf::Zero(height, width);
    TrackFrame tf;
    tf.uv.resize(n, 2);
    tf.visible.assign(static_cast<size_t>(n), 1);
    for (Eigen::Index i = 0; i < n; ++i) {
      const Vec3 p_cam = cam_from_ref.apply(frame.objects.row(i).transpose());
      if (!(p_cam.z() > 0)) throw NonPositiveDepth("point behind the rendering camera");
      const Eigen::Vector2d px = project(intrinsics, p_cam);
      const double value = kind == DepthKind::stereo_disparity ? fx * baseline / p_cam.z() : p_cam.z();
      const int u0 = static_cast<int>(std::floor(px.x()));
      const int v0 = static_cast<int>(std::floor(px.y()));
      if (u0 < 0 || v0 < 0 || u0 + 1 >= width || v0 + 1 >= height)
        throw Error("render_bundle: point projects outside the image");
      for (int dv = 0; dv < 2; ++dv) {
        for (int du = 0; du < 2; ++du) {
          float& cell = grid(v0 + dv, u0 + du);
          if (cell > 0 && std::abs(cell - static_cast<float>(value)) > 1e-6f)
            throw Error("render_bundle: conflicting depth footprint; spread the points out");
          cell = static_cast<float>(value);
        }
      }
      tf.uv.row(i) = px.transpose();
    }
    b.grids.push_back(std::move(grid));
    b.tracks.push_back(std::move(tf));

    HandFrame hf;
    if (hand_kind == HandKind::points3d) {
      hf.points3d = frame.hand;
    } else {
      const PinholeCamera left{fx, fy, cx, cy, camera_poses[fi]};
      const RigidTransform right_pose = camera_poses[fi].compose(translate(Vec3(baseline, 0, 0)));
      const RigidTransform right_from_ref = right_pose.inverse();
      for (int f = 0; f < kNumFingertips; ++f) {
        const Vec3 p = frame.hand.row(f).transpose();
        hf.left_px.row(f) = project(intrinsics, cam_from_ref.apply(p)).transpose();
        hf.right_px.row(f) = project(intrinsics, right_from_ref.apply(p)).transpose();
      }
    }
    b.hands.push_back(hf);
  }
  return b;
}

// --- On-disk layout ----------------------------------------------------------
//
//   bundle.json   header: dimensions, intrinsics, baseline, kinds, frame count
//   tracks.csv    frame,id,u,v,visible
//   poses.json    per-frame 4x4 row-major camera-to-reference matrices
//   grid_%04d.f32 raw f32 rows-major depth or disparity grid per frame
//   hand_2d.csv   frame,view,finger,u,v   (view 0 = left, 1 = right)
//   hand_3d.csv   frame,finger,x,y,z      (when hand_kind = points3d)

namespace detail {

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::array<double, 16> pose_to_matrix(const RigidTransform& T) {
  std::array<double, 16> m{};
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) m[4 * r + c] = T.rotation(r, c);
    m[4 * r + 3] = T.translation[r];
  }
  m[15] = 1.0;
  return m;
}

inline RigidTransform pose_from_matrix(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 16) throw BadConfig("camera pose must have 16 entries");
  RigidTransform T;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) T.rotation(r, c) = j[4 * r + c].get<double>();
    T.translation[r] = j[4 * r + 3].get<double>();
  }
  return T;
}

}  // namespace detail

inline void save_bundle(const PerceptionBundle& b, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::ordered_json header;
  header["format"] = "aina-bundle";
  header["version"] = 1;
  header["frames"] = b.grids.size();
  header["width"] = b.width;
  header["height"] = b.height;
  header["fx"] = b.fx;
  header["fy"] = b.fy;
  header["cx"] = b.cx;
  header["cy"] = b.cy;
  header["baseline"] = b.baseline;
  header["depth_kind"] = b.depth_kind == DepthKind::stereo_disparity ? "disparity" : "depth";
  header["hand_kind"] = b.hand_kind == HandKind::two_view_pixels ? "two_view" : "points3d";
  header["reference"] =
      b.reference == FrameOfReference::robot_base ? "robot_base" : "world_gravity_aligned";
  header["rate_hz"] = b.rate_hz;
  header["task_name"] = b.task_name;
  header["prompts"] = b.prompts;
  std::ofstream(dir / "bundle.json") << header.dump(2) << "\n";

  nlohmann::json poses = nlohmann::json::array();
  for (const auto& pose : b.camera_poses) poses.push_back(detail::pose_to_matrix(pose));
  std::ofstream(dir / "poses.json") << poses.dump() << "\n";

  std::ofstream tracks(dir / "tracks.csv");
  tracks << "frame,id,u,v,visible\n";
  for (size_t fi = 0; fi < b.tracks.size(); ++fi)
    for (Eigen::Index i = 0; i < b.tracks[fi].uv.rows(); ++i)
      tracks << fi << "," << i << "," << detail::fmt_double(b.tracks[fi].uv(i, 0)) << ","
             << detail::fmt_double(b.tracks[fi].uv(i, 1)) << ","
             << int(b.tracks[fi].visible[i]) << "\n";

  for (size_t fi = 0; fi < b.grids.size(); ++fi) {
    char name[32];
    std::snprintf(name, sizeof(name), "grid_%04zu.f32", fi);
    std::ofstream g(dir / name, std::ios::binary);
    for (int r = 0; r < b.height; ++r)
      g.write(reinterpret_cast<const char*>(b.grids[fi].row(r).eval().data()),
              static_cast<std::streamsize>(sizeof(float) * b.width));
  }

  if (b.hand_kind == HandKind::two_view_pixels) {
    std::ofstream hand(dir / "hand_2d.csv");
    hand << "frame,view,finger,u,v\n";
    for (size_t fi = 0; fi < b.hands.size(); ++fi)
      for (int view = 0; view < 2; ++view)
        for (int f = 0; f < kNumFingertips; ++f) {
          const auto& px = view == 0 ? b.hands[fi].left_px : b.hands[fi].right_px;
          hand << fi << "," << view << "," << f << "," << detail::fmt_double(px(f, 0)) << ","
               << detail::fmt_double(px(f, 1)) << "\n";
        }
  } else {
    std::ofstream hand(dir / "hand_3d.csv");
    hand << "frame,finger,x,y,z\n";
    for (size_t fi = 0; fi < b.hands.size(); ++fi)
      for (int f = 0; f < kNumFingertips; ++f)
        hand << fi << "," << f << "," << detail::fmt_double(b.hands[fi].points3d(f, 0)) << ","
             << detail::fmt_double(b.hands[fi].points3d(f, 1)) << ","
             << detail::fmt_double(b.hands[fi].points3d(f, 2)) << "\n";
  }
}

inline PerceptionBundle load_bundle(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::ifstream hin(dir / "bundle.json");
  if (!hin) throw IoError("cannot open " + (dir / "bundle.json").string());
  nlohmann::json header;
  try {
    hin >> header;
  } catch (const nlohmann::json::exception& e) {
    throw BadConfig(std::string("bundle header parse: ") + e.what());
  }
  if (header.value("format", "") != "aina-bundle") throw BadConfig("not a bundle directory");

  PerceptionBundle b;
  const size_t frames = header.at("frames").get<size_t>();
  b.width = header.at("width").get<int>();
  b.height = header.at("height").get<int>();
  b.fx = header.at("fx").get<double>();
  b.fy = header.at("fy").get<double>();
  b.cx = header.at("cx").get<double>();
  b.cy = header.at("cy").get<double>();
  b.baseline = header.at("baseline").get<double>();
  b.depth_kind = parse_depth_kind(header.at("depth_kind").get<std::string>());
  b.hand_kind =
      header.at("hand_kind").get<std::string>() == "two_view" ? HandKind::two_view_pixels
                                                              : HandKind::points3d;
  b.reference = header.at("reference").get<std::string>() == "robot_base"
                    ? FrameOfReference::robot_base
                    : FrameOfReference::world_gravity_aligned;
  b.rate_hz = header.value("rate_hz", kFrameRateHz);
  b.task_name = header.value("task_name", "");
  if (header.contains("prompts")) b.prompts = header["prompts"].get<std::vector<std::string>>();

  std::ifstream pin(dir / "poses.json");
  if (!pin) throw IoError("cannot open poses.json");
  nlohmann::json poses;
  pin >> poses;
  for (const auto& p : poses) b.camera_poses.push_back(detail::pose_from_matrix(p));

  // tracks.csv; rows must cover ids 0..N-1 for every frame
  std::ifstream tin(dir / "tracks.csv");
  if (!tin) throw IoError("cannot open tracks.csv");
  std::string line;
  std::getline(tin, line);  // header
  std::vector<std::vector<std::tuple<int, double, double, int>>> rows;
  while (std::getline(tin, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 5) throw BadConfig("bad tracks.csv row: " + line);
    const size_t fi = std::stoul(cells[0]);
    if (fi >= rows.size()) rows.resize(fi + 1);
    rows[fi].emplace_back(std::stoi(cells[1]), std::stod(cells[2]), std::stod(cells[3]),
                          std::stoi(cells[4]));
  }
  for (auto& frame_rows : rows) {
    TrackFrame tf;
    tf.uv.resize(frame_rows.size(), 2);
    tf.visible.resize(frame_rows.size());
    for (const auto& [id, u, v, vis] : frame_rows) {
      if (id < 0 || id >= static_cast<int>(frame_rows.size()))
        throw BadConfig("track ids must be stable and dense");
      tf.uv(id, 0) = u;
      tf.uv(id, 1) = v;
      tf.visible[id] = static_cast<uint8_t>(vis != 0);
    }
    b.tracks.push_back(std::move(tf));
  }

  for (size_t fi = 0; fi < frames; ++fi) {
    char name[32];
    std::snprintf(name, sizeof(name), "grid_%04zu.f32", fi);
    std::ifstream g(dir / name, std::ios::binary);
    if (!g) throw FrameCountMismatch("missing " + std::string(name));
    Eigen::MatrixXf grid(b.height, b.width);
    std::vector<float> row(static_cast<size_t>(b.width));
    for (int r = 0; r < b.height; ++r) {
      g.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(sizeof(float) * b.width));
      if (!g) throw TruncatedFile(std::string(name));
      for (int c = 0; c < b.width; ++c) grid(r, c) = row[c];
    }
    b.grids.push_back(std::move(grid));
  }

  b.hands.resize(frames);
  if (b.hand_kind == HandKind::two_view_pixels) {
    std::ifstream hand(dir / "hand_2d.csv");
    if (!hand) throw IoError("cannot open hand_2d.csv");
    std::getline(hand, line);
    while (std::getline(hand, line)) {
      if (line.empty()) continue;
      std::istringstream ss(line);
      std::string cell;
      std::vector<std::string> cells;
      while (std::getline(ss, cell, ',')) cells.push_back(cell);
      if (cells.size() != 5) throw BadConfig("bad hand_2d.csv row: " + line);
      const size_t fi = std::stoul(cells[0]);
      if (fi >= frames) throw FrameCountMismatch("hand_2d frame index out of range");
      auto& px = std::stoi(cells[1]) == 0 ? b.hands[fi].left_px : b.hands[fi].right_px;
      const int f = std::stoi(cells[2]);
      px(f, 0) = std::stod(cells[3]);
      px(f, 1) = std::stod(cells[4]);
    }
  } else {
    std::ifstream hand(dir / "hand_3d.csv");
    if (!hand) throw IoError("cannot open hand_3d.csv");
    std::getline(hand, line);
    while (std::getline(hand, line)) {
      if (line.empty()) continue;
      std::istringstream ss(line);
      std::string cell;
      std::vector<std::string> cells;
      while (std::getline(ss, cell, ',')) cells.push_back(cell);
      if (cells.size() != 5) throw BadConfig("bad hand_3d.csv row: " + line);
      const size_t fi = std::stoul(cells[0]);
      if (fi >= frames) throw FrameCountMismatch("hand_3d frame index out of range");
      const int f = std::stoi(cells[1]);
      for (int k = 0; k < 3; ++k) b.hands[fi].points3d(f, k) = std::stod(cells[2 + k]);
    }
  }
  return b;
}

}  // namespace aina
