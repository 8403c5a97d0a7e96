#pragma once

// Bit-exact trajectory file format and the dataset manifest.
//
// Trajectory file (little-endian):
//   magic "AINA", u16 version=1, u8 source, u8 frame_of_reference,
//   u32 N, u32 frame_count, f32 rate_hz,
//   u32 task_name length + UTF-8 bytes,
//   u32 prompt count, then per prompt u32 length + UTF-8 bytes,
//   frame_count records of [f64 timestamp, N*3 f32 object points row-major,
//   5*3 f32 fingertips row-major], u32 CRC32 of all preceding bytes.
//
// Points are stored as f32 on disk and held as f64 in memory.

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "aina/common.hpp"
#include "aina/crc32.hpp"
#include "aina/trajectory.hpp"

static_assert(std::endian::native == std::endian::little, "file formats assume a little-endian host");

namespace aina {

inline constexpr char kTrajectoryMagic[4] = {'A', 'I', 'N', 'A'};
inline constexpr uint16_t kTrajectoryVersion = 1;

namespace detail {

struct ByteWriter {
  std::vector<unsigned char> buf;
  template <typename T>
  void put(const T& v) {
    static_assert(std::is_trivially_copyable_v<T>);
    const size_t at = buf.size();
    buf.resize(at + sizeof(T));
    std::memcpy(buf.data() + at, &v, sizeof(T));
  }
  void put_string(const std::string& s) {
    put(static_cast<uint32_t>(s.size()));
    buf.insert(buf.end(), s.begin(), s.end());
  }
};

struct ByteReader {
  const unsigned char* data;
  size_t size;
  size_t pos = 0;
  template <typename T>
  T get() {
    static_assert(std::is_trivially_copyable_v<T>);
    if (pos + sizeof(T) > size) throw TruncatedFile();
    T v;
    std::memcpy(&v, data + pos, sizeof(T));
    pos += sizeof(T);
    return v;
  }
  std::string get_string() {
    const uint32_t len = get<uint32_t>();
    if (pos + len > size) throw TruncatedFile();
    std::string s(reinterpret_cast<const char*>(data + pos), len);
    pos += len;
    return s;
  }
};

inline std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

inline void write_file_bytes(const std::filesystem::path& path, const void* data, size_t size) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
  if (!out) throw IoError("short write to " + path.string());
}

}  // namespace detail

inline std::vector<unsigned char> serialize(const Trajectory& t) {
  detail::ByteWriter w;
  w.buf.insert(w.buf.end(), std::begin(kTrajectoryMagic), std::end(kTrajectoryMagic));
  w.put(kTrajectoryVersion);
  w.put(static_cast<uint8_t>(t.source));
  w.put(static_cast<uint8_t>(t.frame_of_reference));
  const uint32_t n = static_cast<uint32_t>(t.point_count());
  w.put(n);
  w.put(static_cast<uint32_t>(t.frames.size()));
  w.put(t.rate_hz);
  w.put_string(t.task_name);
  w.put(static_cast<uint32_t>(t.prompts.size()));
  for (const auto& p : t.prompts) w.put_string(p);
  for (const Frame& f : t.frames) {
    if (f.objects.rows() != n) throw NMismatch("frame object count differs from first frame");
    w.put(f.timestamp);
    for (Eigen::Index i = 0; i < f.objects.rows(); ++i)
      for (int j = 0; j < 3; ++j) w.put(static_cast<float>(f.objects(i, j)));
    for (int i = 0; i < kNumFingertips; ++i)
      for (int j = 0; j < 3; ++j) w.put(static_cast<float>(f.hand(i, j)));
  }
  w.put(crc32(w.buf.data(), w.buf.size()));
  return w.buf;
}

inline Trajectory deserialize_trajectory(const std::vector<unsigned char>& bytes) {
  detail::ByteReader r{bytes.data(), bytes.size()};
  char magic[4];
  if (bytes.size() < 4) throw TruncatedFile();
  std::memcpy(magic, bytes.data(), 4);
  r.pos = 4;
  if (std::memcmp(magic, kTrajectoryMagic, 4) != 0) throw BadMagic();
  const uint16_t version = r.get<uint16_t>();
  if (version != kTrajectoryVersion) throw UnsupportedVersion("version " + std::to_string(version));

  Trajectory t;
  const uint8_t source = r.get<uint8_t>();
  const uint8_t frame = r.get<uint8_t>();
  if (source > 1 || frame > 1) throw ChecksumMismatch("invalid enum tag");
  t.source = static_cast<Source>(source);
  t.frame_of_reference = static_cast<FrameOfReference>(frame);
  const uint32_t n = r.get<uint32_t>();
  const uint32_t frame_count = r.get<uint32_t>();
  t.rate_hz = r.get<float>();
  t.task_name = r.get_string();
  const uint32_t prompt_count = r.get<uint32_t>();
  // Guard absurd counts before allocating.
  if (prompt_count > bytes.size()) throw TruncatedFile();
  for (uint32_t i = 0; i < prompt_count; ++i) t.prompts.push_back(r.get_string());

  const size_t frame_bytes = 8 + static_cast<size_t>(n) * 12 + kNumFingertips * 12;
  const size_t expected = r.pos + static_cast<size_t>(frame_count) * frame_bytes + 4;
  if (bytes.size() < expected) throw TruncatedFile();
  if (bytes.size() > expected) throw ChecksumMismatch("trailing bytes after checksum");

  t.frames.resize(frame_count);
  for (uint32_t fi = 0; fi < frame_count; ++fi) {
    Frame& f = t.frames[fi];
    f.timestamp = r.get<double>();
    f.objects.resize(n, 3);
    for (uint32_t i = 0; i < n; ++i)
      for (int j = 0; j < 3; ++j) f.objects(i, j) = r.get<float>();
    for (int i = 0; i < kNumFingertips; ++i)
      for (int j = 0; j < 3; ++j) f.hand(i, j) = r.get<float>();
  }
  const uint32_t stored_crc = r.get<uint32_t>();
  const uint32_t actual_crc = crc32(bytes.data(), bytes.size() - 4);
  if (stored_crc != actual_crc) throw ChecksumMismatch();
  return t;
}

inline void save(const Trajectory& t, const std::filesystem::path& path) {
  const auto bytes = serialize(t);
  detail::write_file_bytes(path, bytes.data(), bytes.size());
}

inline Trajectory load(const std::filesystem::path& path) {
  return deserialize_trajectory(detail::read_file_bytes(path));
}

// --- Dataset manifest -------------------------------------------------------

inline void save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  save(ds.in_scene, dir / "scene.traj");
  nlohmann::ordered_json manifest;
  manifest["format"] = "aina-dataset";
  manifest["version"] = 1;
  manifest["n"] = ds.n;
  manifest["seed"] = ds.seed;
  manifest["generator_version"] = ds.generator_version;
  manifest["in_scene"] = "scene.traj";
  std::vector<std::string> wild_paths;
  for (size_t i = 0; i < ds.in_the_wild.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "wild_%04zu.traj", i);
    save(ds.in_the_wild[i], dir / name);
    wild_paths.emplace_back(name);
  }
  manifest["in_the_wild"] = wild_paths;
  std::ofstream out(dir / "manifest.json");
  if (!out) throw IoError("cannot write manifest in " + dir.string());
  out << manifest.dump(2) << "\n";
}

inline Dataset load_dataset(const std::filesystem::path& manifest_path) {
  namespace fs = std::filesystem;
  fs::path path = manifest_path;
  if (fs::is_directory(path)) path /= "manifest.json";
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw BadConfig(std::string("manifest parse: ") + e.what());
  }
  if (manifest.value("format", "") != "aina-dataset") throw BadConfig("not a dataset manifest");
  const fs::path dir = path.parent_path();
  Dataset ds;
  ds.n = manifest.at("n").get<Eigen::Index>();
  ds.seed = manifest.value("seed", 0ULL);
  ds.generator_version = manifest.value("generator_version", "");
  ds.in_scene = load(dir / manifest.at("in_scene").get<std::string>());
  for (const auto& rel : manifest.at("in_the_wild"))
    ds.in_the_wild.push_back(load(dir / rel.get<std::string>()));
  return ds;
}

}  // namespace aina
