#include <filesystem>
#include <fstream>

#include <catch2/catch_amalgamated.hpp>

#include "aina/rng.hpp"
#include "aina/trajectory.hpp"
#include "aina/trajectory_io.hpp"

using namespace aina;
namespace fs = std::filesystem;

namespace {

Trajectory make_trajectory(Rng& rng, int frames = 6, int n = 8,
                           Source source = Source::in_scene) {
  Trajectory t;
  t.source = source;
  t.frame_of_reference = source == Source::in_scene ? FrameOfReference::robot_base
                                                    : FrameOfReference::world_gravity_aligned;
  t.task_name = "reach";
  t.prompts = {"block", "bowl"};
  for (int i = 0; i < frames; ++i) {
    Frame f;
    f.timestamp = i / 10.0;
    f.objects.resize(n, 3);
    for (int p = 0; p < n; ++p)
      for (int k = 0; k < 3; ++k) f.objects(p, k) = rng.uniform(-0.5, 0.5);
    for (int p = 0; p < 5; ++p)
      for (int k = 0; k < 3; ++k) f.hand(p, k) = 0.05 * rng.uniform(-1, 1);
    t.frames.push_back(std::move(f));
  }
  return t;
}

Dataset make_dataset(uint64_t seed = 1) {
  Rng rng(seed);
  Dataset ds;
  ds.n = 8;
  ds.seed = seed;
  ds.generator_version = "test";
  ds.in_scene = make_trajectory(rng);
  ds.in_the_wild.push_back(make_trajectory(rng, 5, 8, Source::in_the_wild));
  ds.in_the_wild.push_back(make_trajectory(rng, 7, 8, Source::in_the_wild));
  return ds;
}

}  // namespace

TEST_CASE("validate passes a well-formed dataset") {
  REQUIRE(validate(make_dataset()).ok());
}

TEST_CASE("validate reports an injected NaN at the right index") {
  Dataset ds = make_dataset();
  ds.in_the_wild[1].frames[3].objects(2, 1) = std::numeric_limits<double>::quiet_NaN();
  const auto report = validate(ds);
  REQUIRE(report.violations.size() == 1);
  REQUIRE(report.violations[0].code == "finite");
  REQUIRE(report.violations[0].trajectory == 2);
  REQUIRE(report.violations[0].frame == 3);
}

TEST_CASE("validate flags N inconsistency") {
  Dataset ds = make_dataset();
  Rng rng(9);
  ds.in_the_wild[0] = make_trajectory(rng, 5, 4, Source::in_the_wild);  // N=4 vs dataset N=8
  const auto report = validate(ds);
  REQUIRE_FALSE(report.ok());
  bool found = false;
  for (const auto& v : report.violations) found |= v.code == "n_consistency";
  REQUIRE(found);
}

TEST_CASE("validate flags non-monotone timestamps and short trajectories") {
  Dataset ds = make_dataset();
  ds.in_scene.frames[2].timestamp = ds.in_scene.frames[1].timestamp;
  ds.in_the_wild[0].frames.resize(1);
  const auto report = validate(ds);
  bool ts = false, fc = false;
  for (const auto& v : report.violations) {
    ts |= v.code == "timestamps";
    fc |= v.code == "frame_count";
  }
  REQUIRE(ts);
  REQUIRE(fc);
}

TEST_CASE("validate flags oversized hands and bad pairing") {
  Dataset ds = make_dataset();
  ds.in_scene.frames[0].hand(0, 0) = 1.0;  // half a meter from the others
  ds.in_scene.frame_of_reference = FrameOfReference::world_gravity_aligned;
  const auto report = validate(ds);
  bool spread = false, pair = false;
  for (const auto& v : report.violations) {
    spread |= v.code == "hand_spread";
    pair |= v.code == "frame_source_pair";
  }
  REQUIRE(spread);
  REQUIRE(pair);
}

TEST_CASE("trajectory round trip is bit-identical at the file level") {
  Rng rng(21);
  const Trajectory t = make_trajectory(rng);
  const auto bytes = serialize(t);
  const Trajectory back = deserialize_trajectory(bytes);
  REQUIRE(serialize(back) == bytes);
  REQUIRE(back.frames.size() == t.frames.size());
  REQUIRE(back.task_name == t.task_name);
  REQUIRE(back.prompts == t.prompts);
  REQUIRE(back.source == t.source);
  // values agree to f32 resolution, timestamps exactly
  for (size_t i = 0; i < t.frames.size(); ++i) {
    REQUIRE(back.frames[i].timestamp == t.frames[i].timestamp);
    REQUIRE((back.frames[i].objects - t.frames[i].objects).cwiseAbs().maxCoeff() < 1e-6);
    REQUIRE((back.frames[i].objects.cast<float>() - t.frames[i].objects.cast<float>()).norm() == 0.0f);
  }
}

TEST_CASE("save/load files round trip") {
  Rng rng(22);
  const Trajectory t = make_trajectory(rng);
  const fs::path tmp = fs::temp_directory_path() / "aina_traj_rt.traj";
  save(t, tmp);
  const Trajectory back = load(tmp);
  REQUIRE(serialize(back) == serialize(t));
  fs::remove(tmp);
}

TEST_CASE("corrupted magic is BadMagic") {
  Rng rng(23);
  auto bytes = serialize(make_trajectory(rng));
  bytes[1] ^= 0xff;
  REQUIRE_THROWS_AS(deserialize_trajectory(bytes), BadMagic);
}

TEST_CASE("unknown version is UnsupportedVersion") {
  Rng rng(24);
  auto bytes = serialize(make_trajectory(rng));
  bytes[4] = 9;  // version little-endian low byte
  REQUIRE_THROWS_AS(deserialize_trajectory(bytes), UnsupportedVersion);
}

TEST_CASE("truncation mid-frame is TruncatedFile") {
  Rng rng(25);
  auto bytes = serialize(make_trajectory(rng));
  bytes.resize(bytes.size() - 40);
  REQUIRE_THROWS_AS(deserialize_trajectory(bytes), TruncatedFile);
}

TEST_CASE("payload corruption is ChecksumMismatch") {
  Rng rng(26);
  auto bytes = serialize(make_trajectory(rng));
  bytes[bytes.size() / 2] ^= 0x10;
  REQUIRE_THROWS_AS(deserialize_trajectory(bytes), ChecksumMismatch);
}

TEST_CASE("every single-byte header corruption is rejected") {
  Rng rng(27);
  const auto bytes = serialize(make_trajectory(rng));
  // header = everything before the first frame record
  const size_t header_len = 4 + 2 + 1 + 1 + 4 + 4 + 4 + (4 + 5) + 4 + (4 + 5) + (4 + 4);
  for (size_t pos = 0; pos < header_len; ++pos) {
    for (unsigned char flip : {0x01, 0x80}) {
      auto corrupted = bytes;
      corrupted[pos] ^= flip;
      REQUIRE_THROWS_AS(deserialize_trajectory(corrupted), Error);
    }
  }
}

TEST_CASE("dataset manifest round trip") {
  const Dataset ds = make_dataset(77);
  const fs::path dir = fs::temp_directory_path() / "aina_ds_rt";
  fs::remove_all(dir);
  save_dataset(ds, dir);
  const Dataset back = load_dataset(dir / "manifest.json");
  REQUIRE(back.n == ds.n);
  REQUIRE(back.seed == ds.seed);
  REQUIRE(back.generator_version == ds.generator_version);
  REQUIRE(back.in_the_wild.size() == ds.in_the_wild.size());
  REQUIRE(serialize(back.in_scene) == serialize(ds.in_scene));
  for (size_t i = 0; i < ds.in_the_wild.size(); ++i)
    REQUIRE(serialize(back.in_the_wild[i]) == serialize(ds.in_the_wild[i]));
  // directory path works too
  const Dataset back2 = load_dataset(dir);
  REQUIRE(back2.in_the_wild.size() == ds.in_the_wild.size());
  fs::remove_all(dir);
}
