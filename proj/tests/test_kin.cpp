#include <filesystem>

#include <catch2/catch_amalgamated.hpp>

#include "aina/kin.hpp"
#include "aina/rng.hpp"

using namespace aina;
using kin::JointState;

namespace {

JointState random_state(const kin::KinematicChain& chain, Rng& rng) {
  JointState q(chain.dof());
  for (int j = 0; j < chain.dof(); ++j) q[j] = rng.uniform(chain.joints[j].lo, chain.joints[j].hi);
  return q;
}

}  // namespace

TEST_CASE("fk at zero matches the frozen oracle fixture") {
  // Computed once by tests/oracle/fk_home_oracle.py from data/chain13.json
  // (independent numpy transform composition).
  const double expected[15] = {
      0.454064379856734, -0.062000000000000, 0.221439009145415,  // thumb
      0.451486872997627, 0.060000000000000,  0.225723452912260,  // index
      0.453548878484913, 0.035000000000000,  0.222295897898784,  // middle
      0.450455870253984, 0.010000000000000,  0.227437230418998,  // ring
      0.446331859279412, -0.002000000000000, 0.234292340445949,  // pinky
  };
  const auto chain = kin::default_chain();
  const HandMatrix tips = kin::fk(chain, chain.zero_state());
  for (int f = 0; f < 5; ++f)
    for (int k = 0; k < 3; ++k) REQUIRE(tips(f, k) == Catch::Approx(expected[3 * f + k]).margin(1e-12));
}

TEST_CASE("base joint rotates all fingertips about the base z axis") {
  const auto chain = kin::default_chain();
  const HandMatrix home = kin::fk(chain, chain.zero_state());
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const double theta = rng.uniform(-2.0, 2.0);
    JointState q = chain.zero_state();
    q[0] = theta;
    const HandMatrix rotated = kin::fk(chain, q);
    const Mat3 rz = rot_z(theta).rotation;
    for (int f = 0; f < 5; ++f)
      REQUIRE(((rz * home.row(f).transpose()) - rotated.row(f).transpose()).norm() < 1e-12);
  }
}

TEST_CASE("distal finger joints move only their own tip") {
  const auto chain = kin::default_chain();
  const HandMatrix home = kin::fk(chain, chain.zero_state());
  // joints 9..12 are the four finger flexions, joint 8 the thumb flexion
  const int owner[5] = {8, 9, 10, 11, 12};
  for (int f = 0; f < 5; ++f) {
    JointState q = chain.zero_state();
    q[owner[f]] = 0.5;
    const HandMatrix moved = kin::fk(chain, q);
    for (int g = 0; g < 5; ++g) {
      const double delta = (moved.row(g) - home.row(g)).norm();
      if (g == f) REQUIRE(delta > 1e-3);
      else REQUIRE(delta < 1e-12);
    }
  }
}

TEST_CASE("strict fk rejects out-of-limit states") {
  const auto chain = kin::default_chain();
  JointState q = chain.zero_state();
  q[3] = chain.joints[3].hi + 0.5;
  REQUIRE_THROWS_AS(kin::fk(chain, q, true), JointLimitViolation);
  REQUIRE_NOTHROW(kin::fk(chain, q));  // permissive by default
}

TEST_CASE("analytic jacobian matches central differences") {
  const auto chain = kin::default_chain();
  Rng rng(7);
  const double h = 1e-6;
  for (int trial = 0; trial < 100; ++trial) {
    JointState q = random_state(chain, rng);
    const Eigen::MatrixXd J = kin::fingertip_jacobian(chain, q);
    for (int j = 0; j < chain.dof(); ++j) {
      JointState qp = q, qm = q;
      qp[j] += h;
      qm[j] -= h;
      const HandMatrix fp = kin::fk(chain, qp), fm = kin::fk(chain, qm);
      for (int f = 0; f < 5; ++f)
        for (int k = 0; k < 3; ++k) {
          const double fd = (fp(f, k) - fm(f, k)) / (2 * h);
          REQUIRE(J(3 * f + k, j) == Catch::Approx(fd).margin(1e-6));
        }
    }
  }
}

TEST_CASE("ik is a fixed point on exact warm starts") {
  const auto chain = kin::default_chain();
  Rng rng(11);
  const JointState q0 = random_state(chain, rng);
  const auto res = kin::ik(chain, kin::fk(chain, q0), q0);
  REQUIRE(res.report.converged);
  REQUIRE(res.report.iterations == 0);
  REQUIRE((res.joints - q0).norm() == 0.0);
}

TEST_CASE("ik tracks FK-generated targets near the warm start") {
  const auto chain = kin::default_chain();
  Rng rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    const JointState q0 = random_state(chain, rng);
    JointState q1 = q0;
    for (int j = 0; j < chain.dof(); ++j) q1[j] += rng.uniform(-0.08, 0.08);
    q1 = chain.clamp(q1);
    const HandMatrix target = kin::fk(chain, q1);
    const auto res = kin::ik(chain, target, q0);
    REQUIRE(std::sqrt((kin::fk(chain, res.joints) - target).squaredNorm() / 5.0) < 1e-3);
    REQUIRE(chain.within_limits(res.joints));
  }
}

TEST_CASE("ik reports unreachable targets without leaving limits") {
  const auto chain = kin::default_chain();
  HandMatrix far = HandMatrix::Zero();
  far.col(0).setConstant(10.0);  // 10 m away
  const auto res = kin::ik(chain, far, chain.zero_state());
  REQUIRE_FALSE(res.report.converged);
  REQUIRE(res.report.residual_rms > 1.0);
  REQUIRE(chain.within_limits(res.joints));
}

TEST_CASE("ik residual history is monotone non-increasing") {
  const auto chain = kin::default_chain();
  Rng rng(17);
  for (int trial = 0; trial < 25; ++trial) {
    const JointState q0 = random_state(chain, rng);
    JointState q1 = chain.clamp(q0 + JointState::Constant(chain.dof(), rng.uniform(-0.4, 0.4)));
    const auto res = kin::ik(chain, kin::fk(chain, q1), q0);
    const auto& hist = res.report.residual_history;
    for (size_t i = 1; i < hist.size(); ++i) REQUIRE(hist[i] <= hist[i - 1] + 1e-15);
  }
}

TEST_CASE("grasp_adjust applies the 40 percent pull under the 5 cm threshold") {
  HandMatrix tips = HandMatrix::Zero();
  tips.row(0) = Vec3(0, 0, 0).transpose();
  tips.row(1) = Vec3(0.06, 0, 0).transpose();   // at 6 cm: untouched
  tips.row(2) = Vec3(0, 0.30, 0).transpose();
  tips.row(3) = Vec3(0, -0.30, 0).transpose();
  tips.row(4) = Vec3(0, 0, 0.30).transpose();

  SECTION("0.06 m pair is unchanged") {
    REQUIRE((kin::grasp_adjust(tips) - tips).norm() == 0.0);
  }
  SECTION("0.04 m pair ends at 0.008 m") {
    tips.row(1) = Vec3(0.04, 0, 0).transpose();
    const HandMatrix out = kin::grasp_adjust(tips);
    REQUIRE((out.row(1) - out.row(0)).norm() == Catch::Approx(0.008).margin(1e-12));
    // untouched fingers stay put
    REQUIRE((out.row(2) - tips.row(2)).norm() == 0.0);
  }
  SECTION("exactly 0.05 m is unchanged, 0.0499 m adjusts") {
    tips.row(1) = Vec3(0.05, 0, 0).transpose();
    REQUIRE((kin::grasp_adjust(tips) - tips).norm() == 0.0);
    tips.row(1) = Vec3(0.0499, 0, 0).transpose();
    const HandMatrix out = kin::grasp_adjust(tips);
    REQUIRE((out - tips).norm() > 0.0);
    REQUIRE((out.row(1) - out.row(0)).norm() == Catch::Approx(0.0499 * 0.2).margin(1e-12));
  }
  SECTION("fingers never cross the thumb") {
    Rng rng(19);
    for (int trial = 0; trial < 500; ++trial) {
      HandMatrix t;
      for (int f = 0; f < 5; ++f)
        for (int k = 0; k < 3; ++k) t(f, k) = rng.uniform(-0.05, 0.05);
      HandMatrix once = kin::grasp_adjust(t);
      HandMatrix twice = kin::grasp_adjust(once);
      for (int f = 1; f < 5; ++f) {
        const double before = (t.row(f) - t.row(0)).norm();
        if (before == 0.0) continue;
        REQUIRE((once.row(f) - once.row(0)).norm() > 0.0);
        REQUIRE((twice.row(f) - twice.row(0)).norm() > 0.0);
      }
    }
  }
}

TEST_CASE("chain file round trip") {
  namespace fs = std::filesystem;
  const auto chain = kin::default_chain();
  const fs::path tmp = fs::temp_directory_path() / "aina_chain_rt.json";
  kin::save_chain(chain, tmp);
  const auto loaded = kin::load_chain(tmp);
  REQUIRE(loaded.dof() == chain.dof());
  REQUIRE(loaded.arm_dof == 7);
  REQUIRE(loaded.hand_dof == 6);
  Rng rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    const JointState q = random_state(loaded, rng);
    REQUIRE((kin::fk(loaded, q) - kin::fk(chain, q)).cwiseAbs().maxCoeff() < 1e-12);
  }
  fs::remove(tmp);
}

TEST_CASE("committed chain file matches the built-in chain") {
  const auto from_file = kin::load_chain(std::filesystem::path(AINA_SOURCE_DIR) / "data/chain13.json");
  const auto builtin = kin::default_chain();
  REQUIRE(from_file.dof() == builtin.dof());
  const HandMatrix a = kin::fk(from_file, from_file.zero_state());
  const HandMatrix b = kin::fk(builtin, builtin.zero_state());
  REQUIRE((a - b).cwiseAbs().maxCoeff() < 1e-12);
}
