#include <catch2/catch_amalgamated.hpp>

#include "aina/geom.hpp"
#include "aina/rng.hpp"

using namespace aina;

namespace {

double ang_diff(double a, double b) { return std::atan2(std::sin(a - b), std::cos(a - b)); }

PointMatrix random_cloud(Rng& rng, int n, double extent = 1.0) {
  PointMatrix p(n, 3);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < 3; ++k) p(i, k) = rng.uniform(-extent, extent);
  return p;
}

RigidTransform random_transform(Rng& rng, double t_extent = 1.0) {
  RigidTransform T;
  T.rotation = random_rotation(rng);
  for (int k = 0; k < 3; ++k) T.translation[k] = rng.uniform(-t_extent, t_extent);
  return T;
}

// Independent Frobenius oracle: coarse grid at 1e-4 rad, then golden-section
// refinement. Never touches the atan2 formula under test.
double frobenius_z_oracle(const Mat3& R) {
  auto cost = [&](double theta) { return (rot_z(theta).rotation - R).squaredNorm(); };
  double best = 0, best_cost = cost(0);
  for (double theta = -M_PI; theta <= M_PI; theta += 1e-4) {
    const double c = cost(theta);
    if (c < best_cost) {
      best_cost = c;
      best = theta;
    }
  }
  double lo = best - 1e-4, hi = best + 1e-4;
  const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
  while (hi - lo > 1e-12) {
    const double m1 = hi - gr * (hi - lo), m2 = lo + gr * (hi - lo);
    if (cost(m1) < cost(m2)) hi = m2; else lo = m1;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

TEST_CASE("disparity_to_depth substitutes Z = fB/d") {
  REQUIRE(disparity_to_depth(200, 0.1, 20) == Catch::Approx(1.0).epsilon(1e-12));
  REQUIRE(disparity_to_depth(500, 0.063, 63) == Catch::Approx(0.5).epsilon(1e-12));
  REQUIRE_THROWS_AS(disparity_to_depth(200, 0.1, 0), DegenerateDisparity);
  REQUIRE_THROWS_AS(disparity_to_depth(200, 0.1, 1e-7), DegenerateDisparity);
}

TEST_CASE("disparity round trip through a rectified pair") {
  // Project a point at known depth into both cameras, measure the disparity,
  // invert. The stereo equation must be the exact inverse of rendering.
  const double f = 400, B = 0.12;
  const StereoRig rig = make_rectified_rig(f, f, 320, 240, B);
  Rng rng(17);
  for (int i = 0; i < 200; ++i) {
    const double z = rng.uniform(0.3, 3.0);
    const Vec3 p(rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2), z);
    const auto left = project(rig.left, p);
    const auto right = project(rig.right, rig.right.pose.inverse().apply(p));
    const double d = left.x() - right.x();
    REQUIRE(disparity_to_depth(f, B, d) == Catch::Approx(z).margin(1e-9));
  }
  // the spec's worked case: Z = 0.75
  const Vec3 p(0.05, -0.03, 0.75);
  const double d = project(rig.left, p).x() - project(rig.right, rig.right.pose.inverse().apply(p)).x();
  REQUIRE(disparity_to_depth(f, B, d) == Catch::Approx(0.75).margin(1e-9));
}

TEST_CASE("unproject principal point and unit-slope rays") {
  PinholeCamera cam{200, 220, 320, 240, RigidTransform::identity()};
  REQUIRE((unproject(cam, 320, 240, 1.0) - Vec3(0, 0, 1)).norm() == Catch::Approx(0).margin(1e-15));
  REQUIRE((unproject(cam, 320 + 200, 240, 2.0) - Vec3(2, 0, 2)).norm() ==
          Catch::Approx(0).margin(1e-12));
  REQUIRE_THROWS_AS(unproject(cam, 10, 10, 0.0), NonPositiveDepth);
  REQUIRE_THROWS_AS(unproject(cam, 10, 10, -1.0), NonPositiveDepth);
}

TEST_CASE("project(unproject) is the identity on pixels") {
  PinholeCamera cam{470, 455, 311, 250, RigidTransform::identity()};
  Rng rng(23);
  for (int i = 0; i < 500; ++i) {
    const Eigen::Vector2d px(rng.uniform(0, 640), rng.uniform(0, 480));
    const double z = rng.uniform(0.2, 5.0);
    const Eigen::Vector2d back = project(cam, unproject(cam, px.x(), px.y(), z));
    REQUIRE((back - px).norm() < 1e-9);
  }
}

TEST_CASE("transform_points is an isometry") {
  Rng rng(31);
  const PointMatrix cloud = random_cloud(rng, 40);
  SECTION("identity") {
    REQUIRE((transform_points(RigidTransform::identity(), cloud) - cloud).norm() == 0.0);
  }
  SECTION("pure translation") {
    PointMatrix origin = PointMatrix::Zero(1, 3);
    const PointMatrix moved = transform_points(translate(Vec3(0.1, 0, 0)), origin);
    REQUIRE((moved.row(0).transpose() - Vec3(0.1, 0, 0)).norm() < 1e-15);
  }
  SECTION("pairwise distances preserved") {
    for (int trial = 0; trial < 50; ++trial) {
      const RigidTransform T = random_transform(rng);
      const PointMatrix out = transform_points(T, cloud);
      for (int a = 0; a < cloud.rows(); a += 7)
        for (int b = a + 1; b < cloud.rows(); b += 5)
          REQUIRE(std::abs((out.row(a) - out.row(b)).norm() - (cloud.row(a) - cloud.row(b)).norm()) <
                  1e-9);
    }
  }
}

TEST_CASE("kabsch recovers constructed rigid transforms") {
  Rng rng(37);
  SECTION("identity on equal clouds") {
    const PointMatrix p = random_cloud(rng, 10);
    const RigidTransform T = kabsch(p, p);
    REQUIRE((T.rotation - Mat3::Identity()).norm() < 1e-9);
    REQUIRE(T.translation.norm() < 1e-9);
  }
  SECTION("property: exact recovery over 1000 instances") {
    for (int i = 0; i < 1000; ++i) {
      const PointMatrix p = random_cloud(rng, 3 + static_cast<int>(rng.below(20)));
      const RigidTransform truth = random_transform(rng);
      const PointMatrix q = transform_points(truth, p);
      const RigidTransform est = kabsch(p, q);
      REQUIRE((est.rotation - truth.rotation).cwiseAbs().maxCoeff() < 1e-9);
      REQUIRE((est.translation - truth.translation).norm() < 1e-9);
      REQUIRE(est.is_valid_rotation(1e-9));
    }
  }
  SECTION("reflected targets still produce det +1") {
    for (int i = 0; i < 100; ++i) {
      PointMatrix p = random_cloud(rng, 12);
      PointMatrix q = p;
      q.col(2) = -q.col(2);  // mirror
      const RigidTransform est = kabsch(p, q);
      REQUIRE(est.rotation.determinant() == Catch::Approx(1.0).margin(1e-9));
    }
  }
  SECTION("collinear points are degenerate") {
    PointMatrix p(4, 3);
    for (int i = 0; i < 4; ++i) p.row(i) = Vec3(i * 0.1, 0, 0).transpose();
    REQUIRE_THROWS_AS(kabsch(p, p), DegenerateConfiguration);
    REQUIRE_THROWS_AS(kabsch(p.topRows(2), p.topRows(2)), DegenerateConfiguration);
  }
  SECTION("noisy correspondence beats a 1-degree z-rotation grid") {
    for (int trial = 0; trial < 10; ++trial) {
      const PointMatrix p = random_cloud(rng, 25);
      const RigidTransform truth = random_transform(rng, 0.3);
      PointMatrix q = transform_points(truth, p);
      for (int i = 0; i < q.rows(); ++i)
        for (int k = 0; k < 3; ++k) q(i, k) += rng.uniform(-0.01, 0.01);
      const RigidTransform est = kabsch(p, q);
      const double est_res = (transform_points(est, p) - q).squaredNorm();
      // brute-force lower bound: z-rotations in 1 degree steps + centroid match
      const Vec3 pc = centroid(p), qc = centroid(q);
      double best = std::numeric_limits<double>::infinity();
      for (int deg = 0; deg < 360; ++deg) {
        RigidTransform g = rot_z(deg * M_PI / 180.0);
        g.translation = qc - g.rotation * pc;
        best = std::min(best, (transform_points(g, p) - q).squaredNorm());
      }
      REQUIRE(est_res <= best + 1e-12);
    }
  }
}

TEST_CASE("extract_z_rotation") {
  SECTION("identity and pure z-rotations") {
    auto [theta0, rz0] = extract_z_rotation(RigidTransform::identity());
    REQUIRE(theta0 == Catch::Approx(0.0).margin(1e-15));
    auto [theta45, rz45] = extract_z_rotation(rot_z(M_PI / 4));
    REQUIRE(theta45 == Catch::Approx(M_PI / 4).margin(1e-12));
    REQUIRE((rz45.rotation - rot_z(M_PI / 4).rotation).norm() < 1e-12);
    REQUIRE(rz45.translation.norm() == 0.0);
  }
  SECTION("wrapped recovery for all angles") {
    Rng rng(41);
    for (int i = 0; i < 500; ++i) {
      const double theta = rng.uniform(-M_PI, M_PI);
      auto [got, rz] = extract_z_rotation(rot_z(theta));
      REQUIRE(std::abs(ang_diff(got, theta)) < 1e-12);
    }
  }
  SECTION("composed rotation matches the Frobenius grid oracle") {
    RigidTransform T;
    T.rotation = (Eigen::AngleAxisd(30 * M_PI / 180, Vec3::UnitZ()) *
                  Eigen::AngleAxisd(10 * M_PI / 180, Vec3::UnitX()))
                     .toRotationMatrix();
    auto [theta, rz] = extract_z_rotation(T);
    REQUIRE(std::abs(ang_diff(theta, frobenius_z_oracle(T.rotation))) < 1e-6);
  }
  SECTION("axis orthogonal to z is degenerate") {
    RigidTransform T;
    T.rotation = Eigen::AngleAxisd(M_PI, Vec3::UnitX()).toRotationMatrix();
    REQUIRE_THROWS_AS(extract_z_rotation(T), DegenerateConfiguration);
  }
}

TEST_CASE("triangulate") {
  Rng rng(43);
  SECTION("project-then-triangulate recovers the point") {
    for (int i = 0; i < 200; ++i) {
      PinholeCamera a{500, 500, 320, 240, random_transform(rng, 0.2)};
      PinholeCamera b{480, 510, 315, 245, random_transform(rng, 0.2)};
      const Vec3 p(rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4), rng.uniform(1.0, 2.5));
      const Vec3 pa = a.pose.inverse().apply(p);
      const Vec3 pb = b.pose.inverse().apply(p);
      if (pa.z() < 0.1 || pb.z() < 0.1) continue;
      const Vec3 got = triangulate(a, b, project(a, pa), project(b, pb));
      REQUIRE((got - p).norm() < 1e-9);
    }
  }
  SECTION("identical poses are parallel rays") {
    PinholeCamera a{500, 500, 320, 240, RigidTransform::identity()};
    REQUIRE_THROWS_AS(triangulate(a, a, {100, 100}, {200, 200}), ParallelRays);
  }
  SECTION("0.5 px noise at 1 m with 0.3 m baseline stays under 5 mm") {
    const double f = 600;
    PinholeCamera left{f, f, 320, 240, RigidTransform::identity()};
    PinholeCamera right{f, f, 320, 240, translate(Vec3(0.3, 0, 0))};
    double err_sum = 0;
    const int trials = 2000;
    for (int i = 0; i < trials; ++i) {
      const Vec3 p(rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1), rng.uniform(0.95, 1.05));
      Eigen::Vector2d pl = project(left, p);
      Eigen::Vector2d pr = project(right, right.pose.inverse().apply(p));
      for (int k = 0; k < 2; ++k) {
        pl[k] += rng.uniform(-0.5, 0.5);
        pr[k] += rng.uniform(-0.5, 0.5);
      }
      err_sum += (triangulate(left, right, pl, pr) - p).norm();
    }
    REQUIRE(err_sum / trials < 0.005);
  }
}

TEST_CASE("rigid transform compose and inverse are consistent") {
  Rng rng(47);
  for (int i = 0; i < 100; ++i) {
    const RigidTransform a = random_transform(rng), b = random_transform(rng);
    const Vec3 p = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    REQUIRE((a.compose(b).apply(p) - a.apply(b.apply(p))).norm() < 1e-12);
    REQUIRE((a.compose(a.inverse()).apply(p) - p).norm() < 1e-12);
    REQUIRE(a.compose(a.inverse()).is_valid_rotation(1e-12));
  }
}
