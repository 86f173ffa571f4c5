#include <doctest.h>

#include <cmath>

#include "atdn/geometry.hpp"
#include "atdn/rng.hpp"

using namespace atdn;

namespace {

// Independent homogeneous 4x4 oracle for composition checks.
struct Hom {
  double m[16];
};

Hom to_hom(const Mat3& r, const Vec3& t) {
  Hom h{};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) h.m[i * 4 + j] = r[i * 3 + j];
    h.m[i * 4 + 3] = t[i];
  }
  h.m[15] = 1.0;
  return h;
}

Hom hom_mul(const Hom& a, const Hom& b) {
  Hom y{};
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      double s = 0;
      for (int k = 0; k < 4; ++k) s += a.m[i * 4 + k] * b.m[k * 4 + j];
      y.m[i * 4 + j] = s;
    }
  return y;
}

// Rodrigues construction used as an oracle for rotation_angle.
Mat3 rodrigues(const Vec3& axis_unit, double theta) {
  const double c = std::cos(theta), s = std::sin(theta);
  const double x = axis_unit[0], y = axis_unit[1], z = axis_unit[2];
  return {c + x * x * (1 - c),     x * y * (1 - c) - z * s, x * z * (1 - c) + y * s,
          y * x * (1 - c) + z * s, c + y * y * (1 - c),     y * z * (1 - c) - x * s,
          z * x * (1 - c) - y * s, z * y * (1 - c) + x * s, c + z * z * (1 - c)};
}

Vec3 random_unit(Rng& rng) {
  Vec3 v{rng.normal(), rng.normal(), rng.normal()};
  const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
  return {v[0] / n, v[1] / n, v[2] / n};
}

Pose random_pose(Rng& rng) {
  const Mat3 r = rodrigues(random_unit(rng), rng.uniform() * 3.0);
  return Pose(r, {rng.normal() * 5, rng.normal() * 5, rng.normal() * 5});
}

RelativePose random_rel(Rng& rng, double angle_scale = 3.0, double t_scale = 5.0) {
  const Mat3 r = rodrigues(random_unit(rng), rng.uniform() * angle_scale);
  return RelativePose(r, {rng.normal() * t_scale, rng.normal() * t_scale,
                          rng.normal() * t_scale});
}

double max_abs_diff(const Pose& a, const Pose& b) {
  double worst = 0;
  for (int i = 0; i < 9; ++i) worst = std::max(worst, std::abs(a.R[i] - b.R[i]));
  for (int i = 0; i < 3; ++i) worst = std::max(worst, std::abs(a.t[i] - b.t[i]));
  return worst;
}

}  // namespace

TEST_SUITE("geometry") {

TEST_CASE("identity composes as neutral element") {
  Rng rng(7);
  const RelativePose p = random_rel(rng);
  const Pose composed = compose(Pose(), p);
  for (int i = 0; i < 9; ++i) CHECK(composed.R[i] == doctest::Approx(p.R[i]).epsilon(1e-15));
  for (int i = 0; i < 3; ++i) CHECK(composed.t[i] == doctest::Approx(p.t[i]).epsilon(1e-15));
}

TEST_CASE("pure translations add") {
  const Pose a(mat3_identity(), {1, 0, 0});
  const RelativePose b(mat3_identity(), {0, 2, 0});
  const Pose c = compose(a, b);
  CHECK(c.t[0] == 1.0);
  CHECK(c.t[1] == 2.0);
  CHECK(c.t[2] == 0.0);
}

TEST_CASE("two 90-degree z-rotations match the homogeneous oracle") {
  const Mat3 rz90 = rodrigues({0, 0, 1}, M_PI / 2);
  const Pose a(rz90, {1, 2, 3});
  const RelativePose b(rz90, {-1, 0, 4});
  const Pose composed = compose(a, b);
  const Hom oracle = hom_mul(to_hom(a.R, a.t), to_hom(b.R, b.t));
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      CHECK(composed.R[i * 3 + j] == doctest::Approx(oracle.m[i * 4 + j]).epsilon(1e-12));
  for (int i = 0; i < 3; ++i)
    CHECK(composed.t[i] == doctest::Approx(oracle.m[i * 4 + 3]).epsilon(1e-12));
  // two quarter turns = half turn
  CHECK(rotation_angle(composed.R) == doctest::Approx(M_PI).epsilon(1e-12));
}

TEST_CASE("inverse round trip") {
  CHECK(max_abs_diff(inverse(Pose()), Pose()) == 0.0);

  const Pose t(mat3_identity(), {3, -1, 2});
  const Pose it = inverse(t);
  CHECK(it.t[0] == -3.0);
  CHECK(it.t[1] == 1.0);
  CHECK(it.t[2] == -2.0);

  Rng rng(11);
  for (int i = 0; i < 50; ++i) {
    const Pose p = random_pose(rng);
    const Pose round = compose(p, RelativePose(inverse(p).R, inverse(p).t));
    CHECK(max_abs_diff(round, Pose()) < 1e-12);
  }
}

TEST_CASE("relative extraction round trip") {
  Rng rng(13);
  const Pose p = random_pose(rng);
  const RelativePose self = relative(p, p);
  CHECK(max_abs_diff(Pose(self.R, self.t), Pose()) < 1e-12);

  const Pose b = random_pose(rng);
  const RelativePose from_identity = relative(Pose(), b);
  CHECK(max_abs_diff(Pose(from_identity.R, from_identity.t), b) < 1e-12);

  for (int i = 0; i < 50; ++i) {
    const Pose x = random_pose(rng);
    const Pose y = random_pose(rng);
    CHECK(max_abs_diff(compose(x, relative(x, y)), y) < 1e-10);
  }
}

TEST_CASE("relative of compose recovers the step") {
  Rng rng(17);
  for (int i = 0; i < 50; ++i) {
    const Pose a = random_pose(rng);
    const RelativePose b = random_rel(rng);
    const RelativePose back = relative(a, compose(a, b));
    double worst = 0;
    for (int k = 0; k < 9; ++k) worst = std::max(worst, std::abs(back.R[k] - b.R[k]));
    for (int k = 0; k < 3; ++k) worst = std::max(worst, std::abs(back.t[k] - b.t[k]));
    CHECK(worst < 1e-10);
  }
}

TEST_CASE("rotation_angle basics and Rodrigues oracle") {
  CHECK(rotation_angle(mat3_identity()) == 0.0);
  CHECK(rotation_angle(rodrigues({1, 0, 0}, M_PI)) == doctest::Approx(M_PI).epsilon(1e-12));
  Rng rng(19);
  for (int i = 0; i < 20; ++i)
    CHECK(rotation_angle(rodrigues(random_unit(rng), 0.37)) ==
          doctest::Approx(0.37).epsilon(1e-9));
}

TEST_CASE("rotation_angle is conjugation invariant") {
  Rng rng(23);
  for (int i = 0; i < 100; ++i) {
    const Mat3 r = rodrigues(random_unit(rng), rng.uniform() * M_PI);
    const Mat3 q = rodrigues(random_unit(rng), rng.uniform() * M_PI);
    const Mat3 conj = mat3_mul(mat3_mul(q, r), mat3_transpose(q));
    CHECK(std::abs(rotation_angle(conj) - rotation_angle(r)) < 1e-9);
  }
}

TEST_CASE("compose is associative") {
  Rng rng(29);
  for (int i = 0; i < 100; ++i) {
    const RelativePose a = random_rel(rng);
    const RelativePose b = random_rel(rng);
    const RelativePose c = random_rel(rng);
    const RelativePose left = compose(compose(a, b), c);
    const RelativePose right = compose(a, compose(b, c));
    double worst = 0;
    for (int k = 0; k < 9; ++k)
      worst = std::max(worst, std::abs(left.R[k] - right.R[k]));
    for (int k = 0; k < 3; ++k)
      worst = std::max(worst, std::abs(left.t[k] - right.t[k]));
    CHECK(worst < 1e-9);
  }
}

TEST_CASE("10000-step accumulation matches the one-shot homogeneous product") {
  Rng rng(31);
  Pose acc;
  Hom hom = to_hom(mat3_identity(), {0, 0, 0});
  for (int i = 0; i < 10000; ++i) {
    // small per-step motion, as a trajectory would produce
    const RelativePose step = random_rel(rng, 0.02, 0.1);
    acc = compose(acc, step);
    hom = hom_mul(hom, to_hom(step.R, step.t));
  }
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      CHECK(std::abs(acc.R[i * 3 + j] - hom.m[i * 4 + j]) < 1e-6);
  for (int i = 0; i < 3; ++i) CHECK(std::abs(acc.t[i] - hom.m[i * 4 + 3]) < 1e-6);
}

TEST_CASE("constructors reject invalid input") {
  Mat3 bad = mat3_identity();
  bad[0] = 2.0;
  CHECK_THROWS_AS(Pose(bad, {0, 0, 0}), std::invalid_argument);
  CHECK_THROWS_AS(Pose(mat3_identity(), {0, 0, std::nan("")}), std::invalid_argument);
  CHECK_THROWS_AS(Trajectory({}), std::invalid_argument);
  CHECK_THROWS_AS(Trajectory({{1, Pose()}, {1, Pose()}}), std::invalid_argument);
}

}  // TEST_SUITE
