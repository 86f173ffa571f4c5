#include "atdn/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace atdn {

Mat3 mat3_identity() { return {1, 0, 0, 0, 1, 0, 0, 0, 1}; }

Mat3 mat3_mul(const Mat3& a, const Mat3& b) {
  Mat3 r{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k) s += a[i * 3 + k] * b[k * 3 + j];
      r[i * 3 + j] = s;
    }
  return r;
}

Mat3 mat3_transpose(const Mat3& m) {
  return {m[0], m[3], m[6], m[1], m[4], m[7], m[2], m[5], m[8]};
}

Vec3 mat3_apply(const Mat3& m, const Vec3& v) {
  return {m[0] * v[0] + m[1] * v[1] + m[2] * v[2],
          m[3] * v[0] + m[4] * v[1] + m[5] * v[2],
          m[6] * v[0] + m[7] * v[1] + m[8] * v[2]};
}

double mat3_det(const Mat3& m) {
  return m[0] * (m[4] * m[8] - m[5] * m[7]) -
         m[1] * (m[3] * m[8] - m[5] * m[6]) +
         m[2] * (m[3] * m[7] - m[4] * m[6]);
}

double rotation_drift(const Mat3& r) {
  const Mat3 g = mat3_mul(mat3_transpose(r), r);
  double worst = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      const double target = (i == j) ? 1.0 : 0.0;
      worst = std::max(worst, std::abs(g[i * 3 + j] - target));
    }
  return worst;
}

namespace {

void normalize_row(double* r) {
  const double n = std::sqrt(r[0] * r[0] + r[1] * r[1] + r[2] * r[2]);
  if (n <= 0.0) throw std::invalid_argument("degenerate rotation row");
  r[0] /= n;
  r[1] /= n;
  r[2] /= n;
}

bool all_finite(const double* v, int n) {
  for (int i = 0; i < n; ++i)
    if (!std::isfinite(v[i])) return false;
  return true;
}

void validate_rotation(const Mat3& r, const Vec3& t) {
  if (!all_finite(r.data(), 9) || !all_finite(t.data(), 3))
    throw std::invalid_argument("pose has non-finite entries");
  if (rotation_drift(r) >= 1e-9)
    throw std::invalid_argument("rotation is not orthonormal");
  if (std::abs(mat3_det(r) - 1.0) > 1e-9)
    throw std::invalid_argument("rotation determinant is not 1");
}

}  // namespace

Mat3 orthonormalize(const Mat3& r) {
  Mat3 o = r;
  normalize_row(&o[0]);
  double d = o[3] * o[0] + o[4] * o[1] + o[5] * o[2];
  o[3] -= d * o[0];
  o[4] -= d * o[1];
  o[5] -= d * o[2];
  normalize_row(&o[3]);
  o[6] = o[1] * o[5] - o[2] * o[4];
  o[7] = o[2] * o[3] - o[0] * o[5];
  o[8] = o[0] * o[4] - o[1] * o[3];
  return o;
}

double rotation_angle(const Mat3& r) {
  const double c = std::clamp((r[0] + r[4] + r[8] - 1.0) * 0.5, -1.0, 1.0);
  return std::acos(c);
}

Pose::Pose() : R(mat3_identity()), t{0, 0, 0} {}

Pose::Pose(const Mat3& rotation, const Vec3& translation)
    : R(rotation), t(translation) {
  validate_rotation(R, t);
}

RelativePose::RelativePose() : R(mat3_identity()), t{0, 0, 0} {}

RelativePose::RelativePose(const Mat3& rotation, const Vec3& translation)
    : R(rotation), t(translation) {
  validate_rotation(R, t);
}

namespace {

// Composition on raw (R, t) pairs; renormalizes when drift accumulates.
void compose_raw(const Mat3& ra, const Vec3& ta, const Mat3& rb,
                 const Vec3& tb, Mat3& r, Vec3& t) {
  r = mat3_mul(ra, rb);
  if (rotation_drift(r) > 1e-12) r = orthonormalize(r);
  const Vec3 rt = mat3_apply(ra, tb);
  t = {rt[0] + ta[0], rt[1] + ta[1], rt[2] + ta[2]};
}

}  // namespace

Pose compose(const Pose& a, const RelativePose& b) {
  Mat3 r;
  Vec3 t;
  compose_raw(a.R, a.t, b.R, b.t, r, t);
  return Pose(r, t);
}

RelativePose compose(const RelativePose& a, const RelativePose& b) {
  Mat3 r;
  Vec3 t;
  compose_raw(a.R, a.t, b.R, b.t, r, t);
  return RelativePose(r, t);
}

Pose inverse(const Pose& p) {
  const Mat3 rt = mat3_transpose(p.R);
  const Vec3 nt = mat3_apply(rt, p.t);
  return Pose(rt, {-nt[0], -nt[1], -nt[2]});
}

RelativePose relative(const Pose& a, const Pose& b) {
  const Pose ia = inverse(a);
  Mat3 r;
  Vec3 t;
  compose_raw(ia.R, ia.t, b.R, b.t, r, t);
  return RelativePose(r, t);
}

Trajectory::Trajectory(std::vector<TrajectoryEntry> entries)
    : entries_(std::move(entries)) {
  if (entries_.empty()) throw std::invalid_argument("empty trajectory");
  for (std::size_t i = 1; i < entries_.size(); ++i)
    if (entries_[i].frame_id <= entries_[i - 1].frame_id)
      throw std::invalid_argument("trajectory frame ids must increase");
}

}  // namespace atdn
