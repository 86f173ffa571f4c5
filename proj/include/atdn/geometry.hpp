#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace atdn {

using Mat3 = std::array<double, 9>;  // row-major
using Vec3 = std::array<double, 3>;

Mat3 mat3_identity();
Mat3 mat3_mul(const Mat3& a, const Mat3& b);
Mat3 mat3_transpose(const Mat3& m);
Vec3 mat3_apply(const Mat3& m, const Vec3& v);
double mat3_det(const Mat3& m);

// max|R^T R - I| over all entries.
double rotation_drift(const Mat3& r);

// Gram-Schmidt on the rows; third row rebuilt as a cross product so the
// result is right-handed.
Mat3 orthonormalize(const Mat3& r);

// arccos((trace-1)/2), argument clamped to [-1, 1]. Range [0, pi].
double rotation_angle(const Mat3& r);

// SE(3) rigid transform: x_world = R * x_local + t. Construction validates
// orthonormality (drift < 1e-9, |det - 1| <= 1e-9) and finite translation.
struct Pose {
  Mat3 R;
  Vec3 t;

  Pose();  // identity
  Pose(const Mat3& rotation, const Vec3& translation);
};

// Same payload as Pose; semantics = transform from frame i to frame j.
struct RelativePose {
  Mat3 R;
  Vec3 t;

  RelativePose();  // identity
  RelativePose(const Mat3& rotation, const Vec3& translation);
};

// a then b: rotation R_a*R_b, translation R_a*t_b + t_a. Result is
// re-orthonormalized when drift exceeds 1e-12.
Pose compose(const Pose& a, const RelativePose& b);
RelativePose compose(const RelativePose& a, const RelativePose& b);

Pose inverse(const Pose& p);

// inverse(a) o b, i.e. pose of b expressed in frame a.
RelativePose relative(const Pose& a, const Pose& b);

struct TrajectoryEntry {
  std::int64_t frame_id;
  Pose pose;
};

// Ordered (frame_id, pose) sequence; frame ids strictly increasing, non-empty.
class Trajectory {
 public:
  explicit Trajectory(std::vector<TrajectoryEntry> entries);

  const std::vector<TrajectoryEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  const TrajectoryEntry& operator[](std::size_t i) const { return entries_[i]; }

 private:
  std::vector<TrajectoryEntry> entries_;
};

}  // namespace atdn
