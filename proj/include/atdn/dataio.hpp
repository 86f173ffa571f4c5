#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "atdn/geometry.hpp"

namespace atdn {

inline constexpr std::size_t kDefaultReadCap = std::size_t{1} << 30;  // 1 GiB

// Dense per-pixel displacement field, channel-last (u, v) in pixels.
struct FlowField {
  int height = 0;
  int width = 0;
  std::vector<float> data;  // height*width*2

  FlowField() = default;
  FlowField(int h, int w) : height(h), width(w), data(std::size_t(h) * w * 2, 0.0f) {}

  float& u(int y, int x) { return data[(std::size_t(y) * width + x) * 2]; }
  float& v(int y, int x) { return data[(std::size_t(y) * width + x) * 2 + 1]; }
  float u(int y, int x) const { return data[(std::size_t(y) * width + x) * 2]; }
  float v(int y, int x) const { return data[(std::size_t(y) * width + x) * 2 + 1]; }
};

struct Frame {
  std::int64_t frame_id = 0;
  int height = 0;
  int width = 0;
  std::vector<float> image;  // grayscale in [0,1], row-major
  std::optional<Pose> pose;
};

enum class PathKind { Line, Circle, Waypoints };

// Desk-scale stand-in for real imagery: a camera on a parametric path in
// front of an infinite textured wall at world z = plane_depth. The camera
// looks along +z; yaw oscillates by yaw_amplitude*sin(2*pi*k/n) so rotations
// are exercised without losing sight of the wall.
struct SyntheticWorld {
  double plane_depth = 60.0;  // metres, wall at world z = plane_depth
  double focal = 64.0;        // pixels
  double cx = -1.0;           // principal point; <0 -> (width-1)/2
  double cy = -1.0;
  int image_height = 64;
  int image_width = 64;
  int frame_count = 500;
  PathKind path = PathKind::Circle;
  double radius = 15.0;                           // circle; frame k at angle 2*pi*k/n
  double speed = 0.2;                             // line, metres per frame along +x
  std::vector<std::array<double, 2>> waypoints;   // (x, z) corners, constant speed
  double yaw_amplitude = 0.0;                     // radians

  double principal_x() const { return cx < 0 ? (image_width - 1) * 0.5 : cx; }
  double principal_y() const { return cy < 0 ? (image_height - 1) * 0.5 : cy; }
  void validate() const;  // throws DataError on a degenerate spec
};

// Deterministic multi-octave value noise in [0,1); the wall texture.
double value_noise(std::uint64_t seed, double x, double y);

// --- KITTI-style pose text files -------------------------------------------

// One frame per line, 12 numbers, row-major 3x4 [R|t]. frame_id = line index.
// Rotation drift <= 1e-6 is re-orthonormalized, larger drift is an error.
Trajectory parse_pose_file(std::istream& in);
void serialize_trajectory(const Trajectory& traj, std::ostream& out);

// --- Flow and image binary files -------------------------------------------

// Flow file: "ATDNFLOW" | u32 version=1 | u32 height | u32 width |
// height*width*2 f32 channel-last row-major. Little-endian throughout.
std::size_t write_flow(const FlowField& field, std::ostream& out);
FlowField read_flow(std::istream& in, std::size_t max_bytes = kDefaultReadCap);

// Raw image file: "ATDNIMG1" | u32 version=1 | u32 H | u32 W | H*W f32.
std::size_t write_raw_image(const Frame& frame, std::ostream& out);

// Reads ATDNIMG1, binary PGM (P5) or binary PPM (P6, converted to grayscale
// with luma weights 0.299/0.587/0.114). Intensities scaled to [0,1].
Frame read_frame(std::istream& in, std::size_t max_bytes = kDefaultReadCap);

// --- Synthetic sequence + analytic flow oracle ------------------------------

// Deterministic for a given seed; poses follow the path spec exactly.
std::pair<std::vector<Frame>, Trajectory> synth_sequence(
    const SyntheticWorld& world, std::uint64_t seed);

// Ground-truth pose of frame k (exact path evaluation, no rendering).
Pose synth_pose(const SyntheticWorld& world, int k);

// Exact displacement of the plane point seen at (px, py) in pose_i when
// re-projected into pose_j; full double precision, may be called at
// non-integer pixel positions. Throws DataError if a ray misses the plane or
// the point falls behind either camera.
std::array<double, 2> flow_point(const SyntheticWorld& world, const Pose& pose_i,
                                 const Pose& pose_j, double px, double py);

// flow_point evaluated at every integer pixel, rounded to f32 storage.
FlowField flow_oracle(const SyntheticWorld& world, const Pose& pose_i,
                      const Pose& pose_j);

// Box-average resampling. Flow values are rescaled by the size ratio.
Frame downsample_frame(const Frame& src, int target_h, int target_w);
FlowField resize_flow(const FlowField& src, int target_h, int target_w);

}  // namespace atdn
