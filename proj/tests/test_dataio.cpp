#include <doctest.h>

#include <cmath>
#include <sstream>

#include "atdn/dataio.hpp"
#include "atdn/errors.hpp"
#include "atdn/rng.hpp"

using namespace atdn;

namespace {

SyntheticWorld small_world() {
  SyntheticWorld w;
  w.frame_count = 12;
  w.image_height = w.image_width = 16;
  w.focal = 16.0;
  w.plane_depth = 20.0;
  w.radius = 2.0;
  return w;
}

}  // namespace

TEST_SUITE("dataio") {

TEST_CASE("pose file: identity and translation lines") {
  std::istringstream in(
      "1 0 0 0 0 1 0 0 0 0 1 0\n"
      "1 0 0 5 0 1 0 0 0 0 1 -2\n");
  const Trajectory traj = parse_pose_file(in);
  REQUIRE(traj.size() == 2);
  CHECK(traj[0].frame_id == 0);
  CHECK(traj[0].pose.t[0] == 0.0);
  CHECK(traj[1].pose.t[0] == 5.0);
  CHECK(traj[1].pose.t[2] == -2.0);
  for (int i = 0; i < 9; ++i)
    CHECK(traj[1].pose.R[i] == mat3_identity()[i]);
}

TEST_CASE("pose file: malformed lines carry line numbers") {
  std::istringstream short_line("1 0 0 0 0 1 0 0 0 0 1\n");
  CHECK_THROWS_WITH_AS(parse_pose_file(short_line),
                       doctest::Contains("line 0"), DataError);
  std::istringstream bad_number(
      "1 0 0 0 0 1 0 0 0 0 1 0\n"
      "1 0 0 x 0 1 0 0 0 0 1 0\n");
  CHECK_THROWS_WITH_AS(parse_pose_file(bad_number),
                       doctest::Contains("line 1"), DataError);
  std::istringstream bad_rotation("2 0 0 0 0 1 0 0 0 0 1 0\n");
  CHECK_THROWS_AS(parse_pose_file(bad_rotation), DataError);
}

TEST_CASE("pose file: small drift is re-orthonormalized") {
  char line[256];
  std::snprintf(line, sizeof line, "%.17g 0 0 1 0 1 0 2 0 0 1 3\n", 1.0 + 5e-8);
  std::istringstream in(line);
  const Trajectory traj = parse_pose_file(in);
  CHECK(rotation_drift(traj[0].pose.R) < 1e-12);
}

TEST_CASE("trajectory serialization round trip") {
  Rng rng(77);
  std::vector<TrajectoryEntry> entries;
  Pose p;
  for (int i = 0; i < 25; ++i) {
    entries.push_back({i, p});
    const double yaw = rng.normal() * 0.3;
    const Mat3 r = {std::cos(yaw), 0, std::sin(yaw), 0, 1, 0,
                    -std::sin(yaw), 0, std::cos(yaw)};
    p = compose(p, RelativePose(r, {rng.normal(), rng.normal(), rng.normal()}));
  }
  const Trajectory traj(entries);
  std::stringstream buf;
  serialize_trajectory(traj, buf);
  const Trajectory back = parse_pose_file(buf);
  REQUIRE(back.size() == traj.size());
  for (std::size_t i = 0; i < traj.size(); ++i) {
    for (int k = 0; k < 9; ++k)
      CHECK(std::abs(back[i].pose.R[k] - traj[i].pose.R[k]) < 1e-9);
    for (int k = 0; k < 3; ++k)
      CHECK(std::abs(back[i].pose.t[k] - traj[i].pose.t[k]) < 1e-9);
  }
}

TEST_CASE("flow file: 2x2 zero field layout") {
  FlowField field(2, 2);
  std::ostringstream out(std::ios::binary);
  const std::size_t written = write_flow(field, out);
  const std::string bytes = out.str();
  CHECK(written == bytes.size());
  CHECK(bytes.size() == 8 + 12 + 32);  // magic, (version,h,w), payload
  CHECK(bytes.substr(0, 8) == "ATDNFLOW");
  std::istringstream in(bytes, std::ios::binary);
  const FlowField back = read_flow(in);
  CHECK(back.height == 2);
  CHECK(back.width == 2);
  CHECK(back.data == field.data);
}

TEST_CASE("flow file: random field round-trips bit-exactly") {
  Rng rng(3);
  FlowField field(64, 64);
  rng.fill_normal(field.data, 2.5);
  std::ostringstream out(std::ios::binary);
  write_flow(field, out);
  const std::string first = out.str();
  std::istringstream in(first, std::ios::binary);
  const FlowField back = read_flow(in);
  std::ostringstream out2(std::ios::binary);
  write_flow(back, out2);
  CHECK(out2.str() == first);
}

TEST_CASE("flow file: corruption is detected") {
  FlowField field(4, 4);
  std::ostringstream out(std::ios::binary);
  write_flow(field, out);
  const std::string bytes = out.str();

  std::istringstream truncated(bytes.substr(0, bytes.size() - 7), std::ios::binary);
  CHECK_THROWS_WITH_AS(read_flow(truncated), doctest::Contains("truncated"),
                       DataError);

  std::string bad = bytes;
  bad[0] = 'X';
  std::istringstream badmagic(bad, std::ios::binary);
  CHECK_THROWS_WITH_AS(read_flow(badmagic), doctest::Contains("magic"), DataError);
}

TEST_CASE("flow file: declared size beyond the cap is rejected before reading") {
  std::string header = "ATDNFLOW";
  const std::uint32_t version = 1, h = 1 << 20, w = 1 << 20;
  header.append(reinterpret_cast<const char*>(&version), 4);
  header.append(reinterpret_cast<const char*>(&h), 4);
  header.append(reinterpret_cast<const char*>(&w), 4);
  std::istringstream in(header, std::ios::binary);
  CHECK_THROWS_WITH_AS(read_flow(in), doctest::Contains("cap"), DataError);
}

TEST_CASE("pgm reading") {
  SUBCASE("1x1 maxval 255 full white") {
    std::string pgm = "P5\n1 1\n255\n";
    pgm.push_back(static_cast<char>(255));
    std::istringstream in(pgm, std::ios::binary);
    const Frame f = read_frame(in);
    REQUIRE(f.image.size() == 1);
    CHECK(f.image[0] == 1.0f);
  }
  SUBCASE("all-zero image") {
    std::string pgm = "P5\n# comment line\n3 2\n255\n";
    pgm.append(6, '\0');
    std::istringstream in(pgm, std::ios::binary);
    const Frame f = read_frame(in);
    CHECK(f.height == 2);
    CHECK(f.width == 3);
    for (float v : f.image) CHECK(v == 0.0f);
  }
  SUBCASE("ppm luma conversion") {
    std::string ppm = "P6\n1 1\n255\n";
    ppm.push_back(static_cast<char>(255));  // r
    ppm.push_back(static_cast<char>(0));    // g
    ppm.push_back(static_cast<char>(0));    // b
    std::istringstream in(ppm, std::ios::binary);
    const Frame f = read_frame(in);
    CHECK(f.image[0] == doctest::Approx(0.299).epsilon(1e-6));
  }
  SUBCASE("unsupported format") {
    std::istringstream in("P3\n1 1\n255\n255 0 0\n");
    CHECK_THROWS_WITH_AS(read_frame(in), doctest::Contains("unsupported"), DataError);
  }
}

TEST_CASE("raw image round trip is bit exact") {
  Rng rng(8);
  Frame f;
  f.frame_id = 3;
  f.height = 7;
  f.width = 5;
  f.image.resize(35);
  for (auto& v : f.image) v = static_cast<float>(rng.uniform());
  std::ostringstream out(std::ios::binary);
  write_raw_image(f, out);
  std::istringstream in(out.str(), std::ios::binary);
  const Frame back = read_frame(in);
  CHECK(back.height == f.height);
  CHECK(back.width == f.width);
  CHECK(back.image == f.image);
}

TEST_CASE("synth: stationary world renders identical frames with identity poses") {
  SyntheticWorld w = small_world();
  w.path = PathKind::Line;
  w.speed = 0.0;
  auto [frames, traj] = synth_sequence(w, 99);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    CHECK(frames[i].image == frames[0].image);
    CHECK(traj[i].pose.t[0] == 0.0);
    CHECK(rotation_angle(traj[i].pose.R) == 0.0);
  }
}

TEST_CASE("synth: circle positions are exact") {
  SyntheticWorld w = small_world();
  auto [frames, traj] = synth_sequence(w, 1);
  for (int k = 0; k < w.frame_count; ++k) {
    const double phi = 2.0 * M_PI * k / w.frame_count;
    CHECK(traj[k].pose.t[0] == w.radius * std::cos(phi));
    CHECK(traj[k].pose.t[1] == 0.0);
    CHECK(traj[k].pose.t[2] == w.radius * std::sin(phi));
  }
}

TEST_CASE("synth: same seed is byte identical, different seed differs") {
  const SyntheticWorld w = small_world();
  auto [f1, t1] = synth_sequence(w, 42);
  auto [f2, t2] = synth_sequence(w, 42);
  auto [f3, t3] = synth_sequence(w, 43);
  for (std::size_t i = 0; i < f1.size(); ++i) CHECK(f1[i].image == f2[i].image);
  CHECK(f1[0].image != f3[0].image);
}

TEST_CASE("synth: degenerate specs are rejected") {
  SyntheticWorld w = small_world();
  w.plane_depth = -1;
  CHECK_THROWS_AS(synth_sequence(w, 1), DataError);
  w = small_world();
  w.frame_count = 2;
  CHECK_THROWS_AS(synth_sequence(w, 1), DataError);
}

TEST_CASE("flow oracle: identical poses give the zero field") {
  const SyntheticWorld w = small_world();
  const Pose p = synth_pose(w, 3);
  const FlowField field = flow_oracle(w, p, p);
  for (float v : field.data) CHECK(v == 0.0f);
}

TEST_CASE("flow oracle: pure x-translation gives uniform f*dx/Z flow") {
  SyntheticWorld w = small_world();
  w.path = PathKind::Line;
  w.speed = 0.5;
  const Pose a = synth_pose(w, 0);
  const Pose b = synth_pose(w, 1);  // x += 0.5
  const FlowField field = flow_oracle(w, a, b);
  const double expected = -w.focal * 0.5 / w.plane_depth;
  for (int y = 0; y < field.height; ++y)
    for (int x = 0; x < field.width; ++x) {
      CHECK(field.u(y, x) == doctest::Approx(expected).epsilon(1e-6));
      CHECK(field.v(y, x) == doctest::Approx(0.0).epsilon(1e-9));
    }
}

TEST_CASE("flow oracle: exactness against an independent projection oracle") {
  SyntheticWorld w = small_world();
  w.yaw_amplitude = 0.05;
  const Pose a = synth_pose(w, 2);
  const Pose b = synth_pose(w, 3);
  const FlowField field = flow_oracle(w, a, b);
  const double cx = w.principal_x(), cy = w.principal_y();
  for (int py = 0; py < w.image_height; ++py)
    for (int px = 0; px < w.image_width; ++px) {
      // independent oracle: intersect the pixel ray with the plane, project
      // into the second camera with explicit matrix algebra
      const Vec3 dir_c = {(px - cx) / w.focal, (py - cy) / w.focal, 1.0};
      const Vec3 dir_w = mat3_apply(a.R, dir_c);
      const double s = (w.plane_depth - a.t[2]) / dir_w[2];
      const Vec3 world = {a.t[0] + s * dir_w[0], a.t[1] + s * dir_w[1],
                          w.plane_depth};
      const Vec3 cam = mat3_apply(mat3_transpose(b.R),
                                  {world[0] - b.t[0], world[1] - b.t[1],
                                   world[2] - b.t[2]});
      const double qx = w.focal * cam[0] / cam[2] + cx;
      const double qy = w.focal * cam[1] / cam[2] + cy;
      const auto exact = flow_point(w, a, b, px, py);
      CHECK(std::abs(exact[0] - (qx - px)) < 1e-9);
      CHECK(std::abs(exact[1] - (qy - py)) < 1e-9);
      // the stored field is the f32 rounding of the exact value
      CHECK(field.u(py, px) == static_cast<float>(exact[0]));
      CHECK(field.v(py, px) == static_cast<float>(exact[1]));
    }
}

TEST_CASE("flow oracle: forward/backward consistency at the image centre") {
  SyntheticWorld w = small_world();
  const Pose a = synth_pose(w, 1);
  const Pose b = synth_pose(w, 2);
  const double cx = w.principal_x(), cy = w.principal_y();
  const auto fwd = flow_point(w, a, b, cx, cy);
  const auto bwd = flow_point(w, b, a, cx + fwd[0], cy + fwd[1]);
  CHECK(std::abs(bwd[0] + fwd[0]) < 1e-6);
  CHECK(std::abs(bwd[1] + fwd[1]) < 1e-6);
}

TEST_CASE("flow oracle: behind-camera poses are rejected") {
  SyntheticWorld w = small_world();
  const Pose a = synth_pose(w, 0);
  const Pose behind(mat3_identity(), {0, 0, w.plane_depth + 1.0});
  CHECK_THROWS_AS(flow_point(w, behind, a, 8, 8), DataError);
}

TEST_CASE("downsampling preserves constant images and flow scale") {
  Frame f;
  f.height = f.width = 8;
  f.image.assign(64, 0.5f);
  const Frame small = downsample_frame(f, 4, 4);
  for (float v : small.image) CHECK(v == doctest::Approx(0.5));

  FlowField flow(8, 8);
  for (auto& v : flow.data) v = 4.0f;
  const FlowField half = resize_flow(flow, 4, 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) {
      CHECK(half.u(y, x) == doctest::Approx(2.0f));
      CHECK(half.v(y, x) == doctest::Approx(2.0f));
    }
}

}  // TEST_SUITE
