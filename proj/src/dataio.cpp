#include "atdn/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "atdn/errors.hpp"

namespace atdn {

namespace {

constexpr char kFlowMagic[8] = {'A', 'T', 'D', 'N', 'F', 'L', 'O', 'W'};
constexpr char kImageMagic[8] = {'A', 'T', 'D', 'N', 'I', 'M', 'G', '1'};

void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), 4);
}

std::uint32_t read_u32(std::istream& in, const char* what) {
  std::uint32_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), 4))
    throw DataError(std::string("truncated file while reading ") + what);
  return v;
}

std::uint64_t splitmix(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double lattice_value(std::uint64_t seed, std::int64_t i, std::int64_t j) {
  std::uint64_t h = seed;
  h ^= static_cast<std::uint64_t>(i) * 0x9E3779B97F4A7C15ULL;
  h ^= static_cast<std::uint64_t>(j) * 0xC2B2AE3D27D4EB4FULL;
  return static_cast<double>(splitmix(h) >> 11) * 0x1.0p-53;
}

double lattice_noise(std::uint64_t seed, double x, double y) {
  const double fx = std::floor(x), fy = std::floor(y);
  const auto i = static_cast<std::int64_t>(fx);
  const auto j = static_cast<std::int64_t>(fy);
  double tx = x - fx, ty = y - fy;
  tx = tx * tx * (3.0 - 2.0 * tx);
  ty = ty * ty * (3.0 - 2.0 * ty);
  const double v00 = lattice_value(seed, i, j);
  const double v10 = lattice_value(seed, i + 1, j);
  const double v01 = lattice_value(seed, i, j + 1);
  const double v11 = lattice_value(seed, i + 1, j + 1);
  const double a = v00 + (v10 - v00) * tx;
  const double b = v01 + (v11 - v01) * tx;
  return a + (b - a) * ty;
}

}  // namespace

double value_noise(std::uint64_t seed, double x, double y) {
  double acc = 0.0, amp = 1.0, norm = 0.0, freq = 0.08;
  for (int octave = 0; octave < 4; ++octave) {
    acc += amp * lattice_noise(seed + std::uint64_t(octave) * 0x51ED2701, x * freq, y * freq);
    norm += amp;
    amp *= 0.5;
    freq *= 2.0;
  }
  return acc / norm;
}

void SyntheticWorld::validate() const {
  if (plane_depth <= 0.0) throw DataError("synthetic world: plane depth must be > 0");
  if (focal <= 0.0) throw DataError("synthetic world: focal length must be > 0");
  if (frame_count < 3) throw DataError("synthetic world: at least 3 frames required");
  if (image_height <= 0 || image_width <= 0)
    throw DataError("synthetic world: image size must be positive");
  if (path == PathKind::Circle && radius < 0.0)
    throw DataError("synthetic world: negative circle radius");
  if (path == PathKind::Waypoints && waypoints.size() < 2)
    throw DataError("synthetic world: waypoint path needs at least 2 points");
}

// --- pose files --------------------------------------------------------------

Trajectory parse_pose_file(std::istream& in) {
  std::vector<TrajectoryEntry> entries;
  std::string line;
  std::int64_t line_no = 0;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) {
      ++line_no;
      continue;
    }
    std::istringstream ls(line);
    double v[12];
    for (int i = 0; i < 12; ++i) {
      if (!(ls >> v[i]))
        throw DataError("pose file line " + std::to_string(line_no) +
                        ": expected 12 numbers");
    }
    double extra;
    if (ls >> extra)
      throw DataError("pose file line " + std::to_string(line_no) +
                      ": expected 12 numbers, found more");
    Mat3 r = {v[0], v[1], v[2], v[4], v[5], v[6], v[8], v[9], v[10]};
    const Vec3 t = {v[3], v[7], v[11]};
    const double drift = rotation_drift(r);
    if (!(drift <= 1e-6) || std::abs(mat3_det(r) - 1.0) > 1e-6)
      throw DataError("pose file line " + std::to_string(line_no) +
                      ": rotation is not orthonormal");
    if (drift > 1e-12) r = orthonormalize(r);
    entries.push_back({line_no, Pose(r, t)});
    ++line_no;
  }
  if (entries.empty()) throw DataError("pose file contains no poses");
  return Trajectory(std::move(entries));
}

void serialize_trajectory(const Trajectory& traj, std::ostream& out) {
  char buf[32];
  for (const auto& e : traj.entries()) {
    const Pose& p = e.pose;
    const double v[12] = {p.R[0], p.R[1], p.R[2], p.t[0], p.R[3], p.R[4],
                          p.R[5], p.t[1], p.R[6], p.R[7], p.R[8], p.t[2]};
    for (int i = 0; i < 12; ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", v[i]);
      out << buf << (i == 11 ? "" : " ");
    }
    out << "\n";
  }
}

// --- flow files --------------------------------------------------------------

std::size_t write_flow(const FlowField& field, std::ostream& out) {
  if (field.height <= 0 || field.width <= 0)
    throw DataError("flow field has empty dimensions");
  out.write(kFlowMagic, 8);
  write_u32(out, 1);
  write_u32(out, static_cast<std::uint32_t>(field.height));
  write_u32(out, static_cast<std::uint32_t>(field.width));
  const std::size_t payload = field.data.size() * sizeof(float);
  out.write(reinterpret_cast<const char*>(field.data.data()),
            static_cast<std::streamsize>(payload));
  if (!out) throw DataError("failed to write flow file");
  return 20 + payload;
}

FlowField read_flow(std::istream& in, std::size_t max_bytes) {
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kFlowMagic, 8) != 0)
    throw DataError("bad magic: not an ATDNFLOW file");
  const std::uint32_t version = read_u32(in, "flow version");
  if (version != 1) throw DataError("unsupported flow file version");
  const std::uint32_t h = read_u32(in, "flow height");
  const std::uint32_t w = read_u32(in, "flow width");
  if (h == 0 || w == 0) throw DataError("flow file has empty dimensions");
  const std::uint64_t payload = std::uint64_t(h) * w * 2 * sizeof(float);
  if (payload > max_bytes)
    throw DataError("flow file declares " + std::to_string(payload) +
                    " bytes, exceeding the read cap");
  FlowField field(static_cast<int>(h), static_cast<int>(w));
  if (!in.read(reinterpret_cast<char*>(field.data.data()),
               static_cast<std::streamsize>(payload)))
    throw DataError("truncated flow payload");
  for (float f : field.data)
    if (!std::isfinite(f)) throw DataError("flow file contains non-finite values");
  return field;
}

// --- image files -------------------------------------------------------------

std::size_t write_raw_image(const Frame& frame, std::ostream& out) {
  out.write(kImageMagic, 8);
  write_u32(out, 1);
  write_u32(out, static_cast<std::uint32_t>(frame.height));
  write_u32(out, static_cast<std::uint32_t>(frame.width));
  const std::size_t payload = frame.image.size() * sizeof(float);
  out.write(reinterpret_cast<const char*>(frame.image.data()),
            static_cast<std::streamsize>(payload));
  if (!out) throw DataError("failed to write image file");
  return 20 + payload;
}

namespace {

// PNM header token, skipping whitespace and '#' comments.
std::string pnm_token(std::istream& in) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {}
      continue;
    }
    if (!std::isspace(c)) {
      tok.push_back(static_cast<char>(c));
      while ((c = in.peek()) != EOF && !std::isspace(c)) tok.push_back(static_cast<char>(in.get()));
      return tok;
    }
  }
  throw DataError("truncated PNM header");
}

long pnm_int(std::istream& in, const char* what) {
  const std::string tok = pnm_token(in);
  try {
    std::size_t pos = 0;
    const long v = std::stol(tok, &pos);
    if (pos != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw DataError(std::string("bad PNM ") + what + ": '" + tok + "'");
  }
}

Frame read_pnm(std::istream& in, bool color, std::size_t max_bytes) {
  const long w = pnm_int(in, "width");
  const long h = pnm_int(in, "height");
  const long maxval = pnm_int(in, "maxval");
  if (w <= 0 || h <= 0) throw DataError("PNM has non-positive dimensions");
  if (maxval <= 0 || maxval > 65535) throw DataError("PNM maxval out of range");
  in.get();  // single whitespace after maxval
  const int bytes_per_sample = maxval > 255 ? 2 : 1;
  const int samples_per_pixel = color ? 3 : 1;
  const std::uint64_t payload =
      std::uint64_t(w) * h * samples_per_pixel * bytes_per_sample;
  if (payload > max_bytes) throw DataError("PNM payload exceeds the read cap");
  std::vector<unsigned char> raw(payload);
  if (!in.read(reinterpret_cast<char*>(raw.data()),
               static_cast<std::streamsize>(payload)))
    throw DataError("truncated PNM payload");

  Frame frame;
  frame.height = static_cast<int>(h);
  frame.width = static_cast<int>(w);
  frame.image.resize(std::size_t(w) * h);
  const double scale = 1.0 / maxval;
  std::size_t pos = 0;
  auto next_sample = [&]() {
    long v = raw[pos++];
    if (bytes_per_sample == 2) v = (v << 8) | raw[pos++];  // PNM is big-endian
    return v;
  };
  for (std::size_t p = 0; p < frame.image.size(); ++p) {
    double value;
    if (color) {
      const double r = next_sample() * scale;
      const double g = next_sample() * scale;
      const double b = next_sample() * scale;
      value = 0.299 * r + 0.587 * g + 0.114 * b;
    } else {
      value = next_sample() * scale;
    }
    frame.image[p] = static_cast<float>(std::clamp(value, 0.0, 1.0));
  }
  return frame;
}

}  // namespace

Frame read_frame(std::istream& in, std::size_t max_bytes) {
  char magic[2];
  if (!in.read(magic, 2)) throw DataError("empty or unreadable image file");
  if (magic[0] == 'P' && magic[1] == '5') return read_pnm(in, false, max_bytes);
  if (magic[0] == 'P' && magic[1] == '6') return read_pnm(in, true, max_bytes);

  char rest[6];
  if (!in.read(rest, 6) || magic[0] != kImageMagic[0] || magic[1] != kImageMagic[1] ||
      std::memcmp(rest, kImageMagic + 2, 6) != 0)
    throw DataError("unsupported image format (expected ATDNIMG1, P5 or P6)");
  const std::uint32_t version = read_u32(in, "image version");
  if (version != 1) throw DataError("unsupported image file version");
  const std::uint32_t h = read_u32(in, "image height");
  const std::uint32_t w = read_u32(in, "image width");
  if (h == 0 || w == 0) throw DataError("image file has empty dimensions");
  const std::uint64_t payload = std::uint64_t(h) * w * sizeof(float);
  if (payload > max_bytes) throw DataError("image payload exceeds the read cap");
  Frame frame;
  frame.height = static_cast<int>(h);
  frame.width = static_cast<int>(w);
  frame.image.resize(std::size_t(h) * w);
  if (!in.read(reinterpret_cast<char*>(frame.image.data()),
               static_cast<std::streamsize>(payload)))
    throw DataError("truncated image payload");
  for (float f : frame.image)
    if (!std::isfinite(f)) throw DataError("image file contains non-finite values");
  return frame;
}

// --- synthetic world ----------------------------------------------------------

namespace {

Mat3 yaw_matrix(double yaw) {
  const double c = std::cos(yaw), s = std::sin(yaw);
  return {c, 0, s, 0, 1, 0, -s, 0, c};
}

Vec3 path_position(const SyntheticWorld& world, int k) {
  switch (world.path) {
    case PathKind::Line:
      return {world.speed * k, 0.0, 0.0};
    case PathKind::Circle: {
      const double phi = 2.0 * M_PI * k / world.frame_count;
      return {world.radius * std::cos(phi), 0.0, world.radius * std::sin(phi)};
    }
    case PathKind::Waypoints: {
      const auto& wp = world.waypoints;
      std::vector<double> seg_len(wp.size() - 1);
      double total = 0.0;
      for (std::size_t i = 0; i + 1 < wp.size(); ++i) {
        const double dx = wp[i + 1][0] - wp[i][0];
        const double dz = wp[i + 1][1] - wp[i][1];
        seg_len[i] = std::sqrt(dx * dx + dz * dz);
        total += seg_len[i];
      }
      double s = total * k / (world.frame_count - 1);
      std::size_t seg = 0;
      while (seg + 1 < seg_len.size() && s > seg_len[seg]) s -= seg_len[seg++];
      const double f = seg_len[seg] > 0 ? std::min(s / seg_len[seg], 1.0) : 0.0;
      return {wp[seg][0] + f * (wp[seg + 1][0] - wp[seg][0]), 0.0,
              wp[seg][1] + f * (wp[seg + 1][1] - wp[seg][1])};
    }
  }
  return {0, 0, 0};
}

}  // namespace

Pose synth_pose(const SyntheticWorld& world, int k) {
  const double yaw =
      world.yaw_amplitude * std::sin(2.0 * M_PI * k / world.frame_count);
  return Pose(yaw_matrix(yaw), path_position(world, k));
}

std::pair<std::vector<Frame>, Trajectory> synth_sequence(
    const SyntheticWorld& world, std::uint64_t seed) {
  world.validate();
  std::vector<Frame> frames(world.frame_count);
  std::vector<TrajectoryEntry> entries;
  entries.reserve(world.frame_count);

  for (int k = 0; k < world.frame_count; ++k) {
    const Pose pose = synth_pose(world, k);
    entries.push_back({k, pose});
    Frame& f = frames[k];
    f.frame_id = k;
    f.height = world.image_height;
    f.width = world.image_width;
    f.pose = pose;
    f.image.resize(std::size_t(f.height) * f.width);
  }

  // Ray z-components are linear over the pixel grid, so checking the four
  // corners (plus the camera-in-front condition) guarantees every pixel ray
  // hits the plane. Keeps the render loop below exception-free.
  const double cx = world.principal_x(), cy = world.principal_y();
  for (const auto& e : entries) {
    if (e.pose.t[2] >= world.plane_depth)
      throw DataError("synthetic camera is not in front of the plane");
    for (int corner = 0; corner < 4; ++corner) {
      const double px = (corner & 1) ? world.image_width - 1 : 0;
      const double py = (corner & 2) ? world.image_height - 1 : 0;
      const Vec3 dir_c = {(px - cx) / world.focal, (py - cy) / world.focal, 1.0};
      if (mat3_apply(e.pose.R, dir_c)[2] <= 0.0)
        throw DataError("synthetic camera ray misses the plane");
    }
  }

#pragma omp parallel for schedule(static)
  for (int k = 0; k < world.frame_count; ++k) {
    Frame& f = frames[k];
    const Pose& pose = *f.pose;
    for (int py = 0; py < f.height; ++py) {
      for (int px = 0; px < f.width; ++px) {
        const Vec3 dir_c = {(px - cx) / world.focal, (py - cy) / world.focal, 1.0};
        const Vec3 dir_w = mat3_apply(pose.R, dir_c);
        const double s = (world.plane_depth - pose.t[2]) / dir_w[2];
        const double wx = pose.t[0] + s * dir_w[0];
        const double wy = pose.t[1] + s * dir_w[1];
        f.image[std::size_t(py) * f.width + px] =
            static_cast<float>(value_noise(seed, wx, wy));
      }
    }
  }
  return {std::move(frames), Trajectory(std::move(entries))};
}

std::array<double, 2> flow_point(const SyntheticWorld& world, const Pose& pose_i,
                                 const Pose& pose_j, double px, double py) {
  const double cx = world.principal_x(), cy = world.principal_y();
  const Vec3 dir_c = {(px - cx) / world.focal, (py - cy) / world.focal, 1.0};
  const Vec3 dir_w = mat3_apply(pose_i.R, dir_c);
  if (dir_w[2] <= 0.0) throw DataError("flow oracle: ray misses the plane");
  const double s = (world.plane_depth - pose_i.t[2]) / dir_w[2];
  if (s <= 0.0) throw DataError("flow oracle: plane behind the source camera");
  const Vec3 point = {pose_i.t[0] + s * dir_w[0], pose_i.t[1] + s * dir_w[1],
                      world.plane_depth};
  const Vec3 delta = {point[0] - pose_j.t[0], point[1] - pose_j.t[1],
                      point[2] - pose_j.t[2]};
  const Vec3 cam = mat3_apply(mat3_transpose(pose_j.R), delta);
  if (cam[2] <= 0.0) throw DataError("flow oracle: point behind the target camera");
  const double qx = world.focal * cam[0] / cam[2] + cx;
  const double qy = world.focal * cam[1] / cam[2] + cy;
  return {qx - px, qy - py};
}

FlowField flow_oracle(const SyntheticWorld& world, const Pose& pose_i,
                      const Pose& pose_j) {
  FlowField field(world.image_height, world.image_width);
  for (int py = 0; py < field.height; ++py)
    for (int px = 0; px < field.width; ++px) {
      const auto d = flow_point(world, pose_i, pose_j, px, py);
      field.u(py, px) = static_cast<float>(d[0]);
      field.v(py, px) = static_cast<float>(d[1]);
    }
  return field;
}

// --- resampling ---------------------------------------------------------------

namespace {

// Box average of src over the integer partition cell (ti, tj).
template <typename Get>
double box_average(int src_h, int src_w, int th, int tw, int ti, int tj, Get get) {
  const int y0 = static_cast<int>(std::int64_t(ti) * src_h / th);
  const int y1 = std::max(y0 + 1, static_cast<int>(std::int64_t(ti + 1) * src_h / th));
  const int x0 = static_cast<int>(std::int64_t(tj) * src_w / tw);
  const int x1 = std::max(x0 + 1, static_cast<int>(std::int64_t(tj + 1) * src_w / tw));
  double acc = 0.0;
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) acc += get(y, x);
  return acc / ((y1 - y0) * (x1 - x0));
}

}  // namespace

Frame downsample_frame(const Frame& src, int target_h, int target_w) {
  if (target_h <= 0 || target_w <= 0) throw DataError("bad downsample target size");
  if (src.height == target_h && src.width == target_w) return src;
  if (src.height < target_h || src.width < target_w)
    throw DataError("downsample target larger than source");
  Frame out;
  out.frame_id = src.frame_id;
  out.pose = src.pose;
  out.height = target_h;
  out.width = target_w;
  out.image.resize(std::size_t(target_h) * target_w);
  for (int i = 0; i < target_h; ++i)
    for (int j = 0; j < target_w; ++j)
      out.image[std::size_t(i) * target_w + j] = static_cast<float>(
          box_average(src.height, src.width, target_h, target_w, i, j,
                      [&](int y, int x) { return src.image[std::size_t(y) * src.width + x]; }));
  return out;
}

FlowField resize_flow(const FlowField& src, int target_h, int target_w) {
  if (target_h <= 0 || target_w <= 0) throw DataError("bad flow resize target");
  if (src.height == target_h && src.width == target_w) return src;
  FlowField out(target_h, target_w);
  const double su = double(target_w) / src.width;
  const double sv = double(target_h) / src.height;
  for (int i = 0; i < target_h; ++i)
    for (int j = 0; j < target_w; ++j) {
      const double u = box_average(src.height, src.width, target_h, target_w, i, j,
                                   [&](int y, int x) { return src.u(y, x); });
      const double v = box_average(src.height, src.width, target_h, target_w, i, j,
                                   [&](int y, int x) { return src.v(y, x); });
      out.u(i, j) = static_cast<float>(u * su);
      out.v(i, j) = static_cast<float>(v * sv);
    }
  return out;
}

}  // namespace atdn
