#include "atdn/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

#include "atdn/errors.hpp"

namespace atdn {

namespace {

std::string fmt(double v, const char* spec = "%.17g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

// Pose-on-pose composition for the left-alignment step.
Pose compose_poses(const Pose& a, const Pose& b) {
  Mat3 r = mat3_mul(a.R, b.R);
  if (rotation_drift(r) > 1e-12) r = orthonormalize(r);
  const Vec3 rt = mat3_apply(a.R, b.t);
  return Pose(r, {rt[0] + a.t[0], rt[1] + a.t[1], rt[2] + a.t[2]});
}

double norm3(const Vec3& v) {
  return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
}

// Common frame ids, in order.
void align_on_frame_ids(const Trajectory& gt, const Trajectory& est,
                        std::vector<Pose>& gt_out, std::vector<Pose>& est_out,
                        std::vector<std::int64_t>* ids = nullptr) {
  std::size_t i = 0, j = 0;
  while (i < gt.size() && j < est.size()) {
    if (gt[i].frame_id == est[j].frame_id) {
      gt_out.push_back(gt[i].pose);
      est_out.push_back(est[j].pose);
      if (ids) ids->push_back(gt[i].frame_id);
      ++i;
      ++j;
    } else if (gt[i].frame_id < est[j].frame_id) {
      ++i;
    } else {
      ++j;
    }
  }
  if (gt_out.empty()) throw DataError("trajectories share no frame ids");
}

}  // namespace

MetricResult kitti_errors(const Trajectory& gt, const Trajectory& est,
                          const std::vector<double>& lengths) {
  if (lengths.empty()) throw ConfigError("kitti_errors: no segment lengths given");
  std::vector<Pose> g, e;
  align_on_frame_ids(gt, est, g, e);

  // left-multiply so the estimate starts at the ground-truth first pose
  const Pose align = compose_poses(g[0], inverse(e[0]));
  for (auto& p : e) p = compose_poses(align, p);

  std::vector<double> cumdist(g.size(), 0.0);
  for (std::size_t i = 1; i < g.size(); ++i) {
    const Vec3 d = {g[i].t[0] - g[i - 1].t[0], g[i].t[1] - g[i - 1].t[1],
                    g[i].t[2] - g[i - 1].t[2]};
    cumdist[i] = cumdist[i - 1] + norm3(d);
  }

  MetricResult result;
  double t_sum = 0.0, r_sum = 0.0;
  for (double length : lengths) {
    double t_len = 0.0, r_len = 0.0;
    long count = 0;
    for (std::size_t start = 0; start < g.size(); ++start) {
      // first frame at or beyond `length` metres of ground-truth path; the
      // predicate form matches the brute-force oracle bit for bit
      const auto it =
          std::partition_point(cumdist.begin() + start, cumdist.end(),
                               [&](double d) { return d - cumdist[start] < length; });
      if (it == cumdist.end()) break;  // no later start can reach it either
      const std::size_t end = it - cumdist.begin();
      const RelativePose rel_gt = relative(g[start], g[end]);
      const RelativePose rel_est = relative(e[start], e[end]);
      // E = inverse(rel_est) o rel_gt
      const Mat3 rt = mat3_transpose(rel_est.R);
      const Mat3 r_err = mat3_mul(rt, rel_gt.R);
      const Vec3 dt = {rel_gt.t[0] - rel_est.t[0], rel_gt.t[1] - rel_est.t[1],
                       rel_gt.t[2] - rel_est.t[2]};
      const Vec3 t_err = mat3_apply(rt, dt);
      t_len += norm3(t_err) / length;
      r_len += rotation_angle(r_err) / length;
      ++count;
    }
    if (count == 0) continue;
    result.per_length.push_back({length, 100.0 * t_len / count,
                                 (180.0 / M_PI) * r_len / count, count});
    t_sum += t_len;
    r_sum += r_len;
    result.subsequence_count += count;
  }
  if (result.subsequence_count == 0) {
    result.empty = true;
    return result;
  }
  result.translation_percent = 100.0 * t_sum / result.subsequence_count;
  result.rotation_deg_per_m = (180.0 / M_PI) * r_sum / result.subsequence_count;
  return result;
}

void emit_axes_csv(const Trajectory& gt, const Trajectory& est, std::ostream& out) {
  std::vector<Pose> g, e;
  std::vector<std::int64_t> ids;
  align_on_frame_ids(gt, est, g, e, &ids);
  out << "frame,gt_x,gt_y,gt_z,est_x,est_y,est_z\n";
  for (std::size_t i = 0; i < ids.size(); ++i) {
    out << ids[i];
    for (int a = 0; a < 3; ++a) out << ',' << fmt(g[i].t[a]);
    for (int a = 0; a < 3; ++a) out << ',' << fmt(e[i].t[a]);
    out << '\n';
  }
}

void emit_xz_svg(const Trajectory& gt, const Trajectory& est, std::ostream& out) {
  double min_x = 1e300, max_x = -1e300, min_z = 1e300, max_z = -1e300;
  auto scan = [&](const Trajectory& t) {
    for (const auto& entry : t.entries()) {
      min_x = std::min(min_x, entry.pose.t[0]);
      max_x = std::max(max_x, entry.pose.t[0]);
      min_z = std::min(min_z, entry.pose.t[2]);
      max_z = std::max(max_z, entry.pose.t[2]);
    }
  };
  scan(gt);
  scan(est);

  constexpr double view = 800.0, margin = 40.0;
  const double span = std::max({max_x - min_x, max_z - min_z, 1e-9});
  const double scale = (view - 2.0 * margin) / span;  // uniform on both axes
  auto px = [&](double x) { return margin + (x - min_x) * scale; };
  auto pz = [&](double z) { return view - margin - (z - min_z) * scale; };

  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"800\" height=\"800\" "
         "viewBox=\"0 0 800 800\">\n";
  out << "  <rect width=\"800\" height=\"800\" fill=\"white\"/>\n";
  const struct {
    const Trajectory& traj;
    const char* color;
    const char* label;
  } series[2] = {{gt, "#1f77b4", "gt"}, {est, "#d62728", "pred"}};
  for (const auto& s : series) {
    out << "  <polyline fill=\"none\" stroke=\"" << s.color
        << "\" stroke-width=\"2\" points=\"";
    bool first = true;
    for (const auto& entry : s.traj.entries()) {
      if (!first) out << ' ';
      first = false;
      out << fmt(px(entry.pose.t[0]), "%.3f") << ','
          << fmt(pz(entry.pose.t[2]), "%.3f");
    }
    out << "\"/>\n";
  }
  out << "  <text x=\"60\" y=\"30\" fill=\"#1f77b4\" font-size=\"16\">gt</text>\n";
  out << "  <text x=\"100\" y=\"30\" fill=\"#d62728\" font-size=\"16\">pred</text>\n";
  out << "</svg>\n";
}

void emit_distance_profile(const RelocResult& result,
                           const std::vector<std::int64_t>& keyframe_ids,
                           std::ostream& curve_out, std::ostream& hist_out,
                           int bins) {
  if (result.profile.empty()) throw DataError("distance profile is empty");
  if (keyframe_ids.size() != result.profile.size())
    throw DataError("keyframe id list does not match the profile");
  if (bins <= 0) throw ConfigError("histogram needs a positive bin count");

  curve_out << "keyframe,distance\n";
  for (std::size_t i = 0; i < result.profile.size(); ++i)
    curve_out << keyframe_ids[i] << ',' << fmt(result.profile[i]) << '\n';

  const double max_d = *std::max_element(result.profile.begin(), result.profile.end());
  std::vector<long> counts(bins, 0);
  for (double d : result.profile) {
    int bin = max_d > 0.0 ? static_cast<int>(d / max_d * bins) : 0;
    counts[std::min(bin, bins - 1)] += 1;
  }
  hist_out << "bin_low,bin_high,count\n";
  const double width = max_d > 0.0 ? max_d / bins : 1.0;
  for (int b = 0; b < bins; ++b)
    hist_out << fmt(b * width) << ',' << fmt((b + 1) * width) << ',' << counts[b]
             << '\n';
}

std::vector<ReportRow> bundled_baselines() {
  return {
      {"ORB-SLAM 2*", "1.15", "0.0027", "0.06", "2 CPU cores @ >3.5 GHz"},
      {"ESVO*", "1.42", "0.0048", "1", "1 CPU core @ 2.5 GHz"},
      {"D3VO", "0.88", "0.0021", "0.1", "1 CPU core @ 2.5 GHz"},
      {"GenPa-SLAM", "3.48", "0.121", "0.1", "GPU @ 2.5 GHz"},
      {"Deep-AVO", "4.1", "0.0125", "0.01", "GPU @ 3.0 GHz"},
      {"CUDA-Ego-Motion", "4.36", "0.0052", "0.001", "GPU @ 2.5 GHz"},
      {"D3DLO", "5.4", "0.0154", "0.1", "GPU @ 2.5 GHz"},
      {"Ours (w/ OF)", "4.4016", "0.0176", "0.27", "GPU @ 2.8 GHz"},
      {"Ours (w/o OF)", "", "", "0.006", "GPU @ 2.8 GHz"},
  };
}

ReportRow make_measured_row(const std::string& name, const MetricResult& metrics,
                            std::optional<double> runtime_s,
                            const std::string& environment) {
  ReportRow row;
  row.method = name;
  if (!metrics.empty) {
    if (metrics.translation_percent < 0 || metrics.rotation_deg_per_m < 0)
      throw DataError("measured errors must be non-negative");
    row.translation_percent = fmt(metrics.translation_percent, "%.4f");
    row.rotation_deg_per_m = fmt(metrics.rotation_deg_per_m, "%.4f");
  }
  if (runtime_s) {
    if (*runtime_s < 0) throw DataError("measured runtime must be non-negative");
    row.runtime_s = fmt(*runtime_s, "%.3f");
  }
  row.environment = environment;
  return row;
}

void table1_report(const std::vector<ReportRow>& measured, std::ostream& out) {
  std::vector<ReportRow> rows = bundled_baselines();
  rows.insert(rows.end(), measured.begin(), measured.end());

  const std::string headers[5] = {"Method", "Translation [%] \xE2\x86\x93",
                                  "Rotation [deg/m] \xE2\x86\x93",
                                  "Runtime [s] \xE2\x86\x93", "Environment"};
  // display width: the arrow is 3 bytes but 1 column
  auto width_of = [](const std::string& s) {
    std::size_t w = 0;
    for (std::size_t i = 0; i < s.size();) {
      i += (static_cast<unsigned char>(s[i]) >= 0xE0) ? 3 : 1;
      ++w;
    }
    return w;
  };
  std::size_t col[5];
  for (int c = 0; c < 5; ++c) col[c] = width_of(headers[c]);
  auto cell = [](const ReportRow& r, int c) -> const std::string& {
    switch (c) {
      case 0: return r.method;
      case 1: return r.translation_percent;
      case 2: return r.rotation_deg_per_m;
      case 3: return r.runtime_s;
      default: return r.environment;
    }
  };
  static const std::string dash = "-";
  auto shown = [&](const ReportRow& r, int c) -> const std::string& {
    const std::string& s = cell(r, c);
    return (c >= 1 && c <= 3 && s.empty()) ? dash : s;
  };
  for (const auto& r : rows)
    for (int c = 0; c < 5; ++c) col[c] = std::max(col[c], width_of(shown(r, c)));

  out << "Monocular RGB odometry on the KITTI benchmark "
         "(lower is better; * marks feature-based methods)\n\n";
  auto pad = [&](const std::string& s, std::size_t w, bool right) {
    const std::size_t len = width_of(s);
    std::string spaces(w > len ? w - len : 0, ' ');
    return right ? spaces + s : s + spaces;
  };
  for (int c = 0; c < 5; ++c)
    out << pad(headers[c], col[c], c >= 1 && c <= 3) << (c == 4 ? "\n" : "  ");
  for (int c = 0; c < 5; ++c)
    out << std::string(col[c], '-') << (c == 4 ? "\n" : "  ");
  for (const auto& r : rows) {
    for (int c = 0; c < 5; ++c)
      out << pad(shown(r, c), col[c], c >= 1 && c <= 3) << (c == 4 ? "\n" : "  ");
  }
}

void write_metrics_report(const MetricResult& result,
                          const std::vector<double>& lengths, std::ostream& out) {
  out << "KITTI relative error metrics\n";
  out << "lengths:";
  for (double l : lengths) out << ' ' << fmt(l, "%g");
  if (lengths != default_kitti_lengths())
    out << "  (non-standard; the official protocol uses 100-800 m in 100 m steps)";
  out << "\n";
  if (result.empty) {
    out << "no subsequence reached the smallest requested length\n";
    return;
  }
  out << "subsequences: " << result.subsequence_count << "\n";
  out << "translation error: " << fmt(result.translation_percent, "%.6f") << " %\n";
  out << "rotation error: " << fmt(result.rotation_deg_per_m, "%.6f") << " deg/m\n";
  out << "per-length breakdown (length, translation %, rotation deg/m, count):\n";
  for (const auto& s : result.per_length)
    out << "  " << fmt(s.length, "%g") << "  " << fmt(s.translation_percent, "%.6f")
        << "  " << fmt(s.rotation_deg_per_m, "%.6f") << "  " << s.subsequences
        << "\n";
}

void write_metrics_csv(const MetricResult& result, std::ostream& out) {
  out << "length,translation_percent,rotation_deg_per_m,subsequences\n";
  if (!result.empty)
    out << "overall," << fmt(result.translation_percent) << ','
        << fmt(result.rotation_deg_per_m) << ',' << result.subsequence_count << '\n';
  for (const auto& s : result.per_length)
    out << fmt(s.length, "%g") << ',' << fmt(s.translation_percent) << ','
        << fmt(s.rotation_deg_per_m) << ',' << s.subsequences << '\n';
}

MetricResult parse_metrics_csv(std::istream& in) {
  MetricResult result;
  result.empty = true;
  std::string line;
  if (!std::getline(in, line)) throw DataError("metrics csv is empty");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string label, t, r, n;
    if (!std::getline(ls, label, ',') || !std::getline(ls, t, ',') ||
        !std::getline(ls, r, ',') || !std::getline(ls, n))
      throw DataError("malformed metrics csv row: " + line);
    if (label == "overall") {
      result.translation_percent = std::stod(t);
      result.rotation_deg_per_m = std::stod(r);
      result.subsequence_count = std::stol(n);
      result.empty = false;
    } else {
      result.per_length.push_back({std::stod(label), std::stod(t), std::stod(r),
                                   std::stol(n)});
    }
  }
  return result;
}

}  // namespace atdn
