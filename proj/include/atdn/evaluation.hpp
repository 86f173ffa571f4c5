#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "atdn/geometry.hpp"
#include "atdn/reloc.hpp"

namespace atdn {

struct LengthStat {
  double length;                // metres
  double translation_percent;   // mean |t_err|/L * 100
  double rotation_deg_per_m;    // mean angle(R_err)/L in deg/m
  long subsequences;
};

struct MetricResult {
  double translation_percent = 0.0;
  double rotation_deg_per_m = 0.0;
  std::vector<LengthStat> per_length;
  long subsequence_count = 0;
  bool empty = false;  // trajectory shorter than every requested length
};

// KITTI relative-error protocol: for every start frame and every length L,
// take the first frame whose accumulated ground-truth path length reaches L,
// form E = inverse(rel_est) o rel_gt and average |t_E|/L and angle(R_E)/L.
// The estimate is pre-aligned to start at the ground-truth first pose.
MetricResult kitti_errors(const Trajectory& gt, const Trajectory& est,
                          const std::vector<double>& lengths);

inline std::vector<double> default_kitti_lengths() {
  return {100, 200, 300, 400, 500, 600, 700, 800};
}

// frame,gt_x,gt_y,gt_z,est_x,est_y,est_z over common frame ids, full precision.
void emit_axes_csv(const Trajectory& gt, const Trajectory& est, std::ostream& out);

// Standalone SVG with exactly two polylines ("gt", "pred"), uniform scale.
void emit_xz_svg(const Trajectory& gt, const Trajectory& est, std::ostream& out);

// Distance profile of one query: curve CSV (keyframe index, distance) plus an
// equal-width histogram over [0, max] whose counts sum to the profile length.
void emit_distance_profile(const RelocResult& result,
                           const std::vector<std::int64_t>& keyframe_ids,
                           std::ostream& curve_out, std::ostream& hist_out,
                           int bins = 50);

struct ReportRow {
  std::string method;
  std::string translation_percent;  // empty = absent
  std::string rotation_deg_per_m;
  std::string runtime_s;
  std::string environment;
};

// The published comparison rows, transcribed verbatim.
std::vector<ReportRow> bundled_baselines();

ReportRow make_measured_row(const std::string& name, const MetricResult& metrics,
                            std::optional<double> runtime_s,
                            const std::string& environment);

// Text table: baselines first, then measured rows.
void table1_report(const std::vector<ReportRow>& measured, std::ostream& out);

// Human-readable metrics dump; notes the deviation when `lengths` is not the
// official 100..800 m set.
void write_metrics_report(const MetricResult& result,
                          const std::vector<double>& lengths, std::ostream& out);
void write_metrics_csv(const MetricResult& result, std::ostream& out);
MetricResult parse_metrics_csv(std::istream& in);

}  // namespace atdn
