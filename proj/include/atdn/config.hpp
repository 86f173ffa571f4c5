#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "atdn/dataio.hpp"
#include "atdn/mapping.hpp"
#include "atdn/odometry.hpp"
#include "atdn/reloc.hpp"

namespace atdn {

// Flat "key = value" file, '#' comments, keys namespaced by dots.
std::map<std::string, std::string> parse_key_values(std::istream& in);

struct RunConfig {
  std::uint64_t seed = 0;

  // paths; unset entries default into the output directory
  std::string out_dir = "atdn_out";
  std::string sequence_dir, pose_file, flow_dir;
  std::string vo_checkpoint, map_checkpoint, map_file, est_file;

  SyntheticWorld world;
  int train_image_size = 64;  // frames/flows are resampled to this before training

  VoConfig vo_net;
  CurriculumPlan plan = CurriculumPlan::defaults();

  MapConfig map_net;
  MapTrainConfig map_train;
  std::string map_positions = "gt";  // gt | est

  KeyframePolicy keyframes;

  std::vector<double> eval_lengths = default_kitti_lengths_vec();

  DistanceMetric reloc_metric = DistanceMetric::L2;
  CandidatePolicy reloc_policy;
  bool reloc_refine = false;
  std::string reloc_queries = "keyframes";  // all | keyframes | nonkeyframes | id[,id...]

  std::string report_name = "Ours (synthetic)";
  std::string report_environment = "CPU @ desk scale";
  std::string report_metrics_csv;  // defaults to <out>/metrics.csv
  std::string report_timings_csv;  // optional runtime column source

  std::size_t io_max_bytes = kDefaultReadCap;

  static std::vector<double> default_kitti_lengths_vec() {
    return {100, 200, 300, 400, 500, 600, 700, 800};
  }

  // Canonical resolved dump: sorted key=value lines covering every field.
  std::string canonical() const;
  std::string hash() const;  // sha256 hex of canonical()
};

struct ConfigReport {
  RunConfig config;
  std::vector<std::string> errors;    // all collected, not fail-fast
  std::vector<std::string> warnings;  // unknown keys
};

ConfigReport validate_config(std::istream& in,
                             std::optional<std::uint64_t> seed_override = {},
                             std::optional<std::string> out_override = {});
ConfigReport validate_config_file(const std::string& path,
                                  std::optional<std::uint64_t> seed_override = {},
                                  std::optional<std::string> out_override = {});

}  // namespace atdn
