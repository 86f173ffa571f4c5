#include "atdn/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "atdn/digest.hpp"
#include "atdn/errors.hpp"

namespace atdn {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Pulls typed values out of the key-value map, collecting every problem
// instead of failing fast.
class Reader {
 public:
  Reader(const std::map<std::string, std::string>& kv,
         std::vector<std::string>& errors)
      : kv_(kv), errors_(errors) {}

  bool has(const std::string& key) {
    consumed_.insert(key);
    return kv_.count(key) != 0;
  }

  std::string str(const std::string& key, const std::string& fallback) {
    consumed_.insert(key);
    const auto it = kv_.find(key);
    return it == kv_.end() ? fallback : it->second;
  }

  double num(const std::string& key, double fallback) {
    consumed_.insert(key);
    const auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    try {
      std::size_t pos = 0;
      const double v = std::stod(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument(it->second);
      return v;
    } catch (const std::exception&) {
      errors_.push_back(key + ": not a number: '" + it->second + "'");
      return fallback;
    }
  }

  long integer(const std::string& key, long fallback) {
    const double v = num(key, double(fallback));
    if (v != static_cast<double>(static_cast<long>(v))) {
      errors_.push_back(key + ": expected an integer");
      return fallback;
    }
    return static_cast<long>(v);
  }

  bool boolean(const std::string& key, bool fallback) {
    consumed_.insert(key);
    const auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    const std::string v = it->second;
    if (v == "true" || v == "on" || v == "1") return true;
    if (v == "false" || v == "off" || v == "0") return false;
    errors_.push_back(key + ": expected a boolean (true/false/on/off/1/0)");
    return fallback;
  }

  std::vector<double> num_list(const std::string& key,
                               const std::vector<double>& fallback) {
    consumed_.insert(key);
    const auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    std::vector<double> out;
    std::istringstream ss(it->second);
    std::string item;
    while (std::getline(ss, item, ',')) {
      try {
        out.push_back(std::stod(trim(item)));
      } catch (const std::exception&) {
        errors_.push_back(key + ": bad list element '" + item + "'");
        return fallback;
      }
    }
    if (out.empty()) {
      errors_.push_back(key + ": empty list");
      return fallback;
    }
    return out;
  }

  void error(const std::string& msg) { errors_.push_back(msg); }

  std::vector<std::string> unknown_keys() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : kv_)
      if (!consumed_.count(k)) out.push_back(k);
    return out;
  }

 private:
  const std::map<std::string, std::string>& kv_;
  std::vector<std::string>& errors_;
  std::set<std::string> consumed_;
};

}  // namespace

std::map<std::string, std::string> parse_key_values(std::istream& in) {
  std::map<std::string, std::string> kv;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw DataError("config line " + std::to_string(line_no) +
                      ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty())
      throw DataError("config line " + std::to_string(line_no) + ": empty key");
    kv[key] = trim(line.substr(eq + 1));
  }
  return kv;
}

ConfigReport validate_config(std::istream& in,
                             std::optional<std::uint64_t> seed_override,
                             std::optional<std::string> out_override) {
  ConfigReport report;
  std::map<std::string, std::string> kv;
  try {
    kv = parse_key_values(in);
  } catch (const DataError& e) {
    report.errors.push_back(e.what());
    return report;
  }
  Reader r(kv, report.errors);
  RunConfig& cfg = report.config;

  // seed is mandatory
  if (seed_override) {
    r.has("seed");  // consume without complaint; the flag wins
    cfg.seed = *seed_override;
  } else if (r.has("seed")) {
    const long s = r.integer("seed", 0);
    if (s < 0)
      r.error("seed: must be non-negative");
    else
      cfg.seed = static_cast<std::uint64_t>(s);
  } else {
    r.error("seed: required key is missing (set it in the config or pass --seed)");
  }

  cfg.out_dir = out_override ? *out_override : r.str("paths.out_dir", cfg.out_dir);
  if (out_override) r.has("paths.out_dir");

  // synthetic world
  cfg.world.frame_count = static_cast<int>(r.integer("synth.frames", 500));
  const long img = r.integer("synth.image_size", 64);
  cfg.world.image_height = cfg.world.image_width = static_cast<int>(img);
  cfg.world.focal = r.num("synth.focal", 64.0);
  cfg.world.plane_depth = r.num("synth.plane_depth", 60.0);
  cfg.world.radius = r.num("synth.radius", 15.0);
  cfg.world.speed = r.num("synth.speed", 0.2);
  cfg.world.yaw_amplitude = r.num("synth.yaw_amplitude", 0.1);
  const std::string path_kind = r.str("synth.path", "circle");
  if (path_kind == "circle")
    cfg.world.path = PathKind::Circle;
  else if (path_kind == "line")
    cfg.world.path = PathKind::Line;
  else if (path_kind == "waypoints")
    cfg.world.path = PathKind::Waypoints;
  else
    r.error("synth.path: expected circle, line or waypoints");
  if (r.has("synth.waypoints")) {
    std::istringstream ss(r.str("synth.waypoints", ""));
    std::string pair;
    cfg.world.waypoints.clear();
    while (std::getline(ss, pair, ';')) {
      const auto colon = pair.find(':');
      try {
        if (colon == std::string::npos) throw std::invalid_argument(pair);
        cfg.world.waypoints.push_back({std::stod(trim(pair.substr(0, colon))),
                                       std::stod(trim(pair.substr(colon + 1)))});
      } catch (const std::exception&) {
        r.error("synth.waypoints: expected 'x:z;x:z;...' pairs");
        break;
      }
    }
  }
  if (cfg.world.frame_count < 3) r.error("synth.frames: at least 3 frames required");
  if (cfg.world.plane_depth <= 0) r.error("synth.plane_depth: must be > 0");
  if (cfg.world.focal <= 0) r.error("synth.focal: must be > 0");
  if (img <= 0) r.error("synth.image_size: must be > 0");

  cfg.train_image_size = static_cast<int>(r.integer("train.image_size", 64));
  if (cfg.train_image_size <= 0) r.error("train.image_size: must be > 0");

  // VO network and curriculum
  cfg.vo_net.in_h = cfg.vo_net.in_w = cfg.train_image_size;
  {
    const auto chans = r.num_list("vo.channels", {8, 16, 32});
    cfg.vo_net.channels.assign(chans.begin(), chans.end());
    for (double c : chans)
      if (c < 1) r.error("vo.channels: channel counts must be >= 1");
  }
  cfg.vo_net.hidden = r.integer("vo.hidden", 128);
  if (cfg.vo_net.hidden < 1) r.error("vo.hidden: must be >= 1");
  cfg.plan.lr_max = r.num("vo.lr_max", 1e-3);
  cfg.plan.lr_min = r.num("vo.lr_min", 1e-6);
  cfg.plan.kappa = r.num("vo.kappa", 100.0);
  cfg.plan.window_stride = static_cast<int>(r.integer("vo.window_stride", 1));
  cfg.plan.fault_limit = r.integer("vo.fault_limit", 100);
  if (r.has("vo.stages")) {
    cfg.plan.stages.clear();
    std::istringstream ss(r.str("vo.stages", ""));
    std::string stage;
    while (std::getline(ss, stage, ',')) {
      std::istringstream fs(stage);
      std::string a, e, w;
      try {
        if (!std::getline(fs, a, ':') || !std::getline(fs, e, ':') ||
            !std::getline(fs, w))
          throw std::invalid_argument(stage);
        cfg.plan.stages.push_back(
            {std::stod(trim(a)), std::stoi(trim(e)), std::stoi(trim(w))});
      } catch (const std::exception&) {
        r.error("vo.stages: expected 'alpha:epochs:window,...'");
        cfg.plan = CurriculumPlan::defaults();
        break;
      }
    }
  }
  try {
    cfg.plan.validate();
  } catch (const ConfigError& e) {
    r.error(std::string("vo.stages: ") + e.what());
  }

  // mapping network and training
  cfg.map_net.in_h = cfg.map_net.in_w = cfg.train_image_size;
  {
    const auto chans = r.num_list("map.channels", {8, 16, 32});
    cfg.map_net.channels.assign(chans.begin(), chans.end());
    for (double c : chans)
      if (c < 1) r.error("map.channels: channel counts must be >= 1");
  }
  cfg.map_net.embed_dim = r.integer("map.embed_dim", 128);
  if (cfg.map_net.embed_dim < 1) r.error("map.embed_dim: must be >= 1");
  cfg.map_net.variational = r.boolean("map.variational", false);
  cfg.map_net.unet = r.boolean("map.unet", false);
  cfg.map_train.epochs = static_cast<int>(r.integer("map.epochs", 10));
  cfg.map_train.batch = static_cast<int>(r.integer("map.batch", 8));
  if (cfg.map_train.batch < 1) r.error("map.batch: must be >= 1");
  cfg.map_train.lr_max = r.num("map.lr_max", 1e-3);
  cfg.map_train.lr_min = r.num("map.lr_min", 1e-5);
  cfg.map_train.beta_kl = r.num("map.beta_kl", 1e-3);
  cfg.map_train.lambda_edl = r.num("map.lambda_edl", 1.0);
  cfg.map_train.edl_only = r.boolean("map.edl_only", false);
  cfg.map_train.triple_stride = static_cast<int>(r.integer("map.triple_stride", 1));
  cfg.map_train.fault_limit = r.integer("map.fault_limit", 100);
  try {
    cfg.map_train.validate();
  } catch (const ConfigError& e) {
    r.error(std::string("map: ") + e.what());
  }
  cfg.map_positions = r.str("map.positions", "gt");
  if (cfg.map_positions != "gt" && cfg.map_positions != "est")
    r.error("map.positions: expected gt or est");

  // keyframes
  const std::string kf = r.str("keyframes.policy", "stride");
  if (kf == "stride")
    cfg.keyframes.kind = KeyframePolicy::Kind::Stride;
  else if (kf == "motion")
    cfg.keyframes.kind = KeyframePolicy::Kind::Motion;
  else
    r.error("keyframes.policy: expected stride or motion");
  cfg.keyframes.stride = r.integer("keyframes.stride", 10);
  cfg.keyframes.dist = r.num("keyframes.dist", 1.0);
  cfg.keyframes.angle = r.num("keyframes.angle", 0.2);
  if (cfg.keyframes.stride <= 0) r.error("keyframes.stride: must be > 0");
  if (cfg.keyframes.kind == KeyframePolicy::Kind::Motion &&
      (cfg.keyframes.dist <= 0 || cfg.keyframes.angle <= 0))
    r.error("keyframes.dist/keyframes.angle: must be > 0");

  // evaluation
  cfg.eval_lengths = r.num_list("eval.lengths", cfg.eval_lengths);
  for (double l : cfg.eval_lengths)
    if (l <= 0) r.error("eval.lengths: lengths must be > 0");

  // relocalization
  const std::string metric = r.str("reloc.metric", "l2");
  if (metric == "l2")
    cfg.reloc_metric = DistanceMetric::L2;
  else if (metric == "l1")
    cfg.reloc_metric = DistanceMetric::L1;
  else
    r.error("reloc.metric: expected l2 or l1");
  const std::string policy = r.str("reloc.policy", "zscore");
  if (policy == "zscore")
    cfg.reloc_policy.kind = CandidatePolicy::Kind::ZScore;
  else if (policy == "bottom")
    cfg.reloc_policy.kind = CandidatePolicy::Kind::Bottom;
  else
    r.error("reloc.policy: expected zscore or bottom");
  cfg.reloc_policy.zscore_k = r.num("reloc.zscore_k", 2.0);
  cfg.reloc_policy.bottom_q = r.num("reloc.bottom_q", 0.25);
  if (cfg.reloc_policy.zscore_k < 0) r.error("reloc.zscore_k: must be >= 0");
  if (cfg.reloc_policy.bottom_q <= 0 || cfg.reloc_policy.bottom_q > 1)
    r.error("reloc.bottom_q: must lie in (0, 1]");
  cfg.reloc_refine = r.boolean("reloc.refine", false);
  cfg.reloc_queries = r.str("reloc.queries", "keyframes");

  // report
  cfg.report_name = r.str("report.name", cfg.report_name);
  cfg.report_environment = r.str("report.environment", cfg.report_environment);
  cfg.report_metrics_csv = r.str("report.metrics_csv", "");
  cfg.report_timings_csv = r.str("report.timings_csv", "");

  const long cap = r.integer("io.max_bytes", static_cast<long>(cfg.io_max_bytes));
  if (cap <= 0)
    r.error("io.max_bytes: must be > 0");
  else
    cfg.io_max_bytes = static_cast<std::size_t>(cap);

  // paths resolve into the output directory unless set explicitly
  auto path_or = [&](const char* key, const std::string& fallback) {
    return r.str(key, cfg.out_dir + "/" + fallback);
  };
  cfg.sequence_dir = path_or("paths.sequence_dir", "frames");
  cfg.pose_file = path_or("paths.pose_file", "poses.txt");
  cfg.flow_dir = path_or("paths.flow_dir", "flow");
  cfg.vo_checkpoint = path_or("paths.vo_checkpoint", "vo.ckpt");
  cfg.map_checkpoint = path_or("paths.map_checkpoint", "map.ckpt");
  cfg.map_file = path_or("paths.map_file", "map.bin");
  cfg.est_file = path_or("paths.est_file", "est_poses.txt");
  if (cfg.report_metrics_csv.empty())
    cfg.report_metrics_csv = cfg.out_dir + "/metrics.csv";

  for (const auto& k : r.unknown_keys())
    report.warnings.push_back("unknown key '" + k + "' (ignored)");
  return report;
}

ConfigReport validate_config_file(const std::string& path,
                                  std::optional<std::uint64_t> seed_override,
                                  std::optional<std::string> out_override) {
  std::ifstream in(path);
  if (!in) {
    ConfigReport report;
    report.errors.push_back("cannot read config file: " + path);
    return report;
  }
  return validate_config(in, seed_override, out_override);
}

std::string RunConfig::canonical() const {
  std::vector<std::string> lines;
  auto put = [&](const std::string& k, const std::string& v) {
    lines.push_back(k + "=" + v);
  };
  put("seed", std::to_string(seed));
  put("paths.out_dir", out_dir);
  put("paths.sequence_dir", sequence_dir);
  put("paths.pose_file", pose_file);
  put("paths.flow_dir", flow_dir);
  put("paths.vo_checkpoint", vo_checkpoint);
  put("paths.map_checkpoint", map_checkpoint);
  put("paths.map_file", map_file);
  put("paths.est_file", est_file);
  put("synth.frames", std::to_string(world.frame_count));
  put("synth.image_size", std::to_string(world.image_width));
  put("synth.focal", fmt(world.focal));
  put("synth.plane_depth", fmt(world.plane_depth));
  put("synth.path", world.path == PathKind::Circle
                        ? "circle"
                        : (world.path == PathKind::Line ? "line" : "waypoints"));
  put("synth.radius", fmt(world.radius));
  put("synth.speed", fmt(world.speed));
  put("synth.yaw_amplitude", fmt(world.yaw_amplitude));
  {
    std::string wp;
    for (const auto& p : world.waypoints) {
      if (!wp.empty()) wp += ';';
      wp += fmt(p[0]) + ":" + fmt(p[1]);
    }
    put("synth.waypoints", wp);
  }
  put("train.image_size", std::to_string(train_image_size));
  {
    std::string chans;
    for (long c : vo_net.channels) chans += (chans.empty() ? "" : ",") + std::to_string(c);
    put("vo.channels", chans);
  }
  put("vo.hidden", std::to_string(vo_net.hidden));
  {
    std::string stages;
    for (const auto& s : plan.stages) {
      if (!stages.empty()) stages += ',';
      stages += fmt(s.alpha) + ":" + std::to_string(s.epochs) + ":" +
                std::to_string(s.window);
    }
    put("vo.stages", stages);
  }
  put("vo.lr_max", fmt(plan.lr_max));
  put("vo.lr_min", fmt(plan.lr_min));
  put("vo.kappa", fmt(plan.kappa));
  put("vo.window_stride", std::to_string(plan.window_stride));
  put("vo.fault_limit", std::to_string(plan.fault_limit));
  {
    std::string chans;
    for (long c : map_net.channels) chans += (chans.empty() ? "" : ",") + std::to_string(c);
    put("map.channels", chans);
  }
  put("map.embed_dim", std::to_string(map_net.embed_dim));
  put("map.variational", map_net.variational ? "true" : "false");
  put("map.unet", map_net.unet ? "true" : "false");
  put("map.epochs", std::to_string(map_train.epochs));
  put("map.batch", std::to_string(map_train.batch));
  put("map.lr_max", fmt(map_train.lr_max));
  put("map.lr_min", fmt(map_train.lr_min));
  put("map.beta_kl", fmt(map_train.beta_kl));
  put("map.lambda_edl", fmt(map_train.lambda_edl));
  put("map.edl_only", map_train.edl_only ? "true" : "false");
  put("map.triple_stride", std::to_string(map_train.triple_stride));
  put("map.fault_limit", std::to_string(map_train.fault_limit));
  put("map.positions", map_positions);
  put("keyframes.policy",
      keyframes.kind == KeyframePolicy::Kind::Stride ? "stride" : "motion");
  put("keyframes.stride", std::to_string(keyframes.stride));
  put("keyframes.dist", fmt(keyframes.dist));
  put("keyframes.angle", fmt(keyframes.angle));
  {
    std::string ls;
    for (double l : eval_lengths) ls += (ls.empty() ? "" : ",") + fmt(l);
    put("eval.lengths", ls);
  }
  put("reloc.metric", reloc_metric == DistanceMetric::L2 ? "l2" : "l1");
  put("reloc.policy",
      reloc_policy.kind == CandidatePolicy::Kind::ZScore ? "zscore" : "bottom");
  put("reloc.zscore_k", fmt(reloc_policy.zscore_k));
  put("reloc.bottom_q", fmt(reloc_policy.bottom_q));
  put("reloc.refine", reloc_refine ? "true" : "false");
  put("reloc.queries", reloc_queries);
  put("report.name", report_name);
  put("report.environment", report_environment);
  put("report.metrics_csv", report_metrics_csv);
  put("report.timings_csv", report_timings_csv);
  put("io.max_bytes", std::to_string(io_max_bytes));

  std::sort(lines.begin(), lines.end());
  std::string out;
  for (const auto& l : lines) {
    out += l;
    out += '\n';
  }
  return out;
}

std::string RunConfig::hash() const { return sha256_hex(canonical()); }

}  // namespace atdn
