#include "atdn/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include "atdn/errors.hpp"
#include "atdn/evaluation.hpp"

namespace atdn {

namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string zero_padded(std::int64_t id) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06lld", static_cast<long long>(id));
  return buf;
}

std::string frame_path(const std::string& dir, std::int64_t id) {
  return dir + "/" + zero_padded(id) + ".img";
}

std::string flow_path(const std::string& dir, std::int64_t id) {
  return dir + "/" + zero_padded(id) + ".flow";
}

void ensure_dir(const std::string& path) {
  std::error_code ec;
  fs::create_directories(path, ec);
  if (ec) throw DataError("cannot create directory: " + path);
}

void require_input(const std::string& path, const std::string& key) {
  if (!fs::exists(path))
    throw ConfigError(key + ": missing input: " + path);
}

Trajectory load_trajectory(const std::string& path, const std::string& key) {
  require_input(path, key);
  std::ifstream in(path);
  if (!in) throw ConfigError(key + ": cannot open " + path);
  return parse_pose_file(in);
}

Frame load_frame(const RunConfig& cfg, std::int64_t id) {
  const std::string path = frame_path(cfg.sequence_dir, id);
  require_input(path, "paths.sequence_dir");
  std::ifstream in(path, std::ios::binary);
  Frame f = read_frame(in, cfg.io_max_bytes);
  f.frame_id = id;
  return downsample_frame(f, cfg.train_image_size, cfg.train_image_size);
}

FlowField load_flow(const RunConfig& cfg, std::int64_t id) {
  const std::string path = flow_path(cfg.flow_dir, id);
  require_input(path, "paths.flow_dir");
  std::ifstream in(path, std::ios::binary);
  FlowField f = read_flow(in, cfg.io_max_bytes);
  return resize_flow(f, cfg.train_image_size, cfg.train_image_size);
}

// The flow oracle evaluated at the training resolution: same geometry,
// intrinsics rescaled.
SyntheticWorld training_world(const RunConfig& cfg) {
  SyntheticWorld w = cfg.world;
  w.focal = cfg.world.focal * double(cfg.train_image_size) / cfg.world.image_width;
  w.image_height = w.image_width = cfg.train_image_size;
  w.cx = w.cy = -1.0;
  return w;
}

void banner(const RunConfig& cfg, const char* cmd, std::ostream& log) {
  log << cmd << ": seed=" << cfg.seed << " config_hash=" << cfg.hash() << "\n";
}

struct TimingRow {
  std::string stage;
  double seconds;
  long frames;
};

void write_timings(const RunConfig& cfg, const std::string& cmd,
                   const std::vector<TimingRow>& rows) {
  std::ofstream out(cfg.out_dir + "/" + cmd + "_timings.csv");
  out << "stage,seconds,frames,seconds_per_frame\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.6f", r.seconds);
    out << r.stage << ',' << buf << ',' << r.frames << ',';
    std::snprintf(buf, sizeof buf, "%.9f",
                  r.frames > 0 ? r.seconds / double(r.frames) : 0.0);
    out << buf << '\n';
  }
}

std::vector<std::int64_t> keyframe_ids_for(const RunConfig& cfg,
                                           const Trajectory& traj) {
  return select_keyframes(traj, cfg.keyframes);
}

VoModel<float> load_vo_model(const RunConfig& cfg) {
  require_input(cfg.vo_checkpoint, "paths.vo_checkpoint");
  Rng rng(0);
  VoConfig net = cfg.vo_net;
  VoModel<float> model = VoModel<float>::init(net, rng);
  auto params = model.params();
  load_checkpoint(cfg.vo_checkpoint, params, cfg.io_max_bytes);
  return model;
}

MapModel<float> load_map_model(const RunConfig& cfg) {
  require_input(cfg.map_checkpoint, "paths.map_checkpoint");
  Rng rng(0);
  MapModel<float> model = MapModel<float>::init(cfg.map_net, rng);
  auto params = model.params();
  load_checkpoint(cfg.map_checkpoint, params, cfg.io_max_bytes);
  return model;
}

}  // namespace

void cmd_synth(const RunConfig& cfg, bool quiet, std::ostream& log) {
  banner(cfg, "synth", log);
  const auto t0 = Clock::now();
  auto [frames, traj] = synth_sequence(cfg.world, cfg.seed);
  ensure_dir(cfg.out_dir + "/frames");
  for (const auto& f : frames) {
    std::ofstream out(frame_path(cfg.out_dir + "/frames", f.frame_id),
                      std::ios::binary);
    if (!out) throw DataError("cannot write frame file");
    write_raw_image(f, out);
  }
  {
    std::ofstream out(cfg.out_dir + "/poses.txt");
    if (!out) throw DataError("cannot write pose file");
    serialize_trajectory(traj, out);
  }
  write_timings(cfg, "synth",
                {{"render", seconds_since(t0), cfg.world.frame_count}});
  if (!quiet)
    log << "synth: wrote " << frames.size() << " frames under " << cfg.out_dir
        << "/frames\n";
}

void cmd_flow_precompute(const RunConfig& cfg, bool quiet, std::ostream& log) {
  banner(cfg, "flow-precompute", log);
  const auto t0 = Clock::now();
  const Trajectory traj = load_trajectory(cfg.pose_file, "paths.pose_file");
  const SyntheticWorld world = training_world(cfg);
  ensure_dir(cfg.out_dir + "/flow");
  for (std::size_t k = 0; k + 1 < traj.size(); ++k) {
    const FlowField field =
        flow_oracle(world, traj[k].pose, traj[k + 1].pose);
    std::ofstream out(flow_path(cfg.out_dir + "/flow", traj[k].frame_id),
                      std::ios::binary);
    if (!out) throw DataError("cannot write flow file");
    write_flow(field, out);
  }
  write_timings(cfg, "flow-precompute",
                {{"oracle_flow", seconds_since(t0),
                  static_cast<long>(traj.size()) - 1}});
  if (!quiet)
    log << "flow-precompute: wrote " << traj.size() - 1 << " flow fields\n";
}

void cmd_train_vo(const RunConfig& cfg, bool quiet, std::ostream& log) {
  banner(cfg, "train-vo", log);
  const Trajectory traj = load_trajectory(cfg.pose_file, "paths.pose_file");
  require_input(cfg.flow_dir, "paths.flow_dir");

  const auto t_load = Clock::now();
  VoSequence seq;
  for (std::size_t k = 0; k + 1 < traj.size(); ++k) {
    VoSample sample{load_flow(cfg, traj[k].frame_id),
                    relative(traj[k].pose, traj[k + 1].pose)};
    seq.push_back(std::move(sample));
  }
  const double load_s = seconds_since(t_load);

  Rng init_rng(cfg.seed);
  VoModel<float> model = VoModel<float>::init(cfg.vo_net, init_rng);
  const auto t_train = Clock::now();
  const VoTrainResult result = train_vo(model, {seq}, cfg.plan, cfg.seed);
  const double train_s = seconds_since(t_train);

  ensure_dir(cfg.out_dir);
  save_checkpoint(cfg.vo_checkpoint, model.params());
  {
    std::ofstream out(cfg.out_dir + "/vo_train_log.csv");
    out << "stage,epoch,mean_loss,lr_start\n";
    char buf[64];
    for (const auto& e : result.log) {
      std::snprintf(buf, sizeof buf, "%.9g", e.mean_loss);
      out << e.stage << ',' << e.epoch << ',' << buf << ',';
      std::snprintf(buf, sizeof buf, "%.9g", e.lr_start);
      out << buf << '\n';
    }
  }
  write_timings(cfg, "train-vo",
                {{"load_flow", load_s, static_cast<long>(seq.size())},
                 {"train", train_s, result.steps}});
  if (!quiet) {
    log << "train-vo: " << result.steps << " steps, " << result.faults
        << " faults";
    if (!result.log.empty())
      log << ", final epoch loss " << result.log.back().mean_loss;
    log << "\n";
  }
}

void cmd_infer_vo(const RunConfig& cfg, bool quiet, std::ostream& log) {
  banner(cfg, "infer-vo", log);
  const Trajectory traj = load_trajectory(cfg.pose_file, "paths.pose_file");
  const VoModel<float> model = load_vo_model(cfg);

  std::vector<PoseDelta> deltas;
  const auto t0 = Clock::now();
  for (std::size_t k = 0; k + 1 < traj.size(); ++k)
    deltas.push_back(predict_delta(model, load_flow(cfg, traj[k].frame_id)));
  const double infer_s = seconds_since(t0);

  const Trajectory est = integrate(deltas, Pose());
  ensure_dir(cfg.out_dir);
  std::ofstream out(cfg.est_file);
  if (!out) throw DataError("cannot write estimated poses: " + cfg.est_file);
  serialize_trajectory(est, out);
  write_timings(cfg, "infer-vo",
                {{"infer_vo", infer_s, static_cast<long>(deltas.size())}});
  if (!quiet)
    log << "infer-vo: integrated " << deltas.size() << " deltas into "
        << cfg.est_file << "\n";
}

namespace {

std::vector<Keyframe> gather_keyframes(const RunConfig& cfg,
                                       const Trajectory& pos_source,
                                       const std::vector<std::int64_t>& ids) {
  std::vector<Keyframe> out;
  std::size_t cursor = 0;
  for (std::int64_t id : ids) {
    while (cursor < pos_source.size() && pos_source[cursor].frame_id < id) ++cursor;
    if (cursor >= pos_source.size() || pos_source[cursor].frame_id != id)
      throw DataError("no pose for keyframe " + std::to_string(id));
    Frame f = load_frame(cfg, id);
    out.push_back({id, std::move(f.image), pos_source[cursor].pose.t});
  }
  return out;
}

}  // namespace

void cmd_train_map(const RunConfig& cfg, bool quiet, std::ostream& log) {
  banner(cfg, "train-map", log);
  const Trajectory traj = load_trajectory(cfg.pose_file, "paths.pose_file");
  const Trajectory positions =
      cfg.map_positions == "est"
          ? load_trajectory(cfg.est_file, "paths.est_file")
          : traj;
  const std::vector<std::int64_t> ids = keyframe_ids_for(cfg, traj);
  const std::vector<Keyframe> keyframes = gather_keyframes(cfg, positions, ids);

  Rng init_rng(cfg.seed);
  MapModel<float> model = MapModel<float>::init(cfg.map_net, init_rng);
  const auto t0 = Clock::now();
  const MapTrainResult result = train_map(model, keyframes, cfg.map_train, cfg.seed);
  const double train_s = seconds_since(t0);

  ensure_dir(cfg.out_dir);
  save_checkpoint(cfg.map_checkpoint, model.params());
  {
    std::ofstream out(cfg.out_dir + "/map_train_log.csv");
    out << "epoch,mean_loss,mean_edl\n";
    char buf[64];
    for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) {
      std::snprintf(buf, sizeof buf, "%.9g", result.epoch_loss[e]);
      out << e << ',' << buf << ',';
      std::snprintf(buf, sizeof buf, "%.9g", result.epoch_edl[e]);
      out << buf << '\n';
    }
  }
  write_timings(cfg, "train-map", {{"train", train_s, result.steps}});
  if (!quiet) {
    log << "train-map: " << keyframes.size() << " keyframes, " << result.steps
        << " steps";
    if (!result.epoch_loss.empty())
      log << ", final epoch loss " << result.epoch_loss.back();
    log << "\n";
  }
}

void cmd_build_map(const RunConfig& cfg, bool quiet, std::ostream& log) {
  banner(cfg, "build-map", log);
  const Trajectory traj = load_trajectory(cfg.pose_file, "paths.pose_file");
  const MapModel<float> model = load_map_model(cfg);
  const std::vector<std::int64_t> ids = keyframe_ids_for(cfg, traj);

  std::vector<Frame> keyframes;
  std::size_t cursor = 0;
  for (std::int64_t id : ids) {
    while (cursor < traj.size() && traj[cursor].frame_id < id) ++cursor;
    Frame f = load_frame(cfg, id);
    f.pose = traj[cursor].pose;
    keyframes.push_back(std::move(f));
  }
  const auto t0 = Clock::now();
  const EmbeddingMap map = build_map(model, keyframes);
  ensure_dir(cfg.out_dir);
  save_map(map, cfg.map_file);
  write_timings(cfg, "build-map",
                {{"embed", seconds_since(t0), static_cast<long>(ids.size())}});
  if (!quiet)
    log << "build-map: " << map.records.size() << " records -> " << cfg.map_file
        << "\n";
}

void cmd_relocalize(const RunConfig& cfg, bool quiet, std::ostream& log) {
  banner(cfg, "relocalize", log);
  const Trajectory traj = load_trajectory(cfg.pose_file, "paths.pose_file");
  require_input(cfg.map_file, "paths.map_file");
  const EmbeddingMap map = load_map(cfg.map_file, cfg.io_max_bytes);
  const MapModel<float> model = load_map_model(cfg);
  if (params_fingerprint(model.params()) != map.fingerprint)
    throw DataError("map fingerprint does not match the mapping checkpoint");

  // resolve query frame ids
  std::vector<std::int64_t> kf_ids = keyframe_ids_for(cfg, traj);
  std::vector<std::int64_t> queries;
  if (cfg.reloc_queries == "keyframes") {
    queries = kf_ids;
  } else if (cfg.reloc_queries == "all" || cfg.reloc_queries == "nonkeyframes") {
    for (const auto& e : traj.entries()) queries.push_back(e.frame_id);
    if (cfg.reloc_queries == "nonkeyframes") {
      std::vector<std::int64_t> rest;
      for (std::int64_t id : queries)
        if (!std::binary_search(kf_ids.begin(), kf_ids.end(), id))
          rest.push_back(id);
      queries = std::move(rest);
    }
  } else {
    std::istringstream ss(cfg.reloc_queries);
    std::string item;
    while (std::getline(ss, item, ',')) {
      try {
        queries.push_back(std::stoll(item));
      } catch (const std::exception&) {
        throw ConfigError("reloc.queries: bad frame id '" + item + "'");
      }
    }
  }
  if (queries.empty()) throw ConfigError("reloc.queries: no query frames resolved");

  const VoModel<float> vo = cfg.reloc_refine ? load_vo_model(cfg) : VoModel<float>{};
  const SyntheticWorld world = training_world(cfg);
  FlowProvider oracle = [&](std::int64_t from, std::int64_t to) {
    const Pose* a = nullptr;
    const Pose* b = nullptr;
    for (const auto& e : traj.entries()) {
      if (e.frame_id == from) a = &e.pose;
      if (e.frame_id == to) b = &e.pose;
    }
    if (!a || !b) throw DataError("flow oracle: unknown frame pair");
    return flow_oracle(world, *a, *b);
  };

  ensure_dir(cfg.out_dir);
  std::ofstream out(cfg.out_dir + "/reloc_results.csv");
  out << "query_frame,best_frame,best_distance,profile_mean,profile_std,"
         "gt_nearest_keyframe,num_candidates,refined_from,refined_tnorm\n";
  char buf[64];
  const auto t0 = Clock::now();
  for (std::int64_t qid : queries) {
    const Frame qf = [&] {
      Frame f = load_frame(cfg, qid);
      for (const auto& e : traj.entries())
        if (e.frame_id == qid) f.pose = e.pose;
      return f;
    }();
    const RelocResult res =
        relocalize(map, model, vo, qf, cfg.reloc_refine ? &oracle : nullptr,
                   cfg.reloc_policy, cfg.reloc_metric);

    double mean = 0.0;
    for (double d : res.profile) mean += d;
    mean /= double(res.profile.size());
    double var = 0.0;
    for (double d : res.profile) var += (d - mean) * (d - mean);
    const double sd = std::sqrt(var / double(res.profile.size()));

    std::int64_t gt_nearest = -1;
    if (qf.pose) {
      double best = 1e300;
      for (const auto& rec : map.records) {
        const Vec3 d = {rec.pose.t[0] - qf.pose->t[0], rec.pose.t[1] - qf.pose->t[1],
                        rec.pose.t[2] - qf.pose->t[2]};
        const double n = std::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
        if (n < best) {
          best = n;
          gt_nearest = rec.frame_id;
        }
      }
    }

    out << qid << ',' << res.best_frame_id << ',';
    std::snprintf(buf, sizeof buf, "%.9g", res.best_distance);
    out << buf << ',';
    std::snprintf(buf, sizeof buf, "%.9g", mean);
    out << buf << ',';
    std::snprintf(buf, sizeof buf, "%.9g", sd);
    out << buf << ',' << gt_nearest << ',' << res.candidates.size() << ',';
    if (res.refined) {
      const auto& t = res.refined->t;
      std::snprintf(buf, sizeof buf, "%.9g",
                    std::sqrt(t[0] * t[0] + t[1] * t[1] + t[2] * t[2]));
      out << res.refined_from_id << ',' << buf << '\n';
    } else {
      out << "-1,\n";
    }

    if (queries.size() == 1) {
      std::vector<std::int64_t> record_ids;
      for (const auto& rec : map.records) record_ids.push_back(rec.frame_id);
      std::ofstream curve(cfg.out_dir + "/profile_curve.csv");
      std::ofstream hist(cfg.out_dir + "/profile_hist.csv");
      emit_distance_profile(res, record_ids, curve, hist);
    }
  }
  write_timings(cfg, "relocalize",
                {{"query", seconds_since(t0), static_cast<long>(queries.size())}});
  if (!quiet)
    log << "relocalize: " << queries.size() << " queries against "
        << map.records.size() << " keyframes\n";
}

void cmd_eval(const RunConfig& cfg, bool quiet, std::ostream& log) {
  banner(cfg, "eval", log);
  const Trajectory gt = load_trajectory(cfg.pose_file, "paths.pose_file");
  const Trajectory est = load_trajectory(cfg.est_file, "paths.est_file");
  const MetricResult result = kitti_errors(gt, est, cfg.eval_lengths);
  ensure_dir(cfg.out_dir);
  {
    std::ofstream out(cfg.out_dir + "/metrics.txt");
    write_metrics_report(result, cfg.eval_lengths, out);
  }
  {
    std::ofstream out(cfg.out_dir + "/metrics.csv");
    write_metrics_csv(result, out);
  }
  if (!quiet) {
    if (result.empty)
      log << "eval: no subsequence reached the smallest length\n";
    else
      log << "eval: translation " << result.translation_percent << " %, rotation "
          << result.rotation_deg_per_m << " deg/m over "
          << result.subsequence_count << " subsequences\n";
  }
}

void cmd_plot(const RunConfig& cfg, bool quiet, std::ostream& log) {
  banner(cfg, "plot", log);
  const Trajectory gt = load_trajectory(cfg.pose_file, "paths.pose_file");
  const Trajectory est = load_trajectory(cfg.est_file, "paths.est_file");
  ensure_dir(cfg.out_dir);
  {
    std::ofstream out(cfg.out_dir + "/axes.csv");
    emit_axes_csv(gt, est, out);
  }
  {
    std::ofstream out(cfg.out_dir + "/trajectory_xz.svg");
    emit_xz_svg(gt, est, out);
  }
  if (!quiet) log << "plot: wrote axes.csv and trajectory_xz.svg\n";
}

void cmd_report(const RunConfig& cfg, bool quiet, std::ostream& log) {
  banner(cfg, "report", log);
  std::vector<ReportRow> measured;
  if (fs::exists(cfg.report_metrics_csv)) {
    std::ifstream in(cfg.report_metrics_csv);
    const MetricResult metrics = parse_metrics_csv(in);
    std::optional<double> runtime;
    if (!cfg.report_timings_csv.empty()) {
      require_input(cfg.report_timings_csv, "report.timings_csv");
      std::ifstream tin(cfg.report_timings_csv);
      std::string line;
      std::getline(tin, line);  // header
      while (std::getline(tin, line)) {
        std::istringstream ls(line);
        std::string stage, seconds, frames, per_frame;
        if (std::getline(ls, stage, ',') && std::getline(ls, seconds, ',') &&
            std::getline(ls, frames, ',') && std::getline(ls, per_frame) &&
            stage == "infer_vo")
          runtime = std::stod(per_frame);
      }
    }
    measured.push_back(make_measured_row(cfg.report_name, metrics, runtime,
                                         cfg.report_environment));
  }
  ensure_dir(cfg.out_dir);
  std::ofstream out(cfg.out_dir + "/table1.txt");
  table1_report(measured, out);
  if (!quiet)
    log << "report: wrote table1.txt with " << measured.size()
        << " measured row(s)\n";
}

void run_subcommand(const std::string& name, const RunConfig& cfg, bool quiet,
                    std::ostream& log) {
  if (name == "synth") return cmd_synth(cfg, quiet, log);
  if (name == "flow-precompute") return cmd_flow_precompute(cfg, quiet, log);
  if (name == "train-vo") return cmd_train_vo(cfg, quiet, log);
  if (name == "infer-vo") return cmd_infer_vo(cfg, quiet, log);
  if (name == "train-map") return cmd_train_map(cfg, quiet, log);
  if (name == "build-map") return cmd_build_map(cfg, quiet, log);
  if (name == "relocalize") return cmd_relocalize(cfg, quiet, log);
  if (name == "eval") return cmd_eval(cfg, quiet, log);
  if (name == "plot") return cmd_plot(cfg, quiet, log);
  if (name == "report") return cmd_report(cfg, quiet, log);
  throw ConfigError("unknown subcommand: " + name);
}

}  // namespace atdn
