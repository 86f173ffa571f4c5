#include "atdn/odometry.hpp"

#include <cmath>
#include <limits>

#include "atdn/errors.hpp"

namespace atdn {

Mat3 axis_angle_to_matrix(const Vec3& r) {
  const double th2 = r[0] * r[0] + r[1] * r[1] + r[2] * r[2];
  const double th = std::sqrt(th2);
  double a, b;
  if (th < 1e-8) {
    a = 1.0 - th2 / 6.0 + th2 * th2 / 120.0;
    b = 0.5 - th2 / 24.0 + th2 * th2 / 720.0;
  } else {
    a = std::sin(th) / th;
    b = (1.0 - std::cos(th)) / th2;
  }
  const Mat3 k = {0, -r[2], r[1], r[2], 0, -r[0], -r[1], r[0], 0};
  const Mat3 k2 = mat3_mul(k, k);
  Mat3 m = mat3_identity();
  for (int i = 0; i < 9; ++i) m[i] += a * k[i] + b * k2[i];
  return m;
}

Vec3 matrix_to_axis_angle(const Mat3& m) {
  const double u = std::clamp((m[0] + m[4] + m[8] - 1.0) * 0.5, -1.0, 1.0);
  const double th = std::acos(u);
  const double s = std::sin(th);
  const Vec3 v = {m[7] - m[5], m[2] - m[6], m[3] - m[1]};
  if (s < 1e-15) {
    if (th < 1.0) return {0.5 * v[0], 0.5 * v[1], 0.5 * v[2]};
    // th ~ pi: axis magnitudes from the diagonal, signs from off-diagonals.
    Vec3 axis;
    for (int i = 0; i < 3; ++i)
      axis[i] = std::sqrt(std::max((m[i * 4] - u) / (1.0 - u), 0.0));
    int major = axis[1] > axis[0] ? 1 : 0;
    if (axis[2] > axis[major]) major = 2;
    const int o1 = (major + 1) % 3, o2 = (major + 2) % 3;
    if (m[major * 3 + o1] + m[o1 * 3 + major] < 0) axis[o1] = -axis[o1];
    if (m[major * 3 + o2] + m[o2 * 3 + major] < 0) axis[o2] = -axis[o2];
    return {th * axis[0], th * axis[1], th * axis[2]};
  }
  const double c = th < 1e-12 ? 0.5 : th / (2.0 * s);
  return {c * v[0], c * v[1], c * v[2]};
}

Vec3 wrap_principal(const Vec3& axis_angle) {
  const double th = std::sqrt(axis_angle[0] * axis_angle[0] +
                              axis_angle[1] * axis_angle[1] +
                              axis_angle[2] * axis_angle[2]);
  if (th < M_PI || th == 0.0) return axis_angle;
  double wrapped = std::fmod(th, 2.0 * M_PI);
  if (wrapped > M_PI) wrapped -= 2.0 * M_PI;
  const double f = wrapped / th;
  return {axis_angle[0] * f, axis_angle[1] * f, axis_angle[2] * f};
}

RelativePose delta_to_relative(const PoseDelta& d) {
  return RelativePose(axis_angle_to_matrix(d.rotation), d.translation);
}

PoseDelta relative_to_delta(const RelativePose& rel) {
  PoseDelta d;
  d.translation = rel.t;
  d.rotation = matrix_to_axis_angle(rel.R);
  return d;
}

Trajectory integrate(const std::vector<PoseDelta>& deltas, const Pose& start) {
  std::vector<TrajectoryEntry> entries;
  entries.reserve(deltas.size() + 1);
  entries.push_back({0, start});
  Pose current = start;
  for (std::size_t k = 0; k < deltas.size(); ++k) {
    current = compose(current, delta_to_relative(deltas[k]));
    entries.push_back({static_cast<std::int64_t>(k + 1), current});
  }
  return Trajectory(std::move(entries));
}

std::vector<RelativePose> trajectory_to_relatives(const Trajectory& traj) {
  std::vector<RelativePose> rels;
  rels.reserve(traj.size() - 1);
  for (std::size_t i = 0; i + 1 < traj.size(); ++i)
    rels.push_back(relative(traj[i].pose, traj[i + 1].pose));
  return rels;
}

PoseDelta predict_delta(const VoModel<float>& model, const FlowField& flow) {
  detail::require(flow.height == model.cfg.in_h && flow.width == model.cfg.in_w,
                  "predict_delta: flow dimensions do not match the model");
  const Tensor<float> out =
      model.forward(flows_to_tensor<float>({&flow}));
  const auto& v = out.value();
  PoseDelta d;
  d.translation = {double(v[0]), double(v[1]), double(v[2])};
  d.rotation = wrap_principal({double(v[3]), double(v[4]), double(v[5])});
  return d;
}

CurriculumPlan CurriculumPlan::defaults() {
  CurriculumPlan plan;
  plan.stages = {{1.0, 5, 2}, {0.7, 5, 4}, {0.3, 10, 6}, {0.3, 10, 8}};
  return plan;
}

void CurriculumPlan::validate() const {
  if (stages.empty()) throw ConfigError("curriculum plan has no stages");
  int prev_window = 0;
  for (const auto& s : stages) {
    if (s.alpha < 0.0 || s.alpha > 1.0)
      throw ConfigError("curriculum alpha must lie in [0,1]");
    if (s.epochs <= 0) throw ConfigError("curriculum stage epochs must be > 0");
    if (s.window < 2) throw ConfigError("curriculum window must be >= 2");
    if (s.window < prev_window)
      throw ConfigError("curriculum windows must be non-decreasing");
    prev_window = s.window;
  }
  if (!(lr_min <= lr_max)) throw ConfigError("vo lr_min must not exceed lr_max");
  if (kappa < 0.0) throw ConfigError("vo kappa must be >= 0");
  if (window_stride < 1) throw ConfigError("vo window stride must be >= 1");
}

VoTrainResult train_vo(VoModel<float>& model,
                       const std::vector<VoSequence>& sequences,
                       const CurriculumPlan& plan, std::uint64_t seed) {
  plan.validate();
  int max_window = 0;
  for (const auto& s : plan.stages) max_window = std::max(max_window, s.window);
  bool any = false;
  for (const auto& seq : sequences)
    any = any || static_cast<int>(seq.size()) >= max_window;
  if (!any)
    throw DataError("no sequence is long enough for the largest curriculum window");

  std::vector<Tensor<float>> params;
  for (auto& p : model.params()) params.push_back(p.tensor);
  AdamW<float> opt(params, {});
  Rng rng(seed);
  VoTrainResult result;

  for (std::size_t stage_idx = 0; stage_idx < plan.stages.size(); ++stage_idx) {
    const CurriculumStage& stage = plan.stages[stage_idx];
    // (sequence, start) pairs for this stage's window length
    std::vector<std::pair<std::size_t, std::size_t>> starts;
    for (std::size_t q = 0; q < sequences.size(); ++q)
      for (std::size_t s = 0; s + stage.window <= sequences[q].size();
           s += plan.window_stride)
        starts.emplace_back(q, s);
    if (starts.empty()) continue;

    // lr schedule restarts for every stage
    const long stage_steps = static_cast<long>(starts.size()) * stage.epochs;
    LrSchedule sched(plan.lr_max, plan.lr_min, {stage_steps});
    long t = 0;

    for (int epoch = 0; epoch < stage.epochs; ++epoch) {
      rng.shuffle(starts);
      double loss_sum = 0.0;
      const double lr_start = sched.at(t);
      for (const auto& [q, s] : starts) {
        const VoSequence& seq = sequences[q];
        std::vector<const FlowField*> flows;
        std::vector<RelativePose> gts;
        for (int k = 0; k < stage.window; ++k) {
          flows.push_back(&seq[s + k].flow);
          gts.push_back(seq[s + k].gt);
        }
        const Tensor<float> out = model.forward(flows_to_tensor<float>(flows));
        std::vector<Tensor<float>> preds;
        for (int k = 0; k < stage.window; ++k)
          preds.push_back(reshape(slice(out, 0, k, 1), {6}));

        Tensor<float> step_sum;
        for (int k = 0; k < stage.window; ++k) {
          Tensor<float> l = step_loss(preds[k], gts[k], plan.kappa);
          step_sum = step_sum.defined() ? add(step_sum, l) : l;
        }
        Tensor<float> loss = scale(step_sum, 1.0f / float(stage.window));
        if (stage.alpha > 0.0) {
          Tensor<float> comp =
              composition_loss(preds, gts, stage.window, plan.kappa);
          loss = add(loss, scale(comp, float(stage.alpha)));
        }

        if (all_finite(loss)) {
          backward(loss);
          opt.step(sched.at(t));
        } else {
          // drive the fault path through the optimizer's counter
          params[0].zero_grad();
          params[0].node()->grad[0] = std::numeric_limits<float>::quiet_NaN();
          opt.step(sched.at(t));
        }
        opt.zero_grad();
        ++t;
        ++result.steps;
        loss_sum += double(loss.value()[0]);
        if (opt.fault_count() > plan.fault_limit)
          throw NumericFault(
              "vo training aborted: " + std::to_string(opt.fault_count()) +
              " optimizer steps skipped on non-finite gradients");
      }
      result.log.push_back({static_cast<int>(stage_idx), epoch,
                            loss_sum / double(starts.size()), lr_start});
    }
  }
  result.faults = opt.fault_count();
  return result;
}

}  // namespace atdn
