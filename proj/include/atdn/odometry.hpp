#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "atdn/dataio.hpp"
#include "atdn/geometry.hpp"
#include "atdn/nn.hpp"

namespace atdn {

// Frame-to-frame motion as 3 translation metres + 3 axis-angle radians.
struct PoseDelta {
  Vec3 translation{0, 0, 0};
  Vec3 rotation{0, 0, 0};  // axis-angle, |rotation| < pi
};

Mat3 axis_angle_to_matrix(const Vec3& r);
Vec3 matrix_to_axis_angle(const Mat3& m);
Vec3 wrap_principal(const Vec3& axis_angle);

RelativePose delta_to_relative(const PoseDelta& d);
PoseDelta relative_to_delta(const RelativePose& rel);

// Cumulative composition from `start`; result has len(deltas)+1 entries with
// frame ids 0..len(deltas).
Trajectory integrate(const std::vector<PoseDelta>& deltas, const Pose& start);

std::vector<RelativePose> trajectory_to_relatives(const Trajectory& traj);

// --- VO network ---------------------------------------------------------------

struct VoConfig {
  int in_h = 64;
  int in_w = 64;
  std::vector<long> channels{8, 16, 32};  // stride-2 conv stack over the flow
  long hidden = 128;
  long kernel = 3;
  bool zero_init_head = true;  // untrained model predicts the zero delta
};

template <typename T>
struct VoModel {
  VoConfig cfg;
  std::vector<Conv<T>> convs;
  Dense<T> fc_hidden;
  Dense<T> fc_out;

  static VoModel init(const VoConfig& cfg, Rng& rng) {
    VoModel m;
    m.cfg = cfg;
    long c = 2, h = cfg.in_h, w = cfg.in_w;
    for (long out_c : cfg.channels) {
      m.convs.push_back(Conv<T>::init(c, out_c, cfg.kernel, 2, 1, rng));
      c = out_c;
      h = (h + 2 - cfg.kernel) / 2 + 1;
      w = (w + 2 - cfg.kernel) / 2 + 1;
    }
    m.fc_hidden = Dense<T>::init(c * h * w, cfg.hidden, rng);
    m.fc_out = Dense<T>::init(cfg.hidden, 6, rng, cfg.zero_init_head);
    return m;
  }

  // x: [N, 2, H, W] -> [N, 6]
  Tensor<T> forward(const Tensor<T>& x) const {
    Tensor<T> h = x;
    for (const auto& conv : convs) h = relu(conv.forward(h));
    const long n = h.shape()[0];
    h = reshape(h, {n, h.numel() / n});
    h = relu(fc_hidden.forward(h));
    return fc_out.forward(h);
  }

  std::vector<NamedParam<T>> params() const {
    std::vector<NamedParam<T>> out;
    for (std::size_t i = 0; i < convs.size(); ++i)
      convs[i].collect("vo.conv" + std::to_string(i), out);
    fc_hidden.collect("vo.fc_hidden", out);
    fc_out.collect("vo.fc_out", out);
    return out;
  }
};

// FlowFields -> [N, 2, H, W] tensor (channel-last storage to NCHW).
template <typename T>
Tensor<T> flows_to_tensor(const std::vector<const FlowField*>& flows) {
  const int h = flows.at(0)->height, w = flows.at(0)->width;
  const long n = static_cast<long>(flows.size());
  std::vector<T> data(std::size_t(n) * 2 * h * w);
  for (long k = 0; k < n; ++k) {
    const FlowField& f = *flows[k];
    detail::require(f.height == h && f.width == w, "flow batch size mismatch");
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        data[((k * 2 + 0) * h + y) * w + x] = static_cast<T>(f.u(y, x));
        data[((k * 2 + 1) * h + y) * w + x] = static_cast<T>(f.v(y, x));
      }
  }
  return Tensor<T>::constant({n, 2, h, w}, std::move(data));
}

PoseDelta predict_delta(const VoModel<float>& model, const FlowField& flow);

// --- losses --------------------------------------------------------------------

// |t - t_gt|^2 + kappa * |r - r_gt|^2 on a [6] prediction tensor.
template <typename T>
Tensor<T> step_loss(const Tensor<T>& pred, const RelativePose& gt, double kappa) {
  detail::require(pred.shape() == std::vector<long>{6}, "step_loss: [6] prediction");
  const Vec3 r_gt = matrix_to_axis_angle(gt.R);
  auto t_hat = slice(pred, 0, 0, 3);
  auto r_hat = slice(pred, 0, 3, 3);
  auto t_ref = Tensor<T>::constant({3}, {T(gt.t[0]), T(gt.t[1]), T(gt.t[2])});
  auto r_ref = Tensor<T>::constant({3}, {T(r_gt[0]), T(r_gt[1]), T(r_gt[2])});
  return add(sum_sq(sub(t_hat, t_ref)),
             scale(sum_sq(sub(r_hat, r_ref)), T(kappa)));
}

// Windowed composition loss: every run of `window` consecutive steps is
// composed on the tape (predictions) and in closed form (ground truth), and
// the two composites are compared with step_loss; mean over runs. window == 1
// reduces to the mean per-step loss.
template <typename T>
Tensor<T> composition_loss(const std::vector<Tensor<T>>& preds,
                           const std::vector<RelativePose>& gts, int window,
                           double kappa) {
  detail::require(preds.size() == gts.size(), "composition_loss: list lengths differ");
  detail::require(window >= 1, "composition_loss: window must be >= 1");
  const long n = static_cast<long>(preds.size());
  detail::require(n >= window, "composition_loss: window larger than sequence");

  Tensor<T> acc;
  const long runs = n - window + 1;
  for (long s = 0; s < runs; ++s) {
    Tensor<T> term;
    if (window == 1) {
      term = step_loss(preds[s], gts[s], kappa);
    } else {
      Tensor<T> t_acc = slice(preds[s], 0, 0, 3);
      Tensor<T> r_mat = rot_exp(slice(preds[s], 0, 3, 3));
      RelativePose gt_acc = gts[s];
      for (long k = s + 1; k < s + window; ++k) {
        t_acc = add(matvec(r_mat, slice(preds[k], 0, 0, 3)), t_acc);
        r_mat = matmul(r_mat, rot_exp(slice(preds[k], 0, 3, 3)));
        gt_acc = compose(gt_acc, gts[k]);
      }
      Tensor<T> composite = concat<T>({t_acc, rot_log(r_mat)}, 0);
      term = step_loss(composite, gt_acc, kappa);
    }
    acc = acc.defined() ? add(acc, term) : term;
  }
  return scale(acc, T(1) / T(runs));
}

// --- curriculum training ---------------------------------------------------------

struct CurriculumStage {
  double alpha;  // weight of the long-term consistency component
  int epochs;
  int window;
};

struct CurriculumPlan {
  std::vector<CurriculumStage> stages;
  double lr_max = 1e-3;
  double lr_min = 1e-6;
  double kappa = 100.0;
  int window_stride = 1;   // spacing of window start frames
  long fault_limit = 100;  // abort when this many optimizer steps were skipped

  // Stages (alpha, epochs) = (1.0,5)(0.7,5)(0.3,10)(0.3,10) with windows
  // growing 2,4,6,8.
  static CurriculumPlan defaults();
  void validate() const;
};

struct VoSample {
  FlowField flow;      // frame k -> k+1
  RelativePose gt;     // same step
};
using VoSequence = std::vector<VoSample>;

struct EpochStat {
  int stage;
  int epoch;  // within the stage
  double mean_loss;
  double lr_start;  // lr at the first step of the epoch
};

struct VoTrainResult {
  std::vector<EpochStat> log;
  long steps = 0;
  long faults = 0;
};

VoTrainResult train_vo(VoModel<float>& model,
                       const std::vector<VoSequence>& sequences,
                       const CurriculumPlan& plan, std::uint64_t seed);

}  // namespace atdn
