#include <doctest.h>

#include <cmath>

#include "atdn/errors.hpp"
#include "atdn/odometry.hpp"
#include "atdn/rng.hpp"

using namespace atdn;

namespace {

using D = Tensor<double>;

// 4x4 homogeneous oracle for the composition loss.
struct Hom {
  double m[16];
};

Hom to_hom(const Mat3& r, const Vec3& t) {
  Hom h{};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) h.m[i * 4 + j] = r[i * 3 + j];
    h.m[i * 4 + 3] = t[i];
  }
  h.m[15] = 1.0;
  return h;
}

Hom hom_mul(const Hom& a, const Hom& b) {
  Hom y{};
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      double s = 0;
      for (int k = 0; k < 4; ++k) s += a.m[i * 4 + k] * b.m[k * 4 + j];
      y.m[i * 4 + j] = s;
    }
  return y;
}

PoseDelta random_delta(Rng& rng, double t_scale = 0.5, double r_scale = 0.2) {
  PoseDelta d;
  for (int i = 0; i < 3; ++i) {
    d.translation[i] = rng.normal() * t_scale;
    d.rotation[i] = rng.normal() * r_scale;
  }
  return d;
}

D delta_param(const PoseDelta& d) {
  return D::param({6}, {d.translation[0], d.translation[1], d.translation[2],
                        d.rotation[0], d.rotation[1], d.rotation[2]});
}

VoSequence make_sequence(Rng& rng, int n, int hw = 8) {
  VoSequence seq;
  for (int i = 0; i < n; ++i) {
    FlowField flow(hw, hw);
    rng.fill_normal(flow.data, 0.5);
    const PoseDelta d = random_delta(rng, 0.1, 0.02);
    seq.push_back({std::move(flow), delta_to_relative(d)});
  }
  return seq;
}

}  // namespace

TEST_SUITE("odometry") {

TEST_CASE("axis-angle conversions round trip") {
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    Vec3 r{rng.normal(), rng.normal(), rng.normal()};
    const double scale = rng.uniform() * 0.9;  // keep |r| < pi
    for (auto& v : r) v *= scale;
    const Vec3 back = matrix_to_axis_angle(axis_angle_to_matrix(r));
    for (int k = 0; k < 3; ++k) CHECK(back[k] == doctest::Approx(r[k]).epsilon(1e-9));
  }
  const Vec3 zero = matrix_to_axis_angle(mat3_identity());
  CHECK(zero[0] == 0.0);
}

TEST_CASE("wrap_principal keeps rotations in range") {
  const Vec3 big = {0.0, 0.0, 3.0 * M_PI / 2.0};
  const Vec3 wrapped = wrap_principal(big);
  CHECK(std::sqrt(wrapped[0] * wrapped[0] + wrapped[1] * wrapped[1] +
                  wrapped[2] * wrapped[2]) <= M_PI);
  // same rotation matrix
  const Mat3 a = axis_angle_to_matrix(big);
  const Mat3 b = axis_angle_to_matrix(wrapped);
  for (int i = 0; i < 9; ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
}

TEST_CASE("zero-initialized head predicts the zero delta") {
  Rng rng(2);
  VoConfig cfg;
  cfg.in_h = cfg.in_w = 16;
  cfg.channels = {4, 8};
  cfg.hidden = 16;
  VoModel<float> model = VoModel<float>::init(cfg, rng);
  FlowField flow(16, 16);
  rng.fill_normal(flow.data, 3.0);
  const PoseDelta d = predict_delta(model, flow);
  for (int i = 0; i < 3; ++i) {
    CHECK(d.translation[i] == 0.0);
    CHECK(d.rotation[i] == 0.0);
  }
}

TEST_CASE("random-weight predictions stay finite over 100 seeds") {
  VoConfig cfg;
  cfg.in_h = cfg.in_w = 8;
  cfg.channels = {4};
  cfg.hidden = 8;
  cfg.zero_init_head = false;
  for (int s = 0; s < 100; ++s) {
    Rng rng(1000 + s);
    VoModel<float> model = VoModel<float>::init(cfg, rng);
    FlowField flow(8, 8);
    rng.fill_normal(flow.data, 1.0);
    const PoseDelta d = predict_delta(model, flow);
    for (int i = 0; i < 3; ++i) {
      CHECK(std::isfinite(d.translation[i]));
      CHECK(std::isfinite(d.rotation[i]));
    }
  }
}

TEST_CASE("predict_delta rejects mismatched flow dimensions") {
  Rng rng(3);
  VoConfig cfg;
  cfg.in_h = cfg.in_w = 16;
  VoModel<float> model = VoModel<float>::init(cfg, rng);
  FlowField flow(8, 8);
  CHECK_THROWS_AS(predict_delta(model, flow), std::invalid_argument);
}

TEST_CASE("step_loss basics") {
  Rng rng(4);
  const PoseDelta d = random_delta(rng);
  const RelativePose gt = delta_to_relative(d);
  CHECK(step_loss(delta_param(d), gt, 100.0).item() < 1e-18);

  PoseDelta off = d;
  off.translation[0] += 0.1;
  CHECK(step_loss(delta_param(off), gt, 100.0).item() ==
        doctest::Approx(0.01).epsilon(1e-9));
  PoseDelta neg = d;
  neg.translation[0] -= 0.1;
  CHECK(step_loss(delta_param(neg), gt, 100.0).item() ==
        doctest::Approx(0.01).epsilon(1e-9));
}

TEST_CASE("composition_loss: perfect predictions give zero") {
  Rng rng(5);
  for (int w : {1, 2, 3, 5}) {
    std::vector<D> preds;
    std::vector<RelativePose> gts;
    for (int i = 0; i < 6; ++i) {
      const PoseDelta d = random_delta(rng, 0.3, 0.15);
      preds.push_back(delta_param(d));
      gts.push_back(delta_to_relative(d));
    }
    CHECK(composition_loss(preds, gts, w, 100.0).item() < 1e-12);
  }
}

TEST_CASE("composition_loss: window 1 equals the mean per-step loss") {
  Rng rng(6);
  std::vector<D> preds;
  std::vector<RelativePose> gts;
  for (int i = 0; i < 5; ++i) {
    preds.push_back(delta_param(random_delta(rng)));
    gts.push_back(delta_to_relative(random_delta(rng)));
  }
  double mean_step = 0;
  for (int i = 0; i < 5; ++i) mean_step += step_loss(preds[i], gts[i], 100.0).item();
  mean_step /= 5;
  CHECK(composition_loss(preds, gts, 1, 100.0).item() ==
        doctest::Approx(mean_step).epsilon(1e-12));
}

TEST_CASE("composition_loss: window 2 matches the homogeneous-matrix oracle") {
  Rng rng(7);
  // two steps; the first prediction is perturbed
  const PoseDelta true0 = random_delta(rng, 0.4, 0.2);
  const PoseDelta true1 = random_delta(rng, 0.4, 0.2);
  PoseDelta pred0 = true0;
  pred0.translation[1] += 0.05;
  pred0.rotation[2] -= 0.03;

  const std::vector<D> preds = {delta_param(pred0), delta_param(true1)};
  const std::vector<RelativePose> gts = {delta_to_relative(true0),
                                         delta_to_relative(true1)};
  const double loss = composition_loss(preds, gts, 2, 100.0).item();

  // oracle: compose both chains as 4x4 matrices and apply the same formula
  const RelativePose p0 = delta_to_relative(pred0);
  const RelativePose p1 = delta_to_relative(true1);
  const Hom pred_h = hom_mul(to_hom(p0.R, p0.t), to_hom(p1.R, p1.t));
  const Hom gt_h = hom_mul(to_hom(gts[0].R, gts[0].t), to_hom(gts[1].R, gts[1].t));
  Mat3 pr, gr;
  Vec3 pt, gtt;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      pr[i * 3 + j] = pred_h.m[i * 4 + j];
      gr[i * 3 + j] = gt_h.m[i * 4 + j];
    }
    pt[i] = pred_h.m[i * 4 + 3];
    gtt[i] = gt_h.m[i * 4 + 3];
  }
  const Vec3 pa = matrix_to_axis_angle(pr);
  const Vec3 ga = matrix_to_axis_angle(gr);
  double oracle = 0;
  for (int i = 0; i < 3; ++i) {
    oracle += (pt[i] - gtt[i]) * (pt[i] - gtt[i]);
    oracle += 100.0 * (pa[i] - ga[i]) * (pa[i] - ga[i]);
  }
  CHECK(loss == doctest::Approx(oracle).epsilon(1e-9));
}

TEST_CASE("total loss gradient through the composition chain vs finite differences") {
  Rng rng(8);
  std::vector<D> preds;
  std::vector<RelativePose> gts;
  for (int i = 0; i < 4; ++i) {
    preds.push_back(delta_param(random_delta(rng, 0.4, 0.25)));
    gts.push_back(delta_to_relative(random_delta(rng, 0.4, 0.25)));
  }
  const double alpha = 0.7, kappa = 100.0, h = 1e-4;

  auto total = [&]() {
    D step_sum;
    for (int i = 0; i < 4; ++i) {
      D l = step_loss(preds[i], gts[i], kappa);
      step_sum = step_sum.defined() ? add(step_sum, l) : l;
    }
    return add(scale(step_sum, 0.25), scale(composition_loss(preds, gts, 3, kappa), alpha));
  };

  D loss = total();
  backward(loss);
  for (auto& p : preds) {
    for (int i = 0; i < 6; ++i) {
      auto& v = p.node()->value[i];
      const double saved = v;
      v = saved + h;
      const double f_plus = total().item();
      v = saved - h;
      const double f_minus = total().item();
      v = saved;
      const double fd = (f_plus - f_minus) / (2 * h);
      const double g = p.grad()[i];
      CHECK(std::abs(g - fd) / std::max({1.0, std::abs(g), std::abs(fd)}) < 1e-3);
    }
  }
}

TEST_CASE("integrate basics") {
  const Trajectory single = integrate({}, Pose());
  CHECK(single.size() == 1);

  Rng rng(9);
  // deltas equal to GT relatives reproduce the GT trajectory
  std::vector<TrajectoryEntry> entries{{0, Pose()}};
  Pose p;
  std::vector<PoseDelta> deltas;
  for (int i = 1; i <= 20; ++i) {
    const PoseDelta d = random_delta(rng, 0.3, 0.1);
    deltas.push_back(d);
    p = compose(p, delta_to_relative(d));
    entries.push_back({i, p});
  }
  const Trajectory gt(entries);
  const Trajectory est = integrate(deltas, Pose());
  REQUIRE(est.size() == gt.size());
  for (std::size_t i = 0; i < gt.size(); ++i)
    for (int k = 0; k < 3; ++k)
      CHECK(std::abs(est[i].pose.t[k] - gt[i].pose.t[k]) < 1e-9);

  // n identical x-steps
  std::vector<PoseDelta> steps(7);
  for (auto& d : steps) d.translation = {1.0, 0.0, 0.0};
  const Trajectory line = integrate(steps, Pose());
  CHECK(line[7].pose.t[0] == doctest::Approx(7.0).epsilon(1e-12));
}

TEST_CASE("integrate of extracted relatives is the identity") {
  Rng rng(10);
  std::vector<TrajectoryEntry> entries{{0, Pose()}};
  Pose p;
  for (int i = 1; i < 50; ++i) {
    p = compose(p, delta_to_relative(random_delta(rng, 0.5, 0.2)));
    entries.push_back({i, p});
  }
  const Trajectory gt(entries);
  std::vector<PoseDelta> deltas;
  for (const auto& rel : trajectory_to_relatives(gt))
    deltas.push_back(relative_to_delta(rel));
  const Trajectory round = integrate(deltas, gt[0].pose);
  for (std::size_t i = 0; i < gt.size(); ++i)
    for (int k = 0; k < 3; ++k)
      CHECK(std::abs(round[i].pose.t[k] - gt[i].pose.t[k]) < 1e-9);
}

TEST_CASE("default curriculum plan encodes the published stages") {
  const CurriculumPlan plan = CurriculumPlan::defaults();
  REQUIRE(plan.stages.size() == 4);
  CHECK(plan.stages[0].alpha == 1.0);
  CHECK(plan.stages[0].epochs == 5);
  CHECK(plan.stages[1].alpha == 0.7);
  CHECK(plan.stages[1].epochs == 5);
  CHECK(plan.stages[2].alpha == 0.3);
  CHECK(plan.stages[2].epochs == 10);
  CHECK(plan.stages[3].alpha == 0.3);
  CHECK(plan.stages[3].epochs == 10);
  CHECK(plan.stages[0].window == 2);
  CHECK(plan.stages[1].window == 4);
  CHECK(plan.stages[2].window == 6);
  CHECK(plan.stages[3].window == 8);
  CHECK(plan.lr_max == 1e-3);
  CHECK(plan.lr_min == 1e-6);
}

TEST_CASE("train_vo with lr = 0 leaves parameters unchanged") {
  Rng rng(11);
  VoConfig cfg;
  cfg.in_h = cfg.in_w = 8;
  cfg.channels = {4};
  cfg.hidden = 8;
  VoModel<float> model = VoModel<float>::init(cfg, rng);
  const auto before = model.fc_hidden.weight.value();

  CurriculumPlan plan;
  plan.stages = {{0.5, 2, 2}};
  plan.lr_max = plan.lr_min = 0.0;
  const VoSequence seq = make_sequence(rng, 6);
  train_vo(model, {seq}, plan, 7);
  CHECK(model.fc_hidden.weight.value() == before);
}

TEST_CASE("alpha = 0 training equals a per-step-only trainer bit for bit") {
  VoConfig cfg;
  cfg.in_h = cfg.in_w = 8;
  cfg.channels = {4};
  cfg.hidden = 8;
  CurriculumPlan plan;
  plan.stages = {{0.0, 3, 2}};
  const std::uint64_t seed = 99;

  Rng data_rng(12);
  const VoSequence seq = make_sequence(data_rng, 7);

  Rng rng_a(seed);
  VoModel<float> model_a = VoModel<float>::init(cfg, rng_a);
  const VoTrainResult result = train_vo(model_a, {seq}, plan, seed);

  // independent per-step-only trainer mirroring the documented iteration
  // order: shuffled window starts, AdamW, per-stage cosine schedule
  Rng rng_b(seed);
  VoModel<float> model_b = VoModel<float>::init(cfg, rng_b);
  std::vector<Tensor<float>> params;
  for (auto& p : model_b.params()) params.push_back(p.tensor);
  AdamW<float> opt(params, {});
  Rng loop_rng(seed);
  std::vector<std::pair<std::size_t, std::size_t>> starts;
  for (std::size_t s = 0; s + 2 <= seq.size(); ++s) starts.emplace_back(0, s);
  LrSchedule sched(plan.lr_max, plan.lr_min, {long(starts.size()) * 3});
  long t = 0;
  std::vector<double> epoch_losses;
  for (int epoch = 0; epoch < 3; ++epoch) {
    loop_rng.shuffle(starts);
    double loss_sum = 0;
    for (const auto& [q, s] : starts) {
      std::vector<const FlowField*> flows{&seq[s].flow, &seq[s + 1].flow};
      const auto out = model_b.forward(flows_to_tensor<float>(flows));
      Tensor<float> l0 = step_loss(reshape(slice(out, 0, 0, 1), {6}), seq[s].gt, plan.kappa);
      Tensor<float> l1 = step_loss(reshape(slice(out, 0, 1, 1), {6}), seq[s + 1].gt, plan.kappa);
      Tensor<float> loss = scale(add(l0, l1), 0.5f);
      backward(loss);
      opt.step(sched.at(t));
      opt.zero_grad();
      ++t;
      loss_sum += double(loss.value()[0]);
    }
    epoch_losses.push_back(loss_sum / double(starts.size()));
  }

  REQUIRE(result.log.size() == epoch_losses.size());
  for (std::size_t i = 0; i < epoch_losses.size(); ++i)
    CHECK(result.log[i].mean_loss == epoch_losses[i]);  // bit-for-bit
  CHECK(model_a.fc_hidden.weight.value() == model_b.fc_hidden.weight.value());
}

TEST_CASE("train_vo rejects sequences shorter than the largest window") {
  Rng rng(13);
  VoConfig cfg;
  cfg.in_h = cfg.in_w = 8;
  cfg.channels = {4};
  cfg.hidden = 8;
  VoModel<float> model = VoModel<float>::init(cfg, rng);
  CurriculumPlan plan = CurriculumPlan::defaults();
  const VoSequence seq = make_sequence(rng, 4);  // largest window is 8
  CHECK_THROWS_AS(train_vo(model, {seq}, plan, 1), DataError);
}

}  // TEST_SUITE
