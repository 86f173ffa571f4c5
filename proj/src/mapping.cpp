#include "atdn/mapping.hpp"

#include <cmath>
#include <limits>

#include "atdn/errors.hpp"

namespace atdn {

Embedding encode(const MapModel<float>& model, const std::vector<float>& image,
                 std::int64_t frame_id, Rng* rng) {
  detail::require(image.size() ==
                      std::size_t(model.cfg.in_h) * model.cfg.in_w,
                  "encode: image does not match the model input size");
  const Tensor<float> x =
      images_to_tensor<float>({&image}, model.cfg.in_h, model.cfg.in_w);
  auto [mean_t, logvar_t] = model.encode_heads(x);
  Embedding e;
  e.frame_id = frame_id;
  e.values = mean_t.value();
  if (model.cfg.variational && rng) {
    const auto& lv = logvar_t.value();
    for (std::size_t i = 0; i < e.values.size(); ++i)
      e.values[i] += std::exp(0.5f * lv[i]) * static_cast<float>(rng->normal());
  }
  return e;
}

void MapTrainConfig::validate() const {
  if (epochs <= 0) throw ConfigError("map epochs must be > 0");
  if (beta_kl < 0.0 || lambda_edl < 0.0)
    throw ConfigError("map loss weights must be >= 0");
  if (lambda_edl > 0.0 && batch < 2 * triple_stride + 1)
    throw ConfigError("map batch must cover a full EDL triple (>= 3 for stride 1)");
  if (batch < 1) throw ConfigError("map batch must be >= 1");
  if (triple_stride < 1) throw ConfigError("map triple stride must be >= 1");
  if (!(lr_min <= lr_max)) throw ConfigError("map lr_min must not exceed lr_max");
}

MapTrainResult train_map(MapModel<float>& model,
                         const std::vector<Keyframe>& keyframes,
                         const MapTrainConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const long k = static_cast<long>(keyframes.size());
  if (k < cfg.batch)
    throw DataError("train_map: fewer keyframes (" + std::to_string(k) +
                    ") than the batch size");

  std::vector<Tensor<float>> params;
  for (auto& p : model.params()) params.push_back(p.tensor);
  AdamW<float> opt(params, {});  // Adam: decoupled decay weight is zero
  Rng rng(seed);
  MapTrainResult result;

  // Batches are windows of consecutive keyframes so EDL triples follow the
  // camera path; window starts are shuffled per epoch.
  std::vector<long> starts;
  for (long s = 0; s + cfg.batch <= k; ++s) starts.push_back(s);
  const long total_steps = static_cast<long>(starts.size()) * cfg.epochs;
  LrSchedule sched(cfg.lr_max, cfg.lr_min, {total_steps});
  long t = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(starts);
    double loss_sum = 0.0, edl_sum = 0.0;
    for (long s : starts) {
      std::vector<const std::vector<float>*> images;
      std::vector<Vec3> positions;
      for (int i = 0; i < cfg.batch; ++i) {
        images.push_back(&keyframes[s + i].image);
        positions.push_back(keyframes[s + i].position);
      }
      const Tensor<float> batch =
          images_to_tensor<float>(images, model.cfg.in_h, model.cfg.in_w);
      MapLossParts<float> parts = map_loss(model, batch, positions, cfg, &rng);

      if (all_finite(parts.total)) {
        backward(parts.total);
        opt.step(sched.at(t));
      } else {
        params[0].zero_grad();
        params[0].node()->grad[0] = std::numeric_limits<float>::quiet_NaN();
        opt.step(sched.at(t));
      }
      opt.zero_grad();
      ++t;
      ++result.steps;
      loss_sum += double(parts.total.value()[0]);
      edl_sum += parts.edl;
      if (opt.fault_count() > cfg.fault_limit)
        throw NumericFault(
            "map training aborted: " + std::to_string(opt.fault_count()) +
            " optimizer steps skipped on non-finite gradients");
    }
    result.epoch_loss.push_back(loss_sum / double(starts.size()));
    result.epoch_edl.push_back(edl_sum / double(starts.size()));
  }
  result.faults = opt.fault_count();
  return result;
}

std::vector<std::int64_t> select_keyframes(const Trajectory& traj,
                                           const KeyframePolicy& policy) {
  std::vector<std::int64_t> ids;
  switch (policy.kind) {
    case KeyframePolicy::Kind::Stride: {
      if (policy.stride <= 0) throw ConfigError("keyframe stride must be > 0");
      for (std::size_t i = 0; i < traj.size(); i += policy.stride)
        ids.push_back(traj[i].frame_id);
      break;
    }
    case KeyframePolicy::Kind::Motion: {
      if (policy.dist <= 0.0 || policy.angle <= 0.0)
        throw ConfigError("keyframe motion thresholds must be > 0");
      ids.push_back(traj[0].frame_id);
      std::size_t last = 0;
      for (std::size_t i = 1; i < traj.size(); ++i) {
        const RelativePose rel = relative(traj[last].pose, traj[i].pose);
        const double d = std::sqrt(rel.t[0] * rel.t[0] + rel.t[1] * rel.t[1] +
                                   rel.t[2] * rel.t[2]);
        if (d >= policy.dist || rotation_angle(rel.R) >= policy.angle) {
          ids.push_back(traj[i].frame_id);
          last = i;
        }
      }
      break;
    }
  }
  return ids;
}

}  // namespace atdn
