#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "atdn/dataio.hpp"
#include "atdn/geometry.hpp"
#include "atdn/nn.hpp"

namespace atdn {

struct Embedding {
  std::int64_t frame_id = 0;
  std::vector<float> values;
};

struct MapConfig {
  int in_h = 64;
  int in_w = 64;
  std::vector<long> channels{8, 16, 32};  // encoder stride-2 stack
  long embed_dim = 128;
  long kernel = 3;
  bool variational = false;  // off: the bottleneck emits the mean
  bool unet = false;         // decoder-only skip connections (1x1 projections)
};

// Encoder -> (mean, logvar) bottleneck -> mirrored upsampling decoder. Skip
// connections, when enabled, stay inside the decoder so the embedding alone
// summarizes the frame.
template <typename T>
struct MapModel {
  MapConfig cfg;
  std::vector<Conv<T>> enc;
  Dense<T> mean_head, logvar_head, dec_fc;
  std::vector<Conv<T>> dec;        // upsample + conv per stage
  std::vector<Conv<T>> dec_skip;   // 1x1 projections when cfg.unet
  long feat_c = 0, feat_h = 0, feat_w = 0;

  static MapModel init(const MapConfig& cfg, Rng& rng) {
    MapModel m;
    m.cfg = cfg;
    long c = 1, h = cfg.in_h, w = cfg.in_w;
    for (long out_c : cfg.channels) {
      m.enc.push_back(Conv<T>::init(c, out_c, cfg.kernel, 2, 1, rng));
      c = out_c;
      h = (h + 2 - cfg.kernel) / 2 + 1;
      w = (w + 2 - cfg.kernel) / 2 + 1;
    }
    m.feat_c = c;
    m.feat_h = h;
    m.feat_w = w;
    const long feat = c * h * w;
    m.mean_head = Dense<T>::init(feat, cfg.embed_dim, rng);
    m.logvar_head = Dense<T>::init(feat, cfg.embed_dim, rng, true);
    m.dec_fc = Dense<T>::init(cfg.embed_dim, feat, rng);
    long in_c = c;
    for (std::size_t i = cfg.channels.size(); i-- > 0;) {
      const long out_c = i == 0 ? 1 : cfg.channels[i - 1];
      m.dec.push_back(Conv<T>::init(in_c, out_c, cfg.kernel, 1, (cfg.kernel - 1) / 2, rng));
      if (cfg.unet) m.dec_skip.push_back(Conv<T>::init(in_c, out_c, 1, 1, 0, rng));
      in_c = out_c;
    }
    return m;
  }

  // x: [N,1,H,W] -> (mean [N,D], logvar [N,D])
  std::pair<Tensor<T>, Tensor<T>> encode_heads(const Tensor<T>& x) const {
    Tensor<T> h = x;
    for (const auto& conv : enc) h = relu(conv.forward(h));
    const long n = h.shape()[0];
    h = reshape(h, {n, h.numel() / n});
    return {mean_head.forward(h), logvar_head.forward(h)};
  }

  // z: [N,D] -> [N,1,H,W] reconstruction in (0,1)
  Tensor<T> decode(const Tensor<T>& z) const {
    const long n = z.shape()[0];
    Tensor<T> h = relu(dec_fc.forward(z));
    h = reshape(h, {n, feat_c, feat_h, feat_w});
    for (std::size_t i = 0; i < dec.size(); ++i) {
      Tensor<T> up = upsample2(h);
      Tensor<T> out = dec[i].forward(up);
      if (cfg.unet) out = add(out, dec_skip[i].forward(up));
      h = (i + 1 == dec.size()) ? sigmoid(out) : relu(out);
    }
    return h;
  }

  std::vector<NamedParam<T>> params() const {
    std::vector<NamedParam<T>> out;
    for (std::size_t i = 0; i < enc.size(); ++i)
      enc[i].collect("map.enc" + std::to_string(i), out);
    mean_head.collect("map.mean_head", out);
    logvar_head.collect("map.logvar_head", out);
    dec_fc.collect("map.dec_fc", out);
    for (std::size_t i = 0; i < dec.size(); ++i)
      dec[i].collect("map.dec" + std::to_string(i), out);
    for (std::size_t i = 0; i < dec_skip.size(); ++i)
      dec_skip[i].collect("map.dec_skip" + std::to_string(i), out);
    return out;
  }
};

template <typename T>
Tensor<T> images_to_tensor(const std::vector<const std::vector<float>*>& images,
                           int h, int w) {
  const long n = static_cast<long>(images.size());
  std::vector<T> data(std::size_t(n) * h * w);
  for (long k = 0; k < n; ++k) {
    detail::require(images[k]->size() == std::size_t(h) * w,
                    "image batch size mismatch");
    for (std::size_t i = 0; i < images[k]->size(); ++i)
      data[k * h * w + i] = static_cast<T>((*images[k])[i]);
  }
  return Tensor<T>::constant({n, 1, h, w}, std::move(data));
}

// Deterministic when rng is null or the variational flag is off; otherwise
// mean + exp(logvar/2) * xi with xi drawn from the caller's stream.
Embedding encode(const MapModel<float>& model, const std::vector<float>& image,
                 std::int64_t frame_id, Rng* rng);

// --- Embedding Distance Loss ----------------------------------------------------

// For consecutive triples (i, i+s, i+2s):
//   | |E_i - E_{i+s}| / (|E_{i+2s} - E_{i+s}| + eps)
//     - |p_i - p_{i+s}| / (|p_{i+2s} - p_{i+s}| + eps) |
// averaged over triples. Ratios of distance rates, not distances, so any
// similarity transform of either point set leaves the value unchanged.
template <typename T>
Tensor<T> edl(const std::vector<Tensor<T>>& embeddings,
              const std::vector<Vec3>& positions, int triple_stride = 1,
              double eps = 1e-8) {
  detail::require(triple_stride >= 1, "edl: triple stride must be >= 1");
  detail::require(embeddings.size() == positions.size(),
                  "edl: embedding/position lists differ in length");
  const long n = static_cast<long>(embeddings.size());
  const long s = triple_stride;
  detail::require(n >= 2 * s + 1,
                  "edl: at least three latent vectors required (per stride)");

  auto pos_tensor = [&](long i) {
    return Tensor<T>::constant(
        {3}, {T(positions[i][0]), T(positions[i][1]), T(positions[i][2])});
  };
  auto distance = [](const Tensor<T>& a, const Tensor<T>& b) {
    return atdn::sqrt(sum_sq(sub(a, b)));
  };

  Tensor<T> acc;
  const long triples = n - 2 * s;
  for (long i = 0; i < triples; ++i) {
    auto e_ratio = div(distance(embeddings[i], embeddings[i + s]),
                       add_scalar(distance(embeddings[i + 2 * s], embeddings[i + s]),
                                  T(eps)));
    auto p_ratio = div(distance(pos_tensor(i), pos_tensor(i + s)),
                       add_scalar(distance(pos_tensor(i + 2 * s), pos_tensor(i + s)),
                                  T(eps)));
    auto term = atdn::abs(sub(e_ratio, p_ratio));
    acc = acc.defined() ? add(acc, term) : term;
  }
  return scale(acc, T(1) / T(triples));
}

// --- training --------------------------------------------------------------------

struct MapTrainConfig {
  int epochs = 10;
  int batch = 8;  // consecutive keyframes per step, in frame order
  double lr_max = 1e-3;
  double lr_min = 1e-5;
  double beta_kl = 1e-3;
  double lambda_edl = 1.0;
  bool edl_only = false;
  int triple_stride = 1;
  long fault_limit = 100;
  void validate() const;
};

struct Keyframe {
  std::int64_t frame_id;
  std::vector<float> image;
  Vec3 position;  // ground truth or VO estimate
};

template <typename T>
struct MapLossParts {
  Tensor<T> total;
  double recon = 0.0;
  double kl = 0.0;
  double edl = 0.0;
};

// L = recon MSE + [variational] beta_kl * KL(q || N(0,I)) + lambda_edl * EDL;
// the edl_only flag drops the first two terms. rng feeds the reparameterized
// sample and must be non-null when the model is variational.
template <typename T>
MapLossParts<T> map_loss(const MapModel<T>& model, const Tensor<T>& batch,
                         const std::vector<Vec3>& positions,
                         const MapTrainConfig& cfg, Rng* rng) {
  const long b = batch.shape()[0];
  if (cfg.lambda_edl > 0.0)
    detail::require(b >= 2 * cfg.triple_stride + 1,
                    "map_loss: EDL needs at least three latent vectors");
  auto [mean_t, logvar_t] = model.encode_heads(batch);

  Tensor<T> z = mean_t;
  Tensor<T> kl_term;
  if (model.cfg.variational) {
    detail::require(rng != nullptr, "map_loss: variational model needs an rng");
    std::vector<T> noise(mean_t.numel());
    rng->fill_normal(noise, 1.0);
    auto xi = Tensor<T>::constant(mean_t.shape(), std::move(noise));
    z = add(mean_t, mul(atdn::exp(scale(logvar_t, T(0.5))), xi));
    // KL(N(mu, sigma^2) || N(0, I)) averaged over the batch
    auto kl_inner = sub(add(mul(mean_t, mean_t), atdn::exp(logvar_t)),
                        add_scalar(logvar_t, T(1)));
    kl_term = scale(sum(kl_inner), T(0.5) / T(b));
  }

  MapLossParts<T> parts;
  Tensor<T> edl_term;
  if (cfg.lambda_edl > 0.0) {
    std::vector<Tensor<T>> rows;
    for (long i = 0; i < b; ++i)
      rows.push_back(reshape(slice(z, 0, i, 1), {model.cfg.embed_dim}));
    edl_term = edl(rows, positions, cfg.triple_stride);
    parts.edl = double(edl_term.value()[0]);
  }

  if (cfg.edl_only) {
    detail::require(edl_term.defined(), "map_loss: edl_only requires lambda_edl > 0");
    parts.total = scale(edl_term, T(cfg.lambda_edl));
    return parts;
  }

  auto recon = model.decode(z);
  auto diff = sub(recon, batch);
  Tensor<T> total = mean(mul(diff, diff));
  parts.recon = double(total.value()[0]);
  if (kl_term.defined()) {
    parts.kl = double(kl_term.value()[0]);
    total = add(total, scale(kl_term, T(cfg.beta_kl)));
  }
  if (edl_term.defined()) total = add(total, scale(edl_term, T(cfg.lambda_edl)));
  parts.total = total;
  return parts;
}

struct MapTrainResult {
  std::vector<double> epoch_loss;
  std::vector<double> epoch_edl;
  long steps = 0;
  long faults = 0;
};

MapTrainResult train_map(MapModel<float>& model,
                         const std::vector<Keyframe>& keyframes,
                         const MapTrainConfig& cfg, std::uint64_t seed);

// --- keyframe selection -----------------------------------------------------------

struct KeyframePolicy {
  enum class Kind { Stride, Motion } kind = Kind::Stride;
  long stride = 10;
  double dist = 1.0;    // metres, Motion policy
  double angle = 0.2;   // radians, Motion policy
};

// First frame always selected. Stride k keeps every k-th frame; Motion starts
// a new keyframe when translation or rotation since the last one reaches the
// thresholds.
std::vector<std::int64_t> select_keyframes(const Trajectory& traj,
                                           const KeyframePolicy& policy);

}  // namespace atdn
