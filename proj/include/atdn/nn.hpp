#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "atdn/rng.hpp"
#include "atdn/tensor.hpp"

namespace atdn {

template <typename T>
struct NamedParam {
  std::string name;
  Tensor<T> tensor;
};

template <typename T>
struct Dense {
  Tensor<T> weight;  // [in, out]
  Tensor<T> bias;    // [out]

  static Dense init(long in, long out, Rng& rng, bool zero_init = false) {
    std::vector<T> w(std::size_t(in) * out, T(0));
    if (!zero_init) rng.fill_normal(w, std::sqrt(2.0 / double(in)));
    Dense d;
    d.weight = Tensor<T>::param({in, out}, std::move(w));
    d.bias = Tensor<T>::param({out}, std::vector<T>(out, T(0)));
    return d;
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    return add_rowvec(matmul(x, weight), bias);
  }

  void collect(const std::string& prefix, std::vector<NamedParam<T>>& out) const {
    out.push_back({prefix + ".weight", weight});
    out.push_back({prefix + ".bias", bias});
  }
};

template <typename T>
struct Conv {
  Tensor<T> weight;  // [F, C, K, K]
  Tensor<T> bias;    // [F]
  long stride = 1;
  long pad = 1;

  static Conv init(long in_c, long out_c, long kernel, long stride, long pad,
                   Rng& rng) {
    std::vector<T> w(std::size_t(out_c) * in_c * kernel * kernel);
    rng.fill_normal(w, std::sqrt(2.0 / double(in_c * kernel * kernel)));
    Conv c;
    c.weight = Tensor<T>::param({out_c, in_c, kernel, kernel}, std::move(w));
    c.bias = Tensor<T>::param({out_c}, std::vector<T>(out_c, T(0)));
    c.stride = stride;
    c.pad = pad;
    return c;
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    return conv2d(x, weight, bias, stride, pad);
  }

  void collect(const std::string& prefix, std::vector<NamedParam<T>>& out) const {
    out.push_back({prefix + ".weight", weight});
    out.push_back({prefix + ".bias", bias});
  }
};

// Decoupled-weight-decay Adam. A step with any non-finite gradient is skipped
// and only counts the fault; EDL denominators can spike early in training and
// a skipped step recovers where an abort would not.
template <typename T>
class AdamW {
 public:
  struct Options {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
  };

  AdamW(std::vector<Tensor<T>> params, Options opt)
      : params_(std::move(params)), opt_(opt) {
    for (const auto& p : params_) {
      m_.emplace_back(p.numel(), T(0));
      v_.emplace_back(p.numel(), T(0));
    }
  }

  // Applies one update with the given learning rate; returns false (and
  // counts a fault) when any gradient is non-finite.
  bool step(double lr) {
    for (auto& p : params_)
      if (p.has_grad())
        for (T g : p.grad())
          if (!std::isfinite(g)) {
            ++fault_count_;
            return false;
          }
    ++step_count_;
    const double bc1 = 1.0 - std::pow(opt_.beta1, double(step_count_));
    const double bc2 = 1.0 - std::pow(opt_.beta2, double(step_count_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto& value = params_[k].value();
      const T* grad = params_[k].has_grad() ? params_[k].grad().data() : nullptr;
      for (std::size_t i = 0; i < value.size(); ++i) {
        const double g = grad ? double(grad[i]) : 0.0;
        double m = double(m_[k][i]) * opt_.beta1 + (1.0 - opt_.beta1) * g;
        double v = double(v_[k][i]) * opt_.beta2 + (1.0 - opt_.beta2) * g * g;
        m_[k][i] = static_cast<T>(m);
        v_[k][i] = static_cast<T>(v);
        double p = double(value[i]);
        p -= lr * opt_.weight_decay * p;
        p -= lr * (m / bc1) / (std::sqrt(v / bc2) + opt_.eps);
        value[i] = static_cast<T>(p);
      }
    }
    return true;
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  long step_count() const { return step_count_; }
  long fault_count() const { return fault_count_; }

 private:
  std::vector<Tensor<T>> params_;
  Options opt_;
  std::vector<std::vector<T>> m_, v_;
  long step_count_ = 0;
  long fault_count_ = 0;
};

// Cosine annealing over explicit segments; the schedule restarts to lr_max at
// each segment boundary and reaches lr_min exactly at the end of the run.
class LrSchedule {
 public:
  LrSchedule(double lr_max, double lr_min, std::vector<long> segment_steps)
      : lr_max_(lr_max), lr_min_(lr_min), segments_(std::move(segment_steps)) {
    detail::require(lr_min_ <= lr_max_, "schedule: lr_min must not exceed lr_max");
    detail::require(!segments_.empty(), "schedule: no segments");
    for (long s : segments_) detail::require(s > 0, "schedule: empty segment");
  }

  long total() const {
    long t = 0;
    for (long s : segments_) t += s;
    return t;
  }

  double at(long t) const {
    if (t < 0 || t > total())
      throw std::out_of_range("schedule step beyond the final segment");
    long start = 0;
    for (std::size_t k = 0; k < segments_.size(); ++k) {
      const long end = start + segments_[k];
      const bool last = k + 1 == segments_.size();
      if (t < end || (last && t == end)) {
        const double local = double(t - start);
        const double span = double(segments_[k]);
        return lr_min_ + 0.5 * (lr_max_ - lr_min_) *
                             (1.0 + std::cos(M_PI * local / span));
      }
      start = end;
    }
    return lr_min_;  // unreachable
  }

  double lr_max() const { return lr_max_; }
  double lr_min() const { return lr_min_; }
  const std::vector<long>& segments() const { return segments_; }

 private:
  double lr_max_, lr_min_;
  std::vector<long> segments_;
};

// --- checkpoint files --------------------------------------------------------
// "ATDNCKPT" | u32 version=1 | entries until EOF:
//   u16 name length | name bytes | u32 rank | u32 extent per rank | f32 payload

std::string serialize_params(const std::vector<NamedParam<float>>& params);
void save_checkpoint(const std::string& path,
                     const std::vector<NamedParam<float>>& params);
// Strict load: entry names, order and shapes must match `params` exactly.
void load_checkpoint(const std::string& path,
                     std::vector<NamedParam<float>>& params,
                     std::size_t max_bytes = std::size_t{1} << 30);
std::array<unsigned char, 32> params_fingerprint(
    const std::vector<NamedParam<float>>& params);

}  // namespace atdn
