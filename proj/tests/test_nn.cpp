#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>

#include "atdn/errors.hpp"
#include "atdn/nn.hpp"
#include "atdn/rng.hpp"

using namespace atdn;

namespace {

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_SUITE("nn") {

TEST_CASE("adamw: zero grad and zero decay leaves parameters unchanged") {
  auto p = Tensor<float>::param({3}, {1.0f, -2.0f, 3.0f});
  p.zero_grad();
  AdamW<float> opt({p}, {});
  CHECK(opt.step(1e-3));
  CHECK(p.value() == std::vector<float>{1.0f, -2.0f, 3.0f});
}

TEST_CASE("adamw: first step against the hand-stepped oracle") {
  auto p = Tensor<float>::param({1}, {0.5f});
  p.zero_grad();
  p.node()->grad[0] = 1.0f;
  AdamW<float> opt({p}, {});
  CHECK(opt.step(1e-3));
  // m=0.1, v=0.001; bias-corrected m_hat = 1, v_hat = 1;
  // update = lr * 1 / (1 + 1e-8) ~= lr
  const double expected = 0.5 - 1e-3 * (0.1 / 0.1) / (std::sqrt(0.001 / 0.001) + 1e-8);
  CHECK(p.value()[0] == doctest::Approx(expected).epsilon(1e-7));
  CHECK(0.5f - p.value()[0] == doctest::Approx(1e-3).epsilon(1e-4));
}

TEST_CASE("adamw: decoupled weight decay with zero grad") {
  auto p = Tensor<float>::param({1}, {2.0f});
  p.zero_grad();
  AdamW<float>::Options opt_cfg;
  opt_cfg.weight_decay = 0.1;
  AdamW<float> opt({p}, opt_cfg);
  CHECK(opt.step(1e-2));
  CHECK(p.value()[0] == doctest::Approx(2.0 * (1.0 - 1e-2 * 0.1)).epsilon(1e-7));
}

TEST_CASE("adamw: non-finite gradient skips the step and counts a fault") {
  auto p = Tensor<float>::param({2}, {1.0f, 1.0f});
  p.zero_grad();
  p.node()->grad[1] = std::numeric_limits<float>::quiet_NaN();
  AdamW<float> opt({p}, {});
  CHECK_FALSE(opt.step(1e-3));
  CHECK(opt.fault_count() == 1);
  CHECK(opt.step_count() == 0);
  CHECK(p.value()[0] == 1.0f);
}

TEST_CASE("cosine schedule endpoints, midpoint, monotonicity") {
  LrSchedule sched(1e-3, 1e-6, {1000});
  CHECK(sched.at(0) == 1e-3);
  CHECK(sched.at(1000) == 1e-6);
  CHECK(sched.at(500) == doctest::Approx((1e-3 + 1e-6) / 2).epsilon(1e-15));
  double prev = sched.at(0);
  for (long t = 1; t <= 1000; ++t) {
    const double lr = sched.at(t);
    CHECK(lr <= prev);
    prev = lr;
  }
  CHECK_THROWS_AS(sched.at(1001), std::out_of_range);
  CHECK_THROWS_AS(sched.at(-1), std::out_of_range);
}

TEST_CASE("cosine schedule restarts at segment boundaries") {
  LrSchedule sched(1e-3, 1e-6, {100, 200, 300});
  CHECK(sched.at(0) == 1e-3);
  CHECK(sched.at(100) == 1e-3);  // first step of stage 2
  CHECK(sched.at(300) == 1e-3);  // first step of stage 3
  CHECK(sched.at(600) == 1e-6);  // end of the final stage
  CHECK(sched.at(99) > 1e-5);    // close to but not at the restart
}

TEST_CASE("checkpoint round trip is bit exact") {
  Rng rng(6);
  std::vector<float> w(12), b(4);
  rng.fill_normal(w, 1.0);
  rng.fill_normal(b, 1.0);
  std::vector<NamedParam<float>> params = {
      {"layer.weight", Tensor<float>::param({3, 4}, w)},
      {"layer.bias", Tensor<float>::param({4}, b)},
  };
  const std::string path = temp_path("atdn_test_ckpt.bin");
  save_checkpoint(path, params);

  std::vector<NamedParam<float>> loaded = {
      {"layer.weight", Tensor<float>::param({3, 4}, std::vector<float>(12, 0.0f))},
      {"layer.bias", Tensor<float>::param({4}, std::vector<float>(4, 0.0f))},
  };
  load_checkpoint(path, loaded);
  CHECK(loaded[0].tensor.value() == w);
  CHECK(loaded[1].tensor.value() == b);

  // serialized bytes are stable, so fingerprints agree
  CHECK(params_fingerprint(params) == params_fingerprint(loaded));
  std::filesystem::remove(path);
}

TEST_CASE("checkpoint detects mismatch and truncation") {
  std::vector<NamedParam<float>> params = {
      {"p", Tensor<float>::param({2}, {1.0f, 2.0f})}};
  const std::string path = temp_path("atdn_test_ckpt2.bin");
  save_checkpoint(path, params);

  std::vector<NamedParam<float>> wrong_name = {
      {"q", Tensor<float>::param({2}, {0.0f, 0.0f})}};
  CHECK_THROWS_AS(load_checkpoint(path, wrong_name), DataError);

  std::vector<NamedParam<float>> wrong_shape = {
      {"p", Tensor<float>::param({3}, {0.0f, 0.0f, 0.0f})}};
  CHECK_THROWS_AS(load_checkpoint(path, wrong_shape), DataError);

  // truncate the payload
  std::string bytes = serialize_params(params);
  bytes.resize(bytes.size() - 3);
  {
    std::ofstream out(path, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  std::vector<NamedParam<float>> target = {
      {"p", Tensor<float>::param({2}, {0.0f, 0.0f})}};
  CHECK_THROWS_WITH_AS(load_checkpoint(path, target),
                       doctest::Contains("truncated"), DataError);
  std::filesystem::remove(path);
}

TEST_CASE("dense and conv layers expose their parameters in fixed order") {
  Rng rng(7);
  auto d = Dense<float>::init(4, 3, rng);
  std::vector<NamedParam<float>> out;
  d.collect("d", out);
  REQUIRE(out.size() == 2);
  CHECK(out[0].name == "d.weight");
  CHECK(out[1].name == "d.bias");

  auto c = Conv<float>::init(2, 5, 3, 2, 1, rng);
  CHECK(c.weight.shape() == std::vector<long>{5, 2, 3, 3});
  // zero-init dense stays zero
  auto z = Dense<float>::init(4, 2, rng, true);
  for (float v : z.weight.value()) CHECK(v == 0.0f);
}

}  // TEST_SUITE
