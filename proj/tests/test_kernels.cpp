#include <doctest.h>

#include <vector>

#include "atdn/kernels.hpp"
#include "atdn/rng.hpp"

using namespace atdn;
using kernels::Conv2dShape;

namespace {

// The quadruple-loop definition, written independently of the kernels.
std::vector<float> naive_conv(const std::vector<float>& x, const std::vector<float>& w,
                              const std::vector<float>& b, const Conv2dShape& s) {
  std::vector<float> y(s.n * s.f * s.out_h() * s.out_w(), 0.0f);
  for (long n = 0; n < s.n; ++n)
    for (long f = 0; f < s.f; ++f)
      for (long i = 0; i < s.out_h(); ++i)
        for (long j = 0; j < s.out_w(); ++j) {
          float acc = b.empty() ? 0.0f : b[f];
          for (long c = 0; c < s.c; ++c)
            for (long ki = 0; ki < s.kh; ++ki)
              for (long kj = 0; kj < s.kw; ++kj) {
                const long yy = i * s.stride - s.pad + ki;
                const long xx = j * s.stride - s.pad + kj;
                if (yy < 0 || yy >= s.h || xx < 0 || xx >= s.w) continue;
                acc += x[((n * s.c + c) * s.h + yy) * s.w + xx] *
                       w[((f * s.c + c) * s.kh + ki) * s.kw + kj];
              }
          y[((n * s.f + f) * s.out_h() + i) * s.out_w() + j] = acc;
        }
  return y;
}

}  // namespace

TEST_SUITE("kernels") {

TEST_CASE("conv2d matches the naive quadruple-loop oracle bit for bit") {
  Rng rng(1);
  const Conv2dShape cases[] = {
      {1, 1, 5, 5, 1, 3, 3, 1, 0},  // the 3x3-on-5x5 case
      {2, 3, 8, 8, 4, 3, 3, 1, 1},
      {1, 2, 9, 7, 3, 3, 3, 2, 1},
      {1, 1, 4, 4, 2, 1, 1, 1, 0},
  };
  for (const auto& s : cases) {
    CAPTURE(s.h);
    std::vector<float> x(s.n * s.c * s.h * s.w), w(s.f * s.c * s.kh * s.kw), b(s.f);
    rng.fill_normal(x, 1.0);
    rng.fill_normal(w, 0.5);
    rng.fill_normal(b, 0.5);
    const std::vector<float> oracle = naive_conv(x, w, b, s);
    std::vector<float> serial(oracle.size()), par(oracle.size());
    kernels::serial::conv2d(x.data(), w.data(), b.data(), serial.data(), s);
    kernels::par::conv2d(x.data(), w.data(), b.data(), par.data(), s);
    CHECK(serial == oracle);
    CHECK(par == oracle);
  }
}

TEST_CASE("conv2d 3x3 stride 1 no padding yields a 3x3 output") {
  const Conv2dShape s{1, 1, 5, 5, 1, 3, 3, 1, 0};
  CHECK(s.out_h() == 3);
  CHECK(s.out_w() == 3);
}

TEST_CASE("1x1 kernel scales the image elementwise") {
  Rng rng(2);
  const Conv2dShape s{1, 1, 6, 6, 1, 1, 1, 1, 0};
  std::vector<float> x(36), w{1.5f};
  rng.fill_normal(x, 1.0);
  std::vector<float> y(36);
  kernels::par::conv2d(x.data(), w.data(), nullptr, y.data(), s);
  for (int i = 0; i < 36; ++i) CHECK(y[i] == 1.5f * x[i]);
}

TEST_CASE("serial and parallel gradients are bit identical") {
  Rng rng(3);
  const Conv2dShape s{2, 3, 10, 9, 4, 3, 3, 2, 1};
  std::vector<float> x(s.n * s.c * s.h * s.w), w(s.f * s.c * s.kh * s.kw);
  std::vector<float> dy(s.n * s.f * s.out_h() * s.out_w());
  rng.fill_normal(x, 1.0);
  rng.fill_normal(w, 0.5);
  rng.fill_normal(dy, 1.0);

  std::vector<float> dx_s(x.size()), dx_p(x.size());
  kernels::serial::conv2d_grad_input(dy.data(), w.data(), dx_s.data(), s);
  kernels::par::conv2d_grad_input(dy.data(), w.data(), dx_p.data(), s);
  CHECK(dx_s == dx_p);

  std::vector<float> dw_s(w.size()), dw_p(w.size());
  kernels::serial::conv2d_grad_weight(dy.data(), x.data(), dw_s.data(), s);
  kernels::par::conv2d_grad_weight(dy.data(), x.data(), dw_p.data(), s);
  CHECK(dw_s == dw_p);

  std::vector<float> db_s(s.f), db_p(s.f);
  kernels::serial::conv2d_grad_bias(dy.data(), db_s.data(), s);
  kernels::par::conv2d_grad_bias(dy.data(), db_p.data(), s);
  CHECK(db_s == db_p);
}

TEST_CASE("matmul serial/parallel equivalence and identity") {
  Rng rng(4);
  const long m = 17, k = 23, n = 11;
  std::vector<double> a(m * k), b(k * n), y_s(m * n), y_p(m * n);
  rng.fill_normal(a, 1.0);
  rng.fill_normal(b, 1.0);
  kernels::serial::matmul(a.data(), b.data(), y_s.data(), m, k, n);
  kernels::par::matmul(a.data(), b.data(), y_p.data(), m, k, n);
  CHECK(y_s == y_p);

  // identity times A reproduces A
  std::vector<double> eye(9, 0.0);
  eye[0] = eye[4] = eye[8] = 1.0;
  std::vector<double> mat(9), out(9);
  rng.fill_normal(mat, 1.0);
  kernels::par::matmul(eye.data(), mat.data(), out.data(), 3, 3, 3);
  CHECK(out == mat);

  std::vector<double> da_s(m * k), da_p(m * k), db_s(k * n), db_p(k * n);
  std::vector<double> dy(m * n);
  rng.fill_normal(dy, 1.0);
  kernels::serial::matmul_grad_a(dy.data(), b.data(), da_s.data(), m, k, n);
  kernels::par::matmul_grad_a(dy.data(), b.data(), da_p.data(), m, k, n);
  kernels::serial::matmul_grad_b(dy.data(), a.data(), db_s.data(), m, k, n);
  kernels::par::matmul_grad_b(dy.data(), a.data(), db_p.data(), m, k, n);
  CHECK(da_s == da_p);
  CHECK(db_s == db_p);
}

}  // TEST_SUITE
