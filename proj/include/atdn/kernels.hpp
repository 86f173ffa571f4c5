#pragma once

#include <cstdint>

// Dense compute kernels behind the tensor ops. Each kernel exists twice: a
// serial reference under kernels::serial and an OpenMP version under
// kernels::par. Both use identical per-output accumulation order, so results
// are bit-identical for any thread count; tests assert that and the
// atdn_bench tool compares their throughput. Shapes follow NCHW.

namespace atdn::kernels {

struct Conv2dShape {
  long n, c, h, w;     // input
  long f, kh, kw;      // kernel (f output channels)
  long stride, pad;
  long out_h() const { return (h + 2 * pad - kh) / stride + 1; }
  long out_w() const { return (w + 2 * pad - kw) / stride + 1; }
};

namespace serial {

template <typename T>
void matmul(const T* a, const T* b, T* y, long m, long k, long n) {
  for (long i = 0; i < m; ++i)
    for (long j = 0; j < n; ++j) {
      T acc = 0;
      for (long p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      y[i * n + j] = acc;
    }
}

// dA = dY * B^T
template <typename T>
void matmul_grad_a(const T* dy, const T* b, T* da, long m, long k, long n) {
  for (long i = 0; i < m; ++i)
    for (long p = 0; p < k; ++p) {
      T acc = 0;
      for (long j = 0; j < n; ++j) acc += dy[i * n + j] * b[p * n + j];
      da[i * k + p] = acc;
    }
}

// dB = A^T * dY
template <typename T>
void matmul_grad_b(const T* dy, const T* a, T* db, long m, long k, long n) {
  for (long p = 0; p < k; ++p)
    for (long j = 0; j < n; ++j) {
      T acc = 0;
      for (long i = 0; i < m; ++i) acc += a[i * k + p] * dy[i * n + j];
      db[p * n + j] = acc;
    }
}

template <typename T>
void conv2d(const T* x, const T* w, const T* bias, T* y, const Conv2dShape& s) {
  const long oh = s.out_h(), ow = s.out_w();
  for (long n = 0; n < s.n; ++n)
    for (long f = 0; f < s.f; ++f)
      for (long i = 0; i < oh; ++i)
        for (long j = 0; j < ow; ++j) {
          T acc = bias ? bias[f] : T(0);
          for (long c = 0; c < s.c; ++c)
            for (long ki = 0; ki < s.kh; ++ki) {
              const long yy = i * s.stride - s.pad + ki;
              if (yy < 0 || yy >= s.h) continue;
              for (long kj = 0; kj < s.kw; ++kj) {
                const long xx = j * s.stride - s.pad + kj;
                if (xx < 0 || xx >= s.w) continue;
                acc += x[((n * s.c + c) * s.h + yy) * s.w + xx] *
                       w[((f * s.c + c) * s.kh + ki) * s.kw + kj];
              }
            }
          y[((n * s.f + f) * oh + i) * ow + j] = acc;
        }
}

// Gather form: each input cell sums the output positions it contributed to.
template <typename T>
void conv2d_grad_input(const T* dy, const T* w, T* dx, const Conv2dShape& s) {
  const long oh = s.out_h(), ow = s.out_w();
  for (long n = 0; n < s.n; ++n)
    for (long c = 0; c < s.c; ++c)
      for (long yy = 0; yy < s.h; ++yy)
        for (long xx = 0; xx < s.w; ++xx) {
          T acc = 0;
          for (long f = 0; f < s.f; ++f)
            for (long ki = 0; ki < s.kh; ++ki) {
              const long num_i = yy + s.pad - ki;
              if (num_i < 0 || num_i % s.stride) continue;
              const long i = num_i / s.stride;
              if (i >= oh) continue;
              for (long kj = 0; kj < s.kw; ++kj) {
                const long num_j = xx + s.pad - kj;
                if (num_j < 0 || num_j % s.stride) continue;
                const long j = num_j / s.stride;
                if (j >= ow) continue;
                acc += dy[((n * s.f + f) * oh + i) * ow + j] *
                       w[((f * s.c + c) * s.kh + ki) * s.kw + kj];
              }
            }
          dx[((n * s.c + c) * s.h + yy) * s.w + xx] = acc;
        }
}

template <typename T>
void conv2d_grad_weight(const T* dy, const T* x, T* dw, const Conv2dShape& s) {
  const long oh = s.out_h(), ow = s.out_w();
  for (long f = 0; f < s.f; ++f)
    for (long c = 0; c < s.c; ++c)
      for (long ki = 0; ki < s.kh; ++ki)
        for (long kj = 0; kj < s.kw; ++kj) {
          T acc = 0;
          for (long n = 0; n < s.n; ++n)
            for (long i = 0; i < oh; ++i) {
              const long yy = i * s.stride - s.pad + ki;
              if (yy < 0 || yy >= s.h) continue;
              for (long j = 0; j < ow; ++j) {
                const long xx = j * s.stride - s.pad + kj;
                if (xx < 0 || xx >= s.w) continue;
                acc += dy[((n * s.f + f) * oh + i) * ow + j] *
                       x[((n * s.c + c) * s.h + yy) * s.w + xx];
              }
            }
          dw[((f * s.c + c) * s.kh + ki) * s.kw + kj] = acc;
        }
}

template <typename T>
void conv2d_grad_bias(const T* dy, T* db, const Conv2dShape& s) {
  const long oh = s.out_h(), ow = s.out_w();
  for (long f = 0; f < s.f; ++f) {
    T acc = 0;
    for (long n = 0; n < s.n; ++n)
      for (long i = 0; i < oh; ++i)
        for (long j = 0; j < ow; ++j) acc += dy[((n * s.f + f) * oh + i) * ow + j];
    db[f] = acc;
  }
}

}  // namespace serial

namespace par {

template <typename T>
void matmul(const T* a, const T* b, T* y, long m, long k, long n) {
#pragma omp parallel for schedule(static)
  for (long i = 0; i < m; ++i)
    for (long j = 0; j < n; ++j) {
      T acc = 0;
      for (long p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      y[i * n + j] = acc;
    }
}

template <typename T>
void matmul_grad_a(const T* dy, const T* b, T* da, long m, long k, long n) {
#pragma omp parallel for schedule(static)
  for (long i = 0; i < m; ++i)
    for (long p = 0; p < k; ++p) {
      T acc = 0;
      for (long j = 0; j < n; ++j) acc += dy[i * n + j] * b[p * n + j];
      da[i * k + p] = acc;
    }
}

template <typename T>
void matmul_grad_b(const T* dy, const T* a, T* db, long m, long k, long n) {
#pragma omp parallel for schedule(static)
  for (long p = 0; p < k; ++p)
    for (long j = 0; j < n; ++j) {
      T acc = 0;
      for (long i = 0; i < m; ++i) acc += a[i * k + p] * dy[i * n + j];
      db[p * n + j] = acc;
    }
}

template <typename T>
void conv2d(const T* x, const T* w, const T* bias, T* y, const Conv2dShape& s) {
  const long oh = s.out_h(), ow = s.out_w();
#pragma omp parallel for collapse(2) schedule(static)
  for (long n = 0; n < s.n; ++n)
    for (long f = 0; f < s.f; ++f)
      for (long i = 0; i < oh; ++i)
        for (long j = 0; j < ow; ++j) {
          T acc = bias ? bias[f] : T(0);
          for (long c = 0; c < s.c; ++c)
            for (long ki = 0; ki < s.kh; ++ki) {
              const long yy = i * s.stride - s.pad + ki;
              if (yy < 0 || yy >= s.h) continue;
              for (long kj = 0; kj < s.kw; ++kj) {
                const long xx = j * s.stride - s.pad + kj;
                if (xx < 0 || xx >= s.w) continue;
                acc += x[((n * s.c + c) * s.h + yy) * s.w + xx] *
                       w[((f * s.c + c) * s.kh + ki) * s.kw + kj];
              }
            }
          y[((n * s.f + f) * oh + i) * ow + j] = acc;
        }
}

template <typename T>
void conv2d_grad_input(const T* dy, const T* w, T* dx, const Conv2dShape& s) {
  const long oh = s.out_h(), ow = s.out_w();
#pragma omp parallel for collapse(2) schedule(static)
  for (long n = 0; n < s.n; ++n)
    for (long c = 0; c < s.c; ++c)
      for (long yy = 0; yy < s.h; ++yy)
        for (long xx = 0; xx < s.w; ++xx) {
          T acc = 0;
          for (long f = 0; f < s.f; ++f)
            for (long ki = 0; ki < s.kh; ++ki) {
              const long num_i = yy + s.pad - ki;
              if (num_i < 0 || num_i % s.stride) continue;
              const long i = num_i / s.stride;
              if (i >= oh) continue;
              for (long kj = 0; kj < s.kw; ++kj) {
                const long num_j = xx + s.pad - kj;
                if (num_j < 0 || num_j % s.stride) continue;
                const long j = num_j / s.stride;
                if (j >= ow) continue;
                acc += dy[((n * s.f + f) * oh + i) * ow + j] *
                       w[((f * s.c + c) * s.kh + ki) * s.kw + kj];
              }
            }
          dx[((n * s.c + c) * s.h + yy) * s.w + xx] = acc;
        }
}

template <typename T>
void conv2d_grad_weight(const T* dy, const T* x, T* dw, const Conv2dShape& s) {
  const long oh = s.out_h(), ow = s.out_w();
#pragma omp parallel for collapse(2) schedule(static)
  for (long f = 0; f < s.f; ++f)
    for (long c = 0; c < s.c; ++c)
      for (long ki = 0; ki < s.kh; ++ki)
        for (long kj = 0; kj < s.kw; ++kj) {
          T acc = 0;
          for (long n = 0; n < s.n; ++n)
            for (long i = 0; i < oh; ++i) {
              const long yy = i * s.stride - s.pad + ki;
              if (yy < 0 || yy >= s.h) continue;
              for (long j = 0; j < ow; ++j) {
                const long xx = j * s.stride - s.pad + kj;
                if (xx < 0 || xx >= s.w) continue;
                acc += dy[((n * s.f + f) * oh + i) * ow + j] *
                       x[((n * s.c + c) * s.h + yy) * s.w + xx];
              }
            }
          dw[((f * s.c + c) * s.kh + ki) * s.kw + kj] = acc;
        }
}

template <typename T>
void conv2d_grad_bias(const T* dy, T* db, const Conv2dShape& s) {
  const long oh = s.out_h(), ow = s.out_w();
#pragma omp parallel for schedule(static)
  for (long f = 0; f < s.f; ++f) {
    T acc = 0;
    for (long n = 0; n < s.n; ++n)
      for (long i = 0; i < oh; ++i)
        for (long j = 0; j < ow; ++j) acc += dy[((n * s.f + f) * oh + i) * ow + j];
    db[f] = acc;
  }
}

}  // namespace par

}  // namespace atdn::kernels
