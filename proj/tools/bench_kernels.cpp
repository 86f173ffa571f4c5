// Times the serial reference kernels against the OpenMP versions and checks
// that both produce identical bits. Sizes follow the default VO/mapping
// networks unless overridden: bench_kernels [n] [channels] [hw] [reps]

#include <omp.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <vector>

#include "atdn/kernels.hpp"
#include "atdn/rng.hpp"

using atdn::kernels::Conv2dShape;

namespace {

using Clock = std::chrono::steady_clock;

template <class F>
double time_best_of(int reps, F f) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = Clock::now();
    f();
    best = std::min(best, std::chrono::duration<double>(Clock::now() - t0).count());
  }
  return best;
}

void report(const char* name, double serial_s, double par_s, bool equal) {
  std::printf("%-22s serial %9.4f ms   omp %9.4f ms   speedup %5.2fx   bits %s\n",
              name, serial_s * 1e3, par_s * 1e3, serial_s / par_s,
              equal ? "equal" : "DIFFER");
  if (!equal) std::exit(1);
}

}  // namespace

int main(int argc, char** argv) {
  if (const char* env = std::getenv("ATDN_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) omp_set_num_threads(n);
  }
  const long n = argc > 1 ? std::atol(argv[1]) : 8;
  const long c = argc > 2 ? std::atol(argv[2]) : 16;
  const long hw = argc > 3 ? std::atol(argv[3]) : 64;
  const int reps = argc > 4 ? std::atoi(argv[4]) : 5;

  atdn::Rng rng(42);
  const Conv2dShape shape{n, c, hw, hw, 2 * c, 3, 3, 2, 1};
  std::vector<float> x(n * c * hw * hw), w(2 * c * c * 9), b(2 * c);
  rng.fill_normal(x, 1.0);
  rng.fill_normal(w, 0.1);
  rng.fill_normal(b, 0.1);
  std::vector<float> y1(n * 2 * c * shape.out_h() * shape.out_w()), y2 = y1;

  std::printf("threads: %d\n", omp_get_max_threads());

  report("conv2d forward",
         time_best_of(reps, [&] {
           atdn::kernels::serial::conv2d(x.data(), w.data(), b.data(), y1.data(), shape);
         }),
         time_best_of(reps, [&] {
           atdn::kernels::par::conv2d(x.data(), w.data(), b.data(), y2.data(), shape);
         }),
         std::memcmp(y1.data(), y2.data(), y1.size() * sizeof(float)) == 0);

  std::vector<float> dy(y1.size());
  rng.fill_normal(dy, 1.0);
  std::vector<float> dx1(x.size()), dx2(x.size());
  report("conv2d grad input",
         time_best_of(reps, [&] {
           atdn::kernels::serial::conv2d_grad_input(dy.data(), w.data(), dx1.data(), shape);
         }),
         time_best_of(reps, [&] {
           atdn::kernels::par::conv2d_grad_input(dy.data(), w.data(), dx2.data(), shape);
         }),
         std::memcmp(dx1.data(), dx2.data(), dx1.size() * sizeof(float)) == 0);

  std::vector<float> dw1(w.size()), dw2(w.size());
  report("conv2d grad weight",
         time_best_of(reps, [&] {
           atdn::kernels::serial::conv2d_grad_weight(dy.data(), x.data(), dw1.data(), shape);
         }),
         time_best_of(reps, [&] {
           atdn::kernels::par::conv2d_grad_weight(dy.data(), x.data(), dw2.data(), shape);
         }),
         std::memcmp(dw1.data(), dw2.data(), dw1.size() * sizeof(float)) == 0);

  const long m = 256, k = 2048, nn = 128;
  std::vector<float> a(m * k), bm(k * nn), p1(m * nn), p2(m * nn);
  rng.fill_normal(a, 1.0);
  rng.fill_normal(bm, 1.0);
  report("matmul",
         time_best_of(reps, [&] {
           atdn::kernels::serial::matmul(a.data(), bm.data(), p1.data(), m, k, nn);
         }),
         time_best_of(reps, [&] {
           atdn::kernels::par::matmul(a.data(), bm.data(), p2.data(), m, k, nn);
         }),
         std::memcmp(p1.data(), p2.data(), p1.size() * sizeof(float)) == 0);

  return 0;
}
