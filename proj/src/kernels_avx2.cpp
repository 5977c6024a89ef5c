#include "relx/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include <algorithm>

// AVX2 kernels. Vector lane k mirrors scalar accumulator lane k; the
// horizontal reduce uses the same ((l0+l1)+(l2+l3))+tail order as the scalar
// reference, and multiplies/adds stay separate instructions (no FMA), so the
// output matches the scalar backend bit for bit. Compiled with
// -mavx2 -ffp-contract=off.
namespace relx::kernels {
namespace {

inline double reduce_lanes(__m256d v, double tail) {
  alignas(32) double l[4];
  _mm256_store_pd(l, v);
  return ((l[0] + l[1]) + (l[2] + l[3])) + tail;
}

double dot_avx2(const double* a, const double* b, size_t n) {
  __m256d acc = _mm256_setzero_pd();
  size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d va = _mm256_loadu_pd(a + i);
    __m256d vb = _mm256_loadu_pd(b + i);
    acc = _mm256_add_pd(acc, _mm256_mul_pd(va, vb));
  }
  double tail = 0.0;
  for (; i < n; ++i) tail += a[i] * b[i];
  return reduce_lanes(acc, tail);
}

void axpy_avx2(double a, const double* x, double* y, size_t n) {
  __m256d va = _mm256_set1_pd(a);
  size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d vy = _mm256_loadu_pd(y + i);
    __m256d vx = _mm256_loadu_pd(x + i);
    _mm256_storeu_pd(y + i, _mm256_add_pd(vy, _mm256_mul_pd(va, vx)));
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

void add_avx2(const double* a, const double* b, double* o, size_t n) {
  size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(o + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) o[i] = a[i] + b[i];
}

void sub_avx2(const double* a, const double* b, double* o, size_t n) {
  size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(o + i, _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) o[i] = a[i] - b[i];
}

void mul_avx2(const double* a, const double* b, double* o, size_t n) {
  size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(o + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) o[i] = a[i] * b[i];
}

void mul_acc_avx2(const double* a, const double* b, double* o, size_t n) {
  size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d prod = _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
    _mm256_storeu_pd(o + i, _mm256_add_pd(_mm256_loadu_pd(o + i), prod));
  }
  for (; i < n; ++i) o[i] += a[i] * b[i];
}

void scale_avx2(const double* a, double s, double* o, size_t n) {
  __m256d vs = _mm256_set1_pd(s);
  size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(o + i, _mm256_mul_pd(vs, _mm256_loadu_pd(a + i)));
  for (; i < n; ++i) o[i] = s * a[i];
}

double sum_avx2(const double* a, size_t n) {
  __m256d acc = _mm256_setzero_pd();
  size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(a + i));
  double tail = 0.0;
  for (; i < n; ++i) tail += a[i];
  return reduce_lanes(acc, tail);
}

double max_avx2(const double* a, size_t n) {
  if (n < 4) {
    double m = a[0];
    for (size_t i = 1; i < n; ++i) m = std::max(m, a[i]);
    return m;
  }
  __m256d acc = _mm256_loadu_pd(a);
  size_t i = 4;
  for (; i + 4 <= n; i += 4) acc = _mm256_max_pd(acc, _mm256_loadu_pd(a + i));
  alignas(32) double l[4];
  _mm256_store_pd(l, acc);
  double m = std::max(std::max(l[0], l[1]), std::max(l[2], l[3]));
  for (; i < n; ++i) m = std::max(m, a[i]);
  return m;
}

}  // namespace

const Ops kAvx2Ops = {dot_avx2, axpy_avx2, add_avx2,   sub_avx2, mul_avx2,
                      mul_acc_avx2, scale_avx2, sum_avx2, max_avx2};

}  // namespace relx::kernels

#endif  // x86-64
