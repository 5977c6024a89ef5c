#include "relx/kernels.hpp"

#include <algorithm>

// Reference kernels. The reductions run four independent accumulator lanes
// and combine them as ((l0+l1)+(l2+l3))+tail; the AVX2 variants replay the
// exact same tree, which is what makes the two backends bit-identical.
// This translation unit is compiled with -ffp-contract=off.
namespace relx::kernels {
namespace {

double dot_scalar(const double* a, const double* b, size_t n) {
  double l0 = 0.0, l1 = 0.0, l2 = 0.0, l3 = 0.0;
  size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    l0 += a[i] * b[i];
    l1 += a[i + 1] * b[i + 1];
    l2 += a[i + 2] * b[i + 2];
    l3 += a[i + 3] * b[i + 3];
  }
  double tail = 0.0;
  for (; i < n; ++i) tail += a[i] * b[i];
  return ((l0 + l1) + (l2 + l3)) + tail;
}

void axpy_scalar(double a, const double* x, double* y, size_t n) {
  for (size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void add_scalar(const double* a, const double* b, double* o, size_t n) {
  for (size_t i = 0; i < n; ++i) o[i] = a[i] + b[i];
}

void sub_scalar(const double* a, const double* b, double* o, size_t n) {
  for (size_t i = 0; i < n; ++i) o[i] = a[i] - b[i];
}

void mul_scalar(const double* a, const double* b, double* o, size_t n) {
  for (size_t i = 0; i < n; ++i) o[i] = a[i] * b[i];
}

void mul_acc_scalar(const double* a, const double* b, double* o, size_t n) {
  for (size_t i = 0; i < n; ++i) o[i] += a[i] * b[i];
}

void scale_scalar(const double* a, double s, double* o, size_t n) {
  for (size_t i = 0; i < n; ++i) o[i] = s * a[i];
}

double sum_scalar(const double* a, size_t n) {
  double l0 = 0.0, l1 = 0.0, l2 = 0.0, l3 = 0.0;
  size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    l0 += a[i];
    l1 += a[i + 1];
    l2 += a[i + 2];
    l3 += a[i + 3];
  }
  double tail = 0.0;
  for (; i < n; ++i) tail += a[i];
  return ((l0 + l1) + (l2 + l3)) + tail;
}

double max_scalar(const double* a, size_t n) {
  if (n < 4) {
    double m = a[0];
    for (size_t i = 1; i < n; ++i) m = std::max(m, a[i]);
    return m;
  }
  double l0 = a[0], l1 = a[1], l2 = a[2], l3 = a[3];
  size_t i = 4;
  for (; i + 4 <= n; i += 4) {
    l0 = std::max(l0, a[i]);
    l1 = std::max(l1, a[i + 1]);
    l2 = std::max(l2, a[i + 2]);
    l3 = std::max(l3, a[i + 3]);
  }
  double m = std::max(std::max(l0, l1), std::max(l2, l3));
  for (; i < n; ++i) m = std::max(m, a[i]);
  return m;
}

}  // namespace

const Ops kScalarOps = {dot_scalar, axpy_scalar, add_scalar,   sub_scalar, mul_scalar,
                        mul_acc_scalar, scale_scalar, sum_scalar, max_scalar};

}  // namespace relx::kernels
