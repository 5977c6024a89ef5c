#pragma once

#include <cstddef>
#include <string>

// Low-level dense f64 kernels behind the tensor ops. Every kernel has a
// scalar reference implementation and, on x86-64, an AVX2 variant. The two
// paths share one accumulation tree (4 independent lanes, fixed reduction
// order, no FMA contraction) so they produce bit-identical results; the
// equivalence tests assert exact equality, not a tolerance.
namespace relx::kernels {

enum class Backend { kScalar, kAvx2 };

struct Ops {
  double (*dot)(const double*, const double*, size_t);
  void (*axpy)(double, const double*, double*, size_t);          // y += a*x
  void (*add)(const double*, const double*, double*, size_t);    // out = a+b
  void (*sub)(const double*, const double*, double*, size_t);    // out = a-b
  void (*mul)(const double*, const double*, double*, size_t);    // out = a*b
  void (*mul_acc)(const double*, const double*, double*, size_t);  // out += a*b
  void (*scale)(const double*, double, double*, size_t);         // out = s*a
  double (*sum)(const double*, size_t);
  double (*max)(const double*, size_t);                          // n >= 1
};

extern const Ops kScalarOps;
#if defined(__x86_64__) || defined(_M_X64)
extern const Ops kAvx2Ops;
#endif

// Active table, resolved once at startup: AVX2 when the CPU supports it,
// scalar otherwise. RELX_KERNELS=scalar|avx2 in the environment overrides.
const Ops& active();
Backend active_backend();
std::string backend_name();

// Test hook. Returns false if the requested backend is unavailable.
bool force_backend(Backend b);

inline double dot(const double* a, const double* b, size_t n) { return active().dot(a, b, n); }
inline void axpy(double a, const double* x, double* y, size_t n) { active().axpy(a, x, y, n); }
inline void add(const double* a, const double* b, double* o, size_t n) { active().add(a, b, o, n); }
inline void sub(const double* a, const double* b, double* o, size_t n) { active().sub(a, b, o, n); }
inline void mul(const double* a, const double* b, double* o, size_t n) { active().mul(a, b, o, n); }
inline void mul_acc(const double* a, const double* b, double* o, size_t n) {
  active().mul_acc(a, b, o, n);
}
inline void scale(const double* a, double s, double* o, size_t n) { active().scale(a, s, o, n); }
inline double sum(const double* a, size_t n) { return active().sum(a, n); }
inline double max(const double* a, size_t n) { return active().max(a, n); }

}  // namespace relx::kernels
