#include "relx/kernels.hpp"

#include <cstdlib>
#include <cstring>

namespace relx::kernels {
namespace {

bool avx2_available() {
#if (defined(__x86_64__) || defined(_M_X64)) && (defined(__GNUC__) || defined(__clang__))
  return __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}

struct Selected {
  const Ops* ops;
  Backend backend;
};

Selected resolve() {
  bool want_avx2 = avx2_available();
  if (const char* env = std::getenv("RELX_KERNELS")) {
    if (std::strcmp(env, "scalar") == 0) want_avx2 = false;
    // "avx2" keeps the CPU-gated default; anything else is ignored.
  }
#if defined(__x86_64__) || defined(_M_X64)
  if (want_avx2) return {&kAvx2Ops, Backend::kAvx2};
#endif
  return {&kScalarOps, Backend::kScalar};
}

Selected& selected() {
  static Selected s = resolve();
  return s;
}

}  // namespace

const Ops& active() { return *selected().ops; }

Backend active_backend() { return selected().backend; }

std::string backend_name() {
  return selected().backend == Backend::kAvx2 ? "avx2" : "scalar";
}

bool force_backend(Backend b) {
  if (b == Backend::kScalar) {
    selected() = {&kScalarOps, Backend::kScalar};
    return true;
  }
#if defined(__x86_64__) || defined(_M_X64)
  if (avx2_available()) {
    selected() = {&kAvx2Ops, Backend::kAvx2};
    return true;
  }
#endif
  return false;
}

}  // namespace relx::kernels
