#pragma once

#include <functional>
#include <string>

#include "relx/params.hpp"
#include "relx/tape.hpp"

namespace relx {

struct GradCheckReport {
  double max_rel_error = 0.0;
  size_t probes = 0;
  std::string worst_param;
  size_t worst_flat_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// Central-difference check of the tape gradients. build_loss must construct
// the same scalar loss on every call (evaluation mode, no dropout). Checks
// every trainable scalar when there are at most max_probes of them, otherwise
// a seeded uniform sample of max_probes scalars. Relative error per scalar is
// |ga - gn| / max(|ga|, |gn|, 1e-8). eps must lie in [1e-6, 1e-3].
GradCheckReport gradient_check(ParameterStore& store,
                               const std::function<Var(Tape&)>& build_loss, double eps = 1e-5,
                               size_t max_probes = 240, uint64_t seed = 7);

}  // namespace relx
