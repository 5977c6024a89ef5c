#include "relx/gradcheck.hpp"

#include <cmath>
#include <utility>
#include <vector>

#include "relx/error.hpp"
#include "relx/rng.hpp"

namespace relx {

GradCheckReport gradient_check(ParameterStore& store,
                               const std::function<Var(Tape&)>& build_loss, double eps,
                               size_t max_probes, uint64_t seed) {
  if (eps < 1e-6 || eps > 1e-3) throw DomainError("gradient_check: eps outside [1e-6, 1e-3]");

  auto eval = [&]() {
    Tape t(false, nullptr);
    Var loss = build_loss(t);
    if (t.val(loss).size() != 1) throw DomainError("gradient_check: loss is not scalar");
    return t.val(loss)[0];
  };

  store.zero_grads();
  {
    Tape t(false, nullptr);
    Var loss = build_loss(t);
    if (t.val(loss).size() != 1) throw DomainError("gradient_check: loss is not scalar");
    t.backward(loss);
  }

  std::vector<std::pair<size_t, size_t>> sites;  // (entry position, flat index)
  for (size_t e = 0; e < store.size(); ++e) {
    const auto& entry = store.entries()[e];
    if (!entry.trainable) continue;
    for (size_t i = 0; i < entry.value.size(); ++i) sites.emplace_back(e, i);
  }
  if (sites.empty()) throw DomainError("gradient_check: no trainable scalars");

  if (sites.size() > max_probes) {
    Rng rng(seed);
    // Partial Fisher-Yates: the first max_probes slots become the sample.
    for (size_t i = 0; i < max_probes; ++i) {
      size_t j = i + static_cast<size_t>(rng.below(sites.size() - i));
      std::swap(sites[i], sites[j]);
    }
    sites.resize(max_probes);
  }

  GradCheckReport report;
  for (auto [e, i] : sites) {
    auto& entry = store.entries()[e];
    double saved = entry.value[i];
    entry.value[i] = saved + eps;
    double f_plus = eval();
    entry.value[i] = saved - eps;
    double f_minus = eval();
    entry.value[i] = saved;

    double gn = (f_plus - f_minus) / (2.0 * eps);
    double ga = entry.grad[i];
    double rel = std::fabs(ga - gn) / std::max({std::fabs(ga), std::fabs(gn), 1e-8});
    ++report.probes;
    if (rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_param = entry.name;
      report.worst_flat_index = i;
      report.worst_analytic = ga;
      report.worst_numeric = gn;
    }
  }
  return report;
}

}  // namespace relx
