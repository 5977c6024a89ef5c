#include "relx/optim.hpp"

#include <cmath>

#include "relx/error.hpp"
#include "relx/kernels.hpp"

namespace relx {

namespace {
// Accumulator slots are keyed by entry position; entries are append-only so
// lazily growing the slot vectors keeps them aligned.
void sync_slots(std::vector<Tensor>& slots, const ParameterStore& store) {
  while (slots.size() < store.size()) {
    const auto& e = store.entries()[slots.size()];
    slots.emplace_back(e.value.rows(), e.value.cols());
  }
}
}  // namespace

void Adagrad::step(ParameterStore& store) {
  sync_slots(accum_, store);
  size_t k = 0;
  for (auto& e : store.entries()) {
    Tensor& acc = accum_[k++];
    if (!e.trainable) continue;
    for (size_t i = 0; i < e.value.size(); ++i) {
      double g = e.grad[i];
      acc[i] += g * g;
      e.value[i] -= lr_ * g / (std::sqrt(acc[i]) + eps_);
    }
  }
}

void Adam::step(ParameterStore& store) {
  sync_slots(m_, store);
  sync_slots(v_, store);
  ++t_;
  double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  size_t k = 0;
  for (auto& e : store.entries()) {
    Tensor& m = m_[k];
    Tensor& v = v_[k];
    ++k;
    if (!e.trainable) continue;
    for (size_t i = 0; i < e.value.size(); ++i) {
      double g = e.grad[i];
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
      double mhat = m[i] / bc1;
      double vhat = v[i] / bc2;
      e.value[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

double clip_global_norm(ParameterStore& store, double max_norm) {
  double sq = 0.0;
  for (const auto& e : store.entries()) {
    if (!e.trainable) continue;
    sq += kernels::dot(e.grad.data(), e.grad.data(), e.grad.size());
  }
  double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    double s = max_norm / norm;
    for (auto& e : store.entries()) {
      if (!e.trainable) continue;
      kernels::scale(e.grad.data(), s, e.grad.data(), e.grad.size());
    }
  }
  return norm;
}

std::unique_ptr<Optimizer> make_optimizer(const std::string& name, double lr) {
  if (name == "adagrad") return std::make_unique<Adagrad>(lr);
  if (name == "adam") return std::make_unique<Adam>(lr);
  throw ConfigError("unknown optimizer: " + name);
}

}  // namespace relx
