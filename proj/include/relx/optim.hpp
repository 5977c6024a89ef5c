#pragma once

#include <memory>
#include <string>
#include <vector>

#include "relx/params.hpp"

namespace relx {

class Optimizer {
 public:
  virtual ~Optimizer() = default;
  virtual void step(ParameterStore& store) = 0;
};

// theta -= lr * g / (sqrt(accumulated g^2) + eps)
class Adagrad : public Optimizer {
 public:
  explicit Adagrad(double lr, double eps = 1e-8) : lr_(lr), eps_(eps) {}
  void step(ParameterStore& store) override;

 private:
  double lr_, eps_;
  std::vector<Tensor> accum_;
};

class Adam : public Optimizer {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}
  void step(ParameterStore& store) override;

 private:
  double lr_, beta1_, beta2_, eps_;
  size_t t_ = 0;
  std::vector<Tensor> m_, v_;
};

// Scales every trainable gradient by max_norm/norm when the global L2 norm
// exceeds max_norm. Returns the pre-clip norm.
double clip_global_norm(ParameterStore& store, double max_norm);

// Throws ConfigError for names other than "adagrad" / "adam".
std::unique_ptr<Optimizer> make_optimizer(const std::string& name, double lr);

}  // namespace relx
