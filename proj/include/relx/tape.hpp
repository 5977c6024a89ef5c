#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "relx/params.hpp"
#include "relx/rng.hpp"
#include "relx/tensor.hpp"

namespace relx {

struct Var {
  uint32_t idx = UINT32_MAX;
  bool valid() const { return idx != UINT32_MAX; }
};

// Recording tape for reverse-mode differentiation. A model forward pass
// appends nodes (column vectors, matrices, 1x1 scalars); backward() replays
// them in reverse and finally folds leaf gradients into the ParameterStore.
// One tape per batch; the tape owns all intermediate values.
class Tape {
 public:
  explicit Tape(bool training = false, Rng* dropout_rng = nullptr)
      : training_(training), dropout_rng_(dropout_rng) {}

  bool training() const { return training_; }
  size_t size() const { return nodes_.size(); }

  const Tensor& val(Var v) const { return nodes_[v.idx].value; }
  Tensor& grad(Var v) { return nodes_[v.idx].grad; }

  // Leaves.
  Var leaf(Tensor value);               // constant, no gradient flows out
  Var param(ParameterStore::Entry& e);  // gradient accumulates into e.grad

  // Elementwise and linear ops. Shapes must agree where not stated.
  Var add(Var a, Var b);
  Var addn(const std::vector<Var>& xs);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double s);
  Var matvec(Var w, Var x);  // (r x c) * (c x 1) -> (r x 1)
  Var dot(Var a, Var b);     // -> 1x1
  Var sigmoid(Var a);
  Var tanh(Var a);
  Var relu(Var a);
  Var exp(Var a);
  Var log(Var a);

  // Row r of a matrix node as a column vector (embedding lookup).
  Var row(Var m, size_t r);

  // Structure ops over column vectors.
  Var concat(const std::vector<Var>& xs);
  Var slice(Var a, size_t lo, size_t len);
  Var sum(Var a);             // -> 1x1
  Var pick(Var a, size_t i);  // -> 1x1
  Var colwise_max(const std::vector<Var>& cols);  // per-component max, grad to argmax
  Var colwise_mean(const std::vector<Var>& cols);

  // p_i = allowed_i ? exp(l_i - max) / Z : 0 exactly. At least one position
  // must be allowed.
  Var softmax_masked(Var logits, const std::vector<uint8_t>& allowed);

  Var div_by_scalar(Var v, Var s);  // v / s, s is 1x1

  // sum_i weights[i] * cols[i]; weights is a column vector of length cols.size().
  Var combine(const std::vector<Var>& cols, Var weights);

  // Inverted dropout; identity when not training or rate == 0.
  Var dropout(Var a, double rate);

  // Seeds d(root)/d(root) = 1, propagates, then adds leaf grads into their
  // ParameterStore entries. root must be 1x1.
  void backward(Var root);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::function<void(Tape&)> back;  // empty for leaves
    ParameterStore::Entry* entry = nullptr;
  };

  Var push(Tensor value, std::function<void(Tape&)> back = {},
           ParameterStore::Entry* entry = nullptr);

  std::vector<Node> nodes_;
  bool training_;
  Rng* dropout_rng_;
};

}  // namespace relx
