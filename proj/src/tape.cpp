#include "relx/tape.hpp"

#include <cassert>
#include <cmath>

#include "relx/error.hpp"
#include "relx/kernels.hpp"

namespace relx {

Var Tape::push(Tensor value, std::function<void(Tape&)> back, ParameterStore::Entry* entry) {
  Node n;
  n.grad = Tensor(value.rows(), value.cols());
  n.value = std::move(value);
  n.back = std::move(back);
  n.entry = entry;
  nodes_.push_back(std::move(n));
  return Var{static_cast<uint32_t>(nodes_.size() - 1)};
}

Var Tape::leaf(Tensor value) { return push(std::move(value)); }

Var Tape::param(ParameterStore::Entry& e) { return push(e.value, {}, &e); }

Var Tape::add(Var a, Var b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  assert(ta.same_shape(tb));
  Tensor out(ta.rows(), ta.cols());
  kernels::add(ta.data(), tb.data(), out.data(), out.size());
  Var self = push(std::move(out));
  uint32_t s = self.idx;
  nodes_[s].back = [a, b, s](Tape& t) {
    const Tensor& g = t.nodes_[s].grad;
    kernels::axpy(1.0, g.data(), t.grad(a).data(), g.size());
    kernels::axpy(1.0, g.data(), t.grad(b).data(), g.size());
  };
  return self;
}

Var Tape::addn(const std::vector<Var>& xs) {
  assert(!xs.empty());
  Tensor out = val(xs[0]);
  for (size_t i = 1; i < xs.size(); ++i) {
    assert(val(xs[i]).same_shape(out));
    kernels::axpy(1.0, val(xs[i]).data(), out.data(), out.size());
  }
  Var self = push(std::move(out));
  uint32_t s = self.idx;
  std::vector<Var> ins = xs;
  nodes_[s].back = [ins, s](Tape& t) {
    const Tensor& g = t.nodes_[s].grad;
    for (Var v : ins) kernels::axpy(1.0, g.data(), t.grad(v).data(), g.size());
  };
  return self;
}

Var Tape::sub(Var a, Var b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  assert(ta.same_shape(tb));
  Tensor out(ta.rows(), ta.cols());
  kernels::sub(ta.data(), tb.data(), out.data(), out.size());
  Var self = push(std::move(out));
  uint32_t s = self.idx;
  nodes_[s].back = [a, b, s](Tape& t) {
    const Tensor& g = t.nodes_[s].grad;
    kernels::axpy(1.0, g.data(), t.grad(a).data(), g.size());
    kernels::axpy(-1.0, g.data(), t.grad(b).data(), g.size());
  };
  return self;
}

Var Tape::mul(Var a, Var b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  assert(ta.same_shape(tb));
  Tensor out(ta.rows(), ta.cols());
  kernels::mul(ta.data(), tb.data(), out.data(), out.size());
  Var self = push(std::move(out));
  uint32_t s = self.idx;
  nodes_[s].back = [a, b, s](Tape& t) {
    const Tensor& g = t.nodes_[s].grad;
    kernels::mul_acc(g.data(), t.val(b).data(), t.grad(a).data(), g.size());
    kernels::mul_acc(g.data(), t.val(a).data(), t.grad(b).data(), g.size());
  };
  return self;
}

Var Tape::scale(Var a, double sc) {
  const Tensor& ta = val(a);
  Tensor out(ta.rows(), ta.cols());
  kernels::scale(ta.data(), sc, out.data(), out.size());
  Var self = push(std::move(out));
  uint32_t s = self.idx;
  nodes_[s].back = [a, sc, s](Tape& t) {
    const Tensor& g = t.nodes_[s].grad;
    kernels::axpy(sc, g.data(), t.grad(a).data(), g.size());
  };
  return self;
}

Var Tape::matvec(Var w, Var x) {
  const Tensor& tw = val(w);
  const Tensor& tx = val(x);
  assert(tx.cols() == 1 && tw.cols() == tx.rows());
  Tensor out(tw.rows(), 1);
  for (size_t r = 0; r < tw.rows(); ++r) out[r] = kernels::dot(tw.row(r), tx.data(), tw.cols());
  Var self = push(std::move(out));
  uint32_t s = self.idx;
  nodes_[s].back = [w, x, s](Tape& t) {
    const Tensor& g = t.nodes_[s].grad;
    const Tensor& tw = t.val(w);
    const Tensor& tx = t.val(x);
    Tensor& gw = t.grad(w);
    Tensor& gx = t.grad(x);
    for (size_t r = 0; r < tw.rows(); ++r) {
      kernels::axpy(g[r], tx.data(), gw.row(r), tw.cols());
      kernels::axpy(g[r], tw.row(r), gx.data(), tw.cols());
    }
  };
  return self;
}

Var Tape::dot(Var a, Var b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  assert(ta.size() == tb.size());
  Var self = push(Tensor::scalar(kernels::dot(ta.data(), tb.data(), ta.size())));
  uint32_t s = self.idx;
  nodes_[s].back = [a, b, s](Tape& t) {
    double g = t.nodes_[s].grad[0];
    kernels::axpy(g, t.val(b).data(), t.grad(a).data(), t.val(a).size());
    kernels::axpy(g, t.val(a).data(), t.grad(b).data(), t.val(a).size());
  };
  return self;
}

Var Tape::sigmoid(Var a) {
  const Tensor& ta = val(a);
  Tensor out(ta.rows(), ta.cols());
  for (size_t i = 0; i < ta.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-ta[i]));
  Var self = push(std::move(out));
  uint32_t s = self.idx;
  nodes_[s].back = [a, s](Tape& t) {
    const Tensor& g = t.nodes_[s].grad;
    const Tensor& v = t.nodes_[s].value;
    Tensor& ga = t.grad(a);
    for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * v[i] * (1.0 - v[i]);
  };
  return self;
}

Var Tape::tanh(Var a) {
  const Tensor& ta = val(a);
  Tensor out(ta.rows(), ta.cols());
  for (size_t i = 0; i < ta.size(); ++i) out[i] = std::tanh(ta[i]);
  Var self = push(std::move(out));
  uint32_t s = self.idx;
  nodes_[s].back = [a, s](Tape& t) {
    const Tensor& g = t.nodes_[s].grad;
    const Tensor& v = t.nodes_[s].value;
    Tensor& ga = t.grad(a);
    for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - v[i] * v[i]);
  };
  return self;
}

Var Tape::relu(Var a) {
  const Tensor& ta = val(a);
  Tensor out(ta.rows(), ta.cols());
  for (size_t i = 0; i < ta.size(); ++i) out[i] = ta[i] > 0.0 ? ta[i] : 0.0;
  Var self = push(std::move(out));
  uint32_t s = self.idx;
  nodes_[s].back = [a, s](Tape& t) {
    const Tensor& g = t.nodes_[s].grad;
    const Tensor& v = t.nodes_[s].value;
    Tensor& ga = t.grad(a);
    for (size_t i = 0; i < g.size(); ++i)
      if (v[i] > 0.0) ga[i] += g[i];
  };
  return self;
}

Var Tape::exp(Var a) {
  const Tensor& ta = val(a);
  Tensor out(ta.rows(), ta.cols());
  for (size_t i = 0; i < ta.size(); ++i) out[i] = std::exp(ta[i]);
  Var self = push(std::move(out));
  uint32_t s = self.idx;
  nodes_[s].back = [a, s](Tape& t) {
    const Tensor& g = t.nodes_[s].grad;
    const Tensor& v = t.nodes_[s].value;
    kernels::mul_acc(g.data(), v.data(), t.grad(a).data(), g.size());
  };
  return self;
}

Var Tape::log(Var a) {
  const Tensor& ta = val(a);
  Tensor out(ta.rows(), ta.cols());
  for (size_t i = 0; i < ta.size(); ++i) out[i] = std::log(ta[i]);
  Var self = push(std::move(out));
  uint32_t s = self.idx;
  nodes_[s].back = [a, s](Tape& t) {
    const Tensor& g = t.nodes_[s].grad;
    const Tensor& in = t.val(a);
    Tensor& ga = t.grad(a);
    for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / in[i];
  };
  return self;
}

Var Tape::row(Var m, size_t r) {
  const Tensor& tm = val(m);
  assert(r < tm.rows());
  Tensor out(tm.cols(), 1);
  for (size_t c = 0; c < tm.cols(); ++c) out[c] = tm(r, c);
  Var self = push(std::move(out));
  uint32_t s = self.idx;
  nodes_[s].back = [m, r, s](Tape& t) {
    const Tensor& g = t.nodes_[s].grad;
    kernels::axpy(1.0, g.data(), t.grad(m).row(r), g.size());
  };
  return self;
}

Var Tape::concat(const std::vector<Var>& xs) {
  assert(!xs.empty());
  size_t total = 0;
  for (Var v : xs) {
    assert(val(v).cols() == 1);
    total += val(v).rows();
  }
  Tensor out(total, 1);
  size_t off = 0;
  for (Var v : xs) {
    const Tensor& tv = val(v);
    for (size_t i = 0; i < tv.rows(); ++i) out[off + i] = tv[i];
    off += tv.rows();
  }
  Var self = push(std::move(out));
  uint32_t s = self.idx;
  std::vector<Var> ins = xs;
  nodes_[s].back = [ins, s](Tape& t) {
    const Tensor& g = t.nodes_[s].grad;
    size_t off = 0;
    for (Var v : ins) {
      Tensor& gv = t.grad(v);
      kernels::axpy(1.0, g.data() + off, gv.data(), gv.size());
      off += gv.size();
    }
  };
  return self;
}

Var Tape::slice(Var a, size_t lo, size_t len) {
  const Tensor& ta = val(a);
  assert(ta.cols() == 1 && lo + len <= ta.rows());
  Tensor out(len, 1);
  for (size_t i = 0; i < len; ++i) out[i] = ta[lo + i];
  Var self = push(std::move(out));
  uint32_t s = self.idx;
  nodes_[s].back = [a, lo, len, s](Tape& t) {
    const Tensor& g = t.nodes_[s].grad;
    kernels::axpy(1.0, g.data(), t.grad(a).data() + lo, len);
  };
  return self;
}

Var Tape::sum(Var a) {
  Var self = push(Tensor::scalar(kernels::sum(val(a).data(), val(a).size())));
  uint32_t s = self.idx;
  nodes_[s].back = [a, s](Tape& t) {
    double g = t.nodes_[s].grad[0];
    Tensor& ga = t.grad(a);
    for (size_t i = 0; i < ga.size(); ++i) ga[i] += g;
  };
  return self;
}

Var Tape::pick(Var a, size_t i) {
  assert(i < val(a).size());
  Var self = push(Tensor::scalar(val(a)[i]));
  uint32_t s = self.idx;
  nodes_[s].back = [a, i, s](Tape& t) { t.grad(a)[i] += t.nodes_[s].grad[0]; };
  return self;
}

Var Tape::colwise_max(const std::vector<Var>& cols) {
  assert(!cols.empty());
  size_t d = val(cols[0]).rows();
  Tensor out(d, 1);
  std::vector<uint32_t> arg(d, 0);
  for (size_t j = 0; j < d; ++j) {
    double best = val(cols[0])[j];
    for (size_t i = 1; i < cols.size(); ++i) {
      double x = val(cols[i])[j];
      if (x > best) {
        best = x;
        arg[j] = static_cast<uint32_t>(i);
      }
    }
    out[j] = best;
  }
  Var self = push(std::move(out));
  uint32_t s = self.idx;
  std::vector<Var> ins = cols;
  nodes_[s].back = [ins, arg, s](Tape& t) {
    const Tensor& g = t.nodes_[s].grad;
    for (size_t j = 0; j < g.size(); ++j) t.grad(ins[arg[j]])[j] += g[j];
  };
  return self;
}

Var Tape::colwise_mean(const std::vector<Var>& cols) {
  return scale(addn(cols), 1.0 / static_cast<double>(cols.size()));
}

Var Tape::softmax_masked(Var logits, const std::vector<uint8_t>& allowed) {
  const Tensor& tl = val(logits);
  assert(tl.cols() == 1 && allowed.size() == tl.rows());
  double m = 0.0;
  bool any = false;
  for (size_t i = 0; i < allowed.size(); ++i) {
    if (!allowed[i]) continue;
    m = any ? std::max(m, tl[i]) : tl[i];
    any = true;
  }
  if (!any) throw DomainError("softmax_masked: every position is masked");
  Tensor out(tl.rows(), 1);
  double z = 0.0;
  for (size_t i = 0; i < allowed.size(); ++i) {
    if (allowed[i]) {
      out[i] = std::exp(tl[i] - m);
      z += out[i];
    }
  }
  for (size_t i = 0; i < allowed.size(); ++i)
    if (allowed[i]) out[i] /= z;
  Var self = push(std::move(out));
  uint32_t s = self.idx;
  nodes_[s].back = [logits, s](Tape& t) {
    const Tensor& g = t.nodes_[s].grad;
    const Tensor& p = t.nodes_[s].value;
    double inner = kernels::dot(p.data(), g.data(), p.size());
    Tensor& gl = t.grad(logits);
    for (size_t i = 0; i < p.size(); ++i) gl[i] += p[i] * (g[i] - inner);
  };
  return self;
}

Var Tape::div_by_scalar(Var v, Var sc) {
  const Tensor& tv = val(v);
  assert(val(sc).size() == 1);
  double s0 = val(sc)[0];
  Tensor out(tv.rows(), tv.cols());
  kernels::scale(tv.data(), 1.0 / s0, out.data(), out.size());
  Var self = push(std::move(out));
  uint32_t s = self.idx;
  nodes_[s].back = [v, sc, s](Tape& t) {
    const Tensor& g = t.nodes_[s].grad;
    const Tensor& out = t.nodes_[s].value;
    double s0 = t.val(sc)[0];
    kernels::axpy(1.0 / s0, g.data(), t.grad(v).data(), g.size());
    t.grad(sc)[0] -= kernels::dot(out.data(), g.data(), g.size()) / s0;
  };
  return self;
}

Var Tape::combine(const std::vector<Var>& cols, Var weights) {
  assert(val(weights).size() == cols.size());
  const Tensor& w = val(weights);
  size_t d = val(cols[0]).rows();
  Tensor out(d, 1);
  for (size_t i = 0; i < cols.size(); ++i)
    kernels::axpy(w[i], val(cols[i]).data(), out.data(), d);
  Var self = push(std::move(out));
  uint32_t s = self.idx;
  std::vector<Var> ins = cols;
  nodes_[s].back = [ins, weights, s](Tape& t) {
    const Tensor& g = t.nodes_[s].grad;
    const Tensor& w = t.val(weights);
    Tensor& gw = t.grad(weights);
    for (size_t i = 0; i < ins.size(); ++i) {
      kernels::axpy(w[i], g.data(), t.grad(ins[i]).data(), g.size());
      gw[i] += kernels::dot(t.val(ins[i]).data(), g.data(), g.size());
    }
  };
  return self;
}

Var Tape::dropout(Var a, double rate) {
  if (!training_ || rate <= 0.0) return a;
  assert(dropout_rng_ != nullptr && rate < 1.0);
  const Tensor& ta = val(a);
  Tensor mask(ta.rows(), ta.cols());
  double keep = 1.0 - rate;
  for (size_t i = 0; i < mask.size(); ++i)
    mask[i] = dropout_rng_->bernoulli(keep) ? 1.0 / keep : 0.0;
  return mul(a, leaf(std::move(mask)));
}

void Tape::backward(Var root) {
  assert(val(root).size() == 1);
  grad(root)[0] = 1.0;
  for (size_t i = nodes_.size(); i-- > 0;) {
    if (nodes_[i].back) nodes_[i].back(*this);
  }
  for (Node& n : nodes_) {
    if (n.entry && n.entry->trainable)
      kernels::axpy(1.0, n.grad.data(), n.entry->grad.data(), n.grad.size());
  }
}

}  // namespace relx
