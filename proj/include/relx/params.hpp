#pragma once

#include <cstdint>
#include <deque>
#include <string>
#include <unordered_map>
#include <vector>

#include "relx/error.hpp"
#include "relx/rng.hpp"
#include "relx/tensor.hpp"

namespace relx {

// Named trainable tensors plus their gradient buffers. Entries live in a
// deque so pointers handed to layer structs stay valid as the store grows;
// iteration order is insertion order, which fixes the serialization layout
// and the optimizer update order.
class ParameterStore {
 public:
  struct Entry {
    std::string name;
    Tensor value;
    Tensor grad;
    bool trainable = true;
  };

  Entry& add(const std::string& name, Tensor init, bool trainable = true) {
    if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
    Entry e;
    e.name = name;
    e.grad = Tensor(init.rows(), init.cols());
    e.value = std::move(init);
    e.trainable = trainable;
    entries_.push_back(std::move(e));
    index_[name] = entries_.size() - 1;
    return entries_.back();
  }

  bool has(const std::string& name) const { return index_.count(name) != 0; }

  Entry& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
    return entries_[it->second];
  }
  const Entry& at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
    return entries_[it->second];
  }

  std::deque<Entry>& entries() { return entries_; }
  const std::deque<Entry>& entries() const { return entries_; }
  size_t size() const { return entries_.size(); }

  void zero_grads() {
    for (auto& e : entries_) e.grad.fill(0.0);
  }

  size_t trainable_scalars() const {
    size_t n = 0;
    for (const auto& e : entries_)
      if (e.trainable) n += e.value.size();
    return n;
  }

 private:
  std::deque<Entry> entries_;
  std::unordered_map<std::string, size_t> index_;
};

// Seeded uniform init in [-0.1, 0.1]; weight matrices get this, biases stay zero.
inline Tensor uniform_init(size_t rows, size_t cols, Rng& rng, double lo = -0.1,
                           double hi = 0.1) {
  Tensor t(rows, cols);
  for (size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

}  // namespace relx
