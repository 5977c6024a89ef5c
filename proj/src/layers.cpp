#include "relx/layers.hpp"

#include <cassert>

#include "relx/error.hpp"

namespace relx {

namespace {
const char* kGateNames[4] = {"i", "f", "c", "o"};
}

LstmCell make_lstm_cell(ParameterStore& store, const std::string& prefix, size_t input_dim,
                        size_t hidden_dim, Rng& rng) {
  LstmCell cell;
  cell.input_dim = input_dim;
  cell.hidden_dim = hidden_dim;
  for (int g = 0; g < 4; ++g) {
    cell.w[g] = &store.add(prefix + ".w_" + kGateNames[g],
                           uniform_init(hidden_dim, input_dim, rng));
    cell.u[g] = &store.add(prefix + ".u_" + kGateNames[g],
                           uniform_init(hidden_dim, hidden_dim, rng));
    cell.b[g] = &store.add(prefix + ".b_" + kGateNames[g], Tensor(hidden_dim, 1));
  }
  return cell;
}

LstmState lstm_zero_state(Tape& t, const LstmCell& cell) {
  return {t.leaf(Tensor(cell.hidden_dim, 1)), t.leaf(Tensor(cell.hidden_dim, 1))};
}

LstmState lstm_step(Tape& t, const LstmCell& cell, Var x, const LstmState& prev) {
  auto gate = [&](int g) {
    return t.add(t.add(t.matvec(t.param(*cell.w[g]), x), t.matvec(t.param(*cell.u[g]), prev.h)),
                 t.param(*cell.b[g]));
  };
  Var i = t.sigmoid(gate(0));
  Var f = t.sigmoid(gate(1));
  Var cand = t.tanh(gate(2));
  Var c = t.add(t.mul(i, cand), t.mul(f, prev.c));
  Var o = t.sigmoid(gate(3));
  Var h = t.mul(o, t.tanh(c));
  return {h, c};
}

std::vector<Var> lstm_run(Tape& t, const LstmCell& cell, const std::vector<Var>& xs) {
  std::vector<Var> hs;
  hs.reserve(xs.size());
  LstmState s = lstm_zero_state(t, cell);
  for (Var x : xs) {
    s = lstm_step(t, cell, x, s);
    hs.push_back(s.h);
  }
  return hs;
}

BiLstm make_bilstm(ParameterStore& store, const std::string& prefix, size_t input_dim,
                   size_t hidden_per_dir, Rng& rng) {
  BiLstm enc;
  enc.fwd = make_lstm_cell(store, prefix + ".fwd", input_dim, hidden_per_dir, rng);
  enc.bwd = make_lstm_cell(store, prefix + ".bwd", input_dim, hidden_per_dir, rng);
  return enc;
}

std::vector<Var> bilstm_run(Tape& t, const BiLstm& enc, const std::vector<Var>& xs) {
  std::vector<Var> fwd = lstm_run(t, enc.fwd, xs);
  std::vector<Var> rev(xs.rbegin(), xs.rend());
  std::vector<Var> bwd = lstm_run(t, enc.bwd, rev);
  std::vector<Var> out;
  out.reserve(xs.size());
  for (size_t i = 0; i < xs.size(); ++i)
    out.push_back(t.concat({fwd[i], bwd[xs.size() - 1 - i]}));
  return out;
}

ConvFeatureExtractor make_conv(ParameterStore& store, const std::string& prefix, size_t width,
                               size_t input_dim, size_t n_filters, Pooling pooling, Rng& rng) {
  ConvFeatureExtractor conv;
  conv.width = width;
  conv.input_dim = input_dim;
  conv.n_filters = n_filters;
  conv.pooling = pooling;
  conv.filters = &store.add(prefix + ".filters",
                            uniform_init(n_filters, width * input_dim, rng));
  return conv;
}

Var conv_pool(Tape& t, const ConvFeatureExtractor& conv, const std::vector<Var>& xs, size_t lo,
              size_t hi) {
  if (xs.empty()) throw DomainError("conv_pool: empty input sequence");
  assert(lo <= hi && hi < xs.size());
  Var filters = t.param(*conv.filters);
  Var pad;  // created on demand, shared by all windows
  std::vector<Var> scores;
  scores.reserve(hi - lo + 1);
  for (size_t i = lo; i <= hi; ++i) {
    std::vector<Var> window;
    window.reserve(conv.width);
    for (size_t k = 0; k < conv.width; ++k) {
      if (i + k < xs.size()) {
        window.push_back(xs[i + k]);
      } else {
        if (!pad.valid()) pad = t.leaf(Tensor(conv.input_dim, 1));
        window.push_back(pad);
      }
    }
    scores.push_back(t.matvec(filters, t.concat(window)));
  }
  return conv.pooling == Pooling::kMax ? t.colwise_max(scores) : t.colwise_mean(scores);
}

}  // namespace relx
