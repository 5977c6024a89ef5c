#pragma once

#include <string>
#include <vector>

#include "relx/params.hpp"
#include "relx/rng.hpp"
#include "relx/tape.hpp"

namespace relx {

// Gate order everywhere: input, forget, candidate, output.
struct LstmCell {
  ParameterStore::Entry* w[4];
  ParameterStore::Entry* u[4];
  ParameterStore::Entry* b[4];
  size_t input_dim = 0;
  size_t hidden_dim = 0;
};

LstmCell make_lstm_cell(ParameterStore& store, const std::string& prefix, size_t input_dim,
                        size_t hidden_dim, Rng& rng);

struct LstmState {
  Var h, c;
};

LstmState lstm_zero_state(Tape& t, const LstmCell& cell);
LstmState lstm_step(Tape& t, const LstmCell& cell, Var x, const LstmState& prev);

// Hidden vectors for every step, left to right.
std::vector<Var> lstm_run(Tape& t, const LstmCell& cell, const std::vector<Var>& xs);

struct BiLstm {
  LstmCell fwd, bwd;
};

BiLstm make_bilstm(ParameterStore& store, const std::string& prefix, size_t input_dim,
                   size_t hidden_per_dir, Rng& rng);

// h_t = forward state at t concatenated with backward state at t.
std::vector<Var> bilstm_run(Tape& t, const BiLstm& enc, const std::vector<Var>& xs);

enum class Pooling { kMax, kAvg };

// Width-k filter bank applied to sliding windows of concatenated input
// vectors, pooled per filter across window positions. Scores are raw dot
// products; no bias, no activation.
struct ConvFeatureExtractor {
  ParameterStore::Entry* filters = nullptr;  // (n_filters x width*input_dim)
  size_t width = 0;
  size_t input_dim = 0;
  size_t n_filters = 0;
  Pooling pooling = Pooling::kMax;
};

ConvFeatureExtractor make_conv(ParameterStore& store, const std::string& prefix, size_t width,
                               size_t input_dim, size_t n_filters, Pooling pooling, Rng& rng);

// Windows start at every position in [lo, hi] (inclusive, clamped to the
// sequence) and zero vectors pad past the right end.
Var conv_pool(Tape& t, const ConvFeatureExtractor& conv, const std::vector<Var>& xs, size_t lo,
              size_t hi);

}  // namespace relx
