#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <tuple>
#include <utility>
#include <vector>

#include "relx/gradcheck.hpp"
#include "relx/layers.hpp"
#include "relx/rng.hpp"

using namespace relx;

namespace {

std::vector<double> column(const Tensor& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

Tensor col_from(std::vector<double> vals) {
  Tensor t(vals.size(), 1);
  for (size_t i = 0; i < vals.size(); ++i) t[i] = vals[i];
  return t;
}

// Plain loop re-implementation of one LSTM step, gate order i, f, g, o.
struct HandLstm {
  std::vector<Tensor> w, u, b;  // per gate
  std::pair<std::vector<double>, std::vector<double>> step(const std::vector<double>& x,
                                                           const std::vector<double>& h,
                                                           const std::vector<double>& c) const {
    size_t hd = b[0].size();
    auto affine = [&](size_t g, size_t r) {
      double s = b[g][r];
      for (size_t k = 0; k < x.size(); ++k) s += w[g](r, k) * x[k];
      for (size_t k = 0; k < h.size(); ++k) s += u[g](r, k) * h[k];
      return s;
    };
    std::vector<double> hn(hd), cn(hd);
    for (size_t r = 0; r < hd; ++r) {
      double i = 1.0 / (1.0 + std::exp(-affine(0, r)));
      double f = 1.0 / (1.0 + std::exp(-affine(1, r)));
      double g = std::tanh(affine(2, r));
      double o = 1.0 / (1.0 + std::exp(-affine(3, r)));
      cn[r] = f * c[r] + i * g;
      hn[r] = o * std::tanh(cn[r]);
    }
    return {hn, cn};
  }
};

HandLstm snapshot(const LstmCell& cell) {
  HandLstm h;
  for (int g = 0; g < 4; ++g) {
    h.w.push_back(cell.w[g]->value);
    h.u.push_back(cell.u[g]->value);
    h.b.push_back(cell.b[g]->value);
  }
  return h;
}

}  // namespace

TEST_CASE("lstm_run matches a plain-loop reimplementation") {
  ParameterStore store;
  Rng rng(31);
  LstmCell cell = make_lstm_cell(store, "cell", 3, 4, rng);
  HandLstm hand = snapshot(cell);

  std::vector<std::vector<double>> xs_raw = {
      {0.5, -1.0, 0.25}, {1.5, 0.0, -0.5}, {-0.75, 0.3, 0.9}};
  Tape t;
  std::vector<Var> xs;
  for (auto& x : xs_raw) xs.push_back(t.leaf(col_from(x)));
  auto hs = lstm_run(t, cell, xs);
  REQUIRE(hs.size() == 3);

  std::vector<double> h(4, 0.0), c(4, 0.0);
  for (size_t step = 0; step < 3; ++step) {
    std::tie(h, c) = hand.step(xs_raw[step], h, c);
    auto got = column(t.val(hs[step]));
    REQUIRE(got.size() == 4);
    for (size_t r = 0; r < 4; ++r) CHECK(got[r] == doctest::Approx(h[r]).epsilon(1e-12));
  }
}

TEST_CASE("bilstm concatenates forward and reversed backward runs") {
  ParameterStore store;
  Rng rng(32);
  BiLstm enc = make_bilstm(store, "enc", 2, 3, rng);
  HandLstm hf = snapshot(enc.fwd), hb = snapshot(enc.bwd);

  std::vector<std::vector<double>> xs_raw = {{1.0, 0.0}, {0.0, 1.0}, {0.5, 0.5}, {-1.0, 2.0}};
  Tape t;
  std::vector<Var> xs;
  for (auto& x : xs_raw) xs.push_back(t.leaf(col_from(x)));
  auto hs = bilstm_run(t, enc, xs);
  REQUIRE(hs.size() == 4);
  REQUIRE(t.val(hs[0]).rows() == 6);

  std::vector<std::vector<double>> fwd, bwd(4);
  std::vector<double> h(3, 0.0), c(3, 0.0);
  for (size_t i = 0; i < 4; ++i) {
    std::tie(h, c) = hf.step(xs_raw[i], h, c);
    fwd.push_back(h);
  }
  h.assign(3, 0.0);
  c.assign(3, 0.0);
  for (size_t i = 4; i-- > 0;) {
    std::tie(h, c) = hb.step(xs_raw[i], h, c);
    bwd[i] = h;
  }
  for (size_t i = 0; i < 4; ++i) {
    auto got = column(t.val(hs[i]));
    for (size_t r = 0; r < 3; ++r) {
      CHECK(got[r] == doctest::Approx(fwd[i][r]).epsilon(1e-12));
      CHECK(got[3 + r] == doctest::Approx(bwd[i][r]).epsilon(1e-12));
    }
  }
}

TEST_CASE("conv_pool matches window enumeration") {
  ParameterStore store;
  Rng rng(33);
  size_t width = 3, dim = 2, nf = 4;
  auto run = [&](Pooling pooling, const char* name) {
    ConvFeatureExtractor conv =
        make_conv(store, std::string("conv_") + name, width, dim, nf, pooling, rng);
    Tensor filt = conv.filters->value;

    std::vector<std::vector<double>> xs_raw = {
        {0.2, -0.4}, {1.0, 0.3}, {-0.6, 0.8}, {0.1, 0.1}, {2.0, -1.5}};
    Tape t;
    std::vector<Var> xs;
    for (auto& x : xs_raw) xs.push_back(t.leaf(col_from(x)));

    size_t lo = 1, hi = 4;
    Var out = conv_pool(t, conv, xs, lo, hi);
    REQUIRE(t.val(out).rows() == nf);

    for (size_t f = 0; f < nf; ++f) {
      std::vector<double> scores;
      for (size_t start = lo; start <= hi; ++start) {
        double s = 0;
        for (size_t k = 0; k < width; ++k) {
          size_t pos = start + k;
          for (size_t d = 0; d < dim; ++d) {
            double x = pos < xs_raw.size() ? xs_raw[pos][d] : 0.0;  // right padding
            s += filt(f, k * dim + d) * x;
          }
        }
        scores.push_back(s);
      }
      double expect = pooling == Pooling::kMax
                          ? *std::max_element(scores.begin(), scores.end())
                          : std::accumulate(scores.begin(), scores.end(), 0.0) / scores.size();
      CHECK(t.val(out)[f] == doctest::Approx(expect).epsilon(1e-12));
    }
  };
  run(Pooling::kMax, "max");
  run(Pooling::kAvg, "avg");
}

TEST_CASE("lstm and conv gradients pass a numeric check") {
  ParameterStore store;
  Rng rng(34);
  LstmCell cell = make_lstm_cell(store, "cell", 2, 3, rng);
  ConvFeatureExtractor conv = make_conv(store, "conv", 2, 3, 2, Pooling::kMax, rng);
  auto& x0 = store.add("x0", uniform_init(2, 1, rng, -1, 1));
  auto& x1 = store.add("x1", uniform_init(2, 1, rng, -1, 1));

  auto report = gradient_check(store, [&](Tape& t) {
    auto hs = lstm_run(t, cell, {t.param(x0), t.param(x1)});
    Var pooled = conv_pool(t, conv, hs, 0, hs.size() - 1);
    return t.sum(t.mul(pooled, pooled));
  });
  INFO("worst " << report.worst_param << "[" << report.worst_flat_index << "]");
  CHECK(report.max_rel_error < 1e-5);
}
