#include <doctest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include "relx/checkpoint.hpp"
#include "relx/error.hpp"
#include "relx/optim.hpp"
#include "relx/tape.hpp"
#include "relx/trainer.hpp"
#include "test_util.hpp"

using namespace relx;
using testutil::TempDir;

TEST_CASE("adagrad step matches the closed form") {
  ParameterStore store;
  Tensor w(2, 1);
  w[0] = 1.0;
  w[1] = -2.0;
  auto& e = store.add("w", w);
  Adagrad opt(0.5);

  e.grad[0] = 0.4;
  e.grad[1] = -0.2;
  opt.step(store);
  // accum = g^2, theta -= lr * g / (sqrt(accum) + eps)
  CHECK(e.value[0] == doctest::Approx(1.0 - 0.5 * 0.4 / (0.4 + 1e-8)).epsilon(1e-12));
  CHECK(e.value[1] == doctest::Approx(-2.0 + 0.5 * 0.2 / (0.2 + 1e-8)).epsilon(1e-12));

  double v0 = e.value[0];
  e.grad[0] = 0.3;
  e.grad[1] = 0.0;
  opt.step(store);
  double accum = 0.4 * 0.4 + 0.3 * 0.3;
  CHECK(e.value[0] == doctest::Approx(v0 - 0.5 * 0.3 / (std::sqrt(accum) + 1e-8)).epsilon(1e-12));
}

TEST_CASE("adam step matches the closed form with bias correction") {
  ParameterStore store;
  auto& e = store.add("w", Tensor::scalar(1.0));
  Adam opt(0.1);

  double theta = 1.0, m = 0.0, v = 0.0;
  std::vector<double> grads = {0.5, -0.25, 0.125};
  for (size_t t = 1; t <= grads.size(); ++t) {
    double g = grads[t - 1];
    e.grad[0] = g;
    opt.step(store);
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    double mhat = m / (1.0 - std::pow(0.9, double(t)));
    double vhat = v / (1.0 - std::pow(0.999, double(t)));
    theta -= 0.1 * mhat / (std::sqrt(vhat) + 1e-8);
    CHECK(e.value[0] == doctest::Approx(theta).epsilon(1e-12));
  }
}

TEST_CASE("gradient clipping rescales only past the limit") {
  ParameterStore store;
  auto& a = store.add("a", Tensor::col(2, 0.0));
  auto& frozen = store.add("f", Tensor::col(2, 0.0), /*trainable=*/false);
  a.grad[0] = 3.0;
  a.grad[1] = 4.0;  // norm 5
  frozen.grad[0] = 100.0;
  double norm = clip_global_norm(store, 2.5);
  CHECK(norm == doctest::Approx(5.0));
  CHECK(a.grad[0] == doctest::Approx(1.5));
  CHECK(a.grad[1] == doctest::Approx(2.0));
  CHECK(frozen.grad[0] == 100.0);  // untouched and uncounted

  a.grad[0] = 0.3;
  a.grad[1] = 0.4;
  double small = clip_global_norm(store, 2.5);
  CHECK(small == doctest::Approx(0.5));
  CHECK(a.grad[0] == doctest::Approx(0.3));  // below limit: untouched
}

TEST_CASE("make_optimizer accepts the two known names only") {
  CHECK(make_optimizer("adagrad", 0.1) != nullptr);
  CHECK(make_optimizer("adam", 0.1) != nullptr);
  CHECK_THROWS_AS(make_optimizer("sgd", 0.1), ConfigError);
}

namespace {

// y = w*x fit on a fixed line; loss (w*x - 2x)^2 averaged over the batch.
struct ToyProblem {
  ParameterStore store;
  ParameterStore::Entry* w;
  std::vector<double> xs;
  ToyProblem() {
    w = &store.add("w", Tensor::scalar(0.0));
    for (int i = 1; i <= 8; ++i) xs.push_back(0.25 * i);
  }
  Var loss(Tape& t, const std::vector<size_t>& batch) {
    std::vector<Var> per;
    for (size_t idx : batch) {
      Var wx = t.scale(t.param(*w), xs[idx]);
      Var diff = t.sub(wx, t.leaf(Tensor::scalar(2.0 * xs[idx])));
      per.push_back(t.mul(diff, diff));
    }
    Var total = t.addn(per);
    return t.scale(total, 1.0 / static_cast<double>(batch.size()));
  }
};

}  // namespace

TEST_CASE("trainer converges on the toy line and logs every epoch") {
  ToyProblem p;
  TrainConfig cfg;
  cfg.optimizer = "adam";
  cfg.lr = 0.1;
  cfg.batch_size = 4;
  cfg.epochs = 60;
  cfg.seed = 3;
  std::ostringstream log;
  TrainResult res = train_minibatches(p.store, p.xs.size(), cfg,
                                      [&](Tape& t, const std::vector<size_t>& b) {
                                        return p.loss(t, b);
                                      },
                                      {}, {}, &log);
  CHECK(res.logs.size() == 60);
  CHECK(res.logs.front().epoch == 1);
  CHECK(res.best_epoch == 60);  // no val metric: last epoch
  CHECK(p.w->value[0] == doctest::Approx(2.0).epsilon(1e-3));
  CHECK(res.logs.back().mean_loss < res.logs.front().mean_loss);
  CHECK(log.str().find("epoch 1 loss") != std::string::npos);

  // Same config and seed: bit-identical trajectory.
  ToyProblem q;
  TrainResult res2 = train_minibatches(q.store, q.xs.size(), cfg,
                                       [&](Tape& t, const std::vector<size_t>& b) {
                                         return q.loss(t, b);
                                       });
  CHECK(q.w->value[0] == p.w->value[0]);
  REQUIRE(res2.logs.size() == res.logs.size());
  for (size_t i = 0; i < res.logs.size(); ++i)
    CHECK(res2.logs[i].mean_loss == res.logs[i].mean_loss);
}

TEST_CASE("trainer tracks the best validation epoch and fires on_best") {
  ToyProblem p;
  TrainConfig cfg;
  cfg.optimizer = "adagrad";
  cfg.lr = 0.5;
  cfg.batch_size = 8;
  cfg.epochs = 5;
  std::vector<double> fake_val = {0.2, 0.5, 0.4, 0.9, 0.9};
  size_t calls = 0;
  std::vector<size_t> best_epochs;
  TrainResult res = train_minibatches(
      p.store, p.xs.size(), cfg,
      [&](Tape& t, const std::vector<size_t>& b) { return p.loss(t, b); },
      [&]() { return fake_val[calls++]; },
      [&](size_t epoch) { best_epochs.push_back(epoch); });
  CHECK(res.best_epoch == 4);
  CHECK(res.best_val == 0.9);
  CHECK(best_epochs == std::vector<size_t>{1, 2, 4});  // strict improvements only
  CHECK(res.logs[1].has_val);
  CHECK(res.logs[1].val_metric == 0.5);
}

TEST_CASE("non-finite loss aborts training") {
  ParameterStore store;
  auto& w = store.add("w", Tensor::scalar(1.0));
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 1;
  auto bad_loss = [&](Tape& t, const std::vector<size_t>&) {
    return t.log(t.scale(t.param(w), -1.0));  // log of a negative: nan
  };
  CHECK_THROWS_AS(train_minibatches(store, 2, cfg, bad_loss), TrainingError);
}

TEST_CASE("checkpoints round trip bytes and reject mismatched stores") {
  TempDir dir;
  ParameterStore store;
  Rng rng(9);
  store.add("w1", uniform_init(3, 4, rng));
  store.add("w2", uniform_init(5, 1, rng));
  nlohmann::ordered_json manifest;
  manifest["model"] = "toy";
  manifest["seed"] = 42;
  std::string path = dir.file("model.ckpt");
  save_checkpoint(path, store, manifest);

  auto m = read_checkpoint_manifest(path);
  CHECK(m["model"] == "toy");
  CHECK(m["seed"] == 42);

  ParameterStore other;
  Rng rng2(10);
  other.add("w1", uniform_init(3, 4, rng2));
  other.add("w2", uniform_init(5, 1, rng2));
  auto m2 = load_checkpoint(path, other);
  CHECK(m2["model"] == "toy");
  for (size_t i = 0; i < store.at("w1").value.size(); ++i)
    CHECK(other.at("w1").value[i] == store.at("w1").value[i]);

  // Save-load-save produces identical bytes.
  std::string path2 = dir.file("model2.ckpt");
  save_checkpoint(path2, other, m2);
  CHECK(testutil::read_file(path) == testutil::read_file(path2));

  ParameterStore wrong_shape;
  Rng rng3(11);
  wrong_shape.add("w1", uniform_init(3, 4, rng3));
  wrong_shape.add("w2", uniform_init(4, 1, rng3));
  CHECK_THROWS(load_checkpoint(path, wrong_shape));

  ParameterStore wrong_name;
  Rng rng4(12);
  wrong_name.add("w1", uniform_init(3, 4, rng4));
  wrong_name.add("w3", uniform_init(5, 1, rng4));
  CHECK_THROWS(load_checkpoint(path, wrong_name));

  CHECK_THROWS(read_checkpoint_manifest(dir.file("missing.ckpt")));
  testutil::write_file(dir.file("junk.ckpt"), "not a checkpoint at all");
  CHECK_THROWS(read_checkpoint_manifest(dir.file("junk.ckpt")));
}
