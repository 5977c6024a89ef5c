#include <doctest.h>

#include <cmath>
#include <queue>
#include <vector>

#include "relx/gradcheck.hpp"
#include "relx/mfa.hpp"
#include "relx/rng.hpp"

using namespace relx;

namespace {

// BFS over the undirected tree, independent of the production code path.
std::vector<int> bfs_distances(const std::vector<std::pair<int, int>>& edges, size_t n,
                               int start) {
  std::vector<std::vector<int>> adj(n);
  for (auto [p, c] : edges) {
    adj[p].push_back(c);
    adj[c].push_back(p);
  }
  std::vector<int> dist(n, -1);
  std::queue<int> q;
  dist[start] = 0;
  q.push(start);
  while (!q.empty()) {
    int u = q.front();
    q.pop();
    for (int v : adj[u])
      if (dist[v] < 0) {
        dist[v] = dist[u] + 1;
        q.push(v);
      }
  }
  return dist;
}

MfaConfig tiny_config() {
  MfaConfig cfg;
  cfg.d_w = 8;
  cfg.d_z = 4;
  cfg.d_u = 3;
  cfg.m = 2;
  cfg.ws = 3;
  cfg.f_g = 6;
  cfg.f_e = 6;
  cfg.k = 3;
  cfg.context_radius = 2;
  cfg.pos_clamp = 10;
  cfg.dropout = 0.0;
  return cfg;
}

RelationInstance path_instance(size_t n) {
  RelationInstance inst;
  for (size_t i = 0; i < n; ++i) inst.tokens.push_back("tok" + std::to_string(i));
  for (size_t i = 0; i + 1 < n; ++i) inst.dep_edges.push_back({int(i), int(i + 1)});
  inst.e1 = {0, 0};
  inst.e2 = {1, 1};
  inst.relation = "r_a";
  return inst;
}

MfaModel tiny_model(const RelationInstance& inst, MfaConfig cfg) {
  RelationSet rels = RelationSet::from_names({"r_a", "r_b"});
  Vocabulary vocab(rels);
  for (const auto& tok : inst.tokens) vocab.add(tok);
  return MfaModel(rels, vocab, cfg, 17);
}

}  // namespace

TEST_CASE("dep_distances agrees with BFS on random trees") {
  Rng rng(55);
  for (int trial = 0; trial < 50; ++trial) {
    size_t n = 2 + rng.below(12);
    std::vector<std::pair<int, int>> edges;
    for (size_t i = 1; i < n; ++i) edges.push_back({int(rng.below(i)), int(i)});
    int head = int(rng.below(n));
    CHECK(MfaModel::dep_distances(edges, n, head) == bfs_distances(edges, n, head));
  }
}

TEST_CASE("class mapping puts None last") {
  RelationInstance inst = path_instance(4);
  MfaModel model = tiny_model(inst, tiny_config());
  CHECK(model.num_classes() == 3);
  CHECK(model.class_index("r_a") == 0);
  CHECK(model.class_index("r_b") == 1);
  CHECK(model.class_index(kNoneLabel) == 2);
  CHECK(model.class_label(2) == kNoneLabel);
  CHECK(model.class_label(0) == "r_a");
}

TEST_CASE("forward probabilities are a distribution and predict takes the argmax") {
  RelationInstance inst = path_instance(6);
  MfaModel model = tiny_model(inst, tiny_config());
  Tape t;
  Var probs = model.forward_probs(t, inst);
  const Tensor& p = t.val(probs);
  REQUIRE(p.size() == 3);
  double total = 0;
  for (size_t i = 0; i < p.size(); ++i) {
    CHECK(p[i] >= 0.0);
    total += p[i];
  }
  CHECK(total == doctest::Approx(1.0));

  ScoredPrediction sp = model.predict(inst);
  size_t best = 0;
  for (size_t i = 1; i < p.size(); ++i)
    if (p[i] > p[best]) best = i;
  CHECK(sp.predicted == model.class_label(best));
  CHECK(sp.confidence == doctest::Approx(p[best]));
  CHECK(sp.gold == "r_a");
}

TEST_CASE("attention factors halve per dependency hop at equal scores") {
  MfaConfig cfg = tiny_config();
  cfg.m = 1;
  RelationInstance inst = path_instance(8);
  MfaModel model = tiny_model(inst, cfg);
  // Zeroed factor matrices make every semantic score zero, leaving only the
  // distance decay.
  model.store().at("attn.e1.f0").value.fill(0.0);
  model.store().at("attn.e2.f0").value.fill(0.0);

  Tape t;
  MfaTrace trace;
  model.forward_probs(t, inst, &trace);
  REQUIRE(trace.attn1.size() == 1);
  REQUIRE(trace.attn1[0].size() == 8);
  CHECK(trace.dist1 == std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7});
  CHECK(trace.dist2 == std::vector<int>{1, 0, 1, 2, 3, 4, 5, 6});

  // ws = 3: average distance beyond 3 masks the token.
  for (size_t i = 0; i < 8; ++i) CHECK(bool(trace.masked[i]) == (i >= 4));
  for (const auto& row : {trace.attn1[0], trace.attn2[0]})
    for (size_t i = 4; i < 8; ++i) CHECK(row[i] == 0.0);

  auto effective = [&](int d) { return std::max(d, 1); };
  for (size_t i = 0; i < 4; ++i)
    for (size_t j = 0; j < 4; ++j) {
      int li = effective(trace.dist1[i]), lj = effective(trace.dist1[j]);
      CHECK(trace.attn1[0][i] / trace.attn1[0][j] ==
            doctest::Approx(std::ldexp(1.0, lj - li)).epsilon(1e-12));
    }
  // The softmax-normalized variant replaces the ratio normalization, so the
  // halving law does not apply there; masking still must.
  cfg.softmax_norm = true;
  MfaModel model2 = tiny_model(inst, cfg);
  Tape t2;
  MfaTrace trace2;
  model2.forward_probs(t2, inst, &trace2);
  double sum = 0.0;
  for (size_t i = 0; i < 8; ++i) {
    if (i >= 4) CHECK(trace2.attn1[0][i] == 0.0);
    sum += trace2.attn1[0][i];
  }
  CHECK(sum == doctest::Approx(1.0));
}

TEST_CASE("disabling the distance decay removes masking") {
  MfaConfig cfg = tiny_config();
  cfg.use_dep_distance = false;
  RelationInstance inst = path_instance(10);
  MfaModel model = tiny_model(inst, cfg);
  Tape t;
  MfaTrace trace;
  model.forward_probs(t, inst, &trace);
  for (const auto& row : trace.attn1)
    for (double a : row) CHECK(a > 0.0);
}

TEST_CASE("attention rows are distributions over unmasked tokens") {
  MfaConfig cfg = tiny_config();
  RelationInstance inst = path_instance(8);
  MfaModel model = tiny_model(inst, cfg);
  Tape t;
  MfaTrace trace;
  model.forward_probs(t, inst, &trace);
  REQUIRE(trace.attn1.size() == cfg.m);
  for (const auto& rows : {trace.attn1, trace.attn2})
    for (const auto& row : rows) {
      double sum = 0;
      for (size_t i = 0; i < row.size(); ++i) {
        if (trace.masked[i]) CHECK(row[i] == 0.0);
        sum += row[i];
      }
      CHECK(sum == doctest::Approx(1.0));
    }
}

TEST_CASE("gradients check out on every attention variant") {
  RelationInstance inst = path_instance(5);
  for (int variant = 0; variant < 3; ++variant) {
    MfaConfig cfg = tiny_config();
    if (variant == 1) cfg.softmax_norm = true;
    if (variant == 2) cfg.maxpool_agg = true;
    MfaModel model = tiny_model(inst, cfg);
    // eps large enough that f64 cancellation noise on near-dead parameters
    // stays under the tolerance, small enough that truncation does too.
    auto report = gradient_check(model.store(), [&](Tape& t) {
      return model.instance_loss(t, inst);
    }, 3e-4, 1u << 20);
    INFO("variant " << variant << " worst " << report.worst_param);
    CHECK(report.max_rel_error < 1e-4);
  }
}
