#include "relx/mfa.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include "relx/error.hpp"

namespace relx {

MfaModel::MfaModel(RelationSet relations, Vocabulary vocab, MfaConfig cfg, uint64_t seed,
                   const Tensor* word_init)
    : relations_(std::move(relations)), vocab_(std::move(vocab)), cfg_(cfg) {
  if (cfg_.m == 0) throw ConfigError("mfa: need at least one attention factor");
  if (cfg_.ws == 0) throw ConfigError("mfa: ws must be positive");
  Rng rng(seed);

  Tensor words = word_init ? *word_init : random_embeddings(vocab_, cfg_.d_w, seed);
  if (words.rows() != vocab_.size() || words.cols() != cfg_.d_w)
    throw ConfigError("mfa: word embedding matrix shape does not match vocabulary/d_w");
  word_emb_ = &store_.add("embed.word", std::move(words));
  ind_emb_ = &store_.add("embed.indicator", uniform_init(3, cfg_.d_z, rng));
  size_t pos_rows = 2 * cfg_.pos_clamp + 1;
  pos1_emb_ = &store_.add("embed.pos1", uniform_init(pos_rows, cfg_.d_u, rng));
  pos2_emb_ = &store_.add("embed.pos2", uniform_init(pos_rows, cfg_.d_u, rng));

  size_t d_x = cfg_.d_w + cfg_.d_z;
  encoder_ = make_bilstm(store_, "enc", d_x, d_x, rng);
  size_t d_h = 2 * d_x;
  conv_global_ = make_conv(store_, "conv_global", cfg_.k, d_h + 2 * cfg_.d_u, cfg_.f_g,
                           Pooling::kMax, rng);
  conv_entity_ = make_conv(store_, "conv_entity", cfg_.k, d_x, cfg_.f_e, Pooling::kMax, rng);
  for (size_t j = 0; j < cfg_.m; ++j) {
    attn1_.push_back(&store_.add("attn.e1.f" + std::to_string(j),
                                 uniform_init(d_h, cfg_.f_e, rng)));
    attn2_.push_back(&store_.add("attn.e2.f" + std::to_string(j),
                                 uniform_init(d_h, cfg_.f_e, rng)));
  }
  size_t attn_width = cfg_.maxpool_agg ? 2 * d_h : 2 * cfg_.m * d_h;
  size_t feat = cfg_.f_g + 2 * cfg_.f_e + attn_width;
  cls_w_ = &store_.add("cls.w", uniform_init(num_classes(), feat, rng));
  cls_b_ = &store_.add("cls.b", Tensor(num_classes(), 1));
}

size_t MfaModel::class_index(const std::string& label) const {
  if (label == kNoneLabel) return relations_.size();
  return relations_.index_of(label);
}

const std::string& MfaModel::class_label(size_t idx) const {
  static const std::string none = kNoneLabel;
  return idx == relations_.size() ? none : relations_.names()[idx];
}

std::vector<int> MfaModel::dep_distances(const std::vector<std::pair<int, int>>& edges, size_t n,
                                         int head) {
  if (head < 0 || static_cast<size_t>(head) >= n)
    throw ValidationError("dep_distances: head token out of range");
  std::vector<std::vector<int>> adj(n);
  for (auto [p, c] : edges) {
    if (p < 0 || c < 0 || static_cast<size_t>(p) >= n || static_cast<size_t>(c) >= n)
      throw ValidationError("dep_distances: edge index out of range");
    adj[p].push_back(c);
    adj[c].push_back(p);
  }
  std::vector<int> dist(n, -1);
  std::deque<int> queue = {head};
  dist[head] = 0;
  while (!queue.empty()) {
    int u = queue.front();
    queue.pop_front();
    for (int v : adj[u]) {
      if (dist[v] < 0) {
        dist[v] = dist[u] + 1;
        queue.push_back(v);
      }
    }
  }
  for (int d : dist)
    if (d < 0) throw ValidationError("dep_distances: parse tree is disconnected");
  return dist;
}

std::vector<Var> MfaModel::encode(Tape& t, const RelationInstance& inst,
                                  std::vector<Var>* xs_out) {
  Var words = t.param(*word_emb_);
  Var inds = t.param(*ind_emb_);
  size_t n = inst.tokens.size();
  std::vector<Var> xs;
  xs.reserve(n);
  for (size_t i = 0; i < n; ++i) {
    int pos = static_cast<int>(i);
    size_t ind = 0;
    if (pos >= inst.e1.start && pos <= inst.e1.end)
      ind = 1;
    else if (pos >= inst.e2.start && pos <= inst.e2.end)
      ind = 2;
    Var x = t.concat({t.row(words, vocab_.lookup(inst.tokens[i])), t.row(inds, ind)});
    xs.push_back(t.dropout(x, cfg_.dropout));
  }
  if (xs_out) *xs_out = xs;
  return bilstm_run(t, encoder_, xs);
}

Var MfaModel::entity_attention(Tape& t, const std::vector<Var>& hs, Var v_e,
                               const std::vector<int>& dist,
                               const std::vector<uint8_t>& masked, size_t factor, int entity,
                               std::vector<std::vector<double>>* rows) {
  size_t n = hs.size();
  Var w = t.param(entity == 1 ? *attn1_[factor] : *attn2_[factor]);
  Var u = t.matvec(w, v_e);
  std::vector<Var> score_list;
  score_list.reserve(n);
  for (size_t i = 0; i < n; ++i) score_list.push_back(t.dot(hs[i], u));
  Var scores = t.concat(score_list);

  // Distance factor: 2^-(l-1) for hop counts 1..ws, 2^-ws past the window,
  // and distance 0 (the head itself) counts as 1.
  std::vector<double> factor_of(n, 1.0);
  std::vector<uint8_t> allowed(n, 1);
  if (cfg_.use_dep_distance) {
    for (size_t i = 0; i < n; ++i) {
      if (masked[i]) {
        factor_of[i] = 0.0;
        allowed[i] = 0;
        continue;
      }
      int l = std::max(dist[i], 1);
      int e = l <= static_cast<int>(cfg_.ws) ? l - 1 : static_cast<int>(cfg_.ws);
      factor_of[i] = std::ldexp(1.0, -e);
    }
  }

  Var p;
  if (cfg_.softmax_norm) {
    Tensor fac(n, 1);
    for (size_t i = 0; i < n; ++i) fac[i] = factor_of[i];
    Var d = t.mul(t.exp(scores), t.leaf(std::move(fac)));
    p = t.softmax_masked(d, allowed);
  } else {
    // Shift by the global max before exponentiating; the normalized weights
    // are invariant to the shift.
    double m = t.val(scores)[0];
    for (size_t i = 1; i < n; ++i) m = std::max(m, t.val(scores)[i]);
    Tensor shift(n, 1, m);
    Tensor fac(n, 1);
    for (size_t i = 0; i < n; ++i) fac[i] = factor_of[i];
    Var d = t.mul(t.exp(t.sub(scores, t.leaf(std::move(shift)))), t.leaf(std::move(fac)));
    p = t.div_by_scalar(d, t.sum(d));
  }
  if (rows) {
    std::vector<double> row(n);
    for (size_t i = 0; i < n; ++i) row[i] = t.val(p)[i];
    rows->push_back(std::move(row));
  }
  return p;
}

Var MfaModel::forward_probs(Tape& t, const RelationInstance& inst, MfaTrace* trace) {
  size_t n = inst.tokens.size();
  std::vector<Var> xs;
  std::vector<Var> hs = encode(t, inst, &xs);

  std::vector<int> dist1 = dep_distances(inst.dep_edges, n, inst.e1.end);
  std::vector<int> dist2 = dep_distances(inst.dep_edges, n, inst.e2.end);
  std::vector<uint8_t> masked(n, 0);
  if (cfg_.use_dep_distance) {
    bool any = false;
    for (size_t i = 0; i < n; ++i) {
      double avg = 0.5 * (dist1[i] + dist2[i]);
      masked[i] = avg > static_cast<double>(cfg_.ws) ? 1 : 0;
      any = any || !masked[i];
    }
    if (!any) throw DomainError("mfa: every token is masked by the distance window");
  }
  if (trace) {
    trace->dist1 = dist1;
    trace->dist2 = dist2;
    trace->masked = masked;
  }

  // Sentence-level features over h_t extended with positional vectors.
  Var pos1 = t.param(*pos1_emb_);
  Var pos2 = t.param(*pos2_emb_);
  int clamp = static_cast<int>(cfg_.pos_clamp);
  std::vector<Var> qs;
  qs.reserve(n);
  for (size_t i = 0; i < n; ++i) {
    int p1 = std::clamp(static_cast<int>(i) - inst.e1.start, -clamp, clamp) + clamp;
    int p2 = std::clamp(static_cast<int>(i) - inst.e2.start, -clamp, clamp) + clamp;
    qs.push_back(t.concat({hs[i], t.row(pos1, static_cast<size_t>(p1)),
                           t.row(pos2, static_cast<size_t>(p2))}));
  }
  Var v_g = conv_pool(t, conv_global_, qs, 0, n - 1);

  auto entity_window = [&](const Span& s) {
    size_t lo = static_cast<size_t>(std::max(0, s.start - static_cast<int>(cfg_.context_radius)));
    size_t hi = static_cast<size_t>(
        std::min(static_cast<int>(n) - 1, s.end + static_cast<int>(cfg_.context_radius)));
    return conv_pool(t, conv_entity_, xs, lo, hi);
  };
  Var v_e1 = entity_window(inst.e1);
  Var v_e2 = entity_window(inst.e2);

  auto attend = [&](int entity, Var v_e, const std::vector<int>& dist,
                    std::vector<std::vector<double>>* rows) {
    std::vector<Var> ps;
    for (size_t j = 0; j < cfg_.m; ++j)
      ps.push_back(entity_attention(t, hs, v_e, dist, masked, j, entity, rows));
    if (!cfg_.maxpool_agg) {
      std::vector<Var> vs;
      for (Var p : ps) vs.push_back(t.combine(hs, p));
      return vs.size() == 1 ? vs[0] : t.concat(vs);
    }
    Var pooled = ps.size() == 1 ? ps[0] : t.colwise_max(ps);
    Var norm = t.div_by_scalar(pooled, t.sum(pooled));
    return t.combine(hs, norm);
  };
  Var v_a1 = attend(1, v_e1, dist1, trace ? &trace->attn1 : nullptr);
  Var v_a2 = attend(2, v_e2, dist2, trace ? &trace->attn2 : nullptr);

  Var feat = t.concat({v_g, v_a1, v_a2, v_e1, v_e2});
  feat = t.dropout(feat, cfg_.dropout);
  Var logits = t.add(t.matvec(t.param(*cls_w_), feat), t.param(*cls_b_));
  return t.softmax_masked(logits, std::vector<uint8_t>(num_classes(), 1));
}

Var MfaModel::instance_loss(Tape& t, const RelationInstance& inst) {
  Var probs = forward_probs(t, inst);
  return t.scale(t.log(t.pick(probs, class_index(inst.relation))), -1.0);
}

Var MfaModel::batch_loss(Tape& t, const std::vector<RelationInstance>& data,
                         const std::vector<size_t>& batch) {
  std::vector<Var> losses;
  losses.reserve(batch.size());
  for (size_t i : batch) losses.push_back(instance_loss(t, data[i]));
  return t.scale(t.addn(losses), 1.0 / static_cast<double>(losses.size()));
}

ScoredPrediction MfaModel::predict(const RelationInstance& inst) {
  Tape t(false, nullptr);
  Var probs = forward_probs(t, inst);
  const Tensor& p = t.val(probs);
  size_t best = 0;
  for (size_t i = 1; i < p.size(); ++i)
    if (p[i] > p[best]) best = i;
  return {class_label(best), p[best], inst.relation};
}

}  // namespace relx
