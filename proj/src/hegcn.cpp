#include "relx/hegcn.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <set>
#include <tuple>
#include <unordered_map>
#include <unordered_set>

#include "relx/error.hpp"

namespace relx {

Tensor normalize_adjacency(size_t n, const std::vector<GraphTopology::Edge>& edges) {
  Tensor a(n, n);
  for (const auto& e : edges) {
    if (e.i >= n || e.j >= n || e.i == e.j)
      throw DomainError("normalize_adjacency: bad edge");
    a(e.i, e.j) = 1.0;
    a(e.j, e.i) = 1.0;
  }
  for (size_t i = 0; i < n; ++i) a(i, i) = 1.0;
  std::vector<double> deg(n, 0.0);
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < n; ++j) deg[i] += a(i, j);
  Tensor out(n, n);
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < n; ++j)
      if (a(i, j) != 0.0) out(i, j) = a(i, j) / std::sqrt(deg[i] * deg[j]);
  return out;
}

bool graph_connected(size_t n, const std::vector<GraphTopology::Edge>& edges) {
  if (n == 0) return false;
  std::vector<std::vector<size_t>> adj(n);
  for (const auto& e : edges) {
    adj[e.i].push_back(e.j);
    adj[e.j].push_back(e.i);
  }
  std::vector<uint8_t> seen(n, 0);
  std::deque<size_t> queue = {0};
  seen[0] = 1;
  size_t count = 1;
  while (!queue.empty()) {
    size_t u = queue.front();
    queue.pop_front();
    for (size_t v : adj[u])
      if (!seen[v]) {
        seen[v] = 1;
        ++count;
        queue.push_back(v);
      }
  }
  return count == n;
}

namespace {

std::vector<Mention> sorted_mentions(const std::vector<Mention>& mentions,
                                     const std::vector<int>& token_sent_ids) {
  if (mentions.empty()) throw DomainError("graph construction: no mentions");
  for (const auto& m : mentions)
    if (m.span.start < 0 || m.span.end < m.span.start ||
        static_cast<size_t>(m.span.end) >= token_sent_ids.size())
      throw ValidationError("graph construction: mention span out of range");
  std::vector<Mention> ms = mentions;
  std::stable_sort(ms.begin(), ms.end(), [](const Mention& a, const Mention& b) {
    return std::tie(a.span.start, a.span.end) < std::tie(b.span.start, b.span.end);
  });
  return ms;
}

}  // namespace

GraphTopology build_mention_graph(const std::vector<Mention>& mentions,
                                  const std::vector<int>& token_sent_ids,
                                  MentionEdgeFlags flags, int doc) {
  GraphTopology g;
  std::vector<Mention> ms = sorted_mentions(mentions, token_sent_ids);
  for (const auto& m : ms) {
    GraphTopology::Node node;
    node.canonical = canonical_entity_string(m.text);
    node.span = m.span;
    node.sentence = token_sent_ids[static_cast<size_t>(m.span.start)];
    node.doc = doc;
    g.nodes.push_back(std::move(node));
  }
  size_t n = g.nodes.size();
  for (size_t i = 0; i < n; ++i)
    for (size_t j = i + 1; j < n; ++j) {
      if (flags.same_sentence && g.nodes[i].sentence == g.nodes[j].sentence)
        g.edges.push_back({i, j, 1});
      if (flags.same_string && g.nodes[i].canonical == g.nodes[j].canonical)
        g.edges.push_back({i, j, 2});
      if (flags.chain && j == i + 1) g.edges.push_back({i, j, 3});
    }
  if (flags.chain && !graph_connected(n, g.edges))
    throw Error("build_mention_graph: graph is not connected");
  g.a_hat = normalize_adjacency(n, g.edges);
  return g;
}

GraphTopology build_entity_graph(const std::vector<Mention>& mentions,
                                 const std::vector<int>& token_sent_ids,
                                 EntityEdgeFlags flags, int doc) {
  GraphTopology g;
  std::vector<Mention> ms = sorted_mentions(mentions, token_sent_ids);
  std::unordered_map<std::string, size_t> index;
  std::vector<std::vector<int>> sentences;  // per entity, sentence ids of its mentions
  for (const auto& m : ms) {
    std::string canon = canonical_entity_string(m.text);
    int sent = token_sent_ids[static_cast<size_t>(m.span.start)];
    auto it = index.find(canon);
    if (it == index.end()) {
      index[canon] = g.nodes.size();
      GraphTopology::Node node;
      node.is_entity = true;
      node.canonical = canon;
      node.doc = doc;
      g.nodes.push_back(std::move(node));
      sentences.push_back({sent});
    } else {
      sentences[it->second].push_back(sent);
    }
  }
  size_t n = g.nodes.size();
  for (size_t i = 0; i < n; ++i)
    for (size_t j = i + 1; j < n; ++j) {
      if (flags.co_occur) {
        bool shared = false;
        for (int a : sentences[i]) {
          for (int b : sentences[j])
            if (a == b) {
              shared = true;
              break;
            }
          if (shared) break;
        }
        if (shared) g.edges.push_back({i, j, 1});
      }
      if (flags.chain && j == i + 1) g.edges.push_back({i, j, 2});
    }
  if (flags.chain && !graph_connected(n, g.edges))
    throw Error("build_entity_graph: graph is not connected");
  g.a_hat = normalize_adjacency(n, g.edges);
  return g;
}

GraphTopology unify_entity_graphs(const GraphTopology& g1, const GraphTopology& g2,
                                  const std::vector<std::string>& commons) {
  if (commons.empty())
    throw ValidationError("unify_entity_graphs: a chain needs at least one common entity");
  std::unordered_map<std::string, size_t> in1, in2;
  for (size_t i = 0; i < g1.nodes.size(); ++i) in1[g1.nodes[i].canonical] = i;
  for (size_t i = 0; i < g2.nodes.size(); ++i) in2[g2.nodes[i].canonical] = i;
  std::unordered_set<std::string> common_set;
  for (const auto& c : commons) {
    if (!in1.count(c) || !in2.count(c))
      throw ValidationError("unify_entity_graphs: common entity missing from a graph: " + c);
    common_set.insert(c);
  }

  GraphTopology g;
  std::vector<size_t> map1(g1.nodes.size()), map2(g2.nodes.size());
  for (size_t i = 0; i < g1.nodes.size(); ++i) {
    map1[i] = g.nodes.size();
    GraphTopology::Node node = g1.nodes[i];
    if (common_set.count(node.canonical)) node.doc = 0;
    g.nodes.push_back(std::move(node));
  }
  for (size_t i = 0; i < g2.nodes.size(); ++i) {
    const std::string& canon = g2.nodes[i].canonical;
    if (common_set.count(canon)) {
      map2[i] = map1[in1[canon]];
    } else {
      map2[i] = g.nodes.size();
      g.nodes.push_back(g2.nodes[i]);
    }
  }

  std::set<std::tuple<size_t, size_t, int>> seen;
  auto add = [&](size_t i, size_t j, int type) {
    if (i == j) return;  // merging can collapse an edge between two commons
    size_t a = std::min(i, j), b = std::max(i, j);
    if (seen.insert({a, b, type}).second) g.edges.push_back({a, b, type});
  };
  for (const auto& e : g1.edges) add(map1[e.i], map1[e.j], e.type);
  for (const auto& e : g2.edges) add(map2[e.i], map2[e.j], e.type);
  g.a_hat = normalize_adjacency(g.nodes.size(), g.edges);
  return g;
}

std::vector<Var> gcn_layer(Tape& t, const Tensor& a_hat, const std::vector<Var>& feats, Var w) {
  size_t n = feats.size();
  if (a_hat.rows() != n || a_hat.cols() != n)
    throw DomainError("gcn_layer: adjacency size does not match node count");
  if (t.val(w).cols() != t.val(feats[0]).rows())
    throw DomainError("gcn_layer: weight width does not match feature width");
  std::vector<Var> wg;
  wg.reserve(n);
  for (Var f : feats) wg.push_back(t.matvec(w, f));
  std::vector<Var> out;
  out.reserve(n);
  for (size_t i = 0; i < n; ++i) {
    Tensor row(n, 1);
    for (size_t j = 0; j < n; ++j) row[j] = a_hat(i, j);
    out.push_back(t.relu(t.combine(wg, t.leaf(std::move(row)))));
  }
  return out;
}

std::vector<Mention> chain_doc_mentions(const ChainInstance& chain, int doc) {
  const auto& toks = doc == 1 ? chain.doc1_tokens : chain.doc2_tokens;
  std::vector<Mention> out;
  auto add_span = [&](const Span& s) {
    if (s.start < 0 || s.end < s.start || static_cast<size_t>(s.end) >= toks.size())
      throw ValidationError("chain_doc_mentions: span out of range");
    out.push_back({detokenize(toks, s), s});
  };
  for (const Span& s : doc == 1 ? chain.subject_mentions : chain.object_mentions) add_span(s);
  for (const auto& com : chain.commons)
    for (const Span& s : doc == 1 ? com.mentions_1 : com.mentions_2) add_span(s);
  for (const auto& m : doc == 1 ? chain.extra_1 : chain.extra_2) out.push_back(m);

  std::stable_sort(out.begin(), out.end(), [](const Mention& a, const Mention& b) {
    return std::tie(a.span.start, a.span.end) < std::tie(b.span.start, b.span.end);
  });
  out.erase(std::unique(out.begin(), out.end(),
                        [](const Mention& a, const Mention& b) { return a.span == b.span; }),
            out.end());
  return out;
}

HegcnModel::HegcnModel(RelationSet relations, Vocabulary vocab, HegcnConfig cfg, uint64_t seed,
                       const Tensor* word_init)
    : relations_(std::move(relations)), vocab_(std::move(vocab)), cfg_(cfg) {
  Rng rng(seed);
  Tensor words = word_init ? *word_init : random_embeddings(vocab_, cfg_.d_w, seed);
  if (words.rows() != vocab_.size() || words.cols() != cfg_.d_w)
    throw ConfigError("hegcn: word embedding matrix shape does not match vocabulary/d_w");
  word_emb_ = &store_.add("embed.word", std::move(words));
  ind_emb_ = &store_.add("embed.indicator",
                         uniform_init(4 + cfg_.indicator_cap, cfg_.d_z, rng));

  size_t d_x = cfg_.d_w + cfg_.d_z;
  encoder_ = make_bilstm(store_, "enc", d_x, d_x, rng);
  size_t d_h = 2 * d_x;       // encoder output width
  size_t d_q = 3 * d_h;       // mention node feature width
  attn_w_ = &store_.add("attn.w", uniform_init(d_h, 2 * d_h, rng));
  for (size_t l = 0; l < cfg_.l1; ++l)
    emgcn_w_.push_back(&store_.add("emgcn.l" + std::to_string(l) + ".w",
                                   uniform_init(d_q, d_q, rng)));
  for (size_t l = 0; l < cfg_.l2; ++l)
    egcn_w_.push_back(&store_.add("egcn.l" + std::to_string(l) + ".w",
                                  uniform_init(d_q, d_q, rng)));
  cls_w_ = &store_.add("cls.w", uniform_init(num_classes(), 2 * d_q, rng));
  cls_b_ = &store_.add("cls.b", Tensor(num_classes(), 1));
}

size_t HegcnModel::class_index(const std::string& label) const {
  if (label == kNoneLabel) return relations_.size();
  return relations_.index_of(label);
}

const std::string& HegcnModel::class_label(size_t idx) const {
  static const std::string none = kNoneLabel;
  return idx == relations_.size() ? none : relations_.names()[idx];
}

std::vector<size_t> HegcnModel::indicator_indices(const ChainInstance& chain, size_t cap) {
  size_t n1 = chain.doc1_tokens.size();
  size_t n2 = chain.doc2_tokens.size();
  if (chain.commons.size() > cap)
    throw ConfigError("hegcn: chain has " + std::to_string(chain.commons.size()) +
                      " common entities; the indicator table caps at " + std::to_string(cap));
  std::vector<size_t> ind(n1 + 1 + n2, 1);
  auto paint = [&](const Span& s, size_t offset, size_t limit, size_t value) {
    if (s.start < 0 || s.end < s.start || static_cast<size_t>(s.end) >= limit)
      throw ValidationError("hegcn: mention span out of range");
    for (int i = s.start; i <= s.end; ++i) ind[offset + static_cast<size_t>(i)] = value;
  };
  // commons first; object then subject take precedence on overlap
  for (size_t k = 0; k < chain.commons.size(); ++k) {
    for (const Span& s : chain.commons[k].mentions_1) paint(s, 0, n1, 4 + k);
    for (const Span& s : chain.commons[k].mentions_2) paint(s, n1 + 1, n2, 4 + k);
  }
  for (const Span& s : chain.object_mentions) paint(s, n1 + 1, n2, 3);
  for (const Span& s : chain.subject_mentions) paint(s, 0, n1, 2);
  return ind;
}

std::vector<Var> HegcnModel::mention_features(Tape& t, const std::vector<Var>& hs, size_t offset,
                                              const std::vector<int>& sent_ids,
                                              const GraphTopology& g) {
  std::vector<Var> out;
  out.reserve(g.nodes.size());
  for (const auto& node : g.nodes) {
    Var p = t.concat({hs[offset + static_cast<size_t>(node.span.start)],
                      hs[offset + static_cast<size_t>(node.span.end)]});
    std::vector<Var> sent;
    for (size_t i = 0; i < sent_ids.size(); ++i)
      if (sent_ids[i] == node.sentence) sent.push_back(hs[offset + i]);
    if (sent.empty()) throw DomainError("hegcn: mention sentence has no tokens");
    Var c;
    if (cfg_.use_attention) {
      Var wp = t.tanh(t.matvec(t.param(*attn_w_), p));
      std::vector<Var> scores;
      scores.reserve(sent.size());
      for (Var h : sent) scores.push_back(t.dot(wp, h));
      Var alpha = t.softmax_masked(t.concat(scores), std::vector<uint8_t>(sent.size(), 1));
      c = t.combine(sent, alpha);
    } else {
      c = t.colwise_mean(sent);
    }
    out.push_back(t.concat({p, c}));
  }
  return out;
}

Var HegcnModel::forward_probs(Tape& t, const ChainInstance& chain, HegcnGraphs* graphs) {
  size_t n1 = chain.doc1_tokens.size();
  size_t n2 = chain.doc2_tokens.size();
  if (n1 == 0 || n2 == 0) throw ValidationError("hegcn: empty document");
  if (chain.subject_mentions.empty() || chain.object_mentions.empty())
    throw ValidationError("hegcn: chain lacks subject or object mentions");

  std::vector<size_t> ind = indicator_indices(chain, cfg_.indicator_cap);
  Var words = t.param(*word_emb_);
  Var inds = t.param(*ind_emb_);
  std::vector<Var> xs;
  xs.reserve(ind.size());
  auto push_tok = [&](const std::string& tok, size_t pos) {
    Var x = t.concat({t.row(words, vocab_.lookup(tok)), t.row(inds, ind[pos])});
    xs.push_back(t.dropout(x, cfg_.dropout));
  };
  for (size_t i = 0; i < n1; ++i) push_tok(chain.doc1_tokens[i], i);
  push_tok(Vocabulary::kReservedTokens[Vocabulary::kDocSep], n1);
  for (size_t i = 0; i < n2; ++i) push_tok(chain.doc2_tokens[i], n1 + 1 + i);
  std::vector<Var> hs = bilstm_run(t, encoder_, xs);

  std::vector<Mention> mentions1 = chain_doc_mentions(chain, 1);
  std::vector<Mention> mentions2 = chain_doc_mentions(chain, 2);
  GraphTopology m1 = build_mention_graph(mentions1, chain.sent_ids_1, cfg_.mention_edges, 1);
  GraphTopology m2 = build_mention_graph(mentions2, chain.sent_ids_2, cfg_.mention_edges, 2);

  std::vector<Var> q1 = mention_features(t, hs, 0, chain.sent_ids_1, m1);
  std::vector<Var> q2 = mention_features(t, hs, n1 + 1, chain.sent_ids_2, m2);
  if (cfg_.use_emgcn) {
    for (auto* w : emgcn_w_) {
      Var wv = t.param(*w);
      q1 = gcn_layer(t, m1.a_hat, q1, wv);
      q2 = gcn_layer(t, m2.a_hat, q2, wv);
    }
  }

  GraphTopology e1 = build_entity_graph(mentions1, chain.sent_ids_1, cfg_.entity_edges, 1);
  GraphTopology e2 = build_entity_graph(mentions2, chain.sent_ids_2, cfg_.entity_edges, 2);
  std::vector<std::string> commons;
  commons.reserve(chain.commons.size());
  for (const auto& com : chain.commons)
    commons.push_back(canonical_entity_string(com.canonical));
  GraphTopology unified = unify_entity_graphs(e1, e2, commons);

  // Entity features: mean of its mentions' outputs, across both documents for
  // merged common entities.
  std::vector<Var> ef;
  ef.reserve(unified.nodes.size());
  for (const auto& node : unified.nodes) {
    std::vector<Var> cols;
    if (node.doc != 2)
      for (size_t i = 0; i < m1.nodes.size(); ++i)
        if (m1.nodes[i].canonical == node.canonical) cols.push_back(q1[i]);
    if (node.doc != 1)
      for (size_t i = 0; i < m2.nodes.size(); ++i)
        if (m2.nodes[i].canonical == node.canonical) cols.push_back(q2[i]);
    if (cols.empty())
      throw ValidationError("hegcn: entity node has no mention features: " + node.canonical);
    ef.push_back(cols.size() == 1 ? cols[0] : t.colwise_mean(cols));
  }
  if (cfg_.use_egcn)
    for (auto* w : egcn_w_) ef = gcn_layer(t, unified.a_hat, ef, t.param(*w));

  std::string subject = canonical_entity_string(detokenize(chain.doc1_tokens,
                                                           chain.subject_mentions[0]));
  std::string object = canonical_entity_string(detokenize(chain.doc2_tokens,
                                                          chain.object_mentions[0]));
  size_t si = unified.nodes.size(), oi = unified.nodes.size();
  for (size_t i = 0; i < unified.nodes.size(); ++i) {
    if (si == unified.nodes.size() && unified.nodes[i].canonical == subject &&
        unified.nodes[i].doc != 2)
      si = i;
    if (oi == unified.nodes.size() && unified.nodes[i].canonical == object &&
        unified.nodes[i].doc != 1)
      oi = i;
  }
  if (si == unified.nodes.size() || oi == unified.nodes.size())
    throw ValidationError("hegcn: subject or object entity missing from the unified graph");

  if (graphs) *graphs = {m1, m2, e1, e2, unified};

  Var feat = t.dropout(t.concat({ef[si], ef[oi]}), cfg_.dropout);
  Var logits = t.add(t.matvec(t.param(*cls_w_), feat), t.param(*cls_b_));
  return t.softmax_masked(logits, std::vector<uint8_t>(num_classes(), 1));
}

Var HegcnModel::instance_loss(Tape& t, const ChainInstance& chain) {
  Var probs = forward_probs(t, chain);
  return t.scale(t.log(t.pick(probs, class_index(chain.relation))), -1.0);
}

Var HegcnModel::batch_loss(Tape& t, const std::vector<ChainInstance>& data,
                           const std::vector<size_t>& batch) {
  std::vector<Var> losses;
  losses.reserve(batch.size());
  for (size_t i : batch) losses.push_back(instance_loss(t, data[i]));
  return t.scale(t.addn(losses), 1.0 / static_cast<double>(losses.size()));
}

ScoredPrediction HegcnModel::predict(const ChainInstance& chain) {
  Tape t(false, nullptr);
  Var probs = forward_probs(t, chain);
  const Tensor& p = t.val(probs);
  size_t best = 0;
  for (size_t i = 1; i < p.size(); ++i)
    if (p[i] > p[best]) best = i;
  return {class_label(best), p[best], chain.relation};
}

}  // namespace relx
