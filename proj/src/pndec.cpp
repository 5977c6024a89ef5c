#include "relx/pndec.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <tuple>

#include "relx/error.hpp"

namespace relx {

PndecQuery pndec_query_from_string(const std::string& name) {
  if (name == "dec_hid") return PndecQuery::kDecHidden;
  if (name == "tup_prev") return PndecQuery::kPrevTuple;
  if (name == "combo") return PndecQuery::kCombo;
  throw ConfigError("pndec: unknown attention query: " + name);
}

const char* to_string(PndecQuery q) {
  switch (q) {
    case PndecQuery::kDecHidden: return "dec_hid";
    case PndecQuery::kPrevTuple: return "tup_prev";
    case PndecQuery::kCombo: return "combo";
  }
  return "?";
}

namespace {

struct SpanCandidate {
  int b = -1, e = -1;
  double product = -1.0;
  bool valid() const { return b >= 0; }
};

// Best span inside [lo, hi]: maximize begin[b]*end[e] with b <= e, ties to the
// smaller (b, e). A zero begin probability makes every e equivalent, so the
// lexicographic rule forces e = b there.
SpanCandidate best_span(const std::vector<double>& begin, const std::vector<double>& end, int lo,
                        int hi) {
  SpanCandidate best;
  if (lo > hi) return best;
  std::vector<int> e_star(static_cast<size_t>(hi) + 1);
  int cur = hi;
  for (int e = hi; e >= lo; --e) {
    if (end[static_cast<size_t>(e)] >= end[static_cast<size_t>(cur)]) cur = e;
    e_star[static_cast<size_t>(e)] = cur;
  }
  for (int b = lo; b <= hi; ++b) {
    int e = begin[static_cast<size_t>(b)] == 0.0 ? b : e_star[static_cast<size_t>(b)];
    double p = begin[static_cast<size_t>(b)] * end[static_cast<size_t>(e)];
    if (!best.valid() || p > best.product) best = {b, e, p};
  }
  return best;
}

SpanCandidate better(const SpanCandidate& a, const SpanCandidate& b) {
  if (!a.valid()) return b;
  if (!b.valid()) return a;
  if (a.product != b.product) return a.product > b.product ? a : b;
  return std::tie(a.b, a.e) <= std::tie(b.b, b.e) ? a : b;
}

}  // namespace

SpanChoice constrained_pass(const std::vector<double>& first_begin,
                            const std::vector<double>& first_end,
                            const std::vector<double>& second_begin,
                            const std::vector<double>& second_end) {
  size_t n = first_begin.size();
  if (first_end.size() != n || second_begin.size() != n || second_end.size() != n)
    throw DomainError("constrained_pass: distribution lengths differ");
  if (n < 2) throw DomainError("constrained_pass: need at least two tokens");
  int last = static_cast<int>(n) - 1;

  // Leading span; the b=0 row is capped at e=n-2 to keep the full sentence out.
  SpanCandidate zero_row;
  {
    int e = 0;
    for (int i = 1; i <= last - 1; ++i)
      if (first_end[static_cast<size_t>(i)] > first_end[static_cast<size_t>(e)]) e = i;
    if (first_begin[0] == 0.0) e = 0;
    zero_row = {0, e, first_begin[0] * first_end[static_cast<size_t>(e)]};
  }
  SpanCandidate lead = better(zero_row, best_span(first_begin, first_end, 1, last));

  SpanCandidate trail = better(best_span(second_begin, second_end, 0, lead.b - 1),
                               best_span(second_begin, second_end, lead.e + 1, last));

  SpanChoice out;
  out.first = {lead.b, lead.e};
  out.second = {trail.b, trail.e};
  out.product = lead.product * trail.product;
  return out;
}

SpanChoice constrained_spans(const std::vector<double>& s1, const std::vector<double>& e1,
                             const std::vector<double>& s2, const std::vector<double>& e2) {
  if (s1.size() < 2) throw DomainError("constrained_spans: need at least two tokens");
  SpanChoice a = constrained_pass(s1, e1, s2, e2);
  SpanChoice rev = constrained_pass(s2, e2, s1, e1);
  SpanChoice b{rev.second, rev.first, rev.product};
  if (a.product != b.product) return a.product > b.product ? a : b;
  auto key = [](const SpanChoice& c) {
    return std::make_tuple(c.first.start, c.first.end, c.second.start, c.second.end);
  };
  return key(a) <= key(b) ? a : b;
}

PndecModel::PndecModel(RelationSet relations, Vocabulary vocab, CharVocab chars, PndecConfig cfg,
                       uint64_t seed, const Tensor* word_init)
    : relations_(std::move(relations)),
      vocab_(std::move(vocab)),
      chars_(std::move(chars)),
      cfg_(cfg) {
  if (cfg_.d_h % 2 != 0) throw ConfigError("pndec: d_h must be even");
  if (cfg_.max_word_len < cfg_.char_width)
    throw ConfigError("pndec: max_word_len shorter than the character conv width");
  Rng rng(seed);

  Tensor words = word_init ? *word_init : random_embeddings(vocab_, cfg_.d_w, seed);
  if (words.rows() != vocab_.size() || words.cols() != cfg_.d_w)
    throw ConfigError("pndec: word embedding matrix shape does not match vocabulary/d_w");
  word_emb_ = &store_.add("embed.word", std::move(words));
  Tensor ch = uniform_init(chars_.size(), cfg_.d_c, rng);
  for (size_t c = 0; c < cfg_.d_c; ++c) ch(CharVocab::kPad, c) = 0.0;
  char_emb_ = &store_.add("embed.char", std::move(ch));
  rel_emb_ = &store_.add("embed.relation", uniform_init(relations_.size() + 1, cfg_.d_r, rng));
  char_conv_ = make_conv(store_, "char_conv", cfg_.char_width, cfg_.d_c, cfg_.d_f,
                         Pooling::kMax, rng);
  encoder_ = make_bilstm(store_, "enc", cfg_.d_w + cfg_.d_f, cfg_.d_h / 2, rng);

  size_t y_dim = 8 * cfg_.d_p + cfg_.d_r;
  decoder_ = make_lstm_cell(store_, "dec", cfg_.d_h + y_dim, cfg_.d_h, rng);

  size_t q_dim = 0;
  switch (cfg_.query) {
    case PndecQuery::kDecHidden: q_dim = cfg_.d_h; break;
    case PndecQuery::kPrevTuple: q_dim = y_dim; break;
    case PndecQuery::kCombo: q_dim = cfg_.d_h + y_dim; break;
  }
  attn_wu_ = &store_.add("attn.w_u", uniform_init(cfg_.d_h, cfg_.d_h, rng));
  attn_wq_ = &store_.add("attn.w_q", uniform_init(cfg_.d_h, q_dim, rng));
  attn_bq_ = &store_.add("attn.b_q", Tensor(cfg_.d_h, 1));
  attn_v_ = &store_.add("attn.v", uniform_init(cfg_.d_h, 1, rng));

  ptr1_ = make_bilstm(store_, "ptr1", 2 * cfg_.d_h, cfg_.d_p, rng);
  ptr2_ = make_bilstm(store_, "ptr2", 2 * cfg_.d_p + 2 * cfg_.d_h, cfg_.d_p, rng);
  static const char* kHeadNames[4] = {"ptr1.begin", "ptr1.end", "ptr2.begin", "ptr2.end"};
  for (int i = 0; i < 4; ++i) {
    head_w_[i] = &store_.add(std::string(kHeadNames[i]) + ".w",
                             uniform_init(1, 2 * cfg_.d_p, rng));
    head_b_[i] = &store_.add(std::string(kHeadNames[i]) + ".b", Tensor(1, 1));
  }
  rel_w_ = &store_.add("rel.w",
                       uniform_init(relations_.size() + 1, 8 * cfg_.d_p + cfg_.d_h, rng));
  rel_b_ = &store_.add("rel.b", Tensor(relations_.size() + 1, 1));
}

std::vector<PointerTuple> PndecModel::pointer_tuple_target(const JointInstance& inst) {
  std::vector<size_t> order(inst.tuples.size());
  std::iota(order.begin(), order.end(), size_t{0});
  auto key = [](const Tuple& t) {
    return std::make_tuple(std::min(t.e1.start, t.e2.start), std::max(t.e1.start, t.e2.start),
                           t.relation);
  };
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return key(inst.tuples[a]) < key(inst.tuples[b]);
  });

  std::vector<PointerTuple> out;
  std::set<std::tuple<int, int, int, int, std::string>> seen;
  for (size_t i : order) {
    const Tuple& tp = inst.tuples[i];
    if (tp.e1.start <= tp.e2.end && tp.e2.start <= tp.e1.end)
      throw ValidationError("pointer_tuple_target: entity spans overlap");
    if (!seen.insert({tp.e1.start, tp.e1.end, tp.e2.start, tp.e2.end, tp.relation}).second)
      continue;
    out.push_back({tp.e1, tp.e2, tp.relation});
  }
  out.push_back({{0, 0}, {0, 0}, kEosRelation});
  return out;
}

Var PndecModel::char_feature(Tape& t, Var char_table, const std::string& word) {
  auto cps = CharVocab::decode_utf8(word);
  size_t len = std::min(cps.size(), cfg_.max_word_len);
  std::vector<Var> cs;
  cs.reserve(cfg_.max_word_len);
  for (size_t i = 0; i < len; ++i) cs.push_back(t.row(char_table, chars_.lookup(cps[i])));
  if (len < cfg_.max_word_len) {
    Var pad = t.leaf(Tensor(cfg_.d_c, 1));
    cs.resize(cfg_.max_word_len, pad);
  }
  return conv_pool(t, char_conv_, cs, 0, cfg_.max_word_len - cfg_.char_width);
}

std::vector<Var> PndecModel::encode(Tape& t, const std::vector<std::string>& src) {
  if (src.empty()) throw ValidationError("pndec: empty sentence");
  Var words = t.param(*word_emb_);
  Var char_table = t.param(*char_emb_);
  std::vector<Var> xs;
  xs.reserve(src.size());
  for (const auto& w : src) {
    Var x = t.concat({t.row(words, vocab_.lookup(w)), char_feature(t, char_table, w)});
    xs.push_back(t.dropout(x, cfg_.dropout));
  }
  return bilstm_run(t, encoder_, xs);
}

PndecModel::State PndecModel::initial_state(Tape& t) {
  State st;
  st.lstm = lstm_zero_state(t, decoder_);
  st.y_prev = t.leaf(Tensor(8 * cfg_.d_p + cfg_.d_r, 1));
  return st;
}

PndecModel::StepOut PndecModel::step(Tape& t, const std::vector<Var>& hs, State& state,
                                     const PointerTuple* gold) {
  size_t n = hs.size();
  Var q;
  switch (cfg_.query) {
    case PndecQuery::kDecHidden: q = state.lstm.h; break;
    case PndecQuery::kPrevTuple: q = state.y_prev; break;
    case PndecQuery::kCombo: q = t.concat({state.lstm.h, state.y_prev}); break;
  }
  Var qv = t.add(t.matvec(t.param(*attn_wq_), q), t.param(*attn_bq_));
  Var v = t.param(*attn_v_);
  Var wu = t.param(*attn_wu_);
  std::vector<Var> scores;
  scores.reserve(n);
  for (Var h : hs) scores.push_back(t.dot(v, t.tanh(t.add(t.matvec(wu, h), qv))));
  Var alpha = t.softmax_masked(t.concat(scores), std::vector<uint8_t>(n, 1));
  Var e = t.combine(hs, alpha);

  state.lstm = lstm_step(t, decoder_, t.concat({e, state.y_prev}), state.lstm);
  Var hd = state.lstm.h;

  std::vector<Var> in1;
  in1.reserve(n);
  for (Var h : hs) in1.push_back(t.concat({hd, h}));
  std::vector<Var> k1 = bilstm_run(t, ptr1_, in1);
  std::vector<Var> in2;
  in2.reserve(n);
  for (size_t i = 0; i < n; ++i) in2.push_back(t.concat({k1[i], hd, hs[i]}));
  std::vector<Var> k2 = bilstm_run(t, ptr2_, in2);

  auto head = [&](int idx, const std::vector<Var>& ks) {
    Var w = t.param(*head_w_[idx]);
    Var b = t.param(*head_b_[idx]);
    std::vector<Var> ss;
    ss.reserve(ks.size());
    for (Var k : ks) ss.push_back(t.add(t.matvec(w, k), b));
    return t.softmax_masked(t.concat(ss), std::vector<uint8_t>(ks.size(), 1));
  };
  StepOut out;
  out.s1 = head(0, k1);
  out.e1 = head(1, k1);
  out.s2 = head(2, k2);
  out.e2 = head(3, k2);

  if (gold) {
    auto at = [&](const Span& s, const std::vector<Var>& ks) {
      if (s.start < 0 || s.end < s.start || static_cast<size_t>(s.end) >= n)
        throw ValidationError("pndec: gold span out of range");
      return t.concat({ks[static_cast<size_t>(s.start)], ks[static_cast<size_t>(s.end)]});
    };
    out.a1 = at(gold->first, k1);
    out.a2 = at(gold->second, k2);
  } else {
    out.a1 = t.concat({t.combine(k1, out.s1), t.combine(k1, out.e1)});
    out.a2 = t.concat({t.combine(k2, out.s2), t.combine(k2, out.e2)});
  }

  Var feat = t.dropout(t.concat({out.a1, out.a2, hd}), cfg_.dropout);
  Var logits = t.add(t.matvec(t.param(*rel_w_), feat), t.param(*rel_b_));
  out.r = t.softmax_masked(logits, std::vector<uint8_t>(relations_.size() + 1, 1));
  return out;
}

void PndecModel::advance(Tape& t, State& state, const StepOut& out, size_t relation_idx) {
  Var z = t.row(t.param(*rel_emb_), relation_idx);
  state.y_prev = t.add(state.y_prev, t.concat({out.a1, out.a2, z}));
}

Var PndecModel::batch_loss(Tape& t, const std::vector<JointInstance>& data,
                           const std::vector<size_t>& batch) {
  std::vector<Var> losses;
  size_t total_steps = 0;
  for (size_t idx : batch) {
    const JointInstance& inst = data[idx];
    std::vector<Var> hs = encode(t, inst.tokens);
    std::vector<PointerTuple> targets = pointer_tuple_target(inst);
    State st = initial_state(t);
    for (const PointerTuple& g : targets) {
      bool is_eos = g.relation == kEosRelation;
      StepOut out = step(t, hs, st, is_eos ? nullptr : &g);
      size_t rid = is_eos ? eos_index() : relations_.index_of(g.relation);
      std::vector<Var> terms = {t.log(t.pick(out.r, rid))};
      if (!is_eos) {
        terms.push_back(t.log(t.pick(out.s1, static_cast<size_t>(g.first.start))));
        terms.push_back(t.log(t.pick(out.e1, static_cast<size_t>(g.first.end))));
        terms.push_back(t.log(t.pick(out.s2, static_cast<size_t>(g.second.start))));
        terms.push_back(t.log(t.pick(out.e2, static_cast<size_t>(g.second.end))));
        advance(t, st, out, rid);
      }
      losses.push_back(t.scale(t.addn(terms), -1.0));
      ++total_steps;
    }
  }
  return t.scale(t.addn(losses), 1.0 / static_cast<double>(total_steps));
}

std::vector<PointerPrediction> PndecModel::predict(const std::vector<std::string>& tokens) {
  std::vector<PointerPrediction> out;
  if (tokens.size() < 2) return out;
  Tape t(false, nullptr);
  std::vector<Var> hs = encode(t, tokens);
  State st = initial_state(t);
  std::set<std::tuple<std::string, std::string, std::string>> seen;
  for (size_t step_no = 0; step_no < cfg_.max_tuples; ++step_no) {
    StepOut o = step(t, hs, st, nullptr);
    const Tensor& r = t.val(o.r);
    size_t rid = 0;
    for (size_t i = 1; i < r.size(); ++i)
      if (r[i] > r[rid]) rid = i;
    if (rid == eos_index()) break;

    auto vals = [&](Var v) {
      const Tensor& x = t.val(v);
      return std::vector<double>(x.data(), x.data() + x.size());
    };
    SpanChoice c = constrained_spans(vals(o.s1), vals(o.e1), vals(o.s2), vals(o.e2));
    std::string s1 = detokenize(tokens, c.first);
    std::string s2 = detokenize(tokens, c.second);
    const std::string& rel = relations_.names()[rid];
    if (s1 != s2 && seen.insert({s1, s2, rel}).second)
      out.push_back({c.first, c.second, s1, s2, rel, c.product});
    advance(t, st, o, rid);
  }
  return out;
}

TupleSet PndecModel::predict_tuples(const std::vector<std::string>& tokens) {
  TupleSet out;
  for (const auto& p : predict(tokens)) out.push_back({p.e1_text, p.e2_text, p.relation});
  return out;
}

}  // namespace relx
