#include "relx/wdec.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <tuple>

#include "relx/error.hpp"

namespace relx {

WdecAttn wdec_attn_from_string(const std::string& name) {
  if (name == "avg") return WdecAttn::kAvg;
  if (name == "ngram") return WdecAttn::kNgram;
  if (name == "single") return WdecAttn::kSingle;
  throw ConfigError("wdec: unknown attention mode: " + name);
}

const char* to_string(WdecAttn mode) {
  switch (mode) {
    case WdecAttn::kAvg: return "avg";
    case WdecAttn::kNgram: return "ngram";
    case WdecAttn::kSingle: return "single";
  }
  return "?";
}

WdecModel::WdecModel(RelationSet relations, Vocabulary vocab, CharVocab chars, WdecConfig cfg,
                     uint64_t seed, const Tensor* word_init)
    : relations_(std::move(relations)),
      vocab_(std::move(vocab)),
      chars_(std::move(chars)),
      cfg_(cfg) {
  if (cfg_.d_h % 2 != 0) throw ConfigError("wdec: d_h must be even");
  if (cfg_.max_word_len < cfg_.char_width)
    throw ConfigError("wdec: max_word_len shorter than the character conv width");
  for (const auto& r : relations_.names())
    if (!vocab_.contains(r))
      throw ConfigError("wdec: relation name missing from vocabulary: " + r);
  Rng rng(seed);

  Tensor words = word_init ? *word_init : random_embeddings(vocab_, cfg_.d_w, seed);
  if (words.rows() != vocab_.size() || words.cols() != cfg_.d_w)
    throw ConfigError("wdec: word embedding matrix shape does not match vocabulary/d_w");
  word_emb_ = &store_.add("embed.word", std::move(words));
  Tensor ch = uniform_init(chars_.size(), cfg_.d_c, rng);
  for (size_t c = 0; c < cfg_.d_c; ++c) ch(CharVocab::kPad, c) = 0.0;
  char_emb_ = &store_.add("embed.char", std::move(ch));
  char_conv_ = make_conv(store_, "char_conv", cfg_.char_width, cfg_.d_c, cfg_.d_f,
                         Pooling::kMax, rng);
  encoder_ = make_bilstm(store_, "enc", cfg_.d_w + cfg_.d_f, cfg_.d_h / 2, rng);

  size_t ctx_dim = cfg_.attn == WdecAttn::kNgram ? 2 * cfg_.d_h : cfg_.d_h;
  decoder_ = make_lstm_cell(store_, "dec", ctx_dim + cfg_.d_w, cfg_.d_h, rng);

  if (cfg_.attn == WdecAttn::kSingle) {
    attn_wu_ = &store_.add("attn.w_u", uniform_init(cfg_.d_h, cfg_.d_h, rng));
    attn_wq_ = &store_.add("attn.w_q", uniform_init(cfg_.d_h, cfg_.d_h, rng));
    attn_bq_ = &store_.add("attn.b_q", Tensor(cfg_.d_h, 1));
    attn_v_ = &store_.add("attn.v", uniform_init(cfg_.d_h, 1, rng));
  } else if (cfg_.attn == WdecAttn::kNgram) {
    for (size_t g = 1; g <= 3; ++g) {
      ngram_v_.push_back(&store_.add("attn.v_g" + std::to_string(g),
                                     uniform_init(cfg_.d_h, cfg_.d_h, rng)));
      ngram_w_.push_back(&store_.add("attn.w_g" + std::to_string(g),
                                     uniform_init(cfg_.d_h, cfg_.d_h, rng)));
    }
  }
  proj_w_ = &store_.add("proj.w", uniform_init(vocab_.size(), cfg_.d_h, rng));
  proj_b_ = &store_.add("proj.b", Tensor(vocab_.size(), 1));
}

std::vector<std::string> WdecModel::linearize(const JointInstance& inst, size_t* rejected) {
  std::vector<size_t> order(inst.tuples.size());
  std::iota(order.begin(), order.end(), size_t{0});
  // Tuples are ordered by sentence position (earlier entity, then the other
  // one), with ties resolved by relation name.
  auto key = [](const Tuple& t) {
    return std::make_tuple(std::min(t.e1.start, t.e2.start), std::max(t.e1.start, t.e2.start),
                           t.relation);
  };
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return key(inst.tuples[a]) < key(inst.tuples[b]);
  });

  auto has_separator = [&](const Span& s) {
    for (int i = s.start; i <= s.end; ++i) {
      const std::string& tok = inst.tokens[static_cast<size_t>(i)];
      if (tok == ";" || tok == "|") return true;
    }
    return false;
  };

  std::vector<std::string> out;
  std::set<std::tuple<std::string, std::string, std::string>> seen;
  size_t skipped = 0;
  for (size_t i : order) {
    const Tuple& tp = inst.tuples[i];
    if (has_separator(tp.e1) || has_separator(tp.e2)) {
      ++skipped;
      continue;
    }
    std::string s1 = detokenize(inst.tokens, tp.e1);
    std::string s2 = detokenize(inst.tokens, tp.e2);
    if (!seen.insert({s1, s2, tp.relation}).second) continue;
    if (!out.empty()) out.push_back("|");
    for (int k = tp.e1.start; k <= tp.e1.end; ++k) out.push_back(inst.tokens[static_cast<size_t>(k)]);
    out.push_back(";");
    for (int k = tp.e2.start; k <= tp.e2.end; ++k) out.push_back(inst.tokens[static_cast<size_t>(k)]);
    out.push_back(";");
    out.push_back(tp.relation);
  }
  if (rejected) *rejected = skipped;
  return out;
}

std::vector<StringTuple> WdecModel::parse_decoded(const std::vector<std::string>& tokens,
                                                  const RelationSet& relations) {
  std::vector<std::vector<std::string>> frags(1);
  for (const auto& tok : tokens) {
    if (tok == "|")
      frags.emplace_back();
    else
      frags.back().push_back(tok);
  }

  auto join = [](const std::vector<std::string>& ws) {
    std::string s;
    for (const auto& w : ws) {
      if (!s.empty()) s += ' ';
      s += w;
    }
    return s;
  };

  std::vector<StringTuple> out;
  for (const auto& frag : frags) {
    std::vector<std::vector<std::string>> parts(1);
    for (const auto& tok : frag) {
      if (tok == ";")
        parts.emplace_back();
      else
        parts.back().push_back(tok);
    }
    if (parts.size() != 3) continue;
    StringTuple tp{join(parts[0]), join(parts[1]), join(parts[2])};
    if (tp.e1.empty() || tp.e2.empty()) continue;
    if (!relations.contains(tp.relation)) continue;
    if (tp.e1 == tp.e2) continue;
    if (std::find(out.begin(), out.end(), tp) == out.end()) out.push_back(tp);
  }
  return out;
}

Var WdecModel::char_feature(Tape& t, Var char_table, const std::string& word) {
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

WdecModel::Encoded WdecModel::encode(Tape& t, const std::vector<std::string>& src) {
  Encoded out;
  Var words = t.param(*word_emb_);
  Var char_table = t.param(*char_emb_);
  std::vector<Var> xs;
  xs.reserve(src.size());
  out.src_ids.reserve(src.size());
  for (const auto& w : src) {
    size_t id = vocab_.lookup(w);
    out.src_ids.push_back(id);
    Var x = t.concat({t.row(words, id), char_feature(t, char_table, w)});
    xs.push_back(t.dropout(x, cfg_.dropout));
  }
  out.hs = bilstm_run(t, encoder_, xs);

  out.allowed.assign(vocab_.size(), cfg_.mask_vocab ? 0 : 1);
  if (cfg_.mask_vocab) {
    for (size_t id : out.src_ids) out.allowed[id] = 1;
    for (const auto& r : relations_.names()) out.allowed[vocab_.lookup(r)] = 1;
    out.allowed[Vocabulary::kSemicolon] = 1;
    out.allowed[Vocabulary::kPipe] = 1;
    out.allowed[Vocabulary::kUnk] = 1;
    out.allowed[Vocabulary::kEos] = 1;
  }
  return out;
}

Var WdecModel::static_context(Tape& t, const Encoded& enc, std::vector<double>* unigram_attn) {
  size_t n = enc.hs.size();
  if (cfg_.attn == WdecAttn::kAvg) {
    if (unigram_attn) unigram_attn->assign(n, 1.0 / static_cast<double>(n));
    return t.colwise_mean(enc.hs);
  }

  // n-gram mode: attend separately over 1-, 2- and 3-gram averages of the
  // encoder states, scored against the final state.
  Var h_n = enc.hs.back();
  std::vector<Var> terms;
  for (size_t g = 1; g <= 3; ++g) {
    size_t count = n >= g ? n - g + 1 : 1;
    std::vector<Var> grams;
    grams.reserve(count);
    for (size_t i = 0; i < count; ++i) {
      if (g == 1) {
        grams.push_back(enc.hs[i]);
      } else {
        std::vector<Var> win(enc.hs.begin() + static_cast<long>(i),
                             enc.hs.begin() + static_cast<long>(std::min(i + g, n)));
        grams.push_back(t.colwise_mean(win));
      }
    }
    Var vg = t.param(*ngram_v_[g - 1]);
    std::vector<Var> scores;
    scores.reserve(count);
    for (Var gram : grams) scores.push_back(t.dot(h_n, t.matvec(vg, gram)));
    Var alpha = t.softmax_masked(t.concat(scores), std::vector<uint8_t>(count, 1));
    if (g == 1 && unigram_attn) {
      unigram_attn->resize(count);
      for (size_t i = 0; i < count; ++i) (*unigram_attn)[i] = t.val(alpha)[i];
    }
    terms.push_back(t.matvec(t.param(*ngram_w_[g - 1]), t.combine(grams, alpha)));
  }
  return t.concat({h_n, t.addn(terms)});
}

Var WdecModel::step_context(Tape& t, const Encoded& enc, const std::vector<Var>& u, Var h_prev,
                            std::vector<double>* attn_row) {
  Var q = t.add(t.matvec(t.param(*attn_wq_), h_prev), t.param(*attn_bq_));
  Var v = t.param(*attn_v_);
  std::vector<Var> scores;
  scores.reserve(u.size());
  for (Var ui : u) scores.push_back(t.dot(v, t.tanh(t.add(ui, q))));
  Var alpha = t.softmax_masked(t.concat(scores), std::vector<uint8_t>(u.size(), 1));
  if (attn_row) {
    attn_row->resize(u.size());
    for (size_t i = 0; i < u.size(); ++i) (*attn_row)[i] = t.val(alpha)[i];
  }
  return t.combine(enc.hs, alpha);
}

Var WdecModel::batch_loss(Tape& t, const std::vector<JointInstance>& data,
                          const std::vector<size_t>& batch) {
  std::vector<Var> losses;
  size_t total_steps = 0;
  for (size_t idx : batch) {
    const JointInstance& inst = data[idx];
    if (inst.tokens.empty()) throw ValidationError("wdec: empty sentence");
    Encoded enc = encode(t, inst.tokens);

    std::vector<std::string> target = linearize(inst);
    target.push_back(Vocabulary::kReservedTokens[Vocabulary::kEos]);

    std::vector<Var> u;
    Var ctx;
    if (cfg_.attn == WdecAttn::kSingle) {
      Var wu = t.param(*attn_wu_);
      u.reserve(enc.hs.size());
      for (Var h : enc.hs) u.push_back(t.matvec(wu, h));
    } else {
      ctx = static_context(t, enc, nullptr);
    }

    Var words = t.param(*word_emb_);
    LstmState s = lstm_zero_state(t, decoder_);
    size_t prev = Vocabulary::kSos;
    for (const auto& tok : target) {
      size_t gid = vocab_.lookup(tok);
      if (!enc.allowed[gid])
        throw ValidationError("wdec: gold token outside the masked vocabulary: " + tok);
      Var e = cfg_.attn == WdecAttn::kSingle ? step_context(t, enc, u, s.h, nullptr) : ctx;
      Var x = t.concat({e, t.dropout(t.row(words, prev), cfg_.dropout)});
      s = lstm_step(t, decoder_, x, s);
      Var logits =
          t.add(t.matvec(t.param(*proj_w_), t.dropout(s.h, cfg_.dropout)), t.param(*proj_b_));
      Var probs = t.softmax_masked(logits, enc.allowed);
      losses.push_back(t.scale(t.log(t.pick(probs, gid)), -1.0));
      prev = gid;
      ++total_steps;
    }
  }
  return t.scale(t.addn(losses), 1.0 / static_cast<double>(total_steps));
}

WdecModel::DecodeResult WdecModel::greedy_decode(const std::vector<std::string>& src) {
  if (src.empty()) throw ValidationError("wdec: empty sentence");
  Tape t(false, nullptr);
  Encoded enc = encode(t, src);

  std::vector<Var> u;
  Var ctx;
  std::vector<double> static_attn;
  if (cfg_.attn == WdecAttn::kSingle) {
    Var wu = t.param(*attn_wu_);
    u.reserve(enc.hs.size());
    for (Var h : enc.hs) u.push_back(t.matvec(wu, h));
  } else {
    ctx = static_context(t, enc, &static_attn);
  }

  DecodeResult out;
  Var words = t.param(*word_emb_);
  LstmState s = lstm_zero_state(t, decoder_);
  size_t prev = Vocabulary::kSos;
  for (size_t step = 0; step < cfg_.max_steps; ++step) {
    std::vector<double> attn_row = static_attn;
    Var e = cfg_.attn == WdecAttn::kSingle ? step_context(t, enc, u, s.h, &attn_row) : ctx;
    Var x = t.concat({e, t.row(words, prev)});
    s = lstm_step(t, decoder_, x, s);
    Var logits = t.add(t.matvec(t.param(*proj_w_), s.h), t.param(*proj_b_));
    Var probs = t.softmax_masked(logits, enc.allowed);
    const Tensor& p = t.val(probs);
    out.step_probs.emplace_back(p.data(), p.data() + p.size());
    size_t best = 0;
    for (size_t i = 1; i < p.size(); ++i)
      if (p[i] > p[best]) best = i;
    if (best == Vocabulary::kEos) break;

    std::string surface = vocab_.token(best);
    if (best == Vocabulary::kUnk && cfg_.unk_replace && cfg_.attn != WdecAttn::kAvg) {
      size_t hot = 0;
      for (size_t i = 1; i < attn_row.size(); ++i)
        if (attn_row[i] > attn_row[hot]) hot = i;
      surface = src[hot];
    }
    out.tokens.push_back(surface);
    out.attention.push_back(attn_row);
    prev = best;
  }
  return out;
}

TupleSet WdecModel::predict_tuples(const std::vector<std::string>& src) {
  return parse_decoded(greedy_decode(src).tokens, relations_);
}

}  // namespace relx
