#include "relx/cli.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "relx/checkpoint.hpp"
#include "relx/corpus.hpp"
#include "relx/error.hpp"
#include "relx/hegcn.hpp"
#include "relx/mfa.hpp"
#include "relx/mhred.hpp"
#include "relx/pndec.hpp"
#include "relx/trainer.hpp"
#include "relx/wdec.hpp"

namespace relx {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* want) {
  throw ConfigError("config key '" + key + "': expected " + want + ", got '" + value + "'");
}

}  // namespace

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values.find(key);
  if (it == values.end()) throw ConfigError("missing config key '" + key + "'");
  return it->second;
}

std::string RunConfig::get_or(const std::string& key, const std::string& dflt) const {
  auto it = values.find(key);
  return it == values.end() ? dflt : it->second;
}

uint64_t RunConfig::get_u64(const std::string& key, uint64_t dflt) const {
  auto it = values.find(key);
  if (it == values.end()) return dflt;
  const std::string& v = it->second;
  if (v.empty() || v[0] == '-') bad_value(key, v, "a nonnegative integer");
  errno = 0;
  char* end = nullptr;
  unsigned long long x = std::strtoull(v.c_str(), &end, 10);
  if (errno != 0 || end != v.c_str() + v.size()) bad_value(key, v, "a nonnegative integer");
  return x;
}

size_t RunConfig::get_size(const std::string& key, size_t dflt) const {
  return static_cast<size_t>(get_u64(key, dflt));
}

double RunConfig::get_double(const std::string& key, double dflt) const {
  auto it = values.find(key);
  if (it == values.end()) return dflt;
  const std::string& v = it->second;
  errno = 0;
  char* end = nullptr;
  double x = std::strtod(v.c_str(), &end);
  if (v.empty() || errno != 0 || end != v.c_str() + v.size() || !std::isfinite(x))
    bad_value(key, v, "a finite number");
  return x;
}

bool RunConfig::get_bool(const std::string& key, bool dflt) const {
  auto it = values.find(key);
  if (it == values.end()) return dflt;
  const std::string& v = it->second;
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad_value(key, v, "a boolean");
}

std::map<std::string, std::string> read_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config file: " + path);
  auto trim = [](const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return std::string();
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
  };
  std::map<std::string, std::string> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::string t = trim(line);
    if (t.empty()) continue;
    size_t eq = t.find('=');
    if (eq == std::string::npos) throw FormatError("expected key = value", lineno);
    std::string key = trim(t.substr(0, eq));
    if (key.empty()) throw FormatError("empty key", lineno);
    if (!out.emplace(key, trim(t.substr(eq + 1))).second)
      throw FormatError("duplicate key '" + key + "'", lineno);
  }
  return out;
}

void write_tuple_predictions(const std::string& path, const std::vector<TupleSet>& preds) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot write " + path);
  for (const auto& set : preds) {
    ordered_json arr = ordered_json::array();
    for (const auto& t : set) arr.push_back({t.e1, t.e2, t.relation});
    ordered_json j;
    j["tuples"] = std::move(arr);
    os << j.dump() << "\n";
  }
}

std::vector<TupleSet> read_tuple_predictions(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read predictions: " + path);
  std::vector<TupleSet> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ordered_json j = ordered_json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object())
      throw FormatError("line is not a JSON object", lineno);
    auto it = j.find("tuples");
    if (it == j.end() || !it->is_array()) throw ValidationError("missing field", lineno, "tuples");
    TupleSet set;
    for (const auto& t : *it) {
      if (!t.is_array() || t.size() != 3 || !t[0].is_string() || !t[1].is_string() ||
          !t[2].is_string())
        throw ValidationError("expected [e1, e2, relation] strings", lineno, "tuples");
      set.push_back({t[0].get<std::string>(), t[1].get<std::string>(), t[2].get<std::string>()});
    }
    out.push_back(std::move(set));
  }
  return out;
}

void write_scored_predictions(const std::string& path,
                              const std::vector<ScoredPrediction>& preds) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot write " + path);
  for (const auto& p : preds) {
    ordered_json j;
    j["predicted"] = p.predicted;
    j["confidence"] = p.confidence;
    j["gold"] = p.gold;
    os << j.dump() << "\n";
  }
}

std::vector<ScoredPrediction> read_scored_predictions(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read predictions: " + path);
  std::vector<ScoredPrediction> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ordered_json j = ordered_json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object())
      throw FormatError("line is not a JSON object", lineno);
    ScoredPrediction p;
    auto pr = j.find("predicted");
    auto co = j.find("confidence");
    auto go = j.find("gold");
    if (pr == j.end() || !pr->is_string())
      throw ValidationError("missing field", lineno, "predicted");
    if (co == j.end() || !co->is_number())
      throw ValidationError("missing field", lineno, "confidence");
    if (go == j.end() || !go->is_string()) throw ValidationError("missing field", lineno, "gold");
    p.predicted = pr->get<std::string>();
    p.confidence = co->get<double>();
    p.gold = go->get<std::string>();
    out.push_back(std::move(p));
  }
  return out;
}

namespace {

std::string fmt_g17(double v) {
  char b[40];
  std::snprintf(b, sizeof b, "%.17g", v);
  return b;
}

std::string fmt4(double v) {
  char b[40];
  std::snprintf(b, sizeof b, "%.4f", v);
  return b;
}

const char* bool_str(bool b) { return b ? "true" : "false"; }

const std::set<std::string>& model_keys(const std::string& kind) {
  static const std::set<std::string> mfa = {
      "d_w", "d_z", "d_u", "m", "ws", "f_g", "f_e", "k", "context_radius",
      "pos_clamp", "dropout", "use_dep_distance", "softmax_norm", "maxpool_agg"};
  static const std::set<std::string> wdec = {
      "d_w", "d_c", "d_f", "d_h", "char_width", "max_word_len",
      "attn", "mask_vocab", "unk_replace", "max_steps", "dropout"};
  static const std::set<std::string> pndec = {
      "d_w", "d_c", "d_f", "d_h", "d_p", "d_r", "char_width",
      "max_word_len", "query", "max_tuples", "dropout"};
  static const std::set<std::string> hegcn = {
      "d_w", "d_z", "l1", "l2", "indicator_cap", "dropout",
      "use_emgcn", "use_egcn", "use_attention", "mention_same_sentence",
      "mention_same_string", "mention_chain", "entity_co_occur", "entity_chain"};
  if (kind == "mfa") return mfa;
  if (kind == "wdec") return wdec;
  if (kind == "pndec") return pndec;
  if (kind == "hegcn") return hegcn;
  throw ConfigError("unknown model kind '" + kind + "' (expected mfa, wdec, pndec, or hegcn)");
}

void check_keys(const RunConfig& cfg, const std::set<std::string>& allowed) {
  for (const auto& [k, v] : cfg.values)
    if (!allowed.count(k))
      throw ConfigError("unknown config key '" + k + "' for command '" + cfg.command + "'");
}

MfaConfig mfa_config(const RunConfig& c) {
  MfaConfig m;
  m.d_w = c.get_size("d_w", m.d_w);
  m.d_z = c.get_size("d_z", m.d_z);
  m.d_u = c.get_size("d_u", m.d_u);
  m.m = c.get_size("m", m.m);
  m.ws = c.get_size("ws", m.ws);
  m.f_g = c.get_size("f_g", m.f_g);
  m.f_e = c.get_size("f_e", m.f_e);
  m.k = c.get_size("k", m.k);
  m.context_radius = c.get_size("context_radius", m.context_radius);
  m.pos_clamp = c.get_size("pos_clamp", m.pos_clamp);
  m.dropout = c.get_double("dropout", m.dropout);
  m.use_dep_distance = c.get_bool("use_dep_distance", m.use_dep_distance);
  m.softmax_norm = c.get_bool("softmax_norm", m.softmax_norm);
  m.maxpool_agg = c.get_bool("maxpool_agg", m.maxpool_agg);
  return m;
}

std::map<std::string, std::string> flat(const MfaConfig& m) {
  return {{"d_w", std::to_string(m.d_w)},
          {"d_z", std::to_string(m.d_z)},
          {"d_u", std::to_string(m.d_u)},
          {"m", std::to_string(m.m)},
          {"ws", std::to_string(m.ws)},
          {"f_g", std::to_string(m.f_g)},
          {"f_e", std::to_string(m.f_e)},
          {"k", std::to_string(m.k)},
          {"context_radius", std::to_string(m.context_radius)},
          {"pos_clamp", std::to_string(m.pos_clamp)},
          {"dropout", fmt_g17(m.dropout)},
          {"use_dep_distance", bool_str(m.use_dep_distance)},
          {"softmax_norm", bool_str(m.softmax_norm)},
          {"maxpool_agg", bool_str(m.maxpool_agg)}};
}

WdecConfig wdec_config(const RunConfig& c) {
  WdecConfig w;
  w.d_w = c.get_size("d_w", w.d_w);
  w.d_c = c.get_size("d_c", w.d_c);
  w.d_f = c.get_size("d_f", w.d_f);
  w.d_h = c.get_size("d_h", w.d_h);
  w.char_width = c.get_size("char_width", w.char_width);
  w.max_word_len = c.get_size("max_word_len", w.max_word_len);
  if (c.has("attn")) w.attn = wdec_attn_from_string(c.get("attn"));
  w.mask_vocab = c.get_bool("mask_vocab", w.mask_vocab);
  w.unk_replace = c.get_bool("unk_replace", w.unk_replace);
  w.max_steps = c.get_size("max_steps", w.max_steps);
  w.dropout = c.get_double("dropout", w.dropout);
  return w;
}

std::map<std::string, std::string> flat(const WdecConfig& w) {
  return {{"d_w", std::to_string(w.d_w)},
          {"d_c", std::to_string(w.d_c)},
          {"d_f", std::to_string(w.d_f)},
          {"d_h", std::to_string(w.d_h)},
          {"char_width", std::to_string(w.char_width)},
          {"max_word_len", std::to_string(w.max_word_len)},
          {"attn", to_string(w.attn)},
          {"mask_vocab", bool_str(w.mask_vocab)},
          {"unk_replace", bool_str(w.unk_replace)},
          {"max_steps", std::to_string(w.max_steps)},
          {"dropout", fmt_g17(w.dropout)}};
}

PndecConfig pndec_config(const RunConfig& c) {
  PndecConfig p;
  p.d_w = c.get_size("d_w", p.d_w);
  p.d_c = c.get_size("d_c", p.d_c);
  p.d_f = c.get_size("d_f", p.d_f);
  p.d_h = c.get_size("d_h", p.d_h);
  p.d_p = c.get_size("d_p", p.d_p);
  p.d_r = c.get_size("d_r", p.d_r);
  p.char_width = c.get_size("char_width", p.char_width);
  p.max_word_len = c.get_size("max_word_len", p.max_word_len);
  if (c.has("query")) p.query = pndec_query_from_string(c.get("query"));
  p.max_tuples = c.get_size("max_tuples", p.max_tuples);
  p.dropout = c.get_double("dropout", p.dropout);
  return p;
}

std::map<std::string, std::string> flat(const PndecConfig& p) {
  return {{"d_w", std::to_string(p.d_w)},
          {"d_c", std::to_string(p.d_c)},
          {"d_f", std::to_string(p.d_f)},
          {"d_h", std::to_string(p.d_h)},
          {"d_p", std::to_string(p.d_p)},
          {"d_r", std::to_string(p.d_r)},
          {"char_width", std::to_string(p.char_width)},
          {"max_word_len", std::to_string(p.max_word_len)},
          {"query", to_string(p.query)},
          {"max_tuples", std::to_string(p.max_tuples)},
          {"dropout", fmt_g17(p.dropout)}};
}

HegcnConfig hegcn_config(const RunConfig& c) {
  HegcnConfig h;
  h.d_w = c.get_size("d_w", h.d_w);
  h.d_z = c.get_size("d_z", h.d_z);
  h.l1 = c.get_size("l1", h.l1);
  h.l2 = c.get_size("l2", h.l2);
  h.indicator_cap = c.get_size("indicator_cap", h.indicator_cap);
  h.dropout = c.get_double("dropout", h.dropout);
  h.use_emgcn = c.get_bool("use_emgcn", h.use_emgcn);
  h.use_egcn = c.get_bool("use_egcn", h.use_egcn);
  h.use_attention = c.get_bool("use_attention", h.use_attention);
  h.mention_edges.same_sentence = c.get_bool("mention_same_sentence", true);
  h.mention_edges.same_string = c.get_bool("mention_same_string", true);
  h.mention_edges.chain = c.get_bool("mention_chain", true);
  h.entity_edges.co_occur = c.get_bool("entity_co_occur", true);
  h.entity_edges.chain = c.get_bool("entity_chain", true);
  return h;
}

std::map<std::string, std::string> flat(const HegcnConfig& h) {
  return {{"d_w", std::to_string(h.d_w)},
          {"d_z", std::to_string(h.d_z)},
          {"l1", std::to_string(h.l1)},
          {"l2", std::to_string(h.l2)},
          {"indicator_cap", std::to_string(h.indicator_cap)},
          {"dropout", fmt_g17(h.dropout)},
          {"use_emgcn", bool_str(h.use_emgcn)},
          {"use_egcn", bool_str(h.use_egcn)},
          {"use_attention", bool_str(h.use_attention)},
          {"mention_same_sentence", bool_str(h.mention_edges.same_sentence)},
          {"mention_same_string", bool_str(h.mention_edges.same_string)},
          {"mention_chain", bool_str(h.mention_edges.chain)},
          {"entity_co_occur", bool_str(h.entity_edges.co_occur)},
          {"entity_chain", bool_str(h.entity_edges.chain)}};
}

ordered_json base_manifest(const std::string& kind, const RelationSet& relations, uint64_t seed,
                           const std::map<std::string, std::string>& flat_cfg,
                           const Vocabulary& vocab, const CharVocab* chars) {
  ordered_json m;
  m["model"] = kind;
  m["seed"] = seed;
  m["relations"] = relations.names();
  m["vocab_file"] = "vocab.txt";
  m["vocab_fingerprint"] = vocab.fingerprint();
  if (chars) {
    m["chars_file"] = "chars.txt";
    m["char_fingerprint"] = chars->fingerprint();
  }
  m["config"] = flat_cfg;
  return m;
}

// A trained model reconstructed from a checkpoint and its sidecar vocabularies.
struct LoadedModel {
  std::string kind;
  RelationSet relations;
  Vocabulary vocab;
  CharVocab chars;
  double threshold = 0.0;
  std::unique_ptr<MfaModel> mfa;
  std::unique_ptr<WdecModel> wdec;
  std::unique_ptr<PndecModel> pndec;
  std::unique_ptr<HegcnModel> hegcn;
};

LoadedModel load_model(const std::string& ckpt) {
  ordered_json m = read_checkpoint_manifest(ckpt);
  auto need = [&](const char* k) -> const ordered_json& {
    auto it = m.find(k);
    if (it == m.end()) throw ConfigError(std::string("checkpoint manifest missing '") + k + "'");
    return *it;
  };
  LoadedModel lm;
  lm.kind = need("model").get<std::string>();
  lm.relations = RelationSet::from_names(need("relations").get<std::vector<std::string>>());
  fs::path dir = fs::path(ckpt).parent_path();
  lm.vocab = Vocabulary::load((dir / need("vocab_file").get<std::string>()).string());
  if (lm.vocab.fingerprint() != need("vocab_fingerprint").get<uint64_t>())
    throw ConfigError("checkpoint does not match its vocabulary file (fingerprint mismatch)");
  lm.threshold = m.value("threshold", 0.0);

  RunConfig hp;
  hp.command = lm.kind;
  hp.values = need("config").get<std::map<std::string, std::string>>();
  uint64_t seed = need("seed").get<uint64_t>();

  if (lm.kind == "wdec" || lm.kind == "pndec") {
    lm.chars = CharVocab::load((dir / need("chars_file").get<std::string>()).string());
    if (lm.chars.fingerprint() != need("char_fingerprint").get<uint64_t>())
      throw ConfigError("checkpoint does not match its character file (fingerprint mismatch)");
  }

  if (lm.kind == "mfa")
    lm.mfa = std::make_unique<MfaModel>(lm.relations, lm.vocab, mfa_config(hp), seed);
  else if (lm.kind == "wdec")
    lm.wdec = std::make_unique<WdecModel>(lm.relations, lm.vocab, lm.chars, wdec_config(hp), seed);
  else if (lm.kind == "pndec")
    lm.pndec =
        std::make_unique<PndecModel>(lm.relations, lm.vocab, lm.chars, pndec_config(hp), seed);
  else if (lm.kind == "hegcn")
    lm.hegcn = std::make_unique<HegcnModel>(lm.relations, lm.vocab, hegcn_config(hp), seed);
  else
    throw ConfigError("checkpoint names unknown model kind '" + lm.kind + "'");

  ParameterStore& store = lm.mfa     ? lm.mfa->store()
                          : lm.wdec  ? lm.wdec->store()
                          : lm.pndec ? lm.pndec->store()
                                     : lm.hegcn->store();
  load_checkpoint(ckpt, store);
  return lm;
}

LengthPolicy length_policy(const RunConfig& cfg) {
  std::string p = cfg.get_or("length_policy", "reject");
  if (p == "reject") return LengthPolicy::kReject;
  if (p == "truncate") return LengthPolicy::kTruncateWarn;
  bad_value("length_policy", p, "reject or truncate");
}

std::vector<TupleSet> gold_tuple_sets(const std::vector<JointInstance>& data) {
  std::vector<TupleSet> out;
  out.reserve(data.size());
  for (const auto& inst : data) {
    TupleSet g;
    for (const auto& tu : inst.tuples)
      g.push_back({detokenize(inst.tokens, tu.e1), detokenize(inst.tokens, tu.e2), tu.relation});
    std::sort(g.begin(), g.end());
    g.erase(std::unique(g.begin(), g.end()), g.end());
    out.push_back(std::move(g));
  }
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot write " + path.string());
  os << text;
}

void prf_line(std::ostream& os, const char* name, const PrfReport& r) {
  os << name << ": precision " << fmt4(r.precision) << " recall " << fmt4(r.recall) << " f1 "
     << fmt4(r.f1) << " (tp " << r.tp << " fp " << r.fp << " fn " << r.fn << ")\n";
}

int cmd_train(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const std::string kind = cfg.get("model");
  std::set<std::string> allowed = {"model",     "seed",       "out_dir", "relations",
                                   "train_data", "val_data",  "embeddings", "length_policy",
                                   "optimizer", "lr",         "batch_size", "epochs",
                                   "clip_norm"};
  const auto& mk = model_keys(kind);
  allowed.insert(mk.begin(), mk.end());
  check_keys(cfg, allowed);

  const fs::path out_dir = cfg.get("out_dir");
  fs::create_directories(out_dir);
  const RelationSet relations = RelationSet::load(cfg.get("relations"));
  const uint64_t seed = cfg.get_u64("seed", 1);
  const LengthPolicy policy = length_policy(cfg);

  TrainConfig tc;
  if (kind == "mfa") {
    tc.optimizer = "adagrad";
    tc.lr = 0.01;
    tc.batch_size = 50;
  } else if (kind == "hegcn") {
    tc.optimizer = "adagrad";
    tc.lr = 0.01;
    tc.batch_size = 32;
  } else {
    tc.optimizer = "adam";
    tc.lr = 0.001;
    tc.batch_size = 32;
  }
  tc.epochs = 30;
  tc.optimizer = cfg.get_or("optimizer", tc.optimizer);
  tc.lr = cfg.get_double("lr", tc.lr);
  tc.batch_size = cfg.get_size("batch_size", tc.batch_size);
  tc.epochs = cfg.get_size("epochs", tc.epochs);
  tc.clip_norm = cfg.get_double("clip_norm", tc.clip_norm);
  tc.seed = seed;

  const fs::path ckpt = out_dir / "model.ckpt";
  std::ofstream log(out_dir / "train.log", std::ios::binary);
  if (!log) throw ConfigError("cannot write " + (out_dir / "train.log").string());

  auto word_init = [&](const Vocabulary& vocab, size_t dim) {
    return cfg.has("embeddings") ? load_embeddings(cfg.get("embeddings"), vocab, dim, seed)
                                 : random_embeddings(vocab, dim, seed);
  };

  if (kind == "mfa") {
    auto train = read_sentence_dataset(cfg.get("train_data"), relations, policy, &err);
    if (train.empty()) throw ValidationError("train_data holds no instances");
    std::vector<RelationInstance> val;
    if (cfg.has("val_data"))
      val = read_sentence_dataset(cfg.get("val_data"), relations, policy, &err);

    Vocabulary vocab(relations);
    for (const auto& inst : train)
      for (const auto& tok : inst.tokens) vocab.add(tok);

    MfaConfig mc = mfa_config(cfg);
    Tensor init = word_init(vocab, mc.d_w);
    MfaModel model(relations, vocab, mc, seed, &init);
    ordered_json manifest = base_manifest(kind, relations, seed, flat(mc), vocab, nullptr);

    BatchLossFn loss = [&](Tape& t, const std::vector<size_t>& b) {
      return model.batch_loss(t, train, b);
    };
    ValMetricFn vm;
    if (!val.empty())
      vm = [&] {
        std::vector<ScoredPrediction> p;
        p.reserve(val.size());
        for (const auto& inst : val) p.push_back(model.predict(inst));
        return classification_prf(p, 0.0).f1;
      };
    OnBestFn on_best = [&](size_t epoch) {
      manifest["best_epoch"] = epoch;
      save_checkpoint(ckpt.string(), model.store(), manifest);
    };
    TrainResult res = train_minibatches(model.store(), train.size(), tc, loss, vm, on_best, &log);
    load_checkpoint(ckpt.string(), model.store());

    const auto& tune_on = val.empty() ? train : val;
    std::vector<ScoredPrediction> preds;
    preds.reserve(tune_on.size());
    for (const auto& inst : tune_on) preds.push_back(model.predict(inst));
    double thr = tune_threshold(preds);
    manifest["best_epoch"] = res.best_epoch;
    manifest["threshold"] = thr;
    save_checkpoint(ckpt.string(), model.store(), manifest);
    vocab.save((out_dir / "vocab.txt").string());
    write_text(out_dir / "threshold.txt", fmt_g17(thr) + "\n");
    out << "trained mfa for " << res.logs.size() << " epochs (best " << res.best_epoch
        << "), threshold " << fmt_g17(thr) << "\n";
    return 0;
  }

  if (kind == "wdec" || kind == "pndec") {
    auto train = read_joint_dataset(cfg.get("train_data"), relations, policy, &err);
    if (train.empty()) throw ValidationError("train_data holds no instances");
    std::vector<JointInstance> val;
    if (cfg.has("val_data")) val = read_joint_dataset(cfg.get("val_data"), relations, policy, &err);

    Vocabulary vocab(relations);
    CharVocab chars;
    for (const auto& inst : train)
      for (const auto& tok : inst.tokens) {
        vocab.add(tok);
        chars.add_word(tok);
      }

    std::unique_ptr<WdecModel> wdec;
    std::unique_ptr<PndecModel> pndec;
    ordered_json manifest;
    ParameterStore* store = nullptr;
    if (kind == "wdec") {
      WdecConfig wc = wdec_config(cfg);
      Tensor init = word_init(vocab, wc.d_w);
      wdec = std::make_unique<WdecModel>(relations, vocab, chars, wc, seed, &init);
      manifest = base_manifest(kind, relations, seed, flat(wc), vocab, &chars);
      store = &wdec->store();
    } else {
      PndecConfig pc = pndec_config(cfg);
      Tensor init = word_init(vocab, pc.d_w);
      pndec = std::make_unique<PndecModel>(relations, vocab, chars, pc, seed, &init);
      manifest = base_manifest(kind, relations, seed, flat(pc), vocab, &chars);
      store = &pndec->store();
    }

    auto predict = [&](const std::vector<std::string>& tokens) {
      return wdec ? wdec->predict_tuples(tokens) : pndec->predict_tuples(tokens);
    };
    BatchLossFn loss = [&](Tape& t, const std::vector<size_t>& b) {
      return wdec ? wdec->batch_loss(t, train, b) : pndec->batch_loss(t, train, b);
    };
    ValMetricFn vm;
    std::vector<TupleSet> val_gold;
    if (!val.empty()) {
      val_gold = gold_tuple_sets(val);
      vm = [&] {
        std::vector<TupleSet> p;
        p.reserve(val.size());
        for (const auto& inst : val) p.push_back(predict(inst.tokens));
        return tuple_set_prf(p, val_gold).f1;
      };
    }
    OnBestFn on_best = [&](size_t epoch) {
      manifest["best_epoch"] = epoch;
      save_checkpoint(ckpt.string(), *store, manifest);
    };
    TrainResult res = train_minibatches(*store, train.size(), tc, loss, vm, on_best, &log);
    load_checkpoint(ckpt.string(), *store);

    manifest["best_epoch"] = res.best_epoch;
    save_checkpoint(ckpt.string(), *store, manifest);
    vocab.save((out_dir / "vocab.txt").string());
    chars.save((out_dir / "chars.txt").string());
    out << "trained " << kind << " for " << res.logs.size() << " epochs (best " << res.best_epoch
        << ")\n";
    return 0;
  }

  // hegcn
  auto train = read_chain_dataset(cfg.get("train_data"), relations, &err);
  if (train.empty()) throw ValidationError("train_data holds no instances");
  std::vector<ChainInstance> val;
  if (cfg.has("val_data")) val = read_chain_dataset(cfg.get("val_data"), relations, &err);

  Vocabulary vocab(relations);
  for (const auto& inst : train) {
    for (const auto& tok : inst.doc1_tokens) vocab.add(tok);
    for (const auto& tok : inst.doc2_tokens) vocab.add(tok);
  }

  HegcnConfig hc = hegcn_config(cfg);
  Tensor init = word_init(vocab, hc.d_w);
  HegcnModel model(relations, vocab, hc, seed, &init);
  ordered_json manifest = base_manifest(kind, relations, seed, flat(hc), vocab, nullptr);

  BatchLossFn loss = [&](Tape& t, const std::vector<size_t>& b) {
    return model.batch_loss(t, train, b);
  };
  ValMetricFn vm;
  if (!val.empty())
    vm = [&] {
      std::vector<ScoredPrediction> p;
      p.reserve(val.size());
      for (const auto& inst : val) p.push_back(model.predict(inst));
      return classification_prf(p, 0.0).f1;
    };
  OnBestFn on_best = [&](size_t epoch) {
    manifest["best_epoch"] = epoch;
    save_checkpoint(ckpt.string(), model.store(), manifest);
  };
  TrainResult res = train_minibatches(model.store(), train.size(), tc, loss, vm, on_best, &log);
  load_checkpoint(ckpt.string(), model.store());

  const auto& tune_on = val.empty() ? train : val;
  std::vector<ScoredPrediction> preds;
  preds.reserve(tune_on.size());
  for (const auto& inst : tune_on) preds.push_back(model.predict(inst));
  double thr = tune_threshold(preds);
  manifest["best_epoch"] = res.best_epoch;
  manifest["threshold"] = thr;
  save_checkpoint(ckpt.string(), model.store(), manifest);
  vocab.save((out_dir / "vocab.txt").string());
  write_text(out_dir / "threshold.txt", fmt_g17(thr) + "\n");
  out << "trained hegcn for " << res.logs.size() << " epochs (best " << res.best_epoch
      << "), threshold " << fmt_g17(thr) << "\n";
  return 0;
}

int cmd_eval(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  check_keys(cfg, {"checkpoint", "test_data", "out_dir", "threshold", "compare",
                   "length_policy"});
  LoadedModel lm = load_model(cfg.get("checkpoint"));
  const fs::path out_dir = cfg.get("out_dir");
  fs::create_directories(out_dir);
  const LengthPolicy policy = length_policy(cfg);

  std::ostringstream report;
  double headline = 0.0;

  if (lm.kind == "mfa" || lm.kind == "hegcn") {
    std::vector<ScoredPrediction> preds;
    size_t n = 0;
    if (lm.kind == "mfa") {
      auto data = read_sentence_dataset(cfg.get("test_data"), lm.relations, policy, &err);
      n = data.size();
      preds.reserve(n);
      for (const auto& inst : data) preds.push_back(lm.mfa->predict(inst));
    } else {
      auto data = read_chain_dataset(cfg.get("test_data"), lm.relations, &err);
      n = data.size();
      preds.reserve(n);
      for (const auto& inst : data) preds.push_back(lm.hegcn->predict(inst));
    }
    double thr = cfg.has("threshold") ? cfg.get_double("threshold", 0.0) : lm.threshold;
    PrfReport r = classification_prf(preds, thr);
    headline = r.f1;
    report << "model: " << lm.kind << "\n"
           << "instances: " << n << "\n"
           << "threshold: " << fmt_g17(thr) << "\n";
    prf_line(report, "classification", r);
    write_scored_predictions((out_dir / "predictions.jsonl").string(), preds);
  } else {
    auto data = read_joint_dataset(cfg.get("test_data"), lm.relations, policy, &err);
    std::vector<TupleSet> preds;
    preds.reserve(data.size());
    for (const auto& inst : data)
      preds.push_back(lm.kind == "wdec" ? lm.wdec->predict_tuples(inst.tokens)
                                        : lm.pndec->predict_tuples(inst.tokens));
    auto gold = gold_tuple_sets(data);
    PrfReport r = tuple_set_prf(preds, gold);
    SubtaskReports sub = subtask_eval(preds, gold);
    ErrorBreakdown eb = categorize_errors(preds, gold);
    headline = r.f1;
    report << "model: " << lm.kind << "\n"
           << "instances: " << data.size() << "\n";
    prf_line(report, "tuples", r);
    prf_line(report, "entities", sub.entity);
    prf_line(report, "relations", sub.relation);
    report << "errors: order " << fmt4(eb.pct_order) << "% ent1 " << fmt4(eb.pct_ent1)
           << "% ent2 " << fmt4(eb.pct_ent2) << "% other " << fmt4(eb.pct_other) << "%\n";
    if (cfg.has("compare")) {
      auto other = read_tuple_predictions(cfg.get("compare"));
      report << "bootstrap p (vs " << cfg.get("compare")
             << "): " << fmt_g17(paired_bootstrap_p(preds, other, gold)) << "\n";
    }
    write_tuple_predictions((out_dir / "predictions.jsonl").string(), preds);
  }

  write_text(out_dir / "report.txt", report.str());
  out << "f1 " << fmt4(headline) << "\n";
  return 0;
}

int cmd_predict(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  check_keys(cfg, {"checkpoint", "data", "out_dir", "length_policy"});
  LoadedModel lm = load_model(cfg.get("checkpoint"));
  const fs::path out_dir = cfg.get("out_dir");
  fs::create_directories(out_dir);
  const LengthPolicy policy = length_policy(cfg);
  const std::string pred_path = (out_dir / "predictions.jsonl").string();

  size_t n = 0;
  if (lm.kind == "mfa") {
    auto data = read_sentence_dataset(cfg.get("data"), lm.relations, policy, &err);
    std::vector<ScoredPrediction> preds;
    preds.reserve(data.size());
    for (const auto& inst : data) preds.push_back(lm.mfa->predict(inst));
    write_scored_predictions(pred_path, preds);
    n = preds.size();
  } else if (lm.kind == "hegcn") {
    auto data = read_chain_dataset(cfg.get("data"), lm.relations, &err);
    std::vector<ScoredPrediction> preds;
    preds.reserve(data.size());
    for (const auto& inst : data) preds.push_back(lm.hegcn->predict(inst));
    write_scored_predictions(pred_path, preds);
    n = preds.size();
  } else {
    auto data = read_joint_dataset(cfg.get("data"), lm.relations, policy, &err);
    std::vector<TupleSet> preds;
    preds.reserve(data.size());
    for (const auto& inst : data)
      preds.push_back(lm.kind == "wdec" ? lm.wdec->predict_tuples(inst.tokens)
                                        : lm.pndec->predict_tuples(inst.tokens));
    write_tuple_predictions(pred_path, preds);
    n = preds.size();
  }
  out << "wrote " << n << " predictions\n";
  return 0;
}

int cmd_tune_threshold(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  check_keys(cfg, {"checkpoint", "val_data", "out_dir", "length_policy"});
  LoadedModel lm = load_model(cfg.get("checkpoint"));
  if (lm.kind != "mfa" && lm.kind != "hegcn")
    throw ConfigError("threshold tuning applies to the classifier models (mfa, hegcn)");

  std::vector<ScoredPrediction> preds;
  if (lm.kind == "mfa") {
    auto data =
        read_sentence_dataset(cfg.get("val_data"), lm.relations, length_policy(cfg), &err);
    preds.reserve(data.size());
    for (const auto& inst : data) preds.push_back(lm.mfa->predict(inst));
  } else {
    auto data = read_chain_dataset(cfg.get("val_data"), lm.relations, &err);
    preds.reserve(data.size());
    for (const auto& inst : data) preds.push_back(lm.hegcn->predict(inst));
  }
  double thr = tune_threshold(preds);
  double f1 = classification_prf(preds, thr).f1;
  if (cfg.has("out_dir")) {
    const fs::path out_dir = cfg.get("out_dir");
    fs::create_directories(out_dir);
    write_text(out_dir / "threshold.txt", fmt_g17(thr) + "\n");
  }
  out << "threshold " << fmt_g17(thr) << " f1 " << fmt4(f1) << "\n";
  return 0;
}

int cmd_build_mhred(const RunConfig& cfg, std::ostream& out) {
  check_keys(cfg, {"records", "kb", "relations", "seed", "out_dir"});
  const RelationSet relations = RelationSet::load(cfg.get("relations"));
  auto records = read_qa_records(cfg.get("records"), relations);
  KbIndex kb = KbIndex::load(cfg.get("kb"));

  std::ostringstream warn;
  MhredBuild b = build_mhred(records, kb, cfg.get_u64("seed", 1), &warn);

  const fs::path out_dir = cfg.get("out_dir");
  fs::create_directories(out_dir);
  write_chain_dataset((out_dir / "train.jsonl").string(), b.splits.train);
  write_chain_dataset((out_dir / "validation.jsonl").string(), b.splits.validation);
  write_chain_dataset((out_dir / "test.jsonl").string(), b.splits.test);

  std::string stats = format_stats(b.stats);
  if (!warn.str().empty()) stats += "skipped records:\n" + warn.str();
  write_text(out_dir / "stats.txt", stats);
  out << stats;
  return 0;
}

int cmd_ensemble(const RunConfig& cfg, const std::vector<std::string>& files_cli,
                 std::ostream& out, std::ostream& err) {
  check_keys(cfg, {"relations", "gold", "runs", "out_dir", "predictions", "length_policy"});
  std::vector<std::string> files;
  if (cfg.has("predictions")) {
    std::istringstream ss(cfg.get("predictions"));
    std::string piece;
    while (std::getline(ss, piece, ','))
      if (!piece.empty()) files.push_back(piece);
  }
  files.insert(files.end(), files_cli.begin(), files_cli.end());

  size_t k = cfg.get_size("runs", 5);
  if (files.size() < 2) throw ConfigError("ensemble needs at least two prediction files");
  if (files.size() != k)
    throw ConfigError("ensemble got " + std::to_string(files.size()) +
                      " prediction files but runs=" + std::to_string(k));

  std::vector<std::vector<TupleSet>> runs;
  runs.reserve(files.size());
  for (const auto& f : files) runs.push_back(read_tuple_predictions(f));
  auto voted = ensemble_vote(runs);

  const RelationSet relations = RelationSet::load(cfg.get("relations"));
  auto gold_data = read_joint_dataset(cfg.get("gold"), relations, length_policy(cfg), &err);
  auto gold = gold_tuple_sets(gold_data);
  if (gold.size() != voted.size())
    throw ValidationError("gold instance count does not match the prediction files");
  PrfReport r = tuple_set_prf(voted, gold);

  const fs::path out_dir = cfg.get("out_dir");
  fs::create_directories(out_dir);
  write_tuple_predictions((out_dir / "voted.jsonl").string(), voted);
  std::ostringstream report;
  report << "runs: " << files.size() << "\n";
  prf_line(report, "tuples", r);
  write_text(out_dir / "report.txt", report.str());
  out << "f1 " << fmt4(r.f1) << "\n";
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"relation extraction toolkit"};
  app.require_subcommand(1);

  std::string config_path, model, out_dir, seed_str, threshold_str, runs_str;
  std::vector<std::string> overrides;
  std::vector<std::string> ens_files;

  const std::pair<const char*, const char*> cmds[] = {
      {"train", "train a model and write a checkpoint"},
      {"eval", "score a checkpoint against a labeled dataset"},
      {"predict", "write model predictions for a dataset"},
      {"build-mhred", "construct document-chain datasets from QA records and a KB"},
      {"tune-threshold", "pick the confidence threshold maximizing validation F1"},
      {"ensemble", "majority-vote tuple predictions from several runs"}};
  std::vector<std::pair<std::string, CLI::App*>> subs;
  for (const auto& [name, desc] : cmds) {
    CLI::App* sc = app.add_subcommand(name, desc);
    sc->add_option("--config", config_path, "key=value run configuration file");
    sc->add_option("--set", overrides, "override one config value")->type_name("KEY=VALUE");
    sc->add_option("--out", out_dir, "output directory");
    subs.emplace_back(name, sc);
    if (std::string(name) == "train") {
      sc->add_option("--model", model, "model kind: mfa, wdec, pndec, hegcn");
      sc->add_option("--seed", seed_str, "random seed");
    }
    if (std::string(name) == "build-mhred") sc->add_option("--seed", seed_str, "random seed");
    if (std::string(name) == "eval")
      sc->add_option("--threshold", threshold_str, "override the stored confidence threshold");
    if (std::string(name) == "ensemble") {
      sc->add_option("--runs", runs_str, "expected number of prediction files");
      sc->add_option("files", ens_files, "tuple prediction files, one per run");
    }
  }

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  RunConfig cfg;
  for (const auto& [name, sc] : subs)
    if (sc->parsed()) cfg.command = name;

  try {
    if (!config_path.empty()) cfg.values = read_config_file(config_path);
    for (const auto& s : overrides) {
      size_t eq = s.find('=');
      if (eq == std::string::npos || eq == 0)
        throw ConfigError("--set expects KEY=VALUE, got '" + s + "'");
      cfg.values[s.substr(0, eq)] = s.substr(eq + 1);
    }
    if (!seed_str.empty()) cfg.values["seed"] = seed_str;
    if (!model.empty()) cfg.values["model"] = model;
    if (!out_dir.empty()) cfg.values["out_dir"] = out_dir;
    if (!threshold_str.empty()) cfg.values["threshold"] = threshold_str;
    if (!runs_str.empty()) cfg.values["runs"] = runs_str;

    if (cfg.command == "train") return cmd_train(cfg, out, err);
    if (cfg.command == "eval") return cmd_eval(cfg, out, err);
    if (cfg.command == "predict") return cmd_predict(cfg, out, err);
    if (cfg.command == "build-mhred") return cmd_build_mhred(cfg, out);
    if (cfg.command == "tune-threshold") return cmd_tune_threshold(cfg, out, err);
    return cmd_ensemble(cfg, ens_files, out, err);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace relx
