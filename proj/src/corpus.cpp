#include "relx/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "relx/rng.hpp"

namespace relx {

using ordered_json = nlohmann::ordered_json;

// ---------------------------------------------------------------- RelationSet

RelationSet RelationSet::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read relation set: " + path);
  std::vector<std::string> names;
  std::string line;
  while (std::getline(is, line)) {
    size_t a = line.find_first_not_of(" \t\r");
    if (a == std::string::npos) continue;
    size_t b = line.find_last_not_of(" \t\r");
    std::string name = line.substr(a, b - a + 1);
    if (name.empty() || name[0] == '#') continue;
    names.push_back(std::move(name));
  }
  return from_names(std::move(names));
}

RelationSet RelationSet::from_names(std::vector<std::string> names) {
  RelationSet rs;
  for (auto& name : names) {
    if (name == kNoneLabel)
      throw ConfigError("relation set must not list 'None'; it is implicit");
    if (name.find_first_of(" \t") != std::string::npos)
      throw ConfigError("relation name contains whitespace: '" + name +
                        "' (multi-word names use underscores)");
    if (rs.index_.count(name)) throw ConfigError("duplicate relation name: " + name);
    rs.index_[name] = rs.names_.size();
    rs.names_.push_back(std::move(name));
  }
  if (rs.names_.empty()) throw ConfigError("relation set is empty");
  return rs;
}

size_t RelationSet::index_of(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("relation not in set: " + name);
  return it->second;
}

// ----------------------------------------------------------------- Vocabulary

const std::array<const char*, Vocabulary::kNumReserved> Vocabulary::kReservedTokens = {
    "<pad>", "<unk>", "<sos>", "<eos>", ";", "|", "<doc>"};

Vocabulary::Vocabulary() {
  for (const char* t : kReservedTokens) {
    index_[t] = tokens_.size();
    tokens_.push_back(t);
  }
}

Vocabulary::Vocabulary(const RelationSet& relations) : Vocabulary() {
  for (const auto& name : relations.names()) add(name);
}

size_t Vocabulary::add(const std::string& token) {
  auto it = index_.find(token);
  if (it != index_.end()) return it->second;
  index_[token] = tokens_.size();
  tokens_.push_back(token);
  return tokens_.size() - 1;
}

size_t Vocabulary::lookup(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write vocabulary: " + path);
  for (const auto& t : tokens_) os << t << "\n";
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read vocabulary: " + path);
  Vocabulary v;
  std::string line;
  size_t idx = 0;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (idx < kNumReserved) {
      if (line != kReservedTokens[idx])
        throw FormatError("vocabulary reserved token mismatch, expected '" +
                              std::string(kReservedTokens[idx]) + "' got '" + line + "'",
                          idx + 1);
    } else {
      if (v.index_.count(line))
        throw FormatError("duplicate vocabulary token '" + line + "'", idx + 1);
      v.index_[line] = v.tokens_.size();
      v.tokens_.push_back(line);
    }
    ++idx;
  }
  if (idx < kNumReserved) throw FormatError("vocabulary file too short", idx);
  return v;
}

uint64_t Vocabulary::fingerprint() const {
  uint64_t h = 0xcbf29ce484222325ull;
  auto mix = [&h](unsigned char c) {
    h ^= c;
    h *= 0x100000001b3ull;
  };
  for (const auto& t : tokens_) {
    for (unsigned char c : t) mix(c);
    mix('\n');
  }
  return h;
}

// ------------------------------------------------------------------ CharVocab

CharVocab::CharVocab() = default;

size_t CharVocab::add(uint32_t cp) {
  auto it = index_.find(cp);
  if (it != index_.end()) return it->second;
  size_t idx = codepoints_.size() + 2;
  index_[cp] = idx;
  codepoints_.push_back(cp);
  return idx;
}

size_t CharVocab::lookup(uint32_t cp) const {
  auto it = index_.find(cp);
  return it == index_.end() ? kUnk : it->second;
}

void CharVocab::add_word(const std::string& utf8) {
  for (uint32_t cp : decode_utf8(utf8)) add(cp);
}

void CharVocab::save(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write character vocabulary: " + path);
  for (uint32_t cp : codepoints_) os << cp << "\n";
}

CharVocab CharVocab::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read character vocabulary: " + path);
  CharVocab cv;
  std::string line;
  size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      cv.add(static_cast<uint32_t>(std::stoul(line)));
    } catch (const std::exception&) {
      throw FormatError("bad codepoint '" + line + "'", lineno);
    }
  }
  return cv;
}

uint64_t CharVocab::fingerprint() const {
  uint64_t h = 0xcbf29ce484222325ull;
  for (uint32_t cp : codepoints_) {
    for (int i = 0; i < 4; ++i) {
      h ^= (cp >> (8 * i)) & 0xff;
      h *= 0x100000001b3ull;
    }
  }
  return h;
}

std::vector<uint32_t> CharVocab::decode_utf8(const std::string& s) {
  std::vector<uint32_t> out;
  size_t i = 0;
  const auto bad = 0xFFFDu;
  while (i < s.size()) {
    unsigned char c = s[i];
    if (c < 0x80) {
      out.push_back(c);
      ++i;
      continue;
    }
    int extra;
    uint32_t cp;
    if ((c >> 5) == 0x6) {
      extra = 1;
      cp = c & 0x1f;
    } else if ((c >> 4) == 0xe) {
      extra = 2;
      cp = c & 0x0f;
    } else if ((c >> 3) == 0x1e) {
      extra = 3;
      cp = c & 0x07;
    } else {
      out.push_back(bad);
      ++i;
      continue;
    }
    if (i + extra >= s.size()) {
      out.push_back(bad);
      ++i;
      continue;
    }
    bool ok = true;
    uint32_t acc = cp;
    for (int k = 1; k <= extra; ++k) {
      unsigned char cc = s[i + k];
      if ((cc >> 6) != 0x2) {
        ok = false;
        break;
      }
      acc = (acc << 6) | (cc & 0x3f);
    }
    if (ok) {
      out.push_back(acc);
      i += extra + 1;
    } else {
      out.push_back(bad);
      ++i;
    }
  }
  return out;
}

// ----------------------------------------------------------------- Embeddings

Tensor random_embeddings(const Vocabulary& vocab, size_t dim, uint64_t seed) {
  Rng rng(seed);
  Tensor m(vocab.size(), dim);
  for (size_t r = Vocabulary::kPad + 1; r < vocab.size(); ++r)
    for (size_t c = 0; c < dim; ++c) m(r, c) = rng.uniform(-0.1, 0.1);
  return m;
}

Tensor load_embeddings(const std::string& path, const Vocabulary& vocab, size_t dim,
                       uint64_t seed, EmbeddingLoadStats* stats) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read embeddings: " + path);

  std::unordered_map<std::string, std::vector<double>> rows;
  std::string line;
  size_t lineno = 0;
  size_t file_dim = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    size_t sp = line.find(' ');
    if (sp == std::string::npos) throw FormatError("embedding line has no values", lineno);
    std::string token = line.substr(0, sp);
    std::vector<double> vals;
    size_t pos = sp + 1;
    while (pos < line.size()) {
      size_t next = line.find(' ', pos);
      std::string piece = line.substr(pos, next == std::string::npos ? next : next - pos);
      if (!piece.empty()) {
        try {
          size_t used = 0;
          vals.push_back(std::stod(piece, &used));
          if (used != piece.size()) throw std::invalid_argument(piece);
        } catch (const std::exception&) {
          throw FormatError("bad float '" + piece + "' in embeddings", lineno);
        }
      }
      if (next == std::string::npos) break;
      pos = next + 1;
    }
    if (file_dim == 0) {
      file_dim = vals.size();
      if (file_dim != dim)
        throw ConfigError("embedding file dimension " + std::to_string(file_dim) +
                          " does not match configured dimension " + std::to_string(dim));
    }
    if (vals.size() != file_dim)
      throw FormatError("expected " + std::to_string(file_dim) + " floats, got " +
                            std::to_string(vals.size()),
                        lineno);
    rows[token] = std::move(vals);
  }

  Rng rng(seed);
  Tensor m(vocab.size(), dim);
  EmbeddingLoadStats local;
  for (size_t r = 0; r < vocab.size(); ++r) {
    if (r == Vocabulary::kPad) continue;  // padding row stays zero
    auto it = rows.find(vocab.token(r));
    if (it != rows.end()) {
      for (size_t c = 0; c < dim; ++c) m(r, c) = it->second[c];
      ++local.from_file;
    } else {
      for (size_t c = 0; c < dim; ++c) m(r, c) = rng.uniform(-0.1, 0.1);
      ++local.randomly_initialized;
    }
  }
  if (stats) *stats = local;
  return m;
}

// ------------------------------------------------------------- JSON utilities

namespace {

ordered_json parse_line(const std::string& line, size_t lineno) {
  ordered_json j = ordered_json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object())
    throw FormatError("line is not a JSON object", lineno);
  return j;
}

const ordered_json& field(const ordered_json& j, const char* name, size_t rec) {
  auto it = j.find(name);
  if (it == j.end()) throw ValidationError("missing field", rec, name);
  return *it;
}

std::vector<std::string> string_vec(const ordered_json& v, size_t rec, const char* name) {
  if (!v.is_array()) throw ValidationError("expected array of strings", rec, name);
  std::vector<std::string> out;
  out.reserve(v.size());
  for (const auto& x : v) {
    if (!x.is_string()) throw ValidationError("expected string element", rec, name);
    out.push_back(x.get<std::string>());
  }
  return out;
}

std::vector<int> int_vec(const ordered_json& v, size_t rec, const char* name) {
  if (!v.is_array()) throw ValidationError("expected array of integers", rec, name);
  std::vector<int> out;
  out.reserve(v.size());
  for (const auto& x : v) {
    if (!x.is_number_integer()) throw ValidationError("expected integer element", rec, name);
    out.push_back(x.get<int>());
  }
  return out;
}

Span span_of(const ordered_json& v, size_t rec, const char* name) {
  if (!v.is_array() || v.size() != 2 || !v[0].is_number_integer() || !v[1].is_number_integer())
    throw ValidationError("expected [start, end] span", rec, name);
  return Span{v[0].get<int>(), v[1].get<int>()};
}

void check_span(const Span& s, size_t n_tokens, size_t rec, const char* name) {
  if (s.start < 0 || s.end < s.start || static_cast<size_t>(s.end) >= n_tokens)
    throw ValidationError("span [" + std::to_string(s.start) + "," + std::to_string(s.end) +
                              "] out of range for " + std::to_string(n_tokens) + " tokens",
                          rec, name);
}

std::string relation_label(const ordered_json& j, const RelationSet& relations, size_t rec,
                           bool allow_none) {
  const auto& v = field(j, "relation", rec);
  if (!v.is_string()) throw ValidationError("expected string", rec, "relation");
  std::string r = v.get<std::string>();
  if (r == kNoneLabel) {
    if (!allow_none) throw ValidationError("'None' label not allowed here", rec, "relation");
    return r;
  }
  if (!relations.contains(r))
    throw ValidationError("relation '" + r + "' not in relation set", rec, "relation");
  return r;
}

// Edges must form a spanning tree of the token graph.
void check_tree(const std::vector<std::pair<int, int>>& edges, size_t n, size_t rec) {
  if (edges.size() + 1 != n)
    throw ValidationError("parse has " + std::to_string(edges.size()) + " edges for " +
                              std::to_string(n) + " tokens; a tree needs n-1",
                          rec, "dep_edges");
  std::vector<std::vector<int>> adj(n);
  for (auto [p, c] : edges) {
    if (p < 0 || c < 0 || static_cast<size_t>(p) >= n || static_cast<size_t>(c) >= n)
      throw ValidationError("parse edge index out of range", rec, "dep_edges");
    adj[p].push_back(c);
    adj[c].push_back(p);
  }
  std::vector<char> seen(n, 0);
  std::vector<int> stack = {0};
  seen[0] = 1;
  size_t visited = 1;
  while (!stack.empty()) {
    int u = stack.back();
    stack.pop_back();
    for (int v : adj[u]) {
      if (!seen[v]) {
        seen[v] = 1;
        ++visited;
        stack.push_back(v);
      }
    }
  }
  if (visited != n)
    throw ValidationError("parse is disconnected or cyclic", rec, "dep_edges");
}

ordered_json span_json(const Span& s) { return ordered_json::array({s.start, s.end}); }

std::vector<std::string> read_lines(const std::string& path, const char* what) {
  std::ifstream is(path);
  if (!is) throw ConfigError(std::string("cannot read ") + what + ": " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(is, line)) lines.push_back(line);
  return lines;
}

}  // namespace

// ----------------------------------------------------------- sentence dataset

namespace {

RelationInstance sentence_from_json(const ordered_json& j, const RelationSet& relations,
                                    size_t rec) {
  RelationInstance inst;
  inst.tokens = string_vec(field(j, "tokens", rec), rec, "tokens");
  if (inst.tokens.empty()) throw ValidationError("empty token list", rec, "tokens");
  inst.e1 = span_of(field(j, "e1", rec), rec, "e1");
  inst.e2 = span_of(field(j, "e2", rec), rec, "e2");
  check_span(inst.e1, inst.tokens.size(), rec, "e1");
  check_span(inst.e2, inst.tokens.size(), rec, "e2");
  inst.relation = relation_label(j, relations, rec, /*allow_none=*/true);
  const auto& edges = field(j, "dep_edges", rec);
  if (!edges.is_array()) throw ValidationError("expected array", rec, "dep_edges");
  for (const auto& e : edges) {
    if (!e.is_array() || e.size() != 2 || !e[0].is_number_integer() ||
        !e[1].is_number_integer())
      throw ValidationError("expected [parent, child] pair", rec, "dep_edges");
    inst.dep_edges.emplace_back(e[0].get<int>(), e[1].get<int>());
  }
  check_tree(inst.dep_edges, inst.tokens.size(), rec);
  return inst;
}

ordered_json sentence_to_json(const RelationInstance& inst) {
  ordered_json j;
  j["tokens"] = inst.tokens;
  j["e1"] = span_json(inst.e1);
  j["e2"] = span_json(inst.e2);
  j["relation"] = inst.relation;
  auto edges = inst.dep_edges;
  std::sort(edges.begin(), edges.end());
  ordered_json arr = ordered_json::array();
  for (auto [p, c] : edges) arr.push_back(ordered_json::array({p, c}));
  j["dep_edges"] = arr;
  return j;
}

}  // namespace

std::vector<RelationInstance> read_sentence_dataset(const std::string& path,
                                                    const RelationSet& relations,
                                                    LengthPolicy policy,
                                                    std::ostream* warnings) {
  std::vector<RelationInstance> out;
  auto lines = read_lines(path, "sentence dataset");
  for (size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    size_t rec = i + 1;
    ordered_json j = parse_line(lines[i], rec);
    RelationInstance inst = sentence_from_json(j, relations, rec);
    if (inst.tokens.size() > kMaxSentenceLen) {
      if (policy == LengthPolicy::kReject)
        throw ValidationError("sentence exceeds " + std::to_string(kMaxSentenceLen) + " tokens",
                              rec, "tokens");
      // Truncate for prediction; if the marked entities or the parse do not
      // survive truncation the record is skipped.
      RelationInstance cut = inst;
      cut.tokens.resize(kMaxSentenceLen);
      cut.dep_edges.clear();
      for (auto [p, c] : inst.dep_edges)
        if (p < static_cast<int>(kMaxSentenceLen) && c < static_cast<int>(kMaxSentenceLen))
          cut.dep_edges.emplace_back(p, c);
      try {
        check_span(cut.e1, cut.tokens.size(), rec, "e1");
        check_span(cut.e2, cut.tokens.size(), rec, "e2");
        check_tree(cut.dep_edges, cut.tokens.size(), rec);
      } catch (const ValidationError&) {
        if (warnings)
          (*warnings) << "record " << rec << ": dropped, does not survive truncation to "
                      << kMaxSentenceLen << " tokens\n";
        continue;
      }
      if (warnings)
        (*warnings) << "record " << rec << ": truncated to " << kMaxSentenceLen << " tokens\n";
      out.push_back(std::move(cut));
      continue;
    }
    out.push_back(std::move(inst));
  }
  return out;
}

void write_sentence_dataset(const std::string& path,
                            const std::vector<RelationInstance>& instances) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write sentence dataset: " + path);
  for (const auto& inst : instances) os << sentence_to_json(inst).dump() << "\n";
}

// -------------------------------------------------------------- joint dataset

namespace {

bool tuple_less(const Tuple& a, const Tuple& b) {
  auto key = [](const Tuple& t) {
    return std::make_tuple(t.e1.start, t.e1.end, t.e2.start, t.e2.end, t.relation);
  };
  return key(a) < key(b);
}

JointInstance joint_from_json(const ordered_json& j, const RelationSet& relations, size_t rec) {
  JointInstance inst;
  inst.tokens = string_vec(field(j, "tokens", rec), rec, "tokens");
  if (inst.tokens.empty()) throw ValidationError("empty token list", rec, "tokens");
  const auto& tuples = field(j, "tuples", rec);
  if (!tuples.is_array()) throw ValidationError("expected array", rec, "tuples");
  for (const auto& t : tuples) {
    if (!t.is_object()) throw ValidationError("expected tuple object", rec, "tuples");
    Tuple tup;
    tup.e1 = span_of(field(t, "e1", rec), rec, "tuples.e1");
    tup.e2 = span_of(field(t, "e2", rec), rec, "tuples.e2");
    check_span(tup.e1, inst.tokens.size(), rec, "tuples.e1");
    check_span(tup.e2, inst.tokens.size(), rec, "tuples.e2");
    tup.relation = relation_label(t, relations, rec, /*allow_none=*/false);
    for (const auto& prev : inst.tuples)
      if (prev == tup) throw ValidationError("duplicate tuple", rec, "tuples");
    inst.tuples.push_back(std::move(tup));
  }
  return inst;
}

ordered_json joint_to_json(const JointInstance& inst) {
  ordered_json j;
  j["tokens"] = inst.tokens;
  auto tuples = inst.tuples;
  std::sort(tuples.begin(), tuples.end(), tuple_less);
  ordered_json arr = ordered_json::array();
  for (const auto& t : tuples) {
    ordered_json tj;
    tj["e1"] = span_json(t.e1);
    tj["e2"] = span_json(t.e2);
    tj["relation"] = t.relation;
    arr.push_back(tj);
  }
  j["tuples"] = arr;
  return j;
}

}  // namespace

std::vector<JointInstance> read_joint_dataset(const std::string& path,
                                              const RelationSet& relations, LengthPolicy policy,
                                              std::ostream* warnings) {
  std::vector<JointInstance> out;
  auto lines = read_lines(path, "joint dataset");
  for (size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    size_t rec = i + 1;
    ordered_json j = parse_line(lines[i], rec);
    JointInstance inst = joint_from_json(j, relations, rec);
    if (inst.tokens.size() > kMaxSentenceLen) {
      if (policy == LengthPolicy::kReject)
        throw ValidationError("sentence exceeds " + std::to_string(kMaxSentenceLen) + " tokens",
                              rec, "tokens");
      inst.tokens.resize(kMaxSentenceLen);
      std::vector<Tuple> kept;
      for (const auto& t : inst.tuples)
        if (static_cast<size_t>(t.e1.end) < kMaxSentenceLen &&
            static_cast<size_t>(t.e2.end) < kMaxSentenceLen)
          kept.push_back(t);
      inst.tuples = std::move(kept);
      if (warnings)
        (*warnings) << "record " << rec << ": truncated to " << kMaxSentenceLen << " tokens\n";
    }
    out.push_back(std::move(inst));
  }
  return out;
}

void write_joint_dataset(const std::string& path, const std::vector<JointInstance>& instances) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write joint dataset: " + path);
  for (const auto& inst : instances) os << joint_to_json(inst).dump() << "\n";
}

// -------------------------------------------------------------- chain dataset

namespace {

void check_sent_ids(const std::vector<int>& ids, size_t n_tokens, size_t rec,
                    const char* name) {
  if (ids.size() != n_tokens)
    throw ValidationError("sentence id list length differs from token count", rec, name);
  int prev = 0;
  for (size_t i = 0; i < ids.size(); ++i) {
    int id = ids[i];
    if (i == 0 && id != 0) throw ValidationError("sentence ids must start at 0", rec, name);
    if (i > 0 && (id < prev || id > prev + 1))
      throw ValidationError("sentence ids must be contiguous and nondecreasing", rec, name);
    prev = id;
  }
}

std::vector<Span> span_list(const ordered_json& v, size_t n_tokens, size_t rec,
                            const char* name) {
  if (!v.is_array()) throw ValidationError("expected array of spans", rec, name);
  std::vector<Span> out;
  for (const auto& s : v) {
    Span sp = span_of(s, rec, name);
    check_span(sp, n_tokens, rec, name);
    out.push_back(sp);
  }
  return out;
}

ChainInstance chain_from_json(const ordered_json& j, const RelationSet& relations, size_t rec) {
  ChainInstance inst;
  inst.doc1_tokens = string_vec(field(j, "doc1_tokens", rec), rec, "doc1_tokens");
  inst.doc2_tokens = string_vec(field(j, "doc2_tokens", rec), rec, "doc2_tokens");
  if (inst.doc1_tokens.empty()) throw ValidationError("empty document", rec, "doc1_tokens");
  if (inst.doc2_tokens.empty()) throw ValidationError("empty document", rec, "doc2_tokens");
  inst.sent_ids_1 = int_vec(field(j, "sent_ids_1", rec), rec, "sent_ids_1");
  inst.sent_ids_2 = int_vec(field(j, "sent_ids_2", rec), rec, "sent_ids_2");
  check_sent_ids(inst.sent_ids_1, inst.doc1_tokens.size(), rec, "sent_ids_1");
  check_sent_ids(inst.sent_ids_2, inst.doc2_tokens.size(), rec, "sent_ids_2");
  inst.subject_mentions = span_list(field(j, "subject_mentions", rec), inst.doc1_tokens.size(),
                                    rec, "subject_mentions");
  inst.object_mentions = span_list(field(j, "object_mentions", rec), inst.doc2_tokens.size(),
                                   rec, "object_mentions");
  if (inst.subject_mentions.empty())
    throw ValidationError("subject has no mentions in document 1", rec, "subject_mentions");
  if (inst.object_mentions.empty())
    throw ValidationError("object has no mentions in document 2", rec, "object_mentions");

  const auto& commons = field(j, "common_entities", rec);
  if (!commons.is_array()) throw ValidationError("expected array", rec, "common_entities");
  for (const auto& c : commons) {
    if (!c.is_object()) throw ValidationError("expected object", rec, "common_entities");
    CommonEntity ce;
    const auto& s = field(c, "string", rec);
    if (!s.is_string() || s.get<std::string>().empty())
      throw ValidationError("common entity needs a nonempty string", rec, "common_entities");
    ce.canonical = s.get<std::string>();
    ce.mentions_1 = span_list(field(c, "mentions_1", rec), inst.doc1_tokens.size(), rec,
                              "common_entities.mentions_1");
    ce.mentions_2 = span_list(field(c, "mentions_2", rec), inst.doc2_tokens.size(), rec,
                              "common_entities.mentions_2");
    if (ce.mentions_1.empty() || ce.mentions_2.empty())
      throw ValidationError("common entity '" + ce.canonical +
                                "' must have mentions in both documents",
                            rec, "common_entities");
    inst.commons.push_back(std::move(ce));
  }
  if (inst.commons.empty())
    throw ValidationError("chain instance needs at least one common entity", rec,
                          "common_entities");

  auto read_extras = [&](const char* name, size_t n_tokens, std::vector<Mention>& dst) {
    auto it = j.find(name);
    if (it == j.end()) return;  // optional
    if (!it->is_array()) throw ValidationError("expected array", rec, name);
    for (const auto& m : *it) {
      if (!m.is_object()) throw ValidationError("expected mention object", rec, name);
      Mention men;
      const auto& s = field(m, "string", rec);
      if (!s.is_string()) throw ValidationError("expected string", rec, name);
      men.text = s.get<std::string>();
      men.span = span_of(field(m, "span", rec), rec, name);
      check_span(men.span, n_tokens, rec, name);
      dst.push_back(std::move(men));
    }
  };
  read_extras("extra_mentions_1", inst.doc1_tokens.size(), inst.extra_1);
  read_extras("extra_mentions_2", inst.doc2_tokens.size(), inst.extra_2);

  inst.relation = relation_label(j, relations, rec, /*allow_none=*/true);
  return inst;
}

ordered_json chain_to_json(const ChainInstance& inst) {
  ordered_json j;
  j["doc1_tokens"] = inst.doc1_tokens;
  j["doc2_tokens"] = inst.doc2_tokens;
  j["sent_ids_1"] = inst.sent_ids_1;
  j["sent_ids_2"] = inst.sent_ids_2;
  auto spans_json = [](std::vector<Span> spans) {
    std::sort(spans.begin(), spans.end());
    ordered_json arr = ordered_json::array();
    for (const auto& s : spans) arr.push_back(span_json(s));
    return arr;
  };
  j["subject_mentions"] = spans_json(inst.subject_mentions);
  j["object_mentions"] = spans_json(inst.object_mentions);
  auto commons = inst.commons;
  std::sort(commons.begin(), commons.end(),
            [](const CommonEntity& a, const CommonEntity& b) { return a.canonical < b.canonical; });
  ordered_json carr = ordered_json::array();
  for (const auto& c : commons) {
    ordered_json cj;
    cj["string"] = c.canonical;
    cj["mentions_1"] = spans_json(c.mentions_1);
    cj["mentions_2"] = spans_json(c.mentions_2);
    carr.push_back(cj);
  }
  j["common_entities"] = carr;
  auto extras_json = [](std::vector<Mention> ms) {
    std::sort(ms.begin(), ms.end(), [](const Mention& a, const Mention& b) {
      return std::tie(a.span, a.text) < std::tie(b.span, b.text);
    });
    ordered_json arr = ordered_json::array();
    for (const auto& m : ms) {
      ordered_json mj;
      mj["string"] = m.text;
      mj["span"] = span_json(m.span);
      arr.push_back(mj);
    }
    return arr;
  };
  j["extra_mentions_1"] = extras_json(inst.extra_1);
  j["extra_mentions_2"] = extras_json(inst.extra_2);
  j["relation"] = inst.relation;
  return j;
}

}  // namespace

std::vector<ChainInstance> read_chain_dataset(const std::string& path,
                                              const RelationSet& relations,
                                              std::ostream* warnings) {
  (void)warnings;
  std::vector<ChainInstance> out;
  auto lines = read_lines(path, "chain dataset");
  for (size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    size_t rec = i + 1;
    ordered_json j = parse_line(lines[i], rec);
    out.push_back(chain_from_json(j, relations, rec));
  }
  return out;
}

void write_chain_dataset(const std::string& path, const std::vector<ChainInstance>& instances) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write chain dataset: " + path);
  for (const auto& inst : instances) os << chain_to_json(inst).dump() << "\n";
}

// ------------------------------------------------------------- overlap classes

const char* to_string(OverlapClass c) {
  switch (c) {
    case OverlapClass::kNeo:
      return "NEO";
    case OverlapClass::kEpo:
      return "EPO";
    case OverlapClass::kSeo:
      return "SEO";
    case OverlapClass::kEpoSeo:
      return "EPO+SEO";
  }
  return "?";
}

OverlapClass classify_overlap(const JointInstance& inst) {
  if (inst.tuples.empty()) throw DomainError("classify_overlap: instance has no tuples");
  bool epo = false, seo = false;
  for (size_t i = 0; i < inst.tuples.size(); ++i) {
    for (size_t k = i + 1; k < inst.tuples.size(); ++k) {
      const Tuple& a = inst.tuples[i];
      const Tuple& b = inst.tuples[k];
      bool both = (a.e1 == b.e1 && a.e2 == b.e2) || (a.e1 == b.e2 && a.e2 == b.e1);
      if (both) {
        epo = true;
        continue;
      }
      bool shares = a.e1 == b.e1 || a.e1 == b.e2 || a.e2 == b.e1 || a.e2 == b.e2;
      if (shares) seo = true;
    }
  }
  if (epo && seo) return OverlapClass::kEpoSeo;
  if (epo) return OverlapClass::kEpo;
  if (seo) return OverlapClass::kSeo;
  return OverlapClass::kNeo;
}

// -------------------------------------------------------------- string helpers

std::string detokenize(const std::vector<std::string>& tokens, const Span& span) {
  std::string out;
  for (int i = span.start; i <= span.end; ++i) {
    if (i > span.start) out += ' ';
    out += tokens[static_cast<size_t>(i)];
  }
  return out;
}

std::string canonical_entity_string(const std::string& s) {
  std::string out;
  bool in_space = true;
  for (unsigned char c : s) {
    if (std::isspace(c)) {
      if (!in_space) out += ' ';
      in_space = true;
    } else {
      out += static_cast<char>(std::tolower(c));
      in_space = false;
    }
  }
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

}  // namespace relx
