#include "relx/mhred.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "relx/error.hpp"
#include "relx/rng.hpp"

namespace relx {

using ordered_json = nlohmann::ordered_json;

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

std::string string_field(const ordered_json& j, const char* name, size_t rec) {
  const auto& v = field(j, name, rec);
  if (!v.is_string() || v.get<std::string>().empty())
    throw ValidationError("expected nonempty string", rec, name);
  return v.get<std::string>();
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

}  // namespace

std::vector<QaRecord> read_qa_records(const std::string& path, const RelationSet& relations) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read QA records: " + path);
  std::vector<QaRecord> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    size_t rec = lineno;
    ordered_json j = parse_line(line, rec);

    QaRecord r;
    auto id = j.find("id");
    r.id = id != j.end() && id->is_string() ? id->get<std::string>()
                                            : "record " + std::to_string(rec);
    std::string split = string_field(j, "split", rec);
    if (split != "train" && split != "test")
      throw ValidationError("split must be 'train' or 'test'", rec, "split");
    r.test_source = split == "test";
    r.relation = string_field(j, "relation", rec);
    if (!relations.contains(r.relation))
      throw ValidationError("unknown relation '" + r.relation + "'", rec, "relation");
    r.subject = string_field(j, "subject", rec);
    r.answer = string_field(j, "answer", rec);
    r.candidates = string_vec(field(j, "candidates", rec), rec, "candidates");
    std::string ans = canonical_entity_string(r.answer);
    bool found = false;
    for (const auto& c : r.candidates) found = found || canonical_entity_string(c) == ans;
    if (!found) throw ValidationError("answer is not among the candidates", rec, "answer");

    const auto& docs = field(j, "documents", rec);
    if (!docs.is_array() || docs.size() < 2)
      throw ValidationError("need at least two documents", rec, "documents");
    for (const auto& d : docs) {
      if (!d.is_object()) throw ValidationError("expected document object", rec, "documents");
      QaDocument doc;
      doc.tokens = string_vec(field(d, "tokens", rec), rec, "documents.tokens");
      if (doc.tokens.empty())
        throw ValidationError("empty document", rec, "documents.tokens");
      const auto& sids = field(d, "sent_ids", rec);
      if (!sids.is_array() || sids.size() != doc.tokens.size())
        throw ValidationError("sent_ids must match token count", rec, "documents.sent_ids");
      for (const auto& x : sids) {
        if (!x.is_number_integer() || x.get<int>() < 0)
          throw ValidationError("sentence ids must be nonnegative integers", rec,
                                "documents.sent_ids");
        doc.sent_ids.push_back(x.get<int>());
      }
      const auto& ms = field(d, "mentions", rec);
      if (!ms.is_array()) throw ValidationError("expected array", rec, "documents.mentions");
      for (const auto& m : ms) {
        if (!m.is_object())
          throw ValidationError("expected mention object", rec, "documents.mentions");
        Mention men;
        men.text = string_field(m, "string", rec);
        const auto& sp = field(m, "span", rec);
        if (!sp.is_array() || sp.size() != 2 || !sp[0].is_number_integer() ||
            !sp[1].is_number_integer())
          throw ValidationError("expected [start, end] span", rec, "documents.mentions");
        men.span = {sp[0].get<int>(), sp[1].get<int>()};
        if (men.span.start < 0 || men.span.end < men.span.start ||
            static_cast<size_t>(men.span.end) >= doc.tokens.size())
          throw ValidationError("mention span out of range", rec, "documents.mentions");
        doc.mentions.push_back(std::move(men));
      }
      r.documents.push_back(std::move(doc));
    }
    out.push_back(std::move(r));
  }
  return out;
}

void KbIndex::add(const std::string& subject, const std::string& object) {
  pairs_.insert(canonical_entity_string(subject) + '\t' + canonical_entity_string(object));
}

bool KbIndex::related(const std::string& subject, const std::string& object) const {
  return pairs_.count(canonical_entity_string(subject) + '\t' +
                      canonical_entity_string(object)) != 0;
}

KbIndex KbIndex::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read KB triples: " + path);
  KbIndex kb;
  std::string line;
  size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    size_t t1 = line.find('\t');
    size_t t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
    if (t2 == std::string::npos)
      throw FormatError("expected subject<TAB>object<TAB>relation", lineno);
    std::string s = line.substr(0, t1);
    std::string o = line.substr(t1 + 1, t2 - t1 - 1);
    if (s.empty() || o.empty()) throw FormatError("empty KB entity", lineno);
    kb.add(s, o);
  }
  return kb;
}

std::vector<Span> find_mentions(const std::vector<std::string>& tokens,
                                const std::string& entity) {
  std::vector<std::string> etoks;
  std::istringstream ss(entity);
  std::string w;
  while (ss >> w) etoks.push_back(canonical_entity_string(w));
  std::vector<Span> out;
  if (etoks.empty()) return out;
  size_t n = tokens.size(), m = etoks.size();
  size_t i = 0;
  while (i + m <= n) {
    bool match = true;
    for (size_t k = 0; k < m && match; ++k)
      match = canonical_entity_string(tokens[i + k]) == etoks[k];
    if (match) {
      out.push_back({static_cast<int>(i), static_cast<int>(i + m - 1)});
      i += m;
    } else {
      ++i;
    }
  }
  return out;
}

std::vector<ChainInstance> build_chains(const QaRecord& rec, const KbIndex& kb,
                                        std::ostream* warnings) {
  std::vector<ChainInstance> out;
  size_t nd = rec.documents.size();

  std::vector<std::vector<Span>> subj_spans(nd);
  bool subj_anywhere = false;
  for (size_t d = 0; d < nd; ++d) {
    subj_spans[d] = find_mentions(rec.documents[d].tokens, rec.subject);
    subj_anywhere = subj_anywhere || !subj_spans[d].empty();
  }
  if (!subj_anywhere) {
    if (warnings)
      (*warnings) << rec.id << ": subject '" << rec.subject
                  << "' not found in any document; record skipped\n";
    return out;
  }

  std::string subj_canon = canonical_entity_string(rec.subject);
  std::string ans_canon = canonical_entity_string(rec.answer);
  std::unordered_set<std::string> excluded = {subj_canon};
  for (const auto& c : rec.candidates) excluded.insert(canonical_entity_string(c));

  // None candidates: unrelated to both subject and answer in either direction.
  std::vector<std::string> none_cands;
  std::unordered_set<std::string> seen_cands;
  for (const auto& c : rec.candidates) {
    std::string cc = canonical_entity_string(c);
    if (cc == ans_canon || !seen_cands.insert(cc).second) continue;
    if (kb.related(subj_canon, cc) || kb.related(cc, subj_canon) ||
        kb.related(cc, ans_canon) || kb.related(ans_canon, cc))
      continue;
    none_cands.push_back(c);
  }

  // Per document: canonical string -> NER mention spans, in appearance order.
  struct DocEntities {
    std::vector<std::string> order;
    std::unordered_map<std::string, std::vector<Span>> spans;
  };
  std::vector<DocEntities> ents(nd);
  for (size_t d = 0; d < nd; ++d)
    for (const auto& m : rec.documents[d].mentions) {
      std::string c = canonical_entity_string(m.text);
      auto [it, fresh] = ents[d].spans.try_emplace(c);
      if (fresh) ents[d].order.push_back(c);
      it->second.push_back(m.span);
    }

  for (size_t i = 0; i < nd; ++i) {
    if (subj_spans[i].empty()) continue;
    for (size_t j = 0; j < nd; ++j) {
      if (j == i) continue;
      std::vector<CommonEntity> commons;
      for (const auto& c : ents[i].order) {
        if (excluded.count(c) || !ents[j].spans.count(c)) continue;
        commons.push_back({c, ents[i].spans[c], ents[j].spans[c]});
      }
      if (commons.empty()) continue;

      auto emit = [&](const std::string& object, const std::string& label) {
        std::vector<Span> ospans = find_mentions(rec.documents[j].tokens, object);
        if (ospans.empty()) return;
        std::string obj_canon = canonical_entity_string(object);
        ChainInstance ci;
        ci.doc1_tokens = rec.documents[i].tokens;
        ci.doc2_tokens = rec.documents[j].tokens;
        ci.sent_ids_1 = rec.documents[i].sent_ids;
        ci.sent_ids_2 = rec.documents[j].sent_ids;
        ci.subject_mentions = subj_spans[i];
        ci.object_mentions = ospans;
        ci.commons = commons;
        std::unordered_set<std::string> used1 = {subj_canon}, used2 = {obj_canon};
        for (const auto& com : commons) {
          used1.insert(com.canonical);
          used2.insert(com.canonical);
        }
        for (const auto& m : rec.documents[i].mentions)
          if (!used1.count(canonical_entity_string(m.text))) ci.extra_1.push_back(m);
        for (const auto& m : rec.documents[j].mentions)
          if (!used2.count(canonical_entity_string(m.text))) ci.extra_2.push_back(m);
        ci.relation = label;
        out.push_back(std::move(ci));
      };
      emit(rec.answer, rec.relation);
      for (const auto& ew : none_cands) emit(ew, kNoneLabel);
    }
  }
  return out;
}

MhredSplits balance_and_split(const std::vector<ChainInstance>& train_source,
                              const std::vector<ChainInstance>& test_source, uint64_t seed) {
  size_t positives = 0;
  for (const auto& c : train_source) positives += c.relation != kNoneLabel;
  if (positives == 0)
    throw ConfigError("mhred: the train source contains no positive chains");

  Rng rng(seed);
  std::vector<size_t> order(train_source.size());
  std::iota(order.begin(), order.end(), size_t{0});
  rng.shuffle(order);
  size_t n_train = train_source.size() * 9 / 10;

  auto balance = [&](size_t lo, size_t hi) {
    std::vector<size_t> nones;
    size_t pos = 0;
    for (size_t k = lo; k < hi; ++k) {
      if (train_source[order[k]].relation == kNoneLabel)
        nones.push_back(k);
      else
        ++pos;
    }
    std::unordered_set<size_t> keep(nones.begin(), nones.end());
    if (nones.size() > pos) {
      rng.shuffle(nones);
      keep = std::unordered_set<size_t>(nones.begin(), nones.begin() + pos);
    }
    std::vector<ChainInstance> out;
    for (size_t k = lo; k < hi; ++k) {
      const auto& c = train_source[order[k]];
      if (c.relation != kNoneLabel || keep.count(k)) out.push_back(c);
    }
    return out;
  };

  MhredSplits splits;
  splits.train = balance(0, n_train);
  splits.validation = balance(n_train, train_source.size());
  splits.test = test_source;
  return splits;
}

MhredBuild build_mhred(const std::vector<QaRecord>& records, const KbIndex& kb, uint64_t seed,
                       std::ostream* warnings) {
  MhredBuild b;
  std::vector<ChainInstance> train_src, test_src;
  for (const auto& rec : records) {
    ++b.stats.records;
    std::vector<ChainInstance> chains = build_chains(rec, kb, warnings);
    if (chains.empty()) ++b.stats.records_skipped;
    for (auto& c : chains) {
      ++b.stats.commons_per_chain[c.commons.size()];
      ++(c.relation == kNoneLabel ? b.stats.chains_none : b.stats.chains_pos);
      (rec.test_source ? test_src : train_src).push_back(std::move(c));
    }
  }
  b.splits = balance_and_split(train_src, test_src, seed);

  auto count = [](const std::vector<ChainInstance>& v, size_t& pos, size_t& none) {
    for (const auto& c : v) ++(c.relation == kNoneLabel ? none : pos);
  };
  count(b.splits.train, b.stats.train_pos, b.stats.train_none);
  count(b.splits.validation, b.stats.val_pos, b.stats.val_none);
  count(b.splits.test, b.stats.test_pos, b.stats.test_none);
  return b;
}

std::string format_stats(const MhredStats& s) {
  std::ostringstream os;
  os << "records      " << s.records << " (" << s.records_skipped << " produced no chains)\n";
  os << "chains       " << s.chains_pos + s.chains_none << " (" << s.chains_pos
     << " positive, " << s.chains_none << " None)\n";
  os << "train        " << s.train_pos + s.train_none << " (" << s.train_pos << " positive, "
     << s.train_none << " None)\n";
  os << "validation   " << s.val_pos + s.val_none << " (" << s.val_pos << " positive, "
     << s.val_none << " None)\n";
  os << "test         " << s.test_pos + s.test_none << " (" << s.test_pos << " positive, "
     << s.test_none << " None)\n";
  os << "common entities per chain:\n";
  for (const auto& [k, v] : s.commons_per_chain) os << "  " << k << ": " << v << "\n";
  return os.str();
}

}  // namespace relx
