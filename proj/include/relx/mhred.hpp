#pragma once

#include <map>
#include <ostream>
#include <string>
#include <unordered_set>
#include <vector>

#include "relx/corpus.hpp"

namespace relx {

// One supporting document of a multi-hop QA record, with externally supplied
// NER mentions (the builder never runs NER itself).
struct QaDocument {
  std::vector<std::string> tokens;
  std::vector<int> sent_ids;
  std::vector<Mention> mentions;
};

struct QaRecord {
  std::string id;
  bool test_source = false;
  std::string relation;
  std::string subject;
  std::string answer;
  std::vector<std::string> candidates;
  std::vector<QaDocument> documents;
};

std::vector<QaRecord> read_qa_records(const std::string& path, const RelationSet& relations);

// Order-sensitive (subject, object) pair lookup over a KB triple file.
class KbIndex {
 public:
  static KbIndex load(const std::string& path);
  void add(const std::string& subject, const std::string& object);
  bool related(const std::string& subject, const std::string& object) const;

 private:
  std::unordered_set<std::string> pairs_;
};

// All case-insensitive token-sequence matches, overlaps resolved
// leftmost-first (a match consumes its tokens).
std::vector<Span> find_mentions(const std::vector<std::string>& tokens,
                                const std::string& entity);

// 2-hop chains for one record: every ordered document pair (subject doc,
// object doc) sharing a common entity yields one instance per object — the
// answer with the query relation, or a candidate with no KB relation to the
// subject or answer in either direction, labeled None.
std::vector<ChainInstance> build_chains(const QaRecord& rec, const KbIndex& kb,
                                        std::ostream* warnings = nullptr);

struct MhredSplits {
  std::vector<ChainInstance> train, validation, test;
};

// Seeded 90/10 split of the train-source chains, None downsampled to the
// positive count within each part; test-source chains pass through untouched.
MhredSplits balance_and_split(const std::vector<ChainInstance>& train_source,
                              const std::vector<ChainInstance>& test_source, uint64_t seed);

struct MhredStats {
  size_t records = 0;
  size_t records_skipped = 0;  // records that produced no chains
  size_t chains_pos = 0, chains_none = 0;  // before balancing
  size_t train_pos = 0, train_none = 0;
  size_t val_pos = 0, val_none = 0;
  size_t test_pos = 0, test_none = 0;
  std::map<size_t, size_t> commons_per_chain;
};

struct MhredBuild {
  MhredSplits splits;
  MhredStats stats;
};

MhredBuild build_mhred(const std::vector<QaRecord>& records, const KbIndex& kb, uint64_t seed,
                       std::ostream* warnings = nullptr);
std::string format_stats(const MhredStats& stats);

}  // namespace relx
