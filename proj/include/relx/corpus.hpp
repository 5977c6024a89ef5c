#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

#include "relx/error.hpp"
#include "relx/tensor.hpp"

namespace relx {

// Token spans are inclusive on both ends and 0-based.
struct Span {
  int start = 0;
  int end = 0;
  friend bool operator==(const Span& a, const Span& b) {
    return a.start == b.start && a.end == b.end;
  }
  friend auto operator<=>(const Span& a, const Span& b) = default;
};

// Sentence-level instance with one marked entity pair and an ingested
// dependency parse (undirected tree edges as (parent, child) index pairs).
struct RelationInstance {
  std::vector<std::string> tokens;
  Span e1, e2;
  std::string relation;  // a relation name or "None"
  std::vector<std::pair<int, int>> dep_edges;
};

struct Tuple {
  Span e1, e2;
  std::string relation;
  friend bool operator==(const Tuple& a, const Tuple& b) = default;
};

// Sentence with the full set of gold tuples (joint extraction).
struct JointInstance {
  std::vector<std::string> tokens;
  std::vector<Tuple> tuples;
};

struct Mention {
  std::string text;
  Span span;
};

struct CommonEntity {
  std::string canonical;
  std::vector<Span> mentions_1, mentions_2;
};

// Ordered document pair with subject mentions in document 1, object mentions
// in document 2, the shared entities that bridge them, and any additional
// known mentions used to enrich the graphs.
struct ChainInstance {
  std::vector<std::string> doc1_tokens, doc2_tokens;
  std::vector<int> sent_ids_1, sent_ids_2;
  std::vector<Span> subject_mentions, object_mentions;
  std::vector<CommonEntity> commons;
  std::vector<Mention> extra_1, extra_2;
  std::string relation;  // a relation name or "None"
};

inline constexpr size_t kMaxSentenceLen = 100;
inline constexpr const char* kNoneLabel = "None";

// The positive relation inventory. "None" is implicit and must not appear in
// the file (one name per line, '#' comments and blank lines skipped).
class RelationSet {
 public:
  static RelationSet load(const std::string& path);
  static RelationSet from_names(std::vector<std::string> names);

  const std::vector<std::string>& names() const { return names_; }
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  size_t index_of(const std::string& name) const;
  size_t size() const { return names_.size(); }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, size_t> index_;
};

// Token-to-index map shared by every model. The first seven indices are
// reserved; relation names (when supplied) follow so the word-level decoder
// can emit them as ordinary tokens; corpus tokens append in first-appearance
// order.
class Vocabulary {
 public:
  static constexpr size_t kPad = 0;
  static constexpr size_t kUnk = 1;
  static constexpr size_t kSos = 2;
  static constexpr size_t kEos = 3;
  static constexpr size_t kSemicolon = 4;
  static constexpr size_t kPipe = 5;
  static constexpr size_t kDocSep = 6;
  static constexpr size_t kNumReserved = 7;
  static const std::array<const char*, kNumReserved> kReservedTokens;

  Vocabulary();
  explicit Vocabulary(const RelationSet& relations);

  size_t add(const std::string& token);  // idempotent
  size_t lookup(const std::string& token) const;  // kUnk when absent
  bool contains(const std::string& token) const { return index_.count(token) != 0; }
  const std::string& token(size_t idx) const { return tokens_.at(idx); }
  size_t size() const { return tokens_.size(); }

  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);
  uint64_t fingerprint() const;  // FNV-1a over tokens in index order

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, size_t> index_;
};

// Character inventory for the character-level convolution features.
class CharVocab {
 public:
  static constexpr size_t kPad = 0;
  static constexpr size_t kUnk = 1;

  CharVocab();
  size_t add(uint32_t codepoint);
  size_t lookup(uint32_t codepoint) const;
  void add_word(const std::string& utf8);
  size_t size() const { return codepoints_.size() + 2; }

  void save(const std::string& path) const;
  static CharVocab load(const std::string& path);
  uint64_t fingerprint() const;

  // Lenient decoder; invalid byte sequences become U+FFFD.
  static std::vector<uint32_t> decode_utf8(const std::string& s);

 private:
  std::vector<uint32_t> codepoints_;  // index = position + 2
  std::unordered_map<uint32_t, size_t> index_;
};

// Embedding matrix over the vocabulary: file rows are taken verbatim, tokens
// absent from the file get seeded uniform [-0.1, 0.1] rows, the padding row
// stays zero. File format: token then `dim` floats, single spaces.
struct EmbeddingLoadStats {
  size_t from_file = 0;
  size_t randomly_initialized = 0;
};

Tensor load_embeddings(const std::string& path, const Vocabulary& vocab, size_t dim,
                       uint64_t seed, EmbeddingLoadStats* stats = nullptr);
Tensor random_embeddings(const Vocabulary& vocab, size_t dim, uint64_t seed);

// Dataset files are JSON lines, one instance per line, fixed key order.
// Writing the result of a read reproduces a canonically written file byte for
// byte.
enum class LengthPolicy { kReject, kTruncateWarn };

std::vector<RelationInstance> read_sentence_dataset(const std::string& path,
                                                    const RelationSet& relations,
                                                    LengthPolicy policy,
                                                    std::ostream* warnings = nullptr);
void write_sentence_dataset(const std::string& path,
                            const std::vector<RelationInstance>& instances);

std::vector<JointInstance> read_joint_dataset(const std::string& path,
                                              const RelationSet& relations, LengthPolicy policy,
                                              std::ostream* warnings = nullptr);
void write_joint_dataset(const std::string& path, const std::vector<JointInstance>& instances);

std::vector<ChainInstance> read_chain_dataset(const std::string& path,
                                              const RelationSet& relations,
                                              std::ostream* warnings = nullptr);
void write_chain_dataset(const std::string& path, const std::vector<ChainInstance>& instances);

// Tuple-overlap taxonomy of a joint instance.
enum class OverlapClass { kNeo, kEpo, kSeo, kEpoSeo };
const char* to_string(OverlapClass c);
OverlapClass classify_overlap(const JointInstance& inst);

// Surface-string helpers. Detokenization joins with single spaces; the
// canonical form additionally lowercases (ASCII) and collapses whitespace.
std::string detokenize(const std::vector<std::string>& tokens, const Span& span);
std::string canonical_entity_string(const std::string& s);

}  // namespace relx
