#pragma once

#include <string>
#include <vector>

#include "relx/corpus.hpp"
#include "relx/evalkit.hpp"
#include "relx/layers.hpp"
#include "relx/params.hpp"
#include "relx/tape.hpp"

namespace relx {

inline constexpr const char* kEosRelation = "<eos>";

// Query vector for the decoder's sentence attention.
enum class PndecQuery { kDecHidden, kPrevTuple, kCombo };

PndecQuery pndec_query_from_string(const std::string& name);
const char* to_string(PndecQuery q);

struct PndecConfig {
  size_t d_w = 300;  // word embedding
  size_t d_c = 50;   // character embedding
  size_t d_f = 50;   // character feature width
  size_t d_h = 300;  // encoder output / decoder hidden width (even)
  size_t d_p = 150;  // pointer BiLSTM width per direction
  size_t d_r = 300;  // relation embedding
  size_t char_width = 3;
  size_t max_word_len = 10;
  PndecQuery query = PndecQuery::kCombo;
  size_t max_tuples = 10;
  double dropout = 0.3;
};

// One decoding target: both entity spans plus the relation (or the end marker,
// whose spans carry no information).
struct PointerTuple {
  Span first, second;
  std::string relation;
};

// Non-overlapping span pair chosen from four pointer distributions.
struct SpanChoice {
  Span first, second;
  double product = 0.0;  // product of the four chosen probabilities
};

// One pass of the span search: pick the leading entity's span maximizing
// begin*end with b <= e (the full sentence is excluded so the trailing entity
// always has room), then the trailing entity's best span disjoint from it.
// Ties go to the smaller (b, e) pair.
SpanChoice constrained_pass(const std::vector<double>& first_begin,
                            const std::vector<double>& first_end,
                            const std::vector<double>& second_begin,
                            const std::vector<double>& second_end);

// Runs both pass orders (entity 1 first, entity 2 first) and keeps the pair
// with the larger 4-way product; ties go to the lexicographically smaller
// (b1, e1, b2, e2). Requires n >= 2.
SpanChoice constrained_spans(const std::vector<double>& s1, const std::vector<double>& e1,
                             const std::vector<double>& s2, const std::vector<double>& e2);

struct PointerPrediction {
  Span e1, e2;
  std::string e1_text, e2_text;
  std::string relation;
  double score = 0.0;
};

class PndecModel {
 public:
  PndecModel(RelationSet relations, Vocabulary vocab, CharVocab chars, PndecConfig cfg,
             uint64_t seed, const Tensor* word_init = nullptr);

  ParameterStore& store() { return store_; }
  const PndecConfig& config() const { return cfg_; }
  const RelationSet& relations() const { return relations_; }
  size_t eos_index() const { return relations_.size(); }

  // Gold decoding sequence: tuples ordered as in WdecModel::linearize, exact
  // duplicates dropped, then the end marker.
  static std::vector<PointerTuple> pointer_tuple_target(const JointInstance& inst);

  struct State {
    LstmState lstm;
    Var y_prev;
  };
  struct StepOut {
    Var s1, e1, s2, e2;  // span boundary distributions over positions
    Var r;               // relation distribution over R + end marker
    Var a1, a2;          // entity vectors feeding the classifier and y_t
  };

  std::vector<Var> encode(Tape& t, const std::vector<std::string>& src);
  State initial_state(Tape& t);
  // One decoding step. With a gold tuple the entity vectors are taken at the
  // gold boundaries (teacher forcing); otherwise they are probability-weighted
  // sums under the predicted distributions.
  StepOut step(Tape& t, const std::vector<Var>& hs, State& state, const PointerTuple* gold);
  void advance(Tape& t, State& state, const StepOut& out, size_t relation_idx);

  Var batch_loss(Tape& t, const std::vector<JointInstance>& data,
                 const std::vector<size_t>& batch);

  std::vector<PointerPrediction> predict(const std::vector<std::string>& tokens);
  TupleSet predict_tuples(const std::vector<std::string>& tokens);

 private:
  Var char_feature(Tape& t, Var char_table, const std::string& word);

  RelationSet relations_;
  Vocabulary vocab_;
  CharVocab chars_;
  PndecConfig cfg_;
  ParameterStore store_;
  ParameterStore::Entry* word_emb_;
  ParameterStore::Entry* char_emb_;
  ParameterStore::Entry* rel_emb_;
  ConvFeatureExtractor char_conv_;
  BiLstm encoder_;
  LstmCell decoder_;
  BiLstm ptr1_, ptr2_;
  ParameterStore::Entry* attn_wu_;
  ParameterStore::Entry* attn_wq_;
  ParameterStore::Entry* attn_bq_;
  ParameterStore::Entry* attn_v_;
  ParameterStore::Entry* head_w_[4];  // begin/end for each pointer net
  ParameterStore::Entry* head_b_[4];
  ParameterStore::Entry* rel_w_;
  ParameterStore::Entry* rel_b_;
};

}  // namespace relx
