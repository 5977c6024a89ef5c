#pragma once

#include <string>
#include <vector>

#include "relx/corpus.hpp"
#include "relx/evalkit.hpp"
#include "relx/layers.hpp"
#include "relx/params.hpp"
#include "relx/tape.hpp"

namespace relx {

enum class WdecAttn { kAvg, kNgram, kSingle };

WdecAttn wdec_attn_from_string(const std::string& name);
const char* to_string(WdecAttn mode);

// Joint extraction as sequence generation: the decoder emits tuples as
// "e1 ; e2 ; relation" fragments joined by "|", drawing tokens from the
// current source sentence, the relation names, and the structural symbols.
struct WdecConfig {
  size_t d_w = 300;  // word embedding
  size_t d_c = 50;   // character embedding
  size_t d_f = 50;   // character feature width (conv filters)
  size_t d_h = 300;  // encoder output / decoder hidden width (even)
  size_t char_width = 3;
  size_t max_word_len = 10;
  WdecAttn attn = WdecAttn::kSingle;
  bool mask_vocab = true;
  bool unk_replace = true;  // ignored in avg mode
  size_t max_steps = 50;
  double dropout = 0.3;
};

class WdecModel {
 public:
  WdecModel(RelationSet relations, Vocabulary vocab, CharVocab chars, WdecConfig cfg,
            uint64_t seed, const Tensor* word_init = nullptr);

  ParameterStore& store() { return store_; }
  const WdecConfig& config() const { return cfg_; }
  const RelationSet& relations() const { return relations_; }
  const Vocabulary& vocab() const { return vocab_; }

  // Gold target token sequence (no SOS/EOS). Tuples are ordered by sentence
  // position (earlier entity start, then the other entity's start, then
  // relation name); duplicates by surface form are dropped, and tuples whose
  // entities contain a separator token are skipped and counted in *rejected.
  static std::vector<std::string> linearize(const JointInstance& inst,
                                            size_t* rejected = nullptr);

  // Inverse of linearize over generated text: splits on "|" then ";", keeps
  // well-formed fragments (exactly three parts, known relation, distinct
  // entities), deduplicates. Total: never throws on weird input.
  static std::vector<StringTuple> parse_decoded(const std::vector<std::string>& tokens,
                                                const RelationSet& relations);

  Var batch_loss(Tape& t, const std::vector<JointInstance>& data,
                 const std::vector<size_t>& batch);

  struct DecodeResult {
    std::vector<std::string> tokens;                 // UNKs already replaced
    std::vector<std::vector<double>> attention;      // one row per emitted step
    std::vector<std::vector<double>> step_probs;     // output distribution per step, EOS step included
  };
  DecodeResult greedy_decode(const std::vector<std::string>& src);
  TupleSet predict_tuples(const std::vector<std::string>& src);

 private:
  struct Encoded {
    std::vector<Var> hs;
    std::vector<size_t> src_ids;
    std::vector<uint8_t> allowed;  // vocabulary mask for this sentence
  };
  Encoded encode(Tape& t, const std::vector<std::string>& src);
  Var char_feature(Tape& t, Var char_table, const std::string& word);

  // Static (per-sentence) context for avg/ngram modes; per-step for single.
  Var static_context(Tape& t, const Encoded& enc, std::vector<double>* unigram_attn);
  Var step_context(Tape& t, const Encoded& enc, const std::vector<Var>& u, Var h_prev,
                   std::vector<double>* attn_row);

  RelationSet relations_;
  Vocabulary vocab_;
  CharVocab chars_;
  WdecConfig cfg_;
  ParameterStore store_;
  ParameterStore::Entry* word_emb_;
  ParameterStore::Entry* char_emb_;
  ConvFeatureExtractor char_conv_;
  BiLstm encoder_;
  LstmCell decoder_;
  // single-attention parameters
  ParameterStore::Entry* attn_wu_ = nullptr;
  ParameterStore::Entry* attn_wq_ = nullptr;
  ParameterStore::Entry* attn_bq_ = nullptr;
  ParameterStore::Entry* attn_v_ = nullptr;
  // n-gram attention parameters (1-, 2-, 3-gram)
  std::vector<ParameterStore::Entry*> ngram_v_, ngram_w_;
  ParameterStore::Entry* proj_w_;
  ParameterStore::Entry* proj_b_;
};

}  // namespace relx
