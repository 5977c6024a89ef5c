#pragma once

#include <string>
#include <utility>
#include <vector>

#include "relx/corpus.hpp"
#include "relx/evalkit.hpp"
#include "relx/layers.hpp"
#include "relx/params.hpp"
#include "relx/tape.hpp"

namespace relx {

// Sentence-level relation classifier: BiLSTM over word+indicator embeddings,
// CNN features for the sentence and each entity's context window, and
// per-entity attention whose scores decay with dependency-tree distance.
struct MfaConfig {
  size_t d_w = 50;   // word embedding
  size_t d_z = 10;   // entity indicator embedding
  size_t d_u = 5;    // positional embedding
  size_t m = 1;      // attention factors per entity
  size_t ws = 5;     // distance window: decay saturates and masking kicks in here
  size_t f_g = 230;  // sentence-level filters
  size_t f_e = 230;  // entity-context filters
  size_t k = 3;      // convolution width
  size_t context_radius = 5;
  size_t pos_clamp = 60;
  double dropout = 0.5;
  bool use_dep_distance = true;  // off: plain exp-score attention, no masking
  bool softmax_norm = false;     // on: normalize factor scores with a masked softmax
  bool maxpool_agg = false;      // on: max over factor attentions instead of concat
};

// Per-entity attention rows recorded for inspection.
struct MfaTrace {
  std::vector<std::vector<double>> attn1, attn2;  // [factor][token]
  std::vector<int> dist1, dist2;
  std::vector<uint8_t> masked;
};

class MfaModel {
 public:
  MfaModel(RelationSet relations, Vocabulary vocab, MfaConfig cfg, uint64_t seed,
           const Tensor* word_init = nullptr);

  ParameterStore& store() { return store_; }
  const MfaConfig& config() const { return cfg_; }
  const RelationSet& relations() const { return relations_; }
  const Vocabulary& vocab() const { return vocab_; }
  size_t num_classes() const { return relations_.size() + 1; }  // trailing None

  // Class probabilities for one instance; trace is optional.
  Var forward_probs(Tape& t, const RelationInstance& inst, MfaTrace* trace = nullptr);

  Var instance_loss(Tape& t, const RelationInstance& inst);
  Var batch_loss(Tape& t, const std::vector<RelationInstance>& data,
                 const std::vector<size_t>& batch);

  ScoredPrediction predict(const RelationInstance& inst);

  size_t class_index(const std::string& label) const;
  const std::string& class_label(size_t idx) const;

  // Distance from every token to the head token of the span (its last token)
  // along the undirected dependency tree.
  static std::vector<int> dep_distances(const std::vector<std::pair<int, int>>& edges, size_t n,
                                        int head);

 private:
  std::vector<Var> encode(Tape& t, const RelationInstance& inst, std::vector<Var>* xs_out);
  Var entity_attention(Tape& t, const std::vector<Var>& hs, Var v_e,
                       const std::vector<int>& dist, const std::vector<uint8_t>& masked,
                       size_t factor, int entity, std::vector<std::vector<double>>* rows);

  RelationSet relations_;
  Vocabulary vocab_;
  MfaConfig cfg_;
  ParameterStore store_;
  ParameterStore::Entry* word_emb_;
  ParameterStore::Entry* ind_emb_;
  ParameterStore::Entry* pos1_emb_;
  ParameterStore::Entry* pos2_emb_;
  BiLstm encoder_;
  ConvFeatureExtractor conv_global_;
  ConvFeatureExtractor conv_entity_;
  std::vector<ParameterStore::Entry*> attn1_, attn2_;  // per factor
  ParameterStore::Entry* cls_w_;
  ParameterStore::Entry* cls_b_;
};

}  // namespace relx
