#pragma once

#include <string>
#include <vector>

#include "relx/corpus.hpp"
#include "relx/evalkit.hpp"
#include "relx/layers.hpp"
#include "relx/params.hpp"
#include "relx/tape.hpp"

namespace relx {

// Undirected typed graph over mention or entity nodes, with the normalized
// adjacency (self-loops added, symmetric normalization) precomputed.
struct GraphTopology {
  struct Node {
    bool is_entity = false;
    std::string canonical;
    Span span{};        // mention nodes only
    int sentence = -1;  // mention nodes only
    int doc = 0;        // 1 or 2; 0 for merged common entities
  };
  struct Edge {
    size_t i, j;
    int type;
  };
  std::vector<Node> nodes;
  std::vector<Edge> edges;
  Tensor a_hat;
};

// A_hat = D^-1/2 (A + I) D^-1/2 over the binary adjacency implied by the edges.
Tensor normalize_adjacency(size_t n, const std::vector<GraphTopology::Edge>& edges);
bool graph_connected(size_t n, const std::vector<GraphTopology::Edge>& edges);

struct MentionEdgeFlags {
  bool same_sentence = true;  // type 1
  bool same_string = true;    // type 2
  bool chain = true;          // type 3: appearance order
};
struct EntityEdgeFlags {
  bool co_occur = true;  // type 1: share a sentence
  bool chain = true;     // type 2: first-appearance order
};

// One node per mention occurrence, ordered by span. token_sent_ids assigns a
// sentence id to every document token.
GraphTopology build_mention_graph(const std::vector<Mention>& mentions,
                                  const std::vector<int>& token_sent_ids,
                                  MentionEdgeFlags flags = {}, int doc = 0);

// One node per distinct canonical mention string, in first-appearance order.
GraphTopology build_entity_graph(const std::vector<Mention>& mentions,
                                 const std::vector<int>& token_sent_ids,
                                 EntityEdgeFlags flags = {}, int doc = 0);

// Merges the nodes named in `commons` (present in both graphs); an edge exists
// in the result iff it exists in either input under that identification.
GraphTopology unify_entity_graphs(const GraphTopology& g1, const GraphTopology& g2,
                                  const std::vector<std::string>& commons);

// g_i = ReLU(sum_j A_hat_ij W g_j)
std::vector<Var> gcn_layer(Tape& t, const Tensor& a_hat, const std::vector<Var>& feats, Var w);

// Mention list a document contributes to its graphs: subject or object
// mentions, common-entity mentions, then any extra NER mentions, sorted by
// span with exact-span duplicates dropped.
std::vector<Mention> chain_doc_mentions(const ChainInstance& chain, int doc);

struct HegcnConfig {
  size_t d_w = 300;  // word embedding
  size_t d_z = 20;   // indicator embedding; BiLSTM hidden is d_w+d_z per direction
  size_t l1 = 1;     // mention-graph GCN layers
  size_t l2 = 1;     // unified-entity-graph GCN layers
  size_t indicator_cap = 16;  // distinct common entities per chain
  double dropout = 0.5;
  bool use_emgcn = true;
  bool use_egcn = true;
  bool use_attention = true;
  MentionEdgeFlags mention_edges{};
  EntityEdgeFlags entity_edges{};
};

struct HegcnGraphs {
  GraphTopology m1, m2, e1, e2, unified;
};

class HegcnModel {
 public:
  HegcnModel(RelationSet relations, Vocabulary vocab, HegcnConfig cfg, uint64_t seed,
             const Tensor* word_init = nullptr);

  ParameterStore& store() { return store_; }
  const HegcnConfig& config() const { return cfg_; }
  const RelationSet& relations() const { return relations_; }
  size_t num_classes() const { return relations_.size() + 1; }
  size_t class_index(const std::string& label) const;
  const std::string& class_label(size_t idx) const;

  // Indicator sequence over doc1 + separator + doc2: 1 plain, 2 subject,
  // 3 object, 4up for common entities (same index in both documents).
  static std::vector<size_t> indicator_indices(const ChainInstance& chain, size_t cap);

  Var forward_probs(Tape& t, const ChainInstance& chain, HegcnGraphs* graphs = nullptr);
  Var instance_loss(Tape& t, const ChainInstance& chain);
  Var batch_loss(Tape& t, const std::vector<ChainInstance>& data,
                 const std::vector<size_t>& batch);
  ScoredPrediction predict(const ChainInstance& chain);

 private:
  std::vector<Var> mention_features(Tape& t, const std::vector<Var>& hs, size_t offset,
                                    const std::vector<int>& sent_ids, const GraphTopology& g);

  RelationSet relations_;
  Vocabulary vocab_;
  HegcnConfig cfg_;
  ParameterStore store_;
  ParameterStore::Entry* word_emb_;
  ParameterStore::Entry* ind_emb_;
  BiLstm encoder_;
  ParameterStore::Entry* attn_w_;
  std::vector<ParameterStore::Entry*> emgcn_w_, egcn_w_;
  ParameterStore::Entry* cls_w_;
  ParameterStore::Entry* cls_b_;
};

}  // namespace relx
