#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace relx {

// One classification decision: the model's argmax label (a relation name or
// "None"), its probability, and the gold label.
struct ScoredPrediction {
  std::string predicted;
  double confidence = 0.0;
  std::string gold;
};

struct PrfReport {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  size_t tp = 0, fp = 0, fn = 0;
};

// Micro-averaged P/R/F1 over non-None labels. A prediction whose confidence
// is strictly below the threshold is demoted to None before counting. 0/0
// ratios are reported as 0.
PrfReport classification_prf(const std::vector<ScoredPrediction>& preds, double threshold);

// Sweeps {0} plus every distinct confidence, returns the threshold with the
// best F1 (ties -> smallest threshold).
double tune_threshold(const std::vector<ScoredPrediction>& preds);

// Extraction output in surface form: detokenized entity strings plus the
// relation name. Comparison is exact string match.
struct StringTuple {
  std::string e1, e2, relation;
  friend bool operator==(const StringTuple&, const StringTuple&) = default;
  friend auto operator<=>(const StringTuple&, const StringTuple&) = default;
};

using TupleSet = std::vector<StringTuple>;  // set semantics; duplicates are collapsed

// Micro P/R/F1 over per-instance tuple sets (parallel vectors).
PrfReport tuple_set_prf(const std::vector<TupleSet>& pred, const std::vector<TupleSet>& gold);

// Majority vote across k runs: a tuple survives when at least floor(k/2)+1
// runs emitted it for that instance. Output sets are sorted.
std::vector<TupleSet> ensemble_vote(const std::vector<std::vector<TupleSet>>& runs);

// Entity-only and relation-only micro scores.
struct SubtaskReports {
  PrfReport entity;
  PrfReport relation;
};
SubtaskReports subtask_eval(const std::vector<TupleSet>& pred,
                            const std::vector<TupleSet>& gold);

// Wrong predictions bucketed by what went wrong, with precedence
// order > ent1 > ent2 > other; percentages are over all predictions.
struct ErrorBreakdown {
  size_t total_predictions = 0;
  size_t correct = 0;
  size_t wrong_order = 0;
  size_t wrong_ent1 = 0;
  size_t wrong_ent2 = 0;
  size_t other = 0;
  double pct_order = 0.0, pct_ent1 = 0.0, pct_ent2 = 0.0, pct_other = 0.0;
};
ErrorBreakdown categorize_errors(const std::vector<TupleSet>& pred,
                                 const std::vector<TupleSet>& gold);

// Paired bootstrap over instances: p = fraction of seeded resamples where
// F1(a) - F1(b) <= 0. Identical inputs give p = 1.
double paired_bootstrap_p(const std::vector<TupleSet>& a, const std::vector<TupleSet>& b,
                          const std::vector<TupleSet>& gold, size_t resamples = 10000,
                          uint64_t seed = 12345);

}  // namespace relx
