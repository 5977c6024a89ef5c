#include "relx/evalkit.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "relx/corpus.hpp"
#include "relx/error.hpp"
#include "relx/rng.hpp"

namespace relx {

namespace {

void finish(PrfReport& r) {
  r.precision = (r.tp + r.fp) ? static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fp) : 0.0;
  r.recall = (r.tp + r.fn) ? static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fn) : 0.0;
  r.f1 = (r.precision + r.recall > 0.0)
             ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
             : 0.0;
}

std::set<StringTuple> as_set(const TupleSet& v) { return {v.begin(), v.end()}; }

void check_parallel(size_t a, size_t b, const char* what) {
  if (a != b)
    throw ValidationError(std::string(what) + ": prediction and gold counts differ (" +
                          std::to_string(a) + " vs " + std::to_string(b) + ")");
}

}  // namespace

PrfReport classification_prf(const std::vector<ScoredPrediction>& preds, double threshold) {
  PrfReport r;
  for (const auto& p : preds) {
    const std::string& label = p.confidence < threshold ? kNoneLabel : p.predicted;
    bool pred_pos = label != kNoneLabel;
    bool gold_pos = p.gold != kNoneLabel;
    if (pred_pos && label == p.gold)
      ++r.tp;
    else if (pred_pos)
      ++r.fp;
    if (gold_pos && label != p.gold) ++r.fn;
  }
  finish(r);
  return r;
}

double tune_threshold(const std::vector<ScoredPrediction>& preds) {
  if (preds.empty()) throw DomainError("tune_threshold: no predictions");
  std::set<double> candidates = {0.0};
  for (const auto& p : preds) candidates.insert(p.confidence);
  double best_t = 0.0, best_f1 = -1.0;
  for (double t : candidates) {  // ascending, so ties keep the smallest
    double f1 = classification_prf(preds, t).f1;
    if (f1 > best_f1) {
      best_f1 = f1;
      best_t = t;
    }
  }
  return best_t;
}

PrfReport tuple_set_prf(const std::vector<TupleSet>& pred, const std::vector<TupleSet>& gold) {
  check_parallel(pred.size(), gold.size(), "tuple_set_prf");
  PrfReport r;
  for (size_t i = 0; i < pred.size(); ++i) {
    auto ps = as_set(pred[i]);
    auto gs = as_set(gold[i]);
    for (const auto& t : ps)
      gs.count(t) ? ++r.tp : ++r.fp;
    for (const auto& t : gs)
      if (!ps.count(t)) ++r.fn;
  }
  finish(r);
  return r;
}

std::vector<TupleSet> ensemble_vote(const std::vector<std::vector<TupleSet>>& runs) {
  if (runs.empty()) throw DomainError("ensemble_vote: no runs");
  size_t n = runs[0].size();
  for (const auto& run : runs) check_parallel(run.size(), n, "ensemble_vote");
  size_t need = runs.size() / 2 + 1;
  std::vector<TupleSet> out(n);
  for (size_t i = 0; i < n; ++i) {
    std::map<StringTuple, size_t> votes;
    for (const auto& run : runs)
      for (const auto& t : as_set(run[i])) ++votes[t];
    for (const auto& [t, c] : votes)
      if (c >= need) out[i].push_back(t);  // map order = sorted
  }
  return out;
}

SubtaskReports subtask_eval(const std::vector<TupleSet>& pred,
                            const std::vector<TupleSet>& gold) {
  check_parallel(pred.size(), gold.size(), "subtask_eval");
  SubtaskReports reports;
  for (size_t i = 0; i < pred.size(); ++i) {
    std::set<std::string> pe, ge, pr, gr;
    for (const auto& t : pred[i]) {
      pe.insert(t.e1);
      pe.insert(t.e2);
      pr.insert(t.relation);
    }
    for (const auto& t : gold[i]) {
      ge.insert(t.e1);
      ge.insert(t.e2);
      gr.insert(t.relation);
    }
    for (const auto& e : pe) ge.count(e) ? ++reports.entity.tp : ++reports.entity.fp;
    for (const auto& e : ge)
      if (!pe.count(e)) ++reports.entity.fn;
    for (const auto& rel : pr) gr.count(rel) ? ++reports.relation.tp : ++reports.relation.fp;
    for (const auto& rel : gr)
      if (!pr.count(rel)) ++reports.relation.fn;
  }
  finish(reports.entity);
  finish(reports.relation);
  return reports;
}

ErrorBreakdown categorize_errors(const std::vector<TupleSet>& pred,
                                 const std::vector<TupleSet>& gold) {
  check_parallel(pred.size(), gold.size(), "categorize_errors");
  ErrorBreakdown b;
  for (size_t i = 0; i < pred.size(); ++i) {
    auto gs = as_set(gold[i]);
    for (const auto& t : as_set(pred[i])) {
      ++b.total_predictions;
      if (gs.count(t)) {
        ++b.correct;
        continue;
      }
      bool order = gs.count(StringTuple{t.e2, t.e1, t.relation}) != 0;
      bool ent1 = false, ent2 = false;
      for (const auto& g : gs) {
        if (g.relation != t.relation) continue;
        if (g.e2 == t.e2 && g.e1 != t.e1) ent1 = true;
        if (g.e1 == t.e1 && g.e2 != t.e2) ent2 = true;
      }
      if (order)
        ++b.wrong_order;
      else if (ent1)
        ++b.wrong_ent1;
      else if (ent2)
        ++b.wrong_ent2;
      else
        ++b.other;
    }
  }
  if (b.total_predictions) {
    double d = static_cast<double>(b.total_predictions);
    b.pct_order = 100.0 * static_cast<double>(b.wrong_order) / d;
    b.pct_ent1 = 100.0 * static_cast<double>(b.wrong_ent1) / d;
    b.pct_ent2 = 100.0 * static_cast<double>(b.wrong_ent2) / d;
    b.pct_other = 100.0 * static_cast<double>(b.other) / d;
  }
  return b;
}

double paired_bootstrap_p(const std::vector<TupleSet>& a, const std::vector<TupleSet>& b,
                          const std::vector<TupleSet>& gold, size_t resamples, uint64_t seed) {
  check_parallel(a.size(), gold.size(), "paired_bootstrap_p");
  check_parallel(b.size(), gold.size(), "paired_bootstrap_p");
  if (gold.empty()) throw DomainError("paired_bootstrap_p: empty evaluation set");

  struct Counts {
    size_t tp = 0, np = 0, ng = 0;
  };
  auto per_instance = [&](const std::vector<TupleSet>& preds) {
    std::vector<Counts> cs(gold.size());
    for (size_t i = 0; i < gold.size(); ++i) {
      auto ps = as_set(preds[i]);
      auto gs = as_set(gold[i]);
      cs[i].np = ps.size();
      cs[i].ng = gs.size();
      for (const auto& t : ps)
        if (gs.count(t)) ++cs[i].tp;
    }
    return cs;
  };
  auto ca = per_instance(a);
  auto cb = per_instance(b);

  auto f1_of = [](size_t tp, size_t np, size_t ng) {
    double p = np ? static_cast<double>(tp) / static_cast<double>(np) : 0.0;
    double r = ng ? static_cast<double>(tp) / static_cast<double>(ng) : 0.0;
    return (p + r > 0.0) ? 2.0 * p * r / (p + r) : 0.0;
  };

  Rng rng(seed);
  size_t n = gold.size();
  size_t not_better = 0;
  for (size_t s = 0; s < resamples; ++s) {
    Counts ta, tb;
    for (size_t k = 0; k < n; ++k) {
      size_t i = static_cast<size_t>(rng.below(n));
      ta.tp += ca[i].tp;
      ta.np += ca[i].np;
      ta.ng += ca[i].ng;
      tb.tp += cb[i].tp;
      tb.np += cb[i].np;
      tb.ng += cb[i].ng;
    }
    if (f1_of(ta.tp, ta.np, ta.ng) - f1_of(tb.tp, tb.np, tb.ng) <= 0.0) ++not_better;
  }
  return static_cast<double>(not_better) / static_cast<double>(resamples);
}

}  // namespace relx
