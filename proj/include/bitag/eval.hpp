#pragma once

// Micro precision/recall/F1 under partial (relation + entity final tokens)
// and exact (full spans) matching, subset breakdowns by overlap pattern and
// triple count, and the two ground-entity diagnostics.

#include "bitag/corpus.hpp"
#include "bitag/pipeline.hpp"

#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

namespace bitag {

enum class MatchMode { Partial, Exact };

inline std::string to_string(MatchMode m) { return m == MatchMode::Partial ? "partial" : "exact"; }
inline MatchMode parse_match_mode(const std::string& s) {
  if (s == "partial") return MatchMode::Partial;
  if (s == "exact") return MatchMode::Exact;
  throw std::invalid_argument("unknown match mode: " + s);
}

struct MetricsReport {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  long tp = 0, fp = 0, fn = 0;
  std::map<std::string, MetricsReport> subsets;

  void finish() {
    precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    f1 = precision + recall > 0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
  }
};

namespace detail {

// Identity of a triple under a match mode. Partial keeps the final token of
// each entity; exact keeps both boundaries.
inline std::tuple<int, int, int, int, int> triple_key(const Triple& t, MatchMode mode) {
  if (mode == MatchMode::Partial) return {t.relation, t.subject.end, -1, t.object.end, -1};
  return {t.relation, t.subject.start, t.subject.end, t.object.start, t.object.end};
}

inline std::pair<int, int> span_key(const Span& s, MatchMode mode) {
  return mode == MatchMode::Partial ? std::pair<int, int>{s.end, -1}
                                    : std::pair<int, int>{s.start, s.end};
}

inline std::set<std::tuple<int, int, int, int, int>> triple_key_set(
    const std::vector<Triple>& ts, MatchMode mode) {
  std::set<std::tuple<int, int, int, int, int>> keys;
  for (const Triple& t : ts) keys.insert(triple_key(t, mode));
  return keys;
}

inline void tally(MetricsReport& rep, const std::vector<Triple>& preds,
                  const std::vector<Triple>& golds, MatchMode mode) {
  auto p = triple_key_set(preds, mode);
  auto g = triple_key_set(golds, mode);
  for (const auto& k : p)
    g.count(k) ? ++rep.tp : ++rep.fp;
  for (const auto& k : g)
    if (!p.count(k)) ++rep.fn;
}

}  // namespace detail

inline bool match(const Triple& pred, const Triple& gold, MatchMode mode) {
  return detail::triple_key(pred, mode) == detail::triple_key(gold, mode);
}

inline MetricsReport micro_prf(const std::vector<std::vector<Triple>>& preds,
                               const std::vector<std::vector<Triple>>& golds, MatchMode mode) {
  if (preds.size() != golds.size())
    throw std::invalid_argument("micro_prf: prediction/gold sentence counts differ");
  MetricsReport rep;
  for (std::size_t i = 0; i < preds.size(); ++i) detail::tally(rep, preds[i], golds[i], mode);
  rep.finish();
  return rep;
}

// Breakdown over {Normal, EPO, SEO} and triple-count buckets; a sentence
// contributes to every subset it belongs to, and ALL aggregates everything.
inline MetricsReport subset_report(const std::vector<std::vector<Triple>>& preds,
                                   const std::vector<Sentence>& sentences, MatchMode mode) {
  if (preds.size() != sentences.size())
    throw std::invalid_argument("subset_report: prediction/sentence counts differ");
  MetricsReport all;
  std::map<std::string, MetricsReport> subs;
  for (const char* key : {"Normal", "EPO", "SEO", "T=1", "T=2", "T=3", "T=4", "T>=5"})
    subs.emplace(key, MetricsReport{});
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    const Sentence& s = sentences[i];
    detail::tally(all, preds[i], s.triples, mode);
    OverlapClass oc = classify_overlap(s);
    std::vector<std::string> keys;
    if (oc.epo) keys.push_back("EPO");
    if (oc.seo) keys.push_back("SEO");
    if (!oc.epo && !oc.seo) keys.push_back("Normal");
    std::string bucket = triple_count_bucket(s);
    if (bucket != "0") keys.push_back(bucket == "5+" ? "T>=5" : "T=" + bucket);
    for (const auto& k : keys) detail::tally(subs[k], preds[i], s.triples, mode);
  }
  for (auto& [k, rep] : subs) rep.finish();
  all.subsets = std::move(subs);
  all.finish();
  return all;
}

enum class Direction { S2o, O2s };

// F1 of the first-stage entity extraction alone: decoded subjects (s2o) or
// objects (o2s) against the gold subject/object span sets.
inline MetricsReport ground_entity_f1(ExtractorModel& model, const Corpus& corpus,
                                      Direction dir, double tau, MatchMode mode,
                                      int max_entities = 20) {
  MetricsReport rep;
  for (const Sentence& s : corpus.sentences) {
    Graph g;
    ProjectedFeatures feats = model.features(g, s.tokens);
    TagTask task = dir == Direction::S2o ? TagTask::Subject : TagTask::Object;
    std::set<std::pair<int, int>> pred, gold;
    for (const Span& sp : model.decode_task(g, feats, task, nullptr, s.tokens, tau, max_entities))
      pred.insert(detail::span_key(sp, mode));
    for (const Triple& t : s.triples)
      gold.insert(detail::span_key(dir == Direction::S2o ? t.subject : t.object, mode));
    for (const auto& k : pred)
      gold.count(k) ? ++rep.tp : ++rep.fp;
    for (const auto& k : gold)
      if (!pred.count(k)) ++rep.fn;
  }
  rep.finish();
  return rep;
}

// Among gold triples the model misses, the fraction whose ground entity was
// never decoded: subject absent from the s2o subject set and object absent
// from the o2s object set (single-direction modes consult only their own
// first stage; two_step consults both unconditioned taggers).
inline double failure_proportion(ExtractorModel& model, const Corpus& corpus,
                                 ExtractionMode emode, double tau, MatchMode mode,
                                 int max_entities = 20) {
  long missed = 0, ground_failures = 0;
  for (const Sentence& s : corpus.sentences) {
    auto preds = plain_triples(extract_triples(model, s.tokens, emode, tau, max_entities));
    auto pred_keys = detail::triple_key_set(preds, mode);

    Graph g;
    ProjectedFeatures feats = model.features(g, s.tokens);
    std::set<std::pair<int, int>> subj_set, obj_set;
    const bool use_subjects = emode != ExtractionMode::O2sOnly;
    const bool use_objects = emode != ExtractionMode::S2oOnly;
    if (use_subjects)
      for (const Span& sp :
           model.decode_task(g, feats, TagTask::Subject, nullptr, s.tokens, tau, max_entities))
        subj_set.insert(detail::span_key(sp, mode));
    if (use_objects)
      for (const Span& sp :
           model.decode_task(g, feats, TagTask::Object, nullptr, s.tokens, tau, max_entities))
        obj_set.insert(detail::span_key(sp, mode));

    auto gold_keys = detail::triple_key_set(s.triples, mode);
    for (const Triple& t : s.triples) {
      if (pred_keys.count(detail::triple_key(t, mode))) continue;
      // count each distinct missed gold triple once
      if (!gold_keys.erase(detail::triple_key(t, mode))) continue;
      ++missed;
      bool subj_found = use_subjects && subj_set.count(detail::span_key(t.subject, mode));
      bool obj_found = use_objects && obj_set.count(detail::span_key(t.object, mode));
      if (!subj_found && !obj_found) ++ground_failures;
    }
  }
  return missed == 0 ? 0.0 : static_cast<double>(ground_failures) / static_cast<double>(missed);
}

}  // namespace bitag
