#pragma once

// Sequential inference: decode entities, pair them per extraction mode,
// score each pair against the relation set, and emit thresholded triples.

#include "bitag/model.hpp"

#include <algorithm>
#include <set>
#include <tuple>
#include <vector>

namespace bitag {

struct CandidatePair {
  Span subject;
  Span object;
  bool from_s2o = false;
  bool from_o2s = false;
};

namespace detail {

inline auto pair_key(const CandidatePair& p) {
  return std::make_tuple(p.subject.start, p.subject.end, p.object.start, p.object.end);
}

// First stage of one direction: decode the unconditioned entities, then run
// the conditioned tagger once per entity, in position order.
inline std::vector<CandidatePair> pairs_one_direction(Graph& g, ExtractorModel& m,
                                                      const ProjectedFeatures& feats,
                                                      const std::vector<std::string>& tokens,
                                                      double tau, int max_entities, bool s2o) {
  const TagTask first = s2o ? TagTask::Subject : TagTask::Object;
  const TagTask second = s2o ? TagTask::ObjectGivenSubject : TagTask::SubjectGivenObject;
  std::vector<CandidatePair> pairs;
  for (const Span& anchor : m.decode_task(g, feats, first, nullptr, tokens, tau, max_entities)) {
    Expr cond = m.condition_vector(g, feats, second, anchor);
    for (const Span& other : m.decode_task(g, feats, second, &cond, tokens, tau, max_entities)) {
      CandidatePair p;
      p.subject = s2o ? anchor : other;
      p.object = s2o ? other : anchor;
      (s2o ? p.from_s2o : p.from_o2s) = true;
      pairs.push_back(std::move(p));
    }
  }
  return pairs;
}

}  // namespace detail

inline std::vector<CandidatePair> extract_pairs_s2o(ExtractorModel& m,
                                                    const std::vector<std::string>& tokens,
                                                    double tau, int max_entities = 20) {
  Graph g;
  ProjectedFeatures feats = m.features(g, tokens);
  return detail::pairs_one_direction(g, m, feats, tokens, tau, max_entities, true);
}

inline std::vector<CandidatePair> extract_pairs_o2s(ExtractorModel& m,
                                                    const std::vector<std::string>& tokens,
                                                    double tau, int max_entities = 20) {
  Graph g;
  ProjectedFeatures feats = m.features(g, tokens);
  return detail::pairs_one_direction(g, m, feats, tokens, tau, max_entities, false);
}

// Set union keyed by (subject, object) spans; provenance flags are OR-ed and
// the result is ordered by span positions.
inline std::vector<CandidatePair> merge_pairs(const std::vector<CandidatePair>& a,
                                              const std::vector<CandidatePair>& b) {
  std::vector<CandidatePair> merged;
  auto absorb = [&](const CandidatePair& p) {
    for (CandidatePair& q : merged) {
      if (detail::pair_key(q) == detail::pair_key(p)) {
        q.from_s2o = q.from_s2o || p.from_s2o;
        q.from_o2s = q.from_o2s || p.from_o2s;
        return;
      }
    }
    merged.push_back(p);
  };
  for (const auto& p : a) absorb(p);
  for (const auto& p : b) absorb(p);
  std::sort(merged.begin(), merged.end(), [](const CandidatePair& x, const CandidatePair& y) {
    return detail::pair_key(x) < detail::pair_key(y);
  });
  return merged;
}

struct PredictedTriple {
  Triple triple;
  bool from_s2o = false;
  bool from_o2s = false;
};

inline std::vector<PredictedTriple> extract_triples(ExtractorModel& m,
                                                    const std::vector<std::string>& tokens,
                                                    ExtractionMode mode, double tau,
                                                    int max_entities = 20) {
  Graph g;
  ProjectedFeatures feats = m.features(g, tokens);

  std::vector<CandidatePair> pairs;
  if (mode == ExtractionMode::TwoStep) {
    // Entities from both unconditioned taggers, paired exhaustively
    // (ordered, self-pairs included).
    std::vector<Span> entities = m.decode_task(g, feats, TagTask::Subject, nullptr, tokens, tau,
                                               max_entities);
    for (const Span& sp :
         m.decode_task(g, feats, TagTask::Object, nullptr, tokens, tau, max_entities))
      if (std::find(entities.begin(), entities.end(), sp) == entities.end())
        entities.push_back(sp);
    for (const Span& s : entities)
      for (const Span& o : entities) pairs.push_back(CandidatePair{s, o, true, true});
    pairs = merge_pairs(pairs, {});
  } else {
    std::vector<CandidatePair> s2o, o2s;
    if (mode != ExtractionMode::O2sOnly)
      s2o = detail::pairs_one_direction(g, m, feats, tokens, tau, max_entities, true);
    if (mode != ExtractionMode::S2oOnly)
      o2s = detail::pairs_one_direction(g, m, feats, tokens, tau, max_entities, false);
    pairs = merge_pairs(s2o, o2s);
  }

  std::vector<PredictedTriple> out;
  std::set<std::tuple<int, int, int, int, int>> seen;
  for (const CandidatePair& p : pairs) {
    const Mat probs = m.relation_scores(g, feats, p.subject, p.object).value();
    for (Eigen::Index r = 0; r < probs.cols(); ++r) {
      if (probs(0, r) > tau) {
        auto key = std::make_tuple(static_cast<int>(r), p.subject.start, p.subject.end,
                                   p.object.start, p.object.end);
        if (!seen.insert(key).second) continue;
        out.push_back(PredictedTriple{Triple{p.subject, static_cast<int>(r), p.object},
                                      p.from_s2o, p.from_o2s});
      }
    }
  }
  return out;
}

inline std::vector<Triple> plain_triples(const std::vector<PredictedTriple>& preds) {
  std::vector<Triple> out;
  out.reserve(preds.size());
  for (const auto& p : preds) out.push_back(p.triple);
  return out;
}

}  // namespace bitag
