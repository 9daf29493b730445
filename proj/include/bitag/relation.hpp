#pragma once

// Relation assignment for candidate subject-object pairs: a per-relation
// biaffine scorer over augmented entity vectors, and a linear head over the
// concatenated pair used by one ablation.

#include "bitag/corpus.hpp"
#include "bitag/encoder.hpp"
#include "bitag/graph.hpp"

#include <stdexcept>
#include <string>
#include <vector>

namespace bitag {

struct PairRepresentation {
  Expr v_s;  // 1 x d, max-pooled over the subject's hr rows
  Expr v_o;  // 1 x d, over the object's hr rows
};

inline PairRepresentation pair_representation(Graph& g, const ProjectedFeatures& feats,
                                              const Span& s, const Span& o) {
  const auto rows = feats.hr.value().rows();
  auto check = [&](const Span& sp, const char* what) {
    if (sp.start < 0 || sp.end >= rows || sp.start > sp.end)
      throw std::invalid_argument(std::string("pair_representation: invalid ") + what + " span");
  };
  check(s, "subject");
  check(o, "object");
  return PairRepresentation{g.maxpool_rows(feats.hr, s.start, s.end),
                            g.maxpool_rows(feats.hr, o.start, o.end)};
}

// One (d+1) x (d+1) matrix per relation; the augmented-1 coordinate carries
// the per-entity linear terms and the bias.
struct BiaffineParams {
  std::vector<Parameter> w;

  BiaffineParams() = default;
  BiaffineParams(int n_relations, int d, Rng& rng) {
    w.reserve(static_cast<std::size_t>(n_relations));
    for (int i = 0; i < n_relations; ++i)
      w.emplace_back("relation.biaffine.w" + std::to_string(i),
                     ad::normal_matrix(rng, d + 1, d + 1, 0.1));
  }

  int relation_count() const { return static_cast<int>(w.size()); }

  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> out;
    for (auto& p : w) out.push_back(&p);
    return out;
  }
};

// p_i = sigmoid([v_s;1]^T W_i [v_o;1]); returns a 1 x |R| row of probabilities.
inline Expr score_relations_biaffine(Graph& g, const PairRepresentation& pr,
                                     BiaffineParams& params) {
  if (params.w.empty()) throw std::invalid_argument("biaffine: empty relation set");
  const auto d1 = params.w.front().value.rows();
  if (pr.v_s.value().cols() + 1 != d1)
    throw std::invalid_argument("biaffine: dimension mismatch");
  Expr vs1 = g.append_one(pr.v_s);  // 1 x (d+1)
  Expr vo1 = g.append_one(pr.v_o);
  std::vector<Expr> scores;
  scores.reserve(params.w.size());
  for (auto& wi : params.w)
    scores.push_back(g.matmul(g.matmul(vs1, g.param(wi)), g.transpose(vo1)));  // 1 x 1
  return g.sigmoid(g.concat_cols(scores));
}

// Ablation head: sigmoid of an affine map of [v_s ; v_o].
struct LinearRelationParams {
  Parameter w;  // 2d x |R|
  Parameter b;  // 1 x |R|

  LinearRelationParams() = default;
  LinearRelationParams(int n_relations, int d, Rng& rng)
      : w("relation.linear.w", ad::normal_matrix(rng, 2 * d, n_relations, 0.1)),
        b("relation.linear.b", Mat::Zero(1, n_relations)) {}

  int relation_count() const { return static_cast<int>(w.value.cols()); }

  std::vector<Parameter*> parameters() { return {&w, &b}; }
};

inline Expr score_relations_linear(Graph& g, const PairRepresentation& pr,
                                   LinearRelationParams& params) {
  if (pr.v_s.value().cols() * 2 != params.w.value.rows())
    throw std::invalid_argument("linear relation head: dimension mismatch");
  Expr cat = g.concat_cols({pr.v_s, pr.v_o});
  return g.sigmoid(g.rowwise_add(g.matmul(cat, g.param(params.w)), g.param(params.b)));
}

}  // namespace bitag
