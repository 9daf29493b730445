#pragma once

// The four pointer-tagging heads: an unconditioned subject tagger and an
// object tagger conditioned on a subject (the s2o direction), plus the
// mirrored pair for o2s.  Also threshold application and span decoding for
// the 0/1 and BIO schemes.

#include "bitag/corpus.hpp"
#include "bitag/encoder.hpp"
#include "bitag/graph.hpp"

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace bitag {

struct TagField {
  std::vector<double> start_probs;
  std::vector<double> end_probs;
};

struct TagFieldExpr {
  Expr start;  // l x 1
  Expr end;    // l x 1

  TagField values() const {
    TagField f;
    const Mat& s = start.value();
    const Mat& e = end.value();
    f.start_probs.assign(s.data(), s.data() + s.size());
    f.end_probs.assign(e.data(), e.data() + e.size());
    return f;
  }
};

// Start/end pointer head: one sigmoid unit per boundary over each token row.
struct BinaryTagHead {
  Parameter w_start, w_end;  // d x 1
  Parameter b_start, b_end;  // 1 x 1

  BinaryTagHead() = default;
  BinaryTagHead(const std::string& prefix, int d, Rng& rng)
      : w_start(prefix + ".w_start", ad::normal_matrix(rng, d, 1, 0.1)),
        w_end(prefix + ".w_end", ad::normal_matrix(rng, d, 1, 0.1)),
        b_start(prefix + ".b_start", Mat::Zero(1, 1)),
        b_end(prefix + ".b_end", Mat::Zero(1, 1)) {}

  TagFieldExpr tag(Graph& g, Expr features) {
    Expr s = g.sigmoid(g.rowwise_add(g.matmul(features, g.param(w_start)), g.param(b_start)));
    Expr e = g.sigmoid(g.rowwise_add(g.matmul(features, g.param(w_end)), g.param(b_end)));
    return TagFieldExpr{s, e};
  }

  std::vector<Parameter*> parameters() { return {&w_start, &b_start, &w_end, &b_end}; }
};

// Three-way per-token head for the BIO scheme; emits logits, softmax happens
// in the loss and at decode time.
struct BioTagHead {
  Parameter w;  // d x 3
  Parameter b;  // 1 x 3

  BioTagHead() = default;
  BioTagHead(const std::string& prefix, int d, Rng& rng)
      : w(prefix + ".w_bio", ad::normal_matrix(rng, d, 3, 0.1)),
        b(prefix + ".b_bio", Mat::Zero(1, 3)) {}

  Expr logits(Graph& g, Expr features) {
    return g.rowwise_add(g.matmul(features, g.param(w)), g.param(b));
  }

  std::vector<Parameter*> parameters() { return {&w, &b}; }
};

// Max-pooled representation of an entity span, used to condition the
// opposite-role tagger.
inline Expr entity_condition(Graph& g, Expr role_features, const Span& span) {
  const auto rows = role_features.value().rows();
  if (span.start < 0 || span.end >= rows || span.start > span.end)
    throw std::invalid_argument("entity_condition: span out of range");
  return g.maxpool_rows(role_features, span.start, span.end);
}

inline TagFieldExpr tag_subjects(Graph& g, const ProjectedFeatures& feats, BinaryTagHead& head) {
  return head.tag(g, feats.hs);
}

inline TagFieldExpr tag_objects(Graph& g, const ProjectedFeatures& feats, BinaryTagHead& head) {
  return head.tag(g, feats.ho);
}

inline TagFieldExpr tag_objects_given_subject(Graph& g, const ProjectedFeatures& feats,
                                              Expr v_subject, BinaryTagHead& head) {
  return head.tag(g, g.rowwise_mul(feats.ho, v_subject));
}

inline TagFieldExpr tag_subjects_given_object(Graph& g, const ProjectedFeatures& feats,
                                              Expr v_object, BinaryTagHead& head) {
  return head.tag(g, g.rowwise_mul(feats.hs, v_object));
}

// ---------------------------------------------------------------------------
// Thresholding and decoding.

inline std::vector<int> apply_threshold(const std::vector<double>& probs, double tau) {
  std::vector<int> tags(probs.size(), 0);
  for (std::size_t i = 0; i < probs.size(); ++i) tags[i] = probs[i] > tau ? 1 : 0;
  return tags;
}

inline std::pair<std::vector<int>, std::vector<int>> apply_threshold(const TagField& field,
                                                                     double tau) {
  return {apply_threshold(field.start_probs, tau), apply_threshold(field.end_probs, tau)};
}

// Each start (left to right) pairs with the nearest unconsumed end at or
// after it that precedes the next start; everything unmatched is dropped.
inline std::vector<std::pair<int, int>> decode_span_bounds(const std::vector<int>& start_tags,
                                                           const std::vector<int>& end_tags) {
  if (start_tags.size() != end_tags.size())
    throw std::invalid_argument("decode_spans: tag vectors differ in length");
  const int l = static_cast<int>(start_tags.size());
  std::vector<int> starts;
  for (int i = 0; i < l; ++i)
    if (start_tags[i]) starts.push_back(i);
  std::vector<std::pair<int, int>> spans;
  int consumed_up_to = -1;  // ends at or before this index are spoken for
  for (std::size_t k = 0; k < starts.size(); ++k) {
    int s = starts[k];
    int limit = k + 1 < starts.size() ? starts[k + 1] : l;
    for (int e = std::max(s, consumed_up_to + 1); e < limit; ++e) {
      if (end_tags[e]) {
        spans.emplace_back(s, e);
        consumed_up_to = e;
        break;
      }
    }
  }
  return spans;
}

inline std::vector<Span> decode_spans(const std::vector<int>& start_tags,
                                      const std::vector<int>& end_tags,
                                      const std::vector<std::string>& tokens) {
  std::vector<Span> out;
  for (auto [s, e] : decode_span_bounds(start_tags, end_tags))
    out.push_back(make_span(tokens, s, e));
  return out;
}

enum class BioLabel : int { O = 0, B = 1, I = 2 };

inline std::vector<BioLabel> bio_labels_from_logits(const Mat& logits) {
  std::vector<BioLabel> labels;
  labels.reserve(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    Eigen::Index best;
    logits.row(r).maxCoeff(&best);
    labels.push_back(static_cast<BioLabel>(static_cast<int>(best)));
  }
  return labels;
}

// Maximal B I* runs; an I with no live run is ignored.
inline std::vector<std::pair<int, int>> decode_span_bounds_bio(const std::vector<BioLabel>& labels) {
  std::vector<std::pair<int, int>> spans;
  int open = -1;
  for (int i = 0; i < static_cast<int>(labels.size()); ++i) {
    if (labels[i] == BioLabel::B) {
      if (open >= 0) spans.emplace_back(open, i - 1);
      open = i;
    } else if (labels[i] == BioLabel::I) {
      // extends the open run, if any
    } else {
      if (open >= 0) spans.emplace_back(open, i - 1);
      open = -1;
    }
  }
  if (open >= 0) spans.emplace_back(open, static_cast<int>(labels.size()) - 1);
  return spans;
}

inline std::vector<Span> decode_spans_bio(const std::vector<BioLabel>& labels,
                                          const std::vector<std::string>& tokens) {
  std::vector<Span> out;
  for (auto [s, e] : decode_span_bounds_bio(labels))
    out.push_back(make_span(tokens, s, e));
  return out;
}

// Gold span list -> per-token BIO targets.
inline std::vector<int> bio_targets(int length, const std::vector<Span>& spans) {
  std::vector<int> labels(static_cast<std::size_t>(length), static_cast<int>(BioLabel::O));
  for (const Span& sp : spans) {
    labels[static_cast<std::size_t>(sp.start)] = static_cast<int>(BioLabel::B);
    for (int i = sp.start + 1; i <= sp.end; ++i)
      labels[static_cast<std::size_t>(i)] = static_cast<int>(BioLabel::I);
  }
  return labels;
}

}  // namespace bitag
