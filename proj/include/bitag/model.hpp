#pragma once

// The assembled extractor: encoder backend, role projections, the four
// tagging heads, and a relation head, with checkpoint save/load.

#include "bitag/corpus.hpp"
#include "bitag/encoder.hpp"
#include "bitag/graph.hpp"
#include "bitag/relation.hpp"
#include "bitag/taggers.hpp"
#include "bitag/tensor_io.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace bitag {

enum class Scheme { ZeroOne, Bio };
enum class RelationHeadKind { Biaffine, Linear };
enum class ExtractionMode { Bidirectional, S2oOnly, O2sOnly, TwoStep };

inline std::string to_string(Scheme s) { return s == Scheme::ZeroOne ? "zero_one" : "bio"; }
inline std::string to_string(RelationHeadKind k) {
  return k == RelationHeadKind::Biaffine ? "biaffine" : "linear";
}
inline std::string to_string(ExtractionMode m) {
  switch (m) {
    case ExtractionMode::Bidirectional: return "bidirectional";
    case ExtractionMode::S2oOnly: return "s2o_only";
    case ExtractionMode::O2sOnly: return "o2s_only";
    case ExtractionMode::TwoStep: return "two_step";
  }
  return "bidirectional";
}

inline Scheme parse_scheme(const std::string& s) {
  if (s == "zero_one") return Scheme::ZeroOne;
  if (s == "bio") return Scheme::Bio;
  throw std::invalid_argument("unknown scheme: " + s);
}
inline RelationHeadKind parse_relation_head(const std::string& s) {
  if (s == "biaffine") return RelationHeadKind::Biaffine;
  if (s == "linear") return RelationHeadKind::Linear;
  throw std::invalid_argument("unknown relation_head: " + s);
}
inline ExtractionMode parse_extraction_mode(const std::string& s) {
  if (s == "bidirectional") return ExtractionMode::Bidirectional;
  if (s == "s2o_only") return ExtractionMode::S2oOnly;
  if (s == "o2s_only") return ExtractionMode::O2sOnly;
  if (s == "two_step") return ExtractionMode::TwoStep;
  throw std::invalid_argument("unknown extraction_mode: " + s);
}

// The four tagging roles a head can play during inference.
enum class TagTask { Subject, ObjectGivenSubject, Object, SubjectGivenObject };

struct ParamGroup {
  std::string name;
  std::vector<Parameter*> params;
};

class ExtractorModel {
 public:
  ExtractorModel(std::unique_ptr<EncoderBackend> enc, RelationSchema sch, Scheme scheme,
                 RelationHeadKind rel_head, Rng& rng)
      : encoder_(std::move(enc)),
        schema_(std::move(sch)),
        scheme_(scheme),
        rel_head_(rel_head),
        projections_(encoder_->dim(), rng) {
    const int d = encoder_->dim();
    if (scheme_ == Scheme::ZeroOne) {
      subject_head_ = BinaryTagHead("subject_tagger", d, rng);
      s2o_object_head_ = BinaryTagHead("s2o_object_tagger", d, rng);
      object_head_ = BinaryTagHead("object_tagger", d, rng);
      o2s_subject_head_ = BinaryTagHead("o2s_subject_tagger", d, rng);
    } else {
      subject_bio_ = BioTagHead("subject_tagger", d, rng);
      s2o_object_bio_ = BioTagHead("s2o_object_tagger", d, rng);
      object_bio_ = BioTagHead("object_tagger", d, rng);
      o2s_subject_bio_ = BioTagHead("o2s_subject_tagger", d, rng);
    }
    if (rel_head_ == RelationHeadKind::Biaffine)
      biaffine_ = BiaffineParams(schema_.size(), d, rng);
    else
      linear_rel_ = LinearRelationParams(schema_.size(), d, rng);
  }

  EncoderBackend& encoder() { return *encoder_; }
  const RelationSchema& schema() const { return schema_; }
  Scheme scheme() const { return scheme_; }
  RelationHeadKind relation_head_kind() const { return rel_head_; }
  int dim() const { return encoder_->dim(); }
  ProjectionParams& projections() { return projections_; }

  BinaryTagHead& head(TagTask task) {
    if (scheme_ != Scheme::ZeroOne) throw std::logic_error("model is using the bio scheme");
    switch (task) {
      case TagTask::Subject: return subject_head_;
      case TagTask::ObjectGivenSubject: return s2o_object_head_;
      case TagTask::Object: return object_head_;
      case TagTask::SubjectGivenObject: return o2s_subject_head_;
    }
    throw std::logic_error("bad task");
  }
  BioTagHead& bio_head(TagTask task) {
    if (scheme_ != Scheme::Bio) throw std::logic_error("model is using the zero_one scheme");
    switch (task) {
      case TagTask::Subject: return subject_bio_;
      case TagTask::ObjectGivenSubject: return s2o_object_bio_;
      case TagTask::Object: return object_bio_;
      case TagTask::SubjectGivenObject: return o2s_subject_bio_;
    }
    throw std::logic_error("bad task");
  }
  BiaffineParams& biaffine() { return biaffine_; }
  LinearRelationParams& linear_relation() { return linear_rel_; }

  ProjectedFeatures features(Graph& g, const std::vector<std::string>& tokens) {
    Expr encoded = encoder_->encode_expr(g, tokens);
    return project(g, encoded, encoder_->summary_index(tokens), projections_);
  }

  // Feature matrix a tag task reads: raw role features, or the role features
  // gated by the conditioning entity vector.
  Expr task_features(Graph& g, const ProjectedFeatures& feats, TagTask task,
                     const Expr* condition = nullptr) {
    switch (task) {
      case TagTask::Subject: return feats.hs;
      case TagTask::Object: return feats.ho;
      case TagTask::ObjectGivenSubject:
        if (!condition) throw std::invalid_argument("conditioned task needs a condition vector");
        return g.rowwise_mul(feats.ho, *condition);
      case TagTask::SubjectGivenObject:
        if (!condition) throw std::invalid_argument("conditioned task needs a condition vector");
        return g.rowwise_mul(feats.hs, *condition);
    }
    throw std::logic_error("bad task");
  }

  // Conditioning vector lives in the same role space the conditioned tagger
  // multiplies into: subjects are pooled from hs, objects from ho.
  Expr condition_vector(Graph& g, const ProjectedFeatures& feats, TagTask task, const Span& entity) {
    return entity_condition(g, task == TagTask::ObjectGivenSubject ? feats.hs : feats.ho, entity);
  }

  std::vector<Span> decode_task(Graph& g, const ProjectedFeatures& feats, TagTask task,
                                const Expr* condition, const std::vector<std::string>& tokens,
                                double tau, int max_entities = 20) {
    Expr x = task_features(g, feats, task, condition);
    std::vector<Span> spans;
    if (scheme_ == Scheme::ZeroOne) {
      TagField field = head(task).tag(g, x).values();
      auto [st, en] = apply_threshold(field, tau);
      spans = decode_spans(st, en, tokens);
    } else {
      spans = decode_spans_bio(bio_labels_from_logits(bio_head(task).logits(g, x).value()), tokens);
    }
    if (max_entities >= 0 && static_cast<int>(spans.size()) > max_entities)
      spans.resize(static_cast<std::size_t>(max_entities));
    return spans;
  }

  // 1 x |R| relation probabilities for a candidate pair.
  Expr relation_scores(Graph& g, const ProjectedFeatures& feats, const Span& s, const Span& o) {
    PairRepresentation pr = pair_representation(g, feats, s, o);
    return rel_head_ == RelationHeadKind::Biaffine ? score_relations_biaffine(g, pr, biaffine_)
                                                   : score_relations_linear(g, pr, linear_rel_);
  }

  // Named module groups: the shared trunk plus one group per head.
  std::vector<ParamGroup> groups() {
    std::vector<ParamGroup> out;
    ParamGroup enc{"encoder", encoder_->parameters()};
    for (Parameter* p : projections_.parameters()) enc.params.push_back(p);
    out.push_back(std::move(enc));
    auto head_params = [&](TagTask t) {
      return scheme_ == Scheme::ZeroOne ? head(t).parameters() : bio_head(t).parameters();
    };
    out.push_back({"subject_tagger", head_params(TagTask::Subject)});
    out.push_back({"s2o_object_tagger", head_params(TagTask::ObjectGivenSubject)});
    out.push_back({"object_tagger", head_params(TagTask::Object)});
    out.push_back({"o2s_subject_tagger", head_params(TagTask::SubjectGivenObject)});
    out.push_back({"relation_head", rel_head_ == RelationHeadKind::Biaffine
                                        ? biaffine_.parameters()
                                        : linear_rel_.parameters()});
    return out;
  }

  std::vector<Parameter*> all_parameters() {
    std::vector<Parameter*> out;
    for (auto& grp : groups())
      for (Parameter* p : grp.params) out.push_back(p);
    return out;
  }

  // ---- checkpointing ------------------------------------------------------

  static constexpr char kMagic[4] = {'B', 'T', 'C', 'K'};
  static constexpr std::uint32_t kVersion = 1;

  void save_checkpoint(const std::string& path, const nlohmann::json& run_config) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path);
    nlohmann::json header{{"scheme", to_string(scheme_)},
                          {"relation_head", to_string(rel_head_)},
                          {"schema", schema_.names()},
                          {"schema_fingerprint", schema_.fingerprint()},
                          {"encoder", encoder_->meta()},
                          {"config", run_config}};
    out.write(kMagic, 4);
    io::write_u32(out, kVersion);
    io::write_string(out, header.dump());
    io::write_named_tensors(out, all_parameters());
    if (!out) throw std::runtime_error("failed writing checkpoint: " + path);
  }

  static nlohmann::json read_checkpoint_header(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::string(magic, 4) != std::string(kMagic, 4))
      throw std::runtime_error("not a checkpoint file: " + path);
    std::uint32_t version = io::read_u32(in);
    if (version != kVersion)
      throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
    return nlohmann::json::parse(io::read_string(in));
  }

  static std::unique_ptr<ExtractorModel> load_checkpoint(const std::string& path,
                                                         nlohmann::json* header_out = nullptr) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::string(magic, 4) != std::string(kMagic, 4))
      throw std::runtime_error("not a checkpoint file: " + path);
    std::uint32_t version = io::read_u32(in);
    if (version != kVersion)
      throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
    auto header = nlohmann::json::parse(io::read_string(in));

    RelationSchema schema;
    for (const auto& name : header.at("schema")) schema.add(name.get<std::string>());
    auto enc = encoder_from_meta(header.at("encoder"));
    Rng rng(0);
    auto model = std::make_unique<ExtractorModel>(
        std::move(enc), std::move(schema), parse_scheme(header.at("scheme").get<std::string>()),
        parse_relation_head(header.at("relation_head").get<std::string>()), rng);
    io::read_named_tensors_into(in, model->all_parameters());
    if (header_out) *header_out = std::move(header);
    return model;
  }

  static std::unique_ptr<EncoderBackend> encoder_from_meta(const nlohmann::json& meta) {
    const std::string kind = meta.at("kind").get<std::string>();
    if (kind == "tiny") return TinyMixerEncoder::from_meta(meta);
    if (kind == "transformer") {
      TransformerSpec spec;
      spec.dim = meta.at("dim").get<int>();
      spec.layers = meta.at("layers").get<int>();
      spec.heads = meta.at("heads").get<int>();
      spec.ffn_dim = meta.at("ffn_dim").get<int>();
      spec.max_positions = meta.at("max_positions").get<int>();
      spec.ln_eps = meta.at("ln_eps").get<double>();
      spec.unk_token = meta.at("unk_token").get<std::string>();
      spec.cls_token = meta.at("cls_token").get<std::string>();
      spec.vocab = meta.at("vocab").get<std::vector<std::string>>();
      Rng rng(0);
      return std::make_unique<TransformerEncoder>(std::move(spec), rng);
    }
    throw std::runtime_error("unknown encoder kind in checkpoint: " + kind);
  }

 private:
  std::unique_ptr<EncoderBackend> encoder_;
  RelationSchema schema_;
  Scheme scheme_;
  RelationHeadKind rel_head_;
  ProjectionParams projections_;
  BinaryTagHead subject_head_, s2o_object_head_, object_head_, o2s_subject_head_;
  BioTagHead subject_bio_, s2o_object_bio_, object_bio_, o2s_subject_bio_;
  BiaffineParams biaffine_;
  LinearRelationParams linear_rel_;
};

}  // namespace bitag
