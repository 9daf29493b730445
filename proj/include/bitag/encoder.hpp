#pragma once

// Sentence encoders and the role-specific feature projections sitting on top
// of them.  Two interchangeable backends: a tiny trainable mixer for tests
// and toy corpora, and a BERT-style transformer that loads pretrained
// weights from a binary file.

#include "bitag/graph.hpp"
#include "bitag/tensor_io.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace bitag {

using ad::Expr;
using ad::Graph;
using ad::Mat;
using ad::Parameter;
using ad::Rng;

struct TokenEncoding {
  Mat vectors;                    // l x d, one row per token
  int sentence_vector_index = 0;  // row used as the sentence summary
};

class EncoderBackend {
 public:
  virtual ~EncoderBackend() = default;
  virtual std::string kind() const = 0;
  virtual int dim() const = 0;
  // Tape-building forward pass; the returned expression is l x d.
  virtual Expr encode_expr(Graph& g, const std::vector<std::string>& tokens) = 0;
  virtual int summary_index(const std::vector<std::string>& tokens) const = 0;
  virtual std::vector<Parameter*> parameters() = 0;
  virtual nlohmann::json meta() const = 0;

  TokenEncoding encode(const std::vector<std::string>& tokens) {
    Graph g;
    Expr h = encode_expr(g, tokens);
    return TokenEncoding{h.value(), summary_index(tokens)};
  }
};

// ---------------------------------------------------------------------------
// Role projections.  The encoder output is mapped into subject, object and
// relation feature spaces, and each of the first two is then augmented with
// the sentence summary row of the other so the two tagging directions see
// each other's global view.  Both injections use the summary rows computed
// before either update.

struct ProjectionParams {
  Parameter w_subj, w_obj, w_rel;  // d x d
  Parameter b_subj, b_obj, b_rel;  // 1 x d

  ProjectionParams() = default;
  ProjectionParams(int d, Rng& rng)
      : w_subj("proj.w_subj", ad::normal_matrix(rng, d, d, 0.1)),
        w_obj("proj.w_obj", ad::normal_matrix(rng, d, d, 0.1)),
        w_rel("proj.w_rel", ad::normal_matrix(rng, d, d, 0.1)),
        b_subj("proj.b_subj", Mat::Zero(1, d)),
        b_obj("proj.b_obj", Mat::Zero(1, d)),
        b_rel("proj.b_rel", Mat::Zero(1, d)) {}

  int dim() const { return static_cast<int>(w_subj.value.rows()); }

  std::vector<Parameter*> parameters() {
    return {&w_subj, &b_subj, &w_obj, &b_obj, &w_rel, &b_rel};
  }
};

struct ProjectedFeatures {
  Expr hs, ho, hr;      // l x d each
  Expr hs_summary;      // 1 x d, pre-injection subject-space summary
  Expr ho_summary;      // 1 x d, pre-injection object-space summary
};

inline ProjectedFeatures project(Graph& g, Expr encoded, int summary_index,
                                 ProjectionParams& p) {
  const auto l = encoded.value().rows();
  Expr hs0 = g.rowwise_add(g.matmul(encoded, g.param(p.w_subj)), g.param(p.b_subj));
  Expr ho0 = g.rowwise_add(g.matmul(encoded, g.param(p.w_obj)), g.param(p.b_obj));
  Expr hr = g.rowwise_add(g.matmul(encoded, g.param(p.w_rel)), g.param(p.b_rel));
  Expr hs_sum = g.slice_rows(hs0, summary_index, 1);
  Expr ho_sum = g.slice_rows(ho0, summary_index, 1);
  Expr hs = g.add(hs0, g.broadcast_rows(ho_sum, l));
  Expr ho = g.add(ho0, g.broadcast_rows(hs_sum, l));
  return ProjectedFeatures{hs, ho, hr, hs_sum, ho_sum};
}

// ---------------------------------------------------------------------------
// Tiny mixer backend: embedding + position table, then a few layers of
// residual window-and-global mixing.  layers = 0 degrades to a plain lookup
// table, which is handy for exercising the heads in isolation.

struct TinyMixerConfig {
  int dim = 32;
  int layers = 2;
  int max_positions = 512;
  bool positions = true;
};

class TinyMixerEncoder : public EncoderBackend {
 public:
  TinyMixerEncoder(TinyMixerConfig cfg, std::vector<std::string> vocab, Rng& rng)
      : cfg_(cfg), vocab_(std::move(vocab)) {
    if (vocab_.empty() || vocab_.front() != "<unk>")
      vocab_.insert(vocab_.begin(), "<unk>");
    for (std::size_t i = 0; i < vocab_.size(); ++i) vocab_index_[vocab_[i]] = static_cast<int>(i);
    init_params(rng);
  }

  static std::vector<std::string> vocab_from_texts(const std::vector<std::vector<std::string>>& texts) {
    std::vector<std::string> vocab{"<unk>"};
    std::unordered_map<std::string, int> seen{{"<unk>", 0}};
    for (const auto& toks : texts)
      for (const auto& t : toks)
        if (seen.emplace(t, 1).second) vocab.push_back(t);
    return vocab;
  }

  std::string kind() const override { return "tiny"; }
  int dim() const override { return cfg_.dim; }
  int summary_index(const std::vector<std::string>&) const override { return 0; }

  int token_id(const std::string& tok) const {
    auto it = vocab_index_.find(tok);
    return it == vocab_index_.end() ? 0 : it->second;
  }

  Parameter& embeddings() { return embeddings_; }

  Expr encode_expr(Graph& g, const std::vector<std::string>& tokens) override {
    if (tokens.empty()) throw std::invalid_argument("encoder: empty token sequence");
    if (static_cast<int>(tokens.size()) > cfg_.max_positions)
      throw std::invalid_argument("encoder: sentence exceeds max positions");
    std::vector<int> ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens) ids.push_back(token_id(t));
    Expr h = g.lookup_rows(g.param(embeddings_), ids);
    if (cfg_.positions) {
      std::vector<int> pos(tokens.size());
      for (std::size_t i = 0; i < pos.size(); ++i) pos[i] = static_cast<int>(i);
      h = g.add(h, g.lookup_rows(g.param(positions_), pos));
    }
    const auto l = static_cast<Eigen::Index>(tokens.size());
    for (auto& layer : layers_) {
      Expr mixed = g.concat_cols({h, g.shift_rows(h, 1), g.shift_rows(h, -1),
                                  g.broadcast_rows(g.mean_rows(h), l)});
      h = g.add(h, g.tanh(g.rowwise_add(g.matmul(mixed, g.param(layer.w)), g.param(layer.b))));
    }
    return h;
  }

  std::vector<Parameter*> parameters() override {
    std::vector<Parameter*> out{&embeddings_};
    if (cfg_.positions) out.push_back(&positions_);
    for (auto& layer : layers_) {
      out.push_back(&layer.w);
      out.push_back(&layer.b);
    }
    return out;
  }

  nlohmann::json meta() const override {
    return {{"kind", "tiny"},
            {"dim", cfg_.dim},
            {"layers", cfg_.layers},
            {"max_positions", cfg_.max_positions},
            {"positions", cfg_.positions},
            {"vocab", vocab_}};
  }

  static std::unique_ptr<TinyMixerEncoder> from_meta(const nlohmann::json& meta) {
    TinyMixerConfig cfg;
    cfg.dim = meta.at("dim").get<int>();
    cfg.layers = meta.at("layers").get<int>();
    cfg.max_positions = meta.at("max_positions").get<int>();
    cfg.positions = meta.at("positions").get<bool>();
    auto vocab = meta.at("vocab").get<std::vector<std::string>>();
    Rng rng(0);
    return std::make_unique<TinyMixerEncoder>(cfg, std::move(vocab), rng);
  }

 private:
  struct Layer {
    Parameter w;  // 4d x d
    Parameter b;  // 1 x d
  };

  void init_params(Rng& rng) {
    embeddings_ = Parameter(
        "encoder.embeddings",
        ad::normal_matrix(rng, static_cast<int>(vocab_.size()), cfg_.dim, 0.1));
    positions_ = Parameter("encoder.positions",
                           cfg_.positions
                               ? ad::normal_matrix(rng, cfg_.max_positions, cfg_.dim, 0.1)
                               : Mat::Zero(1, cfg_.dim));
    layers_.resize(cfg_.layers);
    for (int i = 0; i < cfg_.layers; ++i) {
      const std::string pre = "encoder.layer" + std::to_string(i) + ".";
      layers_[i].w = Parameter(pre + "w", ad::normal_matrix(rng, 4 * cfg_.dim, cfg_.dim, 0.1));
      layers_[i].b = Parameter(pre + "b", Mat::Zero(1, cfg_.dim));
    }
  }

  TinyMixerConfig cfg_;
  std::vector<std::string> vocab_;
  std::unordered_map<std::string, int> vocab_index_;
  Parameter embeddings_;
  Parameter positions_;
  std::vector<Layer> layers_;
};

// ---------------------------------------------------------------------------
// BERT-style transformer backend (post-layernorm).  Weights come from a
// binary file: magic, version, JSON header describing the architecture and
// vocabulary, then named f64 tensors.

struct TransformerSpec {
  int dim = 768;
  int layers = 12;
  int heads = 12;
  int ffn_dim = 3072;
  int max_positions = 512;
  double ln_eps = 1e-12;
  std::string unk_token = "[UNK]";
  std::string cls_token = "[CLS]";
  std::vector<std::string> vocab;
};

class TransformerEncoder : public EncoderBackend {
 public:
  TransformerEncoder() = default;  // unloaded; encode_expr throws until load()

  TransformerEncoder(TransformerSpec spec, Rng& rng) { init(std::move(spec), &rng); }

  static constexpr char kMagic[4] = {'B', 'T', 'W', 'F'};
  static constexpr std::uint32_t kVersion = 1;

  std::string kind() const override { return "transformer"; }
  int dim() const override { return spec_.dim; }
  bool loaded() const { return loaded_; }

  int summary_index(const std::vector<std::string>& tokens) const override {
    for (std::size_t i = 0; i < tokens.size(); ++i)
      if (tokens[i] == spec_.cls_token) return static_cast<int>(i);
    return 0;
  }

  int token_id(const std::string& tok) const {
    auto it = vocab_index_.find(tok);
    if (it != vocab_index_.end()) return it->second;
    auto unk = vocab_index_.find(spec_.unk_token);
    return unk == vocab_index_.end() ? 0 : unk->second;
  }

  Expr encode_expr(Graph& g, const std::vector<std::string>& tokens) override {
    if (!loaded_) throw std::logic_error("transformer encoder used before weights were loaded");
    if (tokens.empty()) throw std::invalid_argument("encoder: empty token sequence");
    if (static_cast<int>(tokens.size()) > spec_.max_positions)
      throw std::invalid_argument("encoder: sentence exceeds max positions");

    const auto l = static_cast<Eigen::Index>(tokens.size());
    std::vector<int> ids, pos;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      ids.push_back(token_id(tokens[i]));
      pos.push_back(static_cast<int>(i));
    }
    Expr h = g.add(g.lookup_rows(g.param(word_emb_), ids),
                   g.lookup_rows(g.param(pos_emb_), pos));
    h = g.layer_norm_rows(h, g.param(emb_ln_g_), g.param(emb_ln_b_), spec_.ln_eps);

    const int dk = spec_.dim / spec_.heads;
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));
    for (auto& layer : layers_) {
      Expr q = g.rowwise_add(g.matmul(h, g.param(layer.wq)), g.param(layer.bq));
      Expr k = g.rowwise_add(g.matmul(h, g.param(layer.wk)), g.param(layer.bk));
      Expr v = g.rowwise_add(g.matmul(h, g.param(layer.wv)), g.param(layer.bv));
      std::vector<Expr> heads;
      heads.reserve(spec_.heads);
      for (int hd = 0; hd < spec_.heads; ++hd) {
        Expr qh = g.slice_cols(q, hd * dk, dk);
        Expr kh = g.slice_cols(k, hd * dk, dk);
        Expr vh = g.slice_cols(v, hd * dk, dk);
        Expr att = g.softmax_rows(g.scale(g.matmul(qh, g.transpose(kh)), inv_sqrt_dk));
        heads.push_back(g.matmul(att, vh));
      }
      Expr attn_out = g.rowwise_add(g.matmul(g.concat_cols(heads), g.param(layer.wo)),
                                    g.param(layer.bo));
      h = g.layer_norm_rows(g.add(h, attn_out), g.param(layer.ln1_g), g.param(layer.ln1_b),
                            spec_.ln_eps);
      Expr ffn = g.rowwise_add(
          g.matmul(g.gelu(g.rowwise_add(g.matmul(h, g.param(layer.w1)), g.param(layer.b1))),
                   g.param(layer.w2)),
          g.param(layer.b2));
      h = g.layer_norm_rows(g.add(h, ffn), g.param(layer.ln2_g), g.param(layer.ln2_b),
                            spec_.ln_eps);
    }
    (void)l;
    return h;
  }

  std::vector<Parameter*> parameters() override {
    std::vector<Parameter*> out{&word_emb_, &pos_emb_, &emb_ln_g_, &emb_ln_b_};
    for (auto& layer : layers_)
      for (Parameter* p : {&layer.wq, &layer.bq, &layer.wk, &layer.bk, &layer.wv, &layer.bv,
                           &layer.wo, &layer.bo, &layer.ln1_g, &layer.ln1_b, &layer.w1,
                           &layer.b1, &layer.w2, &layer.b2, &layer.ln2_g, &layer.ln2_b})
        out.push_back(p);
    return out;
  }

  nlohmann::json meta() const override { return header_json(); }

  void save_file(const std::string& path) {
    if (!loaded_) throw std::logic_error("transformer encoder has no weights to save");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open weights file for writing: " + path);
    out.write(kMagic, 4);
    io::write_u32(out, kVersion);
    io::write_string(out, header_json().dump());
    io::write_named_tensors(out, parameters());
    if (!out) throw std::runtime_error("failed writing weights file: " + path);
  }

  void load_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open weights file: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::string(magic, 4) != std::string(kMagic, 4))
      throw std::runtime_error("not a transformer weights file: " + path);
    std::uint32_t version = io::read_u32(in);
    if (version != kVersion)
      throw std::runtime_error("unsupported weights file version " + std::to_string(version));
    auto header = nlohmann::json::parse(io::read_string(in));
    TransformerSpec spec;
    spec.dim = header.at("dim").get<int>();
    spec.layers = header.at("layers").get<int>();
    spec.heads = header.at("heads").get<int>();
    spec.ffn_dim = header.at("ffn_dim").get<int>();
    spec.max_positions = header.at("max_positions").get<int>();
    spec.ln_eps = header.at("ln_eps").get<double>();
    spec.unk_token = header.at("unk_token").get<std::string>();
    spec.cls_token = header.at("cls_token").get<std::string>();
    spec.vocab = header.at("vocab").get<std::vector<std::string>>();
    init(std::move(spec), nullptr);
    io::read_named_tensors_into(in, parameters());
  }

 private:
  struct Layer {
    Parameter wq, bq, wk, bk, wv, bv, wo, bo;
    Parameter ln1_g, ln1_b;
    Parameter w1, b1, w2, b2;
    Parameter ln2_g, ln2_b;
  };

  nlohmann::json header_json() const {
    return {{"kind", "transformer"}, {"dim", spec_.dim},      {"layers", spec_.layers},
            {"heads", spec_.heads},  {"ffn_dim", spec_.ffn_dim}, {"max_positions", spec_.max_positions},
            {"ln_eps", spec_.ln_eps}, {"unk_token", spec_.unk_token}, {"cls_token", spec_.cls_token},
            {"vocab", spec_.vocab}};
  }

  void init(TransformerSpec spec, Rng* rng) {
    if (spec.dim % spec.heads != 0)
      throw std::invalid_argument("transformer dim must be divisible by heads");
    spec_ = std::move(spec);
    vocab_index_.clear();
    for (std::size_t i = 0; i < spec_.vocab.size(); ++i)
      vocab_index_[spec_.vocab[i]] = static_cast<int>(i);

    auto mk = [&](Parameter& p, const std::string& name, int rows, int cols) {
      p = Parameter(name, rng ? ad::normal_matrix(*rng, rows, cols, 0.05)
                              : Mat::Zero(rows, cols));
    };
    auto mk_gain = [&](Parameter& p, const std::string& name, int cols) {
      p = Parameter(name, Mat::Ones(1, cols));
    };

    const int d = spec_.dim;
    mk(word_emb_, "encoder.word_emb", static_cast<int>(spec_.vocab.size()), d);
    mk(pos_emb_, "encoder.pos_emb", spec_.max_positions, d);
    mk_gain(emb_ln_g_, "encoder.emb_ln_g", d);
    mk(emb_ln_b_, "encoder.emb_ln_b", 1, d);
    layers_.assign(spec_.layers, Layer{});
    for (int i = 0; i < spec_.layers; ++i) {
      const std::string pre = "encoder.layer" + std::to_string(i) + ".";
      Layer& L = layers_[i];
      mk(L.wq, pre + "wq", d, d);
      mk(L.bq, pre + "bq", 1, d);
      mk(L.wk, pre + "wk", d, d);
      mk(L.bk, pre + "bk", 1, d);
      mk(L.wv, pre + "wv", d, d);
      mk(L.bv, pre + "bv", 1, d);
      mk(L.wo, pre + "wo", d, d);
      mk(L.bo, pre + "bo", 1, d);
      mk_gain(L.ln1_g, pre + "ln1_g", d);
      mk(L.ln1_b, pre + "ln1_b", 1, d);
      mk(L.w1, pre + "w1", d, spec_.ffn_dim);
      mk(L.b1, pre + "b1", 1, spec_.ffn_dim);
      mk(L.w2, pre + "w2", spec_.ffn_dim, d);
      mk(L.b2, pre + "b2", 1, d);
      mk_gain(L.ln2_g, pre + "ln2_g", d);
      mk(L.ln2_b, pre + "ln2_b", 1, d);
    }
    loaded_ = true;
  }

  TransformerSpec spec_;
  std::unordered_map<std::string, int> vocab_index_;
  Parameter word_emb_, pos_emb_, emb_ln_g_, emb_ln_b_;
  std::vector<Layer> layers_;
  bool loaded_ = false;
};

}  // namespace bitag
