#pragma once

// Flat key=value run configuration with typed validation, CLI overrides, and
// verbatim echo into output artifacts.

#include "bitag/corpus.hpp"
#include "bitag/eval.hpp"
#include "bitag/model.hpp"
#include "bitag/training.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace bitag {

struct RunConfig {
  // data
  std::string train_data;
  std::string dev_data;
  std::string test_data;
  std::string schema_path;
  std::string annotation = "last_token";  // last_token | whole_span
  int max_sentence_length = 100;

  // model
  std::string backend = "tiny";  // tiny | transformer
  int d_h = 32;
  int tiny_layers = 2;
  bool tiny_positions = true;
  std::string weights;  // transformer weights file
  std::string scheme = "zero_one";
  std::string relation_head = "biaffine";
  std::string extraction_mode = "bidirectional";

  // training
  double base_lr = 1.5e-4;
  double delta = 0.0;
  std::string mapping = "identity";
  bool one_lr = false;
  int epochs = 100;
  int patience = 10;
  int batch_size = 18;
  double negative_ratio = 1.0;
  std::string negative_source = "random";  // random | model
  double weight_decay = 0.01;
  double threshold = 0.5;
  std::uint64_t seed = 0;
  int runs = 5;

  // evaluation / output
  std::string match = "auto";  // auto | partial | exact
  int max_decoded_entities = 20;
  std::string out_dir = "out";

  // ---- typed views --------------------------------------------------------

  AnnotationStandard annotation_standard() const {
    if (annotation == "last_token") return AnnotationStandard::LastToken;
    if (annotation == "whole_span") return AnnotationStandard::WholeSpan;
    throw std::invalid_argument("config: unknown annotation \"" + annotation + "\"");
  }

  // auto: partial matching for last-token data, exact for whole spans
  MatchMode resolved_match() const {
    if (match == "partial") return MatchMode::Partial;
    if (match == "exact") return MatchMode::Exact;
    if (match == "auto")
      return annotation_standard() == AnnotationStandard::LastToken ? MatchMode::Partial
                                                                    : MatchMode::Exact;
    throw std::invalid_argument("config: unknown match \"" + match + "\"");
  }

  ExtractionMode mode() const { return parse_extraction_mode(extraction_mode); }

  LrPolicy lr_policy() const {
    LrPolicy p;
    p.xi = base_lr;
    p.delta = delta;
    p.mapping = parse_mapping(mapping);
    p.total_epochs = std::max(epochs, 1);
    p.one_lr = one_lr;
    return p;
  }

  TrainConfig train_config() const {
    TrainConfig tc;
    tc.epochs = epochs;
    tc.patience = patience;
    tc.batch_size = batch_size;
    tc.negative_ratio = negative_ratio;
    tc.threshold = threshold;
    tc.lr = lr_policy();
    tc.adamw.weight_decay = weight_decay;
    tc.mode = mode();
    tc.negative_source =
        negative_source == "model" ? NegativeSource::Model : NegativeSource::Random;
    tc.dev_match = resolved_match();
    tc.max_decoded_entities = max_decoded_entities;
    tc.seed = seed;
    return tc;
  }

  CorpusOptions corpus_options() const {
    CorpusOptions opt;
    opt.annotation = annotation_standard();
    opt.max_tokens = max_sentence_length;
    return opt;
  }

  void validate() const {
    auto fail = [](const std::string& msg) { throw std::invalid_argument("config: " + msg); };
    annotation_standard();
    resolved_match();
    parse_scheme(scheme);
    parse_relation_head(relation_head);
    parse_extraction_mode(extraction_mode);
    parse_mapping(mapping);
    if (backend != "tiny" && backend != "transformer")
      fail("unknown backend \"" + backend + "\"");
    if (negative_source != "random" && negative_source != "model")
      fail("unknown negative_source \"" + negative_source + "\"");
    if (max_sentence_length < 1) fail("max_sentence_length must be >= 1");
    if (d_h < 1) fail("d_h must be >= 1");
    if (tiny_layers < 0) fail("tiny_layers must be >= 0");
    if (base_lr <= 0) fail("base_lr must be positive");
    if (delta < 0 || delta > 1) fail("delta must lie in [0,1]");
    if (epochs < 0) fail("epochs must be >= 0");
    if (patience < 1) fail("patience must be >= 1");
    if (batch_size < 1) fail("batch_size must be >= 1");
    if (negative_ratio < 0) fail("negative_ratio must be >= 0");
    if (weight_decay < 0) fail("weight_decay must be >= 0");
    if (!(threshold > 0 && threshold < 1)) fail("threshold must lie in (0,1)");
    if (runs < 1) fail("runs must be >= 1");
    if (max_decoded_entities < 0) fail("max_decoded_entities must be >= 0");
  }

  nlohmann::json to_json() const {
    return {{"train_data", train_data},
            {"dev_data", dev_data},
            {"test_data", test_data},
            {"schema", schema_path},
            {"annotation", annotation},
            {"max_sentence_length", max_sentence_length},
            {"backend", backend},
            {"d_h", d_h},
            {"tiny_layers", tiny_layers},
            {"tiny_positions", tiny_positions},
            {"weights", weights},
            {"scheme", scheme},
            {"relation_head", relation_head},
            {"extraction_mode", extraction_mode},
            {"base_lr", base_lr},
            {"delta", delta},
            {"mapping", mapping},
            {"one_lr", one_lr},
            {"epochs", epochs},
            {"patience", patience},
            {"batch_size", batch_size},
            {"negative_ratio", negative_ratio},
            {"negative_source", negative_source},
            {"weight_decay", weight_decay},
            {"threshold", threshold},
            {"seed", seed},
            {"runs", runs},
            {"match", match},
            {"max_decoded_entities", max_decoded_entities},
            {"out_dir", out_dir}};
  }

  void set(const std::string& key, const std::string& value) {
    auto as_int = [&](const char* k) {
      try {
        std::size_t used = 0;
        int v = std::stoi(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
      } catch (const std::exception&) {
        throw std::invalid_argument("config: key \"" + std::string(k) +
                                    "\" needs an integer, got \"" + value + "\"");
      }
    };
    auto as_double = [&](const char* k) {
      try {
        std::size_t used = 0;
        double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
      } catch (const std::exception&) {
        throw std::invalid_argument("config: key \"" + std::string(k) +
                                    "\" needs a number, got \"" + value + "\"");
      }
    };
    auto as_bool = [&](const char* k) {
      if (value == "true" || value == "1") return true;
      if (value == "false" || value == "0") return false;
      throw std::invalid_argument("config: key \"" + std::string(k) +
                                  "\" needs true/false, got \"" + value + "\"");
    };

    if (key == "train_data") train_data = value;
    else if (key == "dev_data") dev_data = value;
    else if (key == "test_data") test_data = value;
    else if (key == "schema") schema_path = value;
    else if (key == "annotation") annotation = value;
    else if (key == "max_sentence_length") max_sentence_length = as_int(key.c_str());
    else if (key == "backend") backend = value;
    else if (key == "d_h") d_h = as_int(key.c_str());
    else if (key == "tiny_layers") tiny_layers = as_int(key.c_str());
    else if (key == "tiny_positions") tiny_positions = as_bool(key.c_str());
    else if (key == "weights") weights = value;
    else if (key == "scheme") scheme = value;
    else if (key == "relation_head") relation_head = value;
    else if (key == "extraction_mode") extraction_mode = value;
    else if (key == "base_lr") base_lr = as_double(key.c_str());
    else if (key == "delta") delta = as_double(key.c_str());
    else if (key == "mapping") mapping = value;
    else if (key == "one_lr") one_lr = as_bool(key.c_str());
    else if (key == "epochs") epochs = as_int(key.c_str());
    else if (key == "patience") patience = as_int(key.c_str());
    else if (key == "batch_size") batch_size = as_int(key.c_str());
    else if (key == "negative_ratio") negative_ratio = as_double(key.c_str());
    else if (key == "negative_source") negative_source = value;
    else if (key == "weight_decay") weight_decay = as_double(key.c_str());
    else if (key == "threshold") threshold = as_double(key.c_str());
    else if (key == "seed") seed = static_cast<std::uint64_t>(std::stoull(value));
    else if (key == "runs") runs = as_int(key.c_str());
    else if (key == "match") match = value;
    else if (key == "max_decoded_entities") max_decoded_entities = as_int(key.c_str());
    else if (key == "out_dir") out_dir = value;
    else throw std::invalid_argument("config: unknown key \"" + key + "\"");
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

}  // namespace detail

// key = value lines; '#' starts a comment; blank lines ignored.
inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  RunConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: " + path + ":" + std::to_string(lineno) +
                                  ": expected key=value");
    cfg.set(detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
  }
  return cfg;
}

// "key=value" strings from the command line, applied on top of the file.
inline void apply_overrides(RunConfig& cfg, const std::vector<std::string>& overrides) {
  for (const std::string& ov : overrides) {
    auto eq = ov.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("override \"" + ov + "\" is not key=value");
    cfg.set(detail::trim(ov.substr(0, eq)), detail::trim(ov.substr(eq + 1)));
  }
}

}  // namespace bitag
