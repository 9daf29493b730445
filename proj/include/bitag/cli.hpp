#pragma once

// Subcommand implementations behind the command-line tool: corpus statistics,
// training runs, evaluation, prediction, and the ablation sweep.  Each
// command prints an aligned text report to the given stream and writes the
// same content as JSON under the configured output directory.

#include "bitag/config.hpp"
#include "bitag/corpus.hpp"
#include "bitag/eval.hpp"
#include "bitag/model.hpp"
#include "bitag/pipeline.hpp"
#include "bitag/training.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace bitag {
namespace cli_detail {

namespace fs = std::filesystem;

inline void write_json_file(const fs::path& path, const nlohmann::json& j) {
  fs::create_directories(path.parent_path().empty() ? fs::path(".") : path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

inline std::optional<RelationSchema> load_schema_if_given(const RunConfig& cfg) {
  if (cfg.schema_path.empty()) return std::nullopt;
  return RelationSchema::load(cfg.schema_path);
}

inline Corpus load_split(const RunConfig& cfg, const std::string& path,
                         const std::optional<RelationSchema>& schema = std::nullopt) {
  return load_corpus(path, schema, cfg.corpus_options());
}

// The split evaluation and prediction run against: test, else dev, else train.
inline std::string eval_split_path(const RunConfig& cfg) {
  if (!cfg.test_data.empty()) return cfg.test_data;
  if (!cfg.dev_data.empty()) return cfg.dev_data;
  return cfg.train_data;
}

inline std::unique_ptr<EncoderBackend> build_encoder(const RunConfig& cfg,
                                                     const std::vector<Sentence>& sentences,
                                                     Rng& rng) {
  if (cfg.backend == "transformer") {
    auto enc = std::make_unique<TransformerEncoder>();
    if (cfg.weights.empty())
      throw std::invalid_argument("config: transformer backend needs a weights file");
    enc->load_file(cfg.weights);
    return enc;
  }
  TinyMixerConfig tc;
  tc.dim = cfg.d_h;
  tc.layers = cfg.tiny_layers;
  tc.positions = cfg.tiny_positions;
  tc.max_positions = std::max(cfg.max_sentence_length, 8);
  std::vector<std::vector<std::string>> texts;
  texts.reserve(sentences.size());
  for (const Sentence& s : sentences) texts.push_back(s.tokens);
  return std::make_unique<TinyMixerEncoder>(tc, TinyMixerEncoder::vocab_from_texts(texts), rng);
}

inline std::unique_ptr<ExtractorModel> build_model(const RunConfig& cfg, const Corpus& train,
                                                   std::uint64_t seed) {
  Rng rng(seed);
  auto enc = build_encoder(cfg, train.sentences, rng);
  return std::make_unique<ExtractorModel>(std::move(enc), train.schema,
                                          parse_scheme(cfg.scheme),
                                          parse_relation_head(cfg.relation_head), rng);
}

inline std::vector<std::vector<Triple>> predict_all(ExtractorModel& model,
                                                    const std::vector<Sentence>& sentences,
                                                    ExtractionMode mode, double tau,
                                                    int max_entities) {
  std::vector<std::vector<Triple>> preds;
  preds.reserve(sentences.size());
  for (const Sentence& s : sentences)
    preds.push_back(plain_triples(extract_triples(model, s.tokens, mode, tau, max_entities)));
  return preds;
}

inline nlohmann::json metrics_json(const MetricsReport& r) {
  nlohmann::json j{{"precision", r.precision}, {"recall", r.recall}, {"f1", r.f1},
                   {"tp", r.tp},               {"fp", r.fp},         {"fn", r.fn}};
  if (!r.subsets.empty()) {
    nlohmann::json subs;
    for (const auto& [k, v] : r.subsets) subs[k] = metrics_json(v);
    j["subsets"] = subs;
  }
  return j;
}

inline void print_metrics_row(std::ostream& out, const std::string& label,
                              const MetricsReport& r) {
  out << "  " << std::left << std::setw(10) << label << std::right << std::fixed
      << std::setprecision(4) << "  P " << std::setw(7) << r.precision << "  R " << std::setw(7)
      << r.recall << "  F1 " << std::setw(7) << r.f1 << "  (tp " << r.tp << " fp " << r.fp
      << " fn " << r.fn << ")\n";
  out.unsetf(std::ios::fixed);
  out << std::setprecision(6);
}

struct RunRow {
  int run = 0;
  std::uint64_t seed = 0;
  int best_epoch = -1;
  double dev_f1 = -1.0;
  int epochs_ran = 0;
  bool aborted = false;
};

inline double mean_of(const std::vector<double>& xs) {
  double s = 0;
  for (double x : xs) s += x;
  return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
}

inline double sample_std(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean_of(xs);
  double s = 0;
  for (double x : xs) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(xs.size() - 1));
}

}  // namespace cli_detail

// ---------------------------------------------------------------------------
// stats

inline int cmd_stats(const RunConfig& cfg, std::ostream& out) {
  cfg.validate();
  auto schema = cli_detail::load_schema_if_given(cfg);

  nlohmann::json report{{"config", cfg.to_json()}};
  const std::vector<std::pair<std::string, std::string>> splits{
      {"train", cfg.train_data}, {"dev", cfg.dev_data}, {"test", cfg.test_data}};

  bool any = false;
  for (const auto& [name, path] : splits) {
    if (path.empty()) continue;
    any = true;
    Corpus corpus = cli_detail::load_split(cfg, path, schema);
    CorpusStatistics st = corpus_statistics(corpus.sentences);

    out << name << " (" << path << ")\n";
    out << "  " << std::left << std::setw(8) << "Normal" << std::setw(8) << "EPO"
        << std::setw(8) << "SEO" << std::setw(8) << "ALL";
    for (const char* b : {"T=1", "T=2", "T=3", "T=4", "T>=5"})
      out << std::setw(8) << b;
    out << "\n  " << std::setw(8) << st.normal << std::setw(8) << st.epo << std::setw(8)
        << st.seo << std::setw(8) << st.all;
    for (const char* b : {"1", "2", "3", "4", "5+"}) {
      auto it = st.by_bucket.find(b);
      out << std::setw(8) << (it == st.by_bucket.end() ? 0 : it->second);
    }
    out << std::right << "\n";
    if (corpus.stats.dropped || corpus.stats.truncated || corpus.stats.duplicate_triples)
      out << "  (dropped entities " << corpus.stats.dropped << ", truncated "
          << corpus.stats.truncated << ", duplicate triples " << corpus.stats.duplicate_triples
          << ")\n";

    nlohmann::json buckets;
    for (const auto& [k, v] : st.by_bucket) buckets[k] = v;
    report["splits"][name] = {{"path", path},
                              {"normal", st.normal},
                              {"epo", st.epo},
                              {"seo", st.seo},
                              {"all", st.all},
                              {"by_triple_count", buckets},
                              {"relations", corpus.schema.size()},
                              {"dropped_entities", corpus.stats.dropped},
                              {"truncated", corpus.stats.truncated},
                              {"duplicate_triples", corpus.stats.duplicate_triples}};
  }
  if (!any) {
    out << "stats: no data paths configured\n";
    return 2;
  }
  cli_detail::write_json_file(std::filesystem::path(cfg.out_dir) / "stats.json", report);
  return 0;
}

// ---------------------------------------------------------------------------
// train

inline int cmd_train(const RunConfig& cfg, std::ostream& out) {
  cfg.validate();
  if (cfg.train_data.empty()) {
    out << "train: train_data is required\n";
    return 2;
  }
  auto schema = cli_detail::load_schema_if_given(cfg);
  Corpus train_corpus = cli_detail::load_split(cfg, cfg.train_data, schema);
  std::optional<Corpus> dev_corpus;
  if (!cfg.dev_data.empty())
    dev_corpus = cli_detail::load_split(cfg, cfg.dev_data, train_corpus.schema);

  const std::filesystem::path out_dir(cfg.out_dir);
  std::vector<cli_detail::RunRow> rows;
  std::vector<double> f1s;
  int exit_code = 0;

  for (int run = 0; run < cfg.runs; ++run) {
    const std::uint64_t run_seed = cfg.seed + static_cast<std::uint64_t>(run);
    const auto run_dir = out_dir / ("run" + std::to_string(run));
    std::filesystem::create_directories(run_dir);

    auto model = cli_detail::build_model(cfg, train_corpus, run_seed);
    TrainConfig tc = cfg.train_config();
    tc.seed = run_seed;

    std::ofstream log(run_dir / "train.log");
    TrainResult res = train(*model, train_corpus, dev_corpus ? &*dev_corpus : nullptr, tc, &log);

    cli_detail::RunRow row;
    row.run = run;
    row.seed = run_seed;
    row.best_epoch = res.best_epoch;
    row.dev_f1 = res.best_dev_f1;
    row.epochs_ran = static_cast<int>(res.epochs.size());
    row.aborted = res.aborted;
    rows.push_back(row);

    if (res.aborted) {
      out << "train: run " << run << " aborted on non-finite loss\n" << res.abort_diagnostic;
      exit_code = 1;
      continue;
    }

    nlohmann::json echo = cfg.to_json();
    echo["seed"] = run_seed;
    model->save_checkpoint((run_dir / "model.ckpt").string(), echo);
    if (dev_corpus) f1s.push_back(res.best_dev_f1);
  }

  out << "train: " << cfg.runs << " run(s), " << train_corpus.sentences.size()
      << " training sentences, " << train_corpus.schema.size() << " relations\n";
  for (const auto& r : rows) {
    out << "  run " << r.run << "  seed " << r.seed;
    if (r.aborted) {
      out << "  ABORTED\n";
      continue;
    }
    if (r.dev_f1 >= 0)
      out << "  best_epoch " << r.best_epoch << "  dev_f1 " << std::fixed << std::setprecision(4)
          << r.dev_f1 << std::defaultfloat << std::setprecision(6);
    out << "  epochs " << r.epochs_ran << "\n";
  }
  if (!f1s.empty())
    out << "  mean dev_f1 " << std::fixed << std::setprecision(4) << cli_detail::mean_of(f1s)
        << "  std " << cli_detail::sample_std(f1s) << std::defaultfloat << std::setprecision(6)
        << "\n";

  nlohmann::json jrows = nlohmann::json::array();
  for (const auto& r : rows)
    jrows.push_back({{"run", r.run},
                     {"seed", r.seed},
                     {"best_epoch", r.best_epoch},
                     {"dev_f1", r.dev_f1},
                     {"epochs_ran", r.epochs_ran},
                     {"aborted", r.aborted}});
  nlohmann::json report{{"config", cfg.to_json()},
                        {"runs", jrows},
                        {"mean_dev_f1", f1s.empty() ? -1.0 : cli_detail::mean_of(f1s)},
                        {"std_dev_f1", cli_detail::sample_std(f1s)}};
  cli_detail::write_json_file(out_dir / "train_report.json", report);
  return exit_code;
}

// ---------------------------------------------------------------------------
// evaluate

inline int cmd_evaluate(const RunConfig& cfg, const std::string& checkpoint, std::ostream& out) {
  cfg.validate();
  nlohmann::json header = ExtractorModel::read_checkpoint_header(checkpoint);

  if (!cfg.schema_path.empty()) {
    RelationSchema given = RelationSchema::load(cfg.schema_path);
    const auto ckpt_fp = header.at("schema_fingerprint").get<std::uint64_t>();
    if (given.fingerprint() != ckpt_fp) {
      out << "evaluate: relation schema mismatch\n"
          << "  config schema fingerprint     " << std::hex << std::showbase
          << given.fingerprint() << "\n"
          << "  checkpoint schema fingerprint " << ckpt_fp << std::dec << std::noshowbase
          << "\n";
      return 2;
    }
  }

  auto model = ExtractorModel::load_checkpoint(checkpoint);
  const std::string data_path = cli_detail::eval_split_path(cfg);
  if (data_path.empty()) {
    out << "evaluate: no data path configured\n";
    return 2;
  }
  RelationSchema schema = model->schema();
  Corpus corpus = cli_detail::load_split(cfg, data_path, schema);

  auto preds = cli_detail::predict_all(*model, corpus.sentences, cfg.mode(), cfg.threshold,
                                       cfg.max_decoded_entities);
  std::vector<std::vector<Triple>> golds;
  for (const Sentence& s : corpus.sentences) golds.push_back(s.triples);

  MetricsReport partial = micro_prf(preds, golds, MatchMode::Partial);
  MetricsReport exact = micro_prf(preds, golds, MatchMode::Exact);
  const MatchMode main_mode = cfg.resolved_match();
  MetricsReport subsets = subset_report(preds, corpus.sentences, main_mode);
  MetricsReport ground_s2o = ground_entity_f1(*model, corpus, Direction::S2o, cfg.threshold,
                                              main_mode, cfg.max_decoded_entities);
  MetricsReport ground_o2s = ground_entity_f1(*model, corpus, Direction::O2s, cfg.threshold,
                                              main_mode, cfg.max_decoded_entities);
  double failure = failure_proportion(*model, corpus, cfg.mode(), cfg.threshold, main_mode,
                                      cfg.max_decoded_entities);

  out << "evaluate: " << data_path << " (" << corpus.sentences.size() << " sentences, match "
      << to_string(main_mode) << ", mode " << cfg.extraction_mode << ")\n";
  cli_detail::print_metrics_row(out, "partial", partial);
  cli_detail::print_metrics_row(out, "exact", exact);
  out << "subsets (" << to_string(main_mode) << "):\n";
  for (const auto& [k, v] : subsets.subsets) cli_detail::print_metrics_row(out, k, v);
  out << "ground entities:\n";
  cli_detail::print_metrics_row(out, "s2o", ground_s2o);
  cli_detail::print_metrics_row(out, "o2s", ground_o2s);
  out << "  failure proportion " << std::fixed << std::setprecision(4) << failure
      << std::defaultfloat << std::setprecision(6) << "\n";

  nlohmann::json report{{"config", cfg.to_json()},
                        {"checkpoint", checkpoint},
                        {"checkpoint_config", header.value("config", nlohmann::json())},
                        {"data", data_path},
                        {"match", to_string(main_mode)},
                        {"partial", cli_detail::metrics_json(partial)},
                        {"exact", cli_detail::metrics_json(exact)},
                        {"subsets", cli_detail::metrics_json(subsets)},
                        {"ground_entity_s2o", cli_detail::metrics_json(ground_s2o)},
                        {"ground_entity_o2s", cli_detail::metrics_json(ground_o2s)},
                        {"failure_proportion", failure}};
  cli_detail::write_json_file(std::filesystem::path(cfg.out_dir) / "evaluation.json", report);
  return 0;
}

// ---------------------------------------------------------------------------
// predict

inline int cmd_predict(const RunConfig& cfg, const std::string& checkpoint,
                       const std::string& input, const std::string& output, std::ostream& out) {
  cfg.validate();
  auto model = ExtractorModel::load_checkpoint(checkpoint);

  std::ofstream out_file(output);
  if (!out_file) {
    out << "predict: cannot write " << output << "\n";
    return 2;
  }

  // Empty input is a valid no-op.
  {
    std::ifstream probe(input);
    if (!probe) {
      out << "predict: cannot open " << input << "\n";
      return 2;
    }
    std::string content((std::istreambuf_iterator<char>(probe)),
                        std::istreambuf_iterator<char>());
    if (content.find_first_not_of(" \t\r\n") == std::string::npos) {
      out << "predict: 0 sentences\n";
      return 0;
    }
  }

  Corpus corpus = cli_detail::load_split(cfg, input);
  std::size_t n_triples = 0;
  for (const Sentence& s : corpus.sentences) {
    auto preds = extract_triples(*model, s.tokens, cfg.mode(), cfg.threshold,
                                 cfg.max_decoded_entities);
    nlohmann::json rec;
    rec["text"] = s.text;
    nlohmann::json triples = nlohmann::json::array();
    nlohmann::json provenance = nlohmann::json::array();
    for (const PredictedTriple& p : preds) {
      triples.push_back({p.triple.subject.surface, model->schema().name(p.triple.relation),
                         p.triple.object.surface});
      nlohmann::json sources = nlohmann::json::array();
      if (p.from_s2o) sources.push_back("s2o");
      if (p.from_o2s) sources.push_back("o2s");
      provenance.push_back(sources);
    }
    rec["pred_triple_list"] = triples;
    rec["provenance"] = provenance;
    out_file << rec.dump() << "\n";
    n_triples += preds.size();
  }
  out << "predict: " << corpus.sentences.size() << " sentences, " << n_triples
      << " triples -> " << output << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// ablate

inline const std::vector<std::string>& ablation_variants() {
  static const std::vector<std::string> v{"full",    "s2o_only", "o2s_only",
                                          "one_lr",  "uif",      "tru",
                                          "bio",     "two_step", "linear_head"};
  return v;
}

inline RunConfig variant_config(const RunConfig& base, const std::string& variant) {
  RunConfig cfg = base;
  if (variant == "full") return cfg;
  if (variant == "s2o_only") cfg.extraction_mode = "s2o_only";
  else if (variant == "o2s_only") cfg.extraction_mode = "o2s_only";
  else if (variant == "one_lr") cfg.one_lr = true;
  else if (variant == "uif") cfg.mapping = "uniform";
  else if (variant == "tru") cfg.mapping = "truncated";
  else if (variant == "bio") cfg.scheme = "bio";
  else if (variant == "two_step") cfg.extraction_mode = "two_step";
  else if (variant == "linear_head") cfg.relation_head = "linear";
  else throw std::invalid_argument("unknown ablation variant: " + variant);
  return cfg;
}

inline int cmd_ablate(const RunConfig& base, std::ostream& out,
                      std::vector<std::string> variants = {}) {
  base.validate();
  if (base.train_data.empty()) {
    out << "ablate: train_data is required\n";
    return 2;
  }
  if (variants.empty()) variants = ablation_variants();

  auto schema = cli_detail::load_schema_if_given(base);
  Corpus train_corpus = cli_detail::load_split(base, base.train_data, schema);
  std::optional<Corpus> dev_corpus;
  if (!base.dev_data.empty())
    dev_corpus = cli_detail::load_split(base, base.dev_data, train_corpus.schema);
  std::optional<Corpus> eval_corpus;
  const std::string eval_path = cli_detail::eval_split_path(base);
  if (eval_path == base.train_data)
    eval_corpus = train_corpus;
  else if (eval_path == base.dev_data && dev_corpus)
    eval_corpus = *dev_corpus;
  else
    eval_corpus = cli_detail::load_split(base, eval_path, train_corpus.schema);

  nlohmann::json jrows = nlohmann::json::array();
  int exit_code = 0;

  out << "ablate: variants";
  for (const auto& v : variants) out << " " << v;
  out << "\n";

  for (const std::string& variant : variants) {
    nlohmann::json row{{"variant", variant}};
    try {
      RunConfig cfg = variant_config(base, variant);
      cfg.validate();

      std::vector<double> f1s;
      for (int run = 0; run < cfg.runs; ++run) {
        const std::uint64_t run_seed = cfg.seed + static_cast<std::uint64_t>(run);
        auto model = cli_detail::build_model(cfg, train_corpus, run_seed);
        TrainConfig tc = cfg.train_config();
        tc.seed = run_seed;
        TrainResult res =
            train(*model, train_corpus, dev_corpus ? &*dev_corpus : nullptr, tc, nullptr);
        if (res.aborted)
          throw std::runtime_error("run " + std::to_string(run) + " aborted on non-finite loss");
        auto preds = cli_detail::predict_all(*model, eval_corpus->sentences, cfg.mode(),
                                             cfg.threshold, cfg.max_decoded_entities);
        std::vector<std::vector<Triple>> golds;
        for (const Sentence& s : eval_corpus->sentences) golds.push_back(s.triples);
        f1s.push_back(micro_prf(preds, golds, cfg.resolved_match()).f1);
      }

      const double mean = cli_detail::mean_of(f1s);
      const double stdev = cli_detail::sample_std(f1s);
      out << "  " << std::left << std::setw(12) << variant << std::right << std::fixed
          << std::setprecision(4) << "F1 " << mean << " +/- " << stdev << std::defaultfloat
          << std::setprecision(6) << "  (" << f1s.size() << " run(s), mode "
          << cfg.extraction_mode << ", scheme " << cfg.scheme << ", head " << cfg.relation_head
          << ")\n";

      row["f1_mean"] = mean;
      row["f1_std"] = stdev;
      row["runs"] = f1s;
      row["config"] = cfg.to_json();
      nlohmann::json lr_map;
      for (const auto& [name, lr] :
           assign_learning_rates(share_graph_for(cfg.mode()), cfg.lr_policy(), 1))
        lr_map[name] = lr;
      row["lr_map_epoch1"] = lr_map;
    } catch (const std::exception& e) {
      out << "  " << std::left << std::setw(12) << variant << std::right << "FAILED: "
          << e.what() << "\n";
      row["error"] = e.what();
      exit_code = 1;
    }
    jrows.push_back(row);
  }

  nlohmann::json report{{"config", base.to_json()}, {"rows", jrows}, {"eval_data", eval_path}};
  cli_detail::write_json_file(std::filesystem::path(base.out_dir) / "ablate.json", report);
  return exit_code;
}

}  // namespace bitag
