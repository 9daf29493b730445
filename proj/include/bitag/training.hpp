#pragma once

// Multi-task training: teacher-forced task batches with injected negatives,
// the five summed cross-entropy losses, the share-aware per-module learning
// rates, and the AdamW loop with dev-F1 early stopping.

#include "bitag/eval.hpp"
#include "bitag/model.hpp"
#include "bitag/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace bitag {

// ---------------------------------------------------------------------------
// Losses.

inline double ce(double p, double t) {
  const double eps = ad::Graph::kProbEps;
  p = std::min(std::max(p, eps), 1.0 - eps);
  return -(t * std::log(p) + (1.0 - t) * std::log(1.0 - p));
}

// Mean binary cross entropy over start and end positions (2l terms).
inline Expr tagger_loss(Graph& g, const TagFieldExpr& field, const std::vector<int>& start_t,
                        const std::vector<int>& end_t) {
  const auto l = field.start.value().rows();
  if (static_cast<Eigen::Index>(start_t.size()) != l ||
      static_cast<Eigen::Index>(end_t.size()) != l)
    throw std::invalid_argument("tagger_loss: target length mismatch");
  Mat targets(l, 2);
  for (Eigen::Index i = 0; i < l; ++i) {
    targets(i, 0) = start_t[static_cast<std::size_t>(i)];
    targets(i, 1) = end_t[static_cast<std::size_t>(i)];
  }
  return g.binary_cross_entropy_mean(g.concat_cols({field.start, field.end}), targets);
}

// Mean over the relation set of the per-relation binary cross entropies.
inline Expr relation_loss(Graph& g, Expr probs, const std::vector<int>& targets) {
  if (probs.value().cols() != static_cast<Eigen::Index>(targets.size()))
    throw std::invalid_argument("relation_loss: target length mismatch");
  Mat t(1, probs.value().cols());
  for (Eigen::Index i = 0; i < t.cols(); ++i) t(0, i) = targets[static_cast<std::size_t>(i)];
  return g.binary_cross_entropy_mean(probs, t);
}

inline Expr total_loss(Graph& g, const std::vector<Expr>& components) {
  return g.add_scalars(components);
}

// ---------------------------------------------------------------------------
// Task batches (teacher forcing + negative sampling).

enum class TaskId { S1, O1, O2, S2, R };

inline std::string to_string(TaskId t) {
  switch (t) {
    case TaskId::S1: return "S1";
    case TaskId::O1: return "O1";
    case TaskId::O2: return "O2";
    case TaskId::S2: return "S2";
    case TaskId::R: return "R";
  }
  return "?";
}

inline std::vector<TaskId> tasks_for(ExtractionMode mode) {
  switch (mode) {
    case ExtractionMode::Bidirectional:
      return {TaskId::S1, TaskId::O1, TaskId::O2, TaskId::S2, TaskId::R};
    case ExtractionMode::S2oOnly: return {TaskId::S1, TaskId::O1, TaskId::R};
    case ExtractionMode::O2sOnly: return {TaskId::O2, TaskId::S2, TaskId::R};
    case ExtractionMode::TwoStep: return {TaskId::S1, TaskId::O2, TaskId::R};
  }
  return {};
}

struct TaskSample {
  TaskId task = TaskId::S1;
  bool positive = true;
  Span condition;                        // O1/S2 conditioning entity
  Span subject, object;                  // R pair
  std::vector<int> start_targets;        // tag tasks
  std::vector<int> end_targets;
  std::vector<Span> target_spans;        // the same targets as spans (bio scheme)
  std::vector<int> relation_targets;     // R multi-hot
};

enum class NegativeSource { Random, Model };

namespace detail {

inline void mark_span(std::vector<int>& start_t, std::vector<int>& end_t, const Span& sp) {
  start_t[static_cast<std::size_t>(sp.start)] = 1;
  end_t[static_cast<std::size_t>(sp.end)] = 1;
}

inline std::vector<Span> sorted_unique(std::vector<Span> spans) {
  std::sort(spans.begin(), spans.end());
  spans.erase(std::unique(spans.begin(), spans.end()), spans.end());
  return spans;
}

// Uniform span with both endpoints in range, avoiding an exclusion set.
inline std::optional<Span> random_span_avoiding(const std::vector<std::string>& tokens,
                                                const std::vector<Span>& avoid, Rng& rng) {
  const int l = static_cast<int>(tokens.size());
  for (int attempt = 0; attempt < 64; ++attempt) {
    int start = static_cast<int>(rng() % static_cast<std::uint64_t>(l));
    int end = start + static_cast<int>(rng() % static_cast<std::uint64_t>(l - start));
    Span sp = make_span(tokens, start, end);
    if (std::find(avoid.begin(), avoid.end(), sp) == avoid.end()) return sp;
  }
  return std::nullopt;
}

}  // namespace detail

// Build every task sample one sentence contributes.  Unconditioned tasks get
// one sample covering all gold entities of their role; conditioned tasks get
// one positive per gold entity plus ceil(ratio x positives) negatives whose
// targets are all zero; the relation task gets one positive per gold pair
// plus negatives split between mispaired gold entities and random spans.
// `decoded` supplies model-predicted entities for negative_source = model.
inline std::vector<TaskSample> build_task_batches(
    const Sentence& s, const RelationSchema& schema, double negative_ratio, ExtractionMode mode,
    Rng& rng, NegativeSource source = NegativeSource::Random,
    const std::function<std::vector<Span>(const Sentence&, TagTask)>* decoded = nullptr) {
  const int l = static_cast<int>(s.tokens.size());
  const auto tasks = tasks_for(mode);
  auto enabled = [&](TaskId t) { return std::find(tasks.begin(), tasks.end(), t) != tasks.end(); };

  std::vector<Span> subjects, objects;
  for (const Triple& t : s.triples) {
    subjects.push_back(t.subject);
    objects.push_back(t.object);
  }
  subjects = detail::sorted_unique(subjects);
  objects = detail::sorted_unique(objects);

  std::vector<TaskSample> out;

  auto unconditioned = [&](TaskId id, const std::vector<Span>& golds) {
    TaskSample ts;
    ts.task = id;
    ts.start_targets.assign(static_cast<std::size_t>(l), 0);
    ts.end_targets.assign(static_cast<std::size_t>(l), 0);
    ts.target_spans = golds;
    for (const Span& sp : golds) detail::mark_span(ts.start_targets, ts.end_targets, sp);
    out.push_back(std::move(ts));
  };
  if (enabled(TaskId::S1)) unconditioned(TaskId::S1, subjects);
  if (enabled(TaskId::O2)) unconditioned(TaskId::O2, objects);

  if (s.triples.empty()) return out;  // nothing to condition or relate

  auto negatives_of = [&](std::size_t positives) {
    return static_cast<std::size_t>(
        std::ceil(negative_ratio * static_cast<double>(positives)));
  };

  auto conditioned = [&](TaskId id, const std::vector<Span>& anchors,
                         const std::vector<Span>& anchor_gold_pool, bool anchor_is_subject,
                         TagTask decode_task) {
    std::size_t positives = 0;
    for (const Span& anchor : anchors) {
      TaskSample ts;
      ts.task = id;
      ts.condition = anchor;
      ts.start_targets.assign(static_cast<std::size_t>(l), 0);
      ts.end_targets.assign(static_cast<std::size_t>(l), 0);
      for (const Triple& t : s.triples) {
        const Span& a = anchor_is_subject ? t.subject : t.object;
        const Span& b = anchor_is_subject ? t.object : t.subject;
        if (a == anchor) {
          detail::mark_span(ts.start_targets, ts.end_targets, b);
          if (std::find(ts.target_spans.begin(), ts.target_spans.end(), b) ==
              ts.target_spans.end())
            ts.target_spans.push_back(b);
        }
      }
      out.push_back(std::move(ts));
      ++positives;
    }
    std::vector<Span> negative_pool;
    if (source == NegativeSource::Model && decoded) {
      for (const Span& sp : (*decoded)(s, decode_task))
        if (std::find(anchor_gold_pool.begin(), anchor_gold_pool.end(), sp) ==
            anchor_gold_pool.end())
          negative_pool.push_back(sp);
    }
    for (std::size_t i = 0; i < negatives_of(positives); ++i) {
      std::optional<Span> sp;
      if (!negative_pool.empty())
        sp = negative_pool[static_cast<std::size_t>(rng() % negative_pool.size())];
      else
        sp = detail::random_span_avoiding(s.tokens, anchor_gold_pool, rng);
      if (!sp) continue;
      TaskSample ts;
      ts.task = id;
      ts.positive = false;
      ts.condition = *sp;
      ts.start_targets.assign(static_cast<std::size_t>(l), 0);
      ts.end_targets.assign(static_cast<std::size_t>(l), 0);
      out.push_back(std::move(ts));
    }
  };
  if (enabled(TaskId::O1))
    conditioned(TaskId::O1, subjects, subjects, true, TagTask::Subject);
  if (enabled(TaskId::S2))
    conditioned(TaskId::S2, objects, objects, false, TagTask::Object);

  if (enabled(TaskId::R)) {
    // positives: one multi-hot sample per distinct gold pair
    std::vector<std::pair<Span, Span>> gold_pairs;
    for (const Triple& t : s.triples) {
      auto key = std::make_pair(t.subject, t.object);
      if (std::find(gold_pairs.begin(), gold_pairs.end(), key) == gold_pairs.end())
        gold_pairs.push_back(key);
    }
    for (const auto& [subj, obj] : gold_pairs) {
      TaskSample ts;
      ts.task = TaskId::R;
      ts.subject = subj;
      ts.object = obj;
      ts.relation_targets.assign(static_cast<std::size_t>(schema.size()), 0);
      for (const Triple& t : s.triples)
        if (t.subject == subj && t.object == obj)
          ts.relation_targets[static_cast<std::size_t>(t.relation)] = 1;
      out.push_back(std::move(ts));
    }

    // negatives: half mispaired gold entities, half random span pairs
    std::vector<std::pair<Span, Span>> mispairings;
    std::vector<Span> entities = subjects;
    for (const Span& o : objects)
      if (std::find(entities.begin(), entities.end(), o) == entities.end()) entities.push_back(o);
    for (const Span& a : entities)
      for (const Span& b : entities)
        if (std::find(gold_pairs.begin(), gold_pairs.end(), std::make_pair(a, b)) ==
            gold_pairs.end())
          mispairings.emplace_back(a, b);

    const std::size_t want = negatives_of(gold_pairs.size());
    for (std::size_t i = 0; i < want; ++i) {
      TaskSample ts;
      ts.task = TaskId::R;
      ts.positive = false;
      ts.relation_targets.assign(static_cast<std::size_t>(schema.size()), 0);
      const bool use_mispairing = (i % 2 == 0) && !mispairings.empty();
      if (use_mispairing) {
        const auto& [a, b] = mispairings[static_cast<std::size_t>(rng() % mispairings.size())];
        ts.subject = a;
        ts.object = b;
      } else {
        auto a = detail::random_span_avoiding(s.tokens, {}, rng);
        auto b = detail::random_span_avoiding(s.tokens, {}, rng);
        if (!a || !b) continue;
        if (std::find(gold_pairs.begin(), gold_pairs.end(), std::make_pair(*a, *b)) !=
            gold_pairs.end())
          continue;
        ts.subject = *a;
        ts.object = *b;
      }
      out.push_back(std::move(ts));
    }
  }

  return out;
}

// ---------------------------------------------------------------------------
// Share-aware learning rates.

struct ShareGraph {
  std::map<std::string, int> k;  // module name -> number of tasks sharing it
};

inline ShareGraph share_graph_for(ExtractionMode mode) {
  ShareGraph g;
  const auto tasks = tasks_for(mode);
  g.k["encoder"] = static_cast<int>(tasks.size());
  for (TaskId t : tasks) {
    switch (t) {
      case TaskId::S1: g.k["subject_tagger"] = 1; break;
      case TaskId::O1: g.k["s2o_object_tagger"] = 1; break;
      case TaskId::O2: g.k["object_tagger"] = 1; break;
      case TaskId::S2: g.k["o2s_subject_tagger"] = 1; break;
      case TaskId::R: g.k["relation_head"] = 1; break;
    }
  }
  return g;
}

enum class Mapping { Identity, UniformIncreasing, Truncated };

inline std::string to_string(Mapping m) {
  switch (m) {
    case Mapping::Identity: return "identity";
    case Mapping::UniformIncreasing: return "uniform";
    case Mapping::Truncated: return "truncated";
  }
  return "identity";
}
inline Mapping parse_mapping(const std::string& s) {
  if (s == "identity") return Mapping::Identity;
  if (s == "uniform") return Mapping::UniformIncreasing;
  if (s == "truncated") return Mapping::Truncated;
  throw std::invalid_argument("unknown mapping: " + s);
}

struct LrPolicy {
  double xi = 1.5e-4;
  double delta = 0.0;
  Mapping mapping = Mapping::Identity;
  int total_epochs = 100;
  bool one_lr = false;  // ablation: every module trains at xi
};

// Shared modules are slowed down: xi_i = (1+delta)/f(k_i) * xi, with f per
// mapping; modules used by a single task keep the base rate.
inline std::map<std::string, double> assign_learning_rates(const ShareGraph& g,
                                                           const LrPolicy& p, int epoch,
                                                           std::ostream* log = nullptr) {
  if (p.xi <= 0) throw std::invalid_argument("lr policy: xi must be positive");
  if (p.delta < 0 || p.delta > 1) throw std::invalid_argument("lr policy: delta outside [0,1]");
  if (p.total_epochs < 1) throw std::invalid_argument("lr policy: total epochs < 1");
  if (epoch < 1 || epoch > p.total_epochs)
    throw std::invalid_argument("lr policy: epoch outside [1, n]");

  std::map<std::string, double> out;
  for (const auto& [name, k] : g.k) {
    if (p.one_lr || k == 1) {
      out[name] = p.xi;
      continue;
    }
    double f;
    switch (p.mapping) {
      case Mapping::Identity: f = static_cast<double>(k); break;
      case Mapping::UniformIncreasing:
      case Mapping::Truncated: {
        if (p.total_epochs == 1) {
          f = 1.0;
          if (log)
            *log << "lr policy: single-epoch schedule degenerates to f(k)=1 for module "
                 << name << "\n";
        } else {
          f = 1.0 + 2.0 * static_cast<double>(epoch - 1) * static_cast<double>(k) /
                        static_cast<double>(p.total_epochs - 1);
        }
        if (p.mapping == Mapping::Truncated) f = std::min(static_cast<double>(k), f);
        break;
      }
      default: f = static_cast<double>(k);
    }
    out[name] = (1.0 + p.delta) / f * p.xi;
  }
  return out;
}

// ---------------------------------------------------------------------------
// AdamW.

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

class AdamW {
 public:
  explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {}

  // One update over (parameter, learning rate) pairs; the bias-correction
  // step counter advances once per call.
  void step(const std::vector<std::pair<Parameter*, double>>& params) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (auto& [p, lr] : params) {
      p->adam_m = cfg_.beta1 * p->adam_m + (1.0 - cfg_.beta1) * p->grad;
      p->adam_v = cfg_.beta2 * p->adam_v.array() +
                  (1.0 - cfg_.beta2) * p->grad.array().square();
      Mat m_hat = p->adam_m / bc1;
      Mat v_hat = p->adam_v / bc2;
      p->value -=
          lr * (m_hat.array() / (v_hat.array().sqrt() + cfg_.eps) + cfg_.weight_decay * p->value.array())
                   .matrix();
    }
  }

  long steps_taken() const { return t_; }

 private:
  AdamWConfig cfg_;
  long t_ = 0;
};

// ---------------------------------------------------------------------------
// The training loop.

struct TrainConfig {
  int epochs = 100;
  int patience = 10;
  int batch_size = 8;
  double negative_ratio = 1.0;
  double threshold = 0.5;
  LrPolicy lr;
  AdamWConfig adamw;
  ExtractionMode mode = ExtractionMode::Bidirectional;
  NegativeSource negative_source = NegativeSource::Random;
  MatchMode dev_match = MatchMode::Partial;
  int max_decoded_entities = 20;
  std::uint64_t seed = 0;
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double dev_f1 = -1.0;  // -1 when no dev corpus
  std::map<std::string, double> lrs;
};

struct TrainResult {
  std::vector<EpochLog> epochs;
  int best_epoch = -1;
  double best_dev_f1 = -1.0;
  bool aborted = false;
  std::string abort_diagnostic;
};

namespace detail {

inline double dev_f1(ExtractorModel& model, const Corpus& dev, const TrainConfig& cfg) {
  std::vector<std::vector<Triple>> preds, golds;
  for (const Sentence& s : dev.sentences) {
    preds.push_back(plain_triples(
        extract_triples(model, s.tokens, cfg.mode, cfg.threshold, cfg.max_decoded_entities)));
    golds.push_back(s.triples);
  }
  return micro_prf(preds, golds, cfg.dev_match).f1;
}

inline std::string diagnostic_dump(ExtractorModel& model, int epoch, std::size_t batch_index,
                                   const std::map<std::string, double>& task_losses) {
  std::ostringstream os;
  os << "non-finite loss at epoch " << epoch << ", batch " << batch_index << "\n";
  for (const auto& [task, loss] : task_losses) os << "  loss[" << task << "] = " << loss << "\n";
  for (auto& grp : model.groups()) {
    double norm = 0;
    for (Parameter* p : grp.params) norm += p->value.squaredNorm();
    os << "  |" << grp.name << "| = " << std::sqrt(norm) << "\n";
  }
  return os.str();
}

}  // namespace detail

// Loss of one tag-task sample under the model's scheme.
inline Expr sample_tag_loss(Graph& g, ExtractorModel& model, TagTask task, Expr features,
                            const TaskSample& ts) {
  if (model.scheme() == Scheme::ZeroOne) {
    TagFieldExpr field = model.head(task).tag(g, features);
    return tagger_loss(g, field, ts.start_targets, ts.end_targets);
  }
  auto labels = bio_targets(static_cast<int>(ts.start_targets.size()), ts.target_spans);
  return g.softmax_cross_entropy_rows(model.bio_head(task).logits(g, features), labels);
}

// Shuffled mini-batch multi-task training. Each step sums the per-task mean
// losses over one batch of sentences, backpropagates once, and applies the
// per-module learning rates. Keeps the best dev-F1 parameters and restores
// them at the end (when a dev corpus is given).
inline TrainResult train(ExtractorModel& model, const Corpus& train_corpus,
                         const Corpus* dev_corpus, const TrainConfig& cfg,
                         std::ostream* log = nullptr) {
  TrainResult result;
  if (cfg.epochs == 0) return result;

  Rng rng(cfg.seed);
  AdamW opt(cfg.adamw);
  ShareGraph share = share_graph_for(cfg.mode);
  const auto groups = model.groups();

  std::function<std::vector<Span>(const Sentence&, TagTask)> decode_callback =
      [&](const Sentence& s, TagTask task) {
        Graph g;
        ProjectedFeatures feats = model.features(g, s.tokens);
        return model.decode_task(g, feats, task, nullptr, s.tokens, cfg.threshold,
                                 cfg.max_decoded_entities);
      };

  std::vector<std::size_t> order(train_corpus.sentences.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  std::map<std::string, Mat> best_values;
  int epochs_since_best = 0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    auto lrs = assign_learning_rates(share, cfg.lr, std::min(epoch, cfg.lr.total_epochs), log);

    double epoch_loss = 0.0;
    std::size_t steps = 0;

    for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t batch_end =
          std::min(order.size(), at + static_cast<std::size_t>(cfg.batch_size));

      Graph g;
      std::map<TaskId, std::vector<Expr>> task_terms;
      for (std::size_t bi = at; bi < batch_end; ++bi) {
        const Sentence& s = train_corpus.sentences[order[bi]];
        auto samples = build_task_batches(s, model.schema(), cfg.negative_ratio, cfg.mode, rng,
                                          cfg.negative_source, &decode_callback);
        if (samples.empty()) continue;
        ProjectedFeatures feats = model.features(g, s.tokens);
        for (const TaskSample& ts : samples) {
          switch (ts.task) {
            case TaskId::S1:
            case TaskId::O2: {
              TagTask tt = ts.task == TaskId::S1 ? TagTask::Subject : TagTask::Object;
              Expr x = model.task_features(g, feats, tt);
              task_terms[ts.task].push_back(sample_tag_loss(g, model, tt, x, ts));
              break;
            }
            case TaskId::O1:
            case TaskId::S2: {
              TagTask tt =
                  ts.task == TaskId::O1 ? TagTask::ObjectGivenSubject : TagTask::SubjectGivenObject;
              Expr cond = model.condition_vector(g, feats, tt, ts.condition);
              Expr x = model.task_features(g, feats, tt, &cond);
              task_terms[ts.task].push_back(sample_tag_loss(g, model, tt, x, ts));
              break;
            }
            case TaskId::R: {
              Expr probs = model.relation_scores(g, feats, ts.subject, ts.object);
              task_terms[ts.task].push_back(relation_loss(g, probs, ts.relation_targets));
              break;
            }
          }
        }
      }
      if (task_terms.empty()) continue;

      std::vector<Expr> components;
      std::map<std::string, double> task_loss_values;
      for (auto& [task, terms] : task_terms) {
        Expr mean_loss = g.scale(g.add_scalars(terms), 1.0 / static_cast<double>(terms.size()));
        task_loss_values[to_string(task)] = mean_loss.scalar();
        components.push_back(mean_loss);
      }
      Expr loss = total_loss(g, components);
      const double loss_value = loss.scalar();
      if (!std::isfinite(loss_value)) {
        result.aborted = true;
        result.abort_diagnostic =
            detail::diagnostic_dump(model, epoch, at / static_cast<std::size_t>(cfg.batch_size),
                                    task_loss_values);
        if (log) *log << result.abort_diagnostic;
        return result;
      }

      for (auto& grp : groups)
        for (Parameter* p : grp.params) p->zero_grad();
      g.backward(loss);

      std::vector<std::pair<Parameter*, double>> updates;
      for (auto& grp : groups) {
        auto it = lrs.find(grp.name);
        if (it == lrs.end()) continue;  // module not trained in this mode
        for (Parameter* p : grp.params) updates.emplace_back(p, it->second);
      }
      opt.step(updates);

      epoch_loss += loss_value;
      ++steps;
    }

    EpochLog el;
    el.epoch = epoch;
    el.train_loss = steps > 0 ? epoch_loss / static_cast<double>(steps) : 0.0;
    el.lrs = lrs;
    if (dev_corpus) el.dev_f1 = detail::dev_f1(model, *dev_corpus, cfg);
    result.epochs.push_back(el);

    if (log) {
      *log << "epoch " << epoch << " loss " << std::hexfloat << el.train_loss
           << std::defaultfloat;
      if (dev_corpus) *log << " dev_f1 " << el.dev_f1;
      *log << "\n";
    }

    if (dev_corpus) {
      if (el.dev_f1 > result.best_dev_f1) {
        result.best_dev_f1 = el.dev_f1;
        result.best_epoch = epoch;
        epochs_since_best = 0;
        best_values.clear();
        for (auto& grp : groups)
          for (Parameter* p : grp.params) best_values[p->name] = p->value;
      } else if (++epochs_since_best >= cfg.patience) {
        if (log) *log << "early stop at epoch " << epoch << "\n";
        break;
      }
    }
  }

  if (dev_corpus && !best_values.empty())
    for (auto& grp : groups)
      for (Parameter* p : grp.params) {
        auto it = best_values.find(p->name);
        if (it != best_values.end()) p->value = it->second;
      }
  return result;
}

}  // namespace bitag
