#pragma once

// Triple-annotated corpora in the interchange format of the public
// preprocessed NYT/WebNLG releases: JSON records
//   {"text": "...", "triple_list": [[subject, relation, object], ...]}
// given either as one JSON array or as newline-delimited objects, plus a
// sidecar schema file with one relation name per line.

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace bitag {

// Inclusive token-index range plus the text it covers.
struct Span {
  int start = 0;
  int end = 0;
  std::string surface;

  friend bool operator==(const Span& a, const Span& b) {
    return a.start == b.start && a.end == b.end;
  }
  friend auto operator<=>(const Span& a, const Span& b) {
    return std::tie(a.start, a.end) <=> std::tie(b.start, b.end);
  }
  int length() const { return end - start + 1; }
};

struct Triple {
  Span subject;
  int relation = 0;  // index into RelationSchema
  Span object;

  friend bool operator==(const Triple& a, const Triple& b) {
    return a.subject == b.subject && a.relation == b.relation && a.object == b.object;
  }
};

struct Sentence {
  std::string id;
  std::string text;
  std::vector<std::string> tokens;
  std::vector<Triple> triples;
};

class RelationSchema {
 public:
  RelationSchema() = default;
  explicit RelationSchema(std::vector<std::string> names) {
    for (auto& n : names) add(n);
  }

  int add(const std::string& name) {
    auto it = index_.find(name);
    if (it != index_.end()) return it->second;
    names_.push_back(name);
    index_.emplace(name, static_cast<int>(names_.size()) - 1);
    return static_cast<int>(names_.size()) - 1;
  }

  std::optional<int> find(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  const std::string& name(int id) const { return names_.at(static_cast<size_t>(id)); }
  int size() const { return static_cast<int>(names_.size()); }
  const std::vector<std::string>& names() const { return names_; }

  // FNV-1a over the ordered names; used to refuse mismatched checkpoints.
  std::uint64_t fingerprint() const {
    std::uint64_t h = 1469598103934665603ull;
    for (const std::string& n : names_) {
      for (char c : n) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ull;
      }
      h ^= '\n';
      h *= 1099511628211ull;
    }
    return h;
  }

  static RelationSchema load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("schema: cannot open " + path);
    RelationSchema s;
    std::string line;
    while (std::getline(in, line)) {
      while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
      if (!line.empty()) s.add(line);
    }
    return s;
  }

  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("schema: cannot write " + path);
    for (const std::string& n : names_) out << n << "\n";
  }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, int> index_;
};

struct OverlapClass {
  bool normal = false;
  bool epo = false;  // some unordered entity pair occurs in >= 2 triples
  bool seo = false;  // some entity occurs in >= 2 triples not all sharing one pair
};

enum class AnnotationStandard { LastToken, WholeSpan };

struct CorpusOptions {
  AnnotationStandard annotation = AnnotationStandard::WholeSpan;
  int max_tokens = 100;                 // longer sentences are truncated
  std::vector<std::string>* warnings = nullptr;  // optional sink
};

struct LoadStats {
  int sentences = 0;
  int dropped = 0;      // entities that could not be aligned to tokens
  int truncated = 0;
  int ambiguous_entities = 0;  // multi-mention entities resolved to first occurrence
  int duplicate_triples = 0;
};

struct Corpus {
  std::vector<Sentence> sentences;
  RelationSchema schema;
  LoadStats stats;
};

namespace detail {

inline std::vector<std::string> whitespace_tokens(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

inline std::string join_tokens(const std::vector<std::string>& tokens, int start, int end) {
  std::string out;
  for (int i = start; i <= end; ++i) {
    if (i > start) out += ' ';
    out += tokens[static_cast<size_t>(i)];
  }
  return out;
}

// First token index sequence matching `entity` split on whitespace; counts
// additional occurrences so callers can report resolution ambiguity.
inline std::optional<std::pair<int, int>> find_token_match(
    const std::vector<std::string>& tokens, const std::vector<std::string>& entity,
    int* extra_occurrences) {
  if (entity.empty() || entity.size() > tokens.size()) return std::nullopt;
  std::optional<std::pair<int, int>> first;
  for (size_t i = 0; i + entity.size() <= tokens.size(); ++i) {
    if (std::equal(entity.begin(), entity.end(), tokens.begin() + static_cast<long>(i))) {
      if (!first) {
        first = {static_cast<int>(i), static_cast<int>(i + entity.size()) - 1};
      } else if (extra_occurrences) {
        ++*extra_occurrences;
      }
    }
  }
  return first;
}

// Character-level fallback: locate the entity text inside the raw sentence
// text and take the first/last token whose character range covers it.
inline std::optional<std::pair<int, int>> find_char_cover(
    const std::string& text, const std::vector<std::string>& tokens,
    const std::string& entity) {
  if (entity.empty()) return std::nullopt;
  size_t pos = text.find(entity);
  if (pos == std::string::npos) return std::nullopt;
  size_t lo = pos, hi = pos + entity.size();  // [lo, hi)
  size_t cursor = 0;
  int first = -1, last = -1;
  for (size_t t = 0; t < tokens.size(); ++t) {
    cursor = text.find(tokens[t], cursor);
    if (cursor == std::string::npos) return std::nullopt;
    size_t tok_lo = cursor, tok_hi = cursor + tokens[t].size();
    if (tok_hi > lo && tok_lo < hi) {
      if (first < 0) first = static_cast<int>(t);
      last = static_cast<int>(t);
    }
    cursor = tok_hi;
  }
  if (first < 0) return std::nullopt;
  return {{first, last}};
}

inline void warn(const CorpusOptions& opt, const std::string& msg) {
  if (opt.warnings) opt.warnings->push_back(msg);
}

}  // namespace detail

inline Span make_span(const std::vector<std::string>& tokens, int start, int end) {
  return Span{start, end, detail::join_tokens(tokens, start, end)};
}

// Resolve an entity string to a token span of `s`, honoring the annotation
// standard. Returns nullopt when the entity cannot be aligned.
inline std::optional<Span> align_entity(const Sentence& s, const std::string& entity,
                                        AnnotationStandard annotation,
                                        int* extra_occurrences = nullptr) {
  auto hit = detail::find_token_match(s.tokens, detail::whitespace_tokens(entity),
                                      extra_occurrences);
  if (!hit) hit = detail::find_char_cover(s.text, s.tokens, entity);
  if (!hit) return std::nullopt;
  auto [start, end] = *hit;
  if (annotation == AnnotationStandard::LastToken) start = end;
  Span span;
  span.start = start;
  span.end = end;
  span.surface = detail::join_tokens(s.tokens, start, end);
  return span;
}

inline void validate_sentence(const Sentence& s, int n_relations) {
  if (s.tokens.empty())
    throw std::runtime_error("corpus: sentence " + s.id + " has no tokens");
  const int l = static_cast<int>(s.tokens.size());
  for (const Triple& t : s.triples) {
    for (const Span* sp : {&t.subject, &t.object}) {
      if (sp->start < 0 || sp->start > sp->end || sp->end >= l)
        throw std::runtime_error("corpus: invalid span in sentence " + s.id);
      if (sp->surface != detail::join_tokens(s.tokens, sp->start, sp->end))
        throw std::runtime_error("corpus: span text mismatch in sentence " + s.id);
    }
    if (t.relation < 0 || t.relation >= n_relations)
      throw std::runtime_error("corpus: relation id out of range in sentence " + s.id);
  }
}

namespace detail {

inline Sentence sentence_from_record(const nlohmann::json& rec, const std::string& id,
                                     RelationSchema& schema,
                                     const std::optional<RelationSchema>& fixed_schema,
                                     const CorpusOptions& opt, LoadStats& stats,
                                     bool* drop) {
  *drop = false;
  if (!rec.is_object() || !rec.contains("text") || !rec["text"].is_string())
    throw std::runtime_error("corpus: record " + id + " lacks a \"text\" string");
  Sentence s;
  s.id = rec.contains("id") && rec["id"].is_string() ? rec["id"].get<std::string>() : id;
  s.text = rec["text"].get<std::string>();
  s.tokens = whitespace_tokens(s.text);
  if (s.tokens.empty())
    throw std::runtime_error("corpus: record " + id + " has empty text");
  if (static_cast<int>(s.tokens.size()) > opt.max_tokens) {
    s.tokens.resize(static_cast<size_t>(opt.max_tokens));
    ++stats.truncated;
    warn(opt, "corpus: sentence " + s.id + " truncated to " +
                  std::to_string(opt.max_tokens) + " tokens");
  }

  const nlohmann::json empty = nlohmann::json::array();
  const nlohmann::json& triples = rec.contains("triple_list") ? rec["triple_list"] : empty;
  if (!triples.is_array())
    throw std::runtime_error("corpus: record " + id + " triple_list is not an array");

  std::set<std::tuple<int, int, int, int, int>> seen;
  for (const auto& item : triples) {
    if (!item.is_array() || item.size() != 3 || !item[0].is_string() ||
        !item[1].is_string() || !item[2].is_string())
      throw std::runtime_error("corpus: record " + id +
                               " triple is not [subject, relation, object]");
    const std::string subj = item[0].get<std::string>();
    const std::string rel = item[1].get<std::string>();
    const std::string obj = item[2].get<std::string>();

    int rel_id;
    if (fixed_schema) {
      auto found = fixed_schema->find(rel);
      if (!found)
        throw std::runtime_error("corpus: relation \"" + rel +
                                 "\" in record " + id + " missing from provided schema");
      rel_id = *found;
      schema.add(rel);
    } else {
      rel_id = schema.add(rel);
    }

    int extra = 0;
    auto sspan = align_entity(s, subj, opt.annotation, &extra);
    auto ospan = align_entity(s, obj, opt.annotation, &extra);
    if (extra > 0) stats.ambiguous_entities += extra;
    if (!sspan || !ospan) {
      warn(opt, "corpus: dropping sentence " + s.id + ": entity \"" +
                    (!sspan ? subj : obj) + "\" cannot be aligned to tokens");
      ++stats.dropped;
      *drop = true;
      return s;
    }
    Triple t{*sspan, rel_id, *ospan};
    auto key = std::make_tuple(t.relation, t.subject.start, t.subject.end,
                               t.object.start, t.object.end);
    if (!seen.insert(key).second) {
      ++stats.duplicate_triples;
      continue;
    }
    s.triples.push_back(std::move(t));
  }
  return s;
}

}  // namespace detail

// Load a corpus file. When `schema` is given, every relation in the file
// must already be in it (the returned schema keeps the given order).
inline Corpus load_corpus(const std::string& path,
                          const std::optional<RelationSchema>& schema = std::nullopt,
                          const CorpusOptions& opt = {}) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("corpus: cannot open " + path);
  std::string content((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());

  Corpus corpus;
  if (schema) corpus.schema = *schema;

  auto consume = [&](const nlohmann::json& rec, const std::string& rec_id) {
    bool drop = false;
    Sentence s = detail::sentence_from_record(rec, rec_id, corpus.schema, schema, opt,
                                              corpus.stats, &drop);
    if (!drop) {
      validate_sentence(s, std::max(corpus.schema.size(), 1));
      corpus.sentences.push_back(std::move(s));
      ++corpus.stats.sentences;
    }
  };

  size_t first = content.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return corpus;  // empty file -> empty corpus

  if (content[first] == '[') {
    nlohmann::json arr;
    try {
      arr = nlohmann::json::parse(content);
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error("corpus: " + path + ": malformed JSON array: " + e.what());
    }
    for (size_t i = 0; i < arr.size(); ++i) consume(arr[i], std::to_string(i));
  } else {
    std::istringstream lines(content);
    std::string line;
    int line_no = 0, rec_no = 0;
    while (std::getline(lines, line)) {
      ++line_no;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      nlohmann::json rec;
      try {
        rec = nlohmann::json::parse(line);
      } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("corpus: " + path + " line " + std::to_string(line_no) +
                                 ": malformed record: " + e.what());
      }
      consume(rec, std::to_string(rec_no++));
    }
  }
  return corpus;
}

inline void save_corpus(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("corpus: cannot write " + path);
  for (const Sentence& s : corpus.sentences) {
    nlohmann::json rec;
    rec["text"] = s.text;
    nlohmann::json triples = nlohmann::json::array();
    for (const Triple& t : s.triples)
      triples.push_back({t.subject.surface, corpus.schema.name(t.relation),
                         t.object.surface});
    rec["triple_list"] = std::move(triples);
    out << rec.dump() << "\n";
  }
}

// Overlap pattern of a sentence. Entities are compared by surface text, the
// identity the public benchmarks use for their statistics.
inline OverlapClass classify_overlap(const Sentence& s) {
  auto pair_key = [](const Triple& t) {
    const std::string &a = t.subject.surface, &b = t.object.surface;
    return a <= b ? a + "\x1f" + b : b + "\x1f" + a;
  };

  OverlapClass oc;
  std::map<std::string, int> pair_count;
  for (const Triple& t : s.triples) ++pair_count[pair_key(t)];
  for (const auto& [key, n] : pair_count)
    if (n >= 2) oc.epo = true;

  std::map<std::string, std::vector<const Triple*>> by_entity;
  for (const Triple& t : s.triples) {
    by_entity[t.subject.surface].push_back(&t);
    if (t.object.surface != t.subject.surface) by_entity[t.object.surface].push_back(&t);
  }
  for (const auto& [entity, triples] : by_entity) {
    if (triples.size() < 2) continue;
    const std::string first = pair_key(*triples[0]);
    bool all_same_pair = std::all_of(triples.begin(), triples.end(),
                                     [&](const Triple* t) { return pair_key(*t) == first; });
    if (!all_same_pair) oc.seo = true;
  }
  oc.normal = !(oc.epo || oc.seo);
  return oc;
}

// Bucket label by triple count: "1".."4", "5+", and "0" for the degenerate
// no-triple case which is reported separately.
inline std::string triple_count_bucket(const Sentence& s) {
  const size_t n = s.triples.size();
  if (n == 0) return "0";
  if (n >= 5) return "5+";
  return std::to_string(n);
}

struct CorpusStatistics {
  long normal = 0;
  long epo = 0;
  long seo = 0;
  long all = 0;
  std::map<std::string, long> by_bucket;
};

inline CorpusStatistics corpus_statistics(const std::vector<Sentence>& sentences) {
  CorpusStatistics st;
  for (const Sentence& s : sentences) {
    OverlapClass oc = classify_overlap(s);
    if (oc.normal) ++st.normal;
    if (oc.epo) ++st.epo;
    if (oc.seo) ++st.seo;
    ++st.all;
    ++st.by_bucket[triple_count_bucket(s)];
  }
  return st;
}

}  // namespace bitag
