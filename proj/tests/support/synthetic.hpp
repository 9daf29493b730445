#pragma once

// Deterministic synthetic corpora for training and property tests.

#include "bitag/corpus.hpp"
#include "bitag/graph.hpp"

#include <string>
#include <vector>

namespace synth {

using bitag::Corpus;
using bitag::RelationSchema;
using bitag::Sentence;
using bitag::Span;
using bitag::Triple;

inline Span tok(const std::vector<std::string>& tokens, int i) {
  return Span{i, i, tokens[static_cast<std::size_t>(i)]};
}

// 32 sentences over 4 relations with a mix of Normal, EPO and SEO patterns
// (at least four sentences of each overlap class). Entities are single
// unique tokens, so the corpus reads identically under both annotation
// standards.
inline Corpus toy_corpus() {
  Corpus corpus;
  corpus.schema.add("born_in");
  corpus.schema.add("lives_in");
  corpus.schema.add("works_for");
  corpus.schema.add("capital_of");
  const int kBorn = 0, kLives = 1, kWorks = 2, kCapital = 3;

  const std::vector<std::string> people{"alice", "bob",   "carol", "dave",
                                        "erin",  "frank", "grace", "henry"};
  const std::vector<std::string> cities{"paris", "rome", "oslo", "cairo",
                                        "lima",  "kyiv", "bern", "tokyo"};
  const std::vector<std::string> firms{"acme", "initech", "globex", "umbrella"};
  const std::vector<std::string> lands{"france", "italy", "norway", "egypt",
                                       "peru",   "ukraine", "suisse", "japan"};

  auto add = [&](std::vector<std::string> tokens, std::vector<Triple> triples) {
    Sentence s;
    s.id = "toy" + std::to_string(corpus.sentences.size());
    s.tokens = std::move(tokens);
    std::string text;
    for (std::size_t i = 0; i < s.tokens.size(); ++i) {
      if (i) text += ' ';
      text += s.tokens[i];
    }
    s.text = text;
    s.triples = std::move(triples);
    corpus.sentences.push_back(std::move(s));
  };

  for (int i = 0; i < 8; ++i) {
    const auto& p = people[static_cast<std::size_t>(i)];
    const auto& c = cities[static_cast<std::size_t>(i)];
    const auto& f = firms[static_cast<std::size_t>(i % 4)];
    const auto& d = lands[static_cast<std::size_t>(i)];

    // Normal: one triple
    {
      std::vector<std::string> t{p, "was", "born", "in", c, "."};
      add(t, {Triple{tok(t, 0), kBorn, tok(t, 4)}});
    }
    // EPO: two relations over the same entity pair
    {
      std::vector<std::string> t{p, "was", "born", "in", "and", "lives", "in", c, "."};
      add(t, {Triple{tok(t, 0), kBorn, tok(t, 7)}, Triple{tok(t, 0), kLives, tok(t, 7)}});
    }
    // SEO: one subject, two different objects
    {
      std::vector<std::string> t{p, "works", "for", f, "and", "lives", "in", c, "."};
      add(t, {Triple{tok(t, 0), kWorks, tok(t, 3)}, Triple{tok(t, 0), kLives, tok(t, 7)}});
    }
    // Normal: capital fact
    {
      std::vector<std::string> t{c, "is", "the", "capital", "of", d, "."};
      add(t, {Triple{tok(t, 0), kCapital, tok(t, 5)}});
    }
  }

  corpus.stats.sentences = static_cast<int>(corpus.sentences.size());
  return corpus;
}

// Write the toy corpus to dir/train.json (NDJSON interchange) and
// dir/schema.txt.
inline void write_toy_files(const std::string& dir) {
  Corpus corpus = toy_corpus();
  bitag::save_corpus(corpus, dir + "/train.json");
  corpus.schema.save(dir + "/schema.txt");
}

// Random sentence with random single-or-multi-token entity triples; for
// property tests that only need structural validity.
inline Sentence random_sentence(bitag::ad::Rng& rng, int min_tokens = 4, int max_tokens = 12,
                                int max_triples = 4, int n_relations = 4) {
  Sentence s;
  const int l = min_tokens + static_cast<int>(rng() % static_cast<std::uint64_t>(
                                                  max_tokens - min_tokens + 1));
  for (int i = 0; i < l; ++i) s.tokens.push_back("w" + std::to_string(rng() % 23));
  std::string text;
  for (std::size_t i = 0; i < s.tokens.size(); ++i) {
    if (i) text += ' ';
    text += s.tokens[i];
  }
  s.text = text;
  s.id = "rand";

  const int n = static_cast<int>(rng() % static_cast<std::uint64_t>(max_triples + 1));
  for (int t = 0; t < n; ++t) {
    auto span = [&]() {
      int a = static_cast<int>(rng() % static_cast<std::uint64_t>(l));
      int b = a + static_cast<int>(rng() % 3);
      if (b >= l) b = l - 1;
      return bitag::make_span(s.tokens, std::min(a, b), std::max(a, b));
    };
    s.triples.push_back(Triple{span(), static_cast<int>(rng() % static_cast<std::uint64_t>(
                                           n_relations)),
                               span()});
  }
  return s;
}

}  // namespace synth
