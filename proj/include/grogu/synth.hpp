#pragma once

// Seeded synthetic corpora for the Needle LM. Answers are two-word phrases
// drawn from the first half of the Needle vocabulary; filler comes from the
// second half, so an answer only ever appears in its own gold document.
// Topic tokens ("t17a t17b") tie a question to its gold and related docs.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "grogu/corpus.hpp"
#include "grogu/prefdata.hpp"

namespace grogu {

struct SynthConfig {
  std::size_t queries = 200;
  std::size_t related_per_query = 3;  // topic docs without the answer
  std::size_t noise_docs = 200;       // filler-only docs
  std::size_t gold_len = 12;
  std::size_t related_len = 12;
  std::size_t noise_len = 12;
  std::uint64_t seed = 7;
  std::optional<std::size_t> needle_window;  // suggested model window

  void validate() const;
};

// Gold identification: all docs the same length, unbounded window.
SynthConfig gold_suite_config();
// Concordance: long related docs, short noise docs, window of 36 tokens.
SynthConfig concordance_suite_config();
// Layout: nine related docs per query, fixed length 12; the weak model's
// window (60 tokens) covers the first five documents.
SynthConfig layout_suite_config();

struct SynthSuite {
  std::vector<DocumentRecord> corpus;
  std::vector<QueryRecord> queries;
};

SynthSuite make_synth_suite(const SynthConfig& config);

struct SynthPrefs {
  SynthSuite suite;
  std::vector<RewriteSet> rewrites;
};

// Conversational rewrite sets: one rewrite names the topic (retrieves the
// gold doc), the others retrieve nothing or another topic.
SynthPrefs make_pref_suite(std::size_t queries, std::uint64_t seed);

}  // namespace grogu
