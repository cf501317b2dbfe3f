#pragma once

// Sparse retrieval: tokenizer, inverted index and Okapi BM25.
//
// The scoring function is the Lucene variant
//
//   score(q, d) = sum_t idf(t) * tf * (k1 + 1) / (tf + k1 * (1 - b + b * |d| / avgdl))
//   idf(t)      = ln(1 + (N - df + 0.5) / (df + 0.5))
//
// summed over the query terms in the order given (repeated terms count
// again). Absent terms contribute zero.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "grogu/corpus.hpp"

namespace grogu {

struct TokenizerOptions {
  bool stem = false;       // Porter stemmer
  bool stopwords = false;  // drop a small English stopword list

  bool operator==(const TokenizerOptions&) const = default;
};

// Lowercases ASCII and splits on runs of non-alphanumeric bytes. Bytes >= 0x80
// are kept as word characters so UTF-8 words survive intact.
std::vector<std::string> tokenize_text(std::string_view text,
                                       const TokenizerOptions& opts = {});

std::string porter_stem(std::string_view word);
bool is_stopword(std::string_view word);

struct Bm25Params {
  double k1 = 0.9;
  double b = 0.4;

  void validate() const;
};

struct ScoredDoc {
  std::string doc_id;
  double score = 0.0;

  bool operator==(const ScoredDoc&) const = default;
};

struct RetrievalResult {
  std::string qid;
  std::vector<ScoredDoc> ranked;  // non-increasing score, ties by doc_id
  std::string query_text_used;
};

class InvertedIndex {
 public:
  static constexpr std::uint32_t kFormatVersion = 1;

  struct Posting {
    std::uint32_t doc = 0;  // internal doc number
    std::uint32_t tf = 0;
  };

  // Throws kValidation on an empty corpus or a duplicate doc_id.
  static InvertedIndex build(std::vector<DocumentRecord> corpus,
                             const TokenizerOptions& opts = {});

  // Binary, self-describing, versioned. load() throws kValidation with a
  // "version mismatch" message when the file was written by another format.
  void save(const std::filesystem::path& path) const;
  static InvertedIndex load(const std::filesystem::path& path);

  std::size_t doc_count() const noexcept { return docs_.size(); }
  double avg_doc_length() const noexcept { return avg_doc_length_; }
  const TokenizerOptions& tokenizer() const noexcept { return tokenizer_; }

  std::size_t document_frequency(std::string_view term) const;
  std::uint32_t doc_length(std::string_view doc_id) const;
  const std::vector<Posting>* postings(std::string_view term) const;

  // Throws kLookup for an unknown id.
  const DocumentRecord& document(std::string_view doc_id) const;
  bool contains(std::string_view doc_id) const;
  const std::vector<DocumentRecord>& documents() const noexcept { return docs_; }

  double idf(std::string_view term) const;

  // Throws kLookup when doc_id is not indexed.
  double bm25_score(const Bm25Params& params, const std::vector<std::string>& query_terms,
                    std::string_view doc_id) const;

  // Top `top_n` documents with a positive match; fewer when fewer match.
  RetrievalResult retrieve(const Bm25Params& params, std::string_view query_text,
                           std::size_t top_n, std::string qid = {}) const;

 private:
  std::size_t doc_number(std::string_view doc_id) const;
  double term_weight(double idf, std::uint32_t tf, std::uint32_t doc_len,
                     const Bm25Params& params) const;

  std::vector<DocumentRecord> docs_;
  std::vector<std::uint32_t> doc_lengths_;
  std::unordered_map<std::string, std::uint32_t> doc_numbers_;
  std::unordered_map<std::string, std::uint32_t> term_ids_;
  std::vector<std::string> terms_;
  std::vector<std::vector<Posting>> postings_;
  double avg_doc_length_ = 0.0;
  TokenizerOptions tokenizer_;
};

}  // namespace grogu
