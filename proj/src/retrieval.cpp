#include "grogu/retrieval.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>

#include "grogu/error.hpp"

namespace grogu {

namespace {

constexpr std::array<std::string_view, 33> kStopwords = {
    "a",    "an",   "and",  "are",  "as",    "at",   "be",    "but",   "by",
    "for",  "if",   "in",   "into", "is",    "it",   "no",    "not",   "of",
    "on",   "or",   "such", "that", "the",   "their", "then", "there", "these",
    "they", "this", "to",   "was",  "will",  "with"};

bool word_byte(unsigned char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c >= 0x80;
}

constexpr char kMagic[8] = {'G', 'R', 'O', 'G', 'U', 'I', 'X', '\0'};

class Writer {
 public:
  explicit Writer(std::ofstream& out) : out_(out) {}
  void u32(std::uint32_t v) { out_.write(reinterpret_cast<const char*>(&v), sizeof v); }
  void f64(double v) { out_.write(reinterpret_cast<const char*>(&v), sizeof v); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }

 private:
  std::ofstream& out_;
};

class Reader {
 public:
  Reader(std::ifstream& in, std::string name) : in_(in), name_(std::move(name)) {}
  std::uint32_t u32() {
    std::uint32_t v = 0;
    read(&v, sizeof v);
    return v;
  }
  double f64() {
    double v = 0;
    read(&v, sizeof v);
    return v;
  }
  std::string str() {
    std::string s(u32(), '\0');
    read(s.data(), s.size());
    return s;
  }
  void read(void* dst, std::size_t n) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (!in_) fail(ErrorKind::kParse, "truncated index file " + name_);
  }

 private:
  std::ifstream& in_;
  std::string name_;
};

}  // namespace

bool is_stopword(std::string_view word) {
  return std::find(kStopwords.begin(), kStopwords.end(), word) != kStopwords.end();
}

std::vector<std::string> tokenize_text(std::string_view text, const TokenizerOptions& opts) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (cur.empty()) return;
    if (!(opts.stopwords && is_stopword(cur))) {
      out.push_back(opts.stem ? porter_stem(cur) : cur);
    }
    cur.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (word_byte(c)) {
      cur.push_back((c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : ch);
    } else {
      flush();
    }
  }
  flush();
  return out;
}

void Bm25Params::validate() const {
  if (!(k1 > 0.0)) fail(ErrorKind::kValidation, "BM25 k1 must be > 0");
  if (!(b >= 0.0 && b <= 1.0)) fail(ErrorKind::kValidation, "BM25 b must lie in [0, 1]");
}

InvertedIndex InvertedIndex::build(std::vector<DocumentRecord> corpus,
                                   const TokenizerOptions& opts) {
  if (corpus.empty()) fail(ErrorKind::kValidation, "empty corpus");
  InvertedIndex idx;
  idx.tokenizer_ = opts;
  idx.docs_ = std::move(corpus);
  idx.doc_lengths_.reserve(idx.docs_.size());
  std::uint64_t total = 0;
  std::map<std::uint32_t, std::uint32_t> tf;  // term id -> count, ordered for determinism
  for (std::size_t d = 0; d < idx.docs_.size(); ++d) {
    const auto& doc = idx.docs_[d];
    if (!idx.doc_numbers_.emplace(doc.doc_id, static_cast<std::uint32_t>(d)).second) {
      fail(ErrorKind::kValidation, "duplicate doc_id '" + doc.doc_id + "'");
    }
    tf.clear();
    const auto terms = tokenize_text(doc.contents, opts);
    for (const auto& t : terms) {
      auto [it, inserted] =
          idx.term_ids_.emplace(t, static_cast<std::uint32_t>(idx.terms_.size()));
      if (inserted) {
        idx.terms_.push_back(t);
        idx.postings_.emplace_back();
      }
      ++tf[it->second];
    }
    for (const auto& [term, count] : tf) {
      idx.postings_[term].push_back({static_cast<std::uint32_t>(d), count});
    }
    idx.doc_lengths_.push_back(static_cast<std::uint32_t>(terms.size()));
    total += terms.size();
  }
  idx.avg_doc_length_ = static_cast<double>(total) / static_cast<double>(idx.docs_.size());
  return idx;
}

void InvertedIndex::save(const std::filesystem::path& path) const {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::kIo, "cannot write " + path.string());
    out.write(kMagic, sizeof kMagic);
    Writer w(out);
    w.u32(kFormatVersion);
    w.u32(tokenizer_.stem ? 1 : 0);
    w.u32(tokenizer_.stopwords ? 1 : 0);
    w.u32(static_cast<std::uint32_t>(docs_.size()));
    for (std::size_t d = 0; d < docs_.size(); ++d) {
      w.str(docs_[d].doc_id);
      w.str(docs_[d].title);
      w.str(docs_[d].contents);
      w.u32(doc_lengths_[d]);
    }
    w.f64(avg_doc_length_);
    w.u32(static_cast<std::uint32_t>(terms_.size()));
    for (std::size_t t = 0; t < terms_.size(); ++t) {
      w.str(terms_[t]);
      w.u32(static_cast<std::uint32_t>(postings_[t].size()));
      for (const auto& p : postings_[t]) {
        w.u32(p.doc);
        w.u32(p.tf);
      }
    }
    if (!out) fail(ErrorKind::kIo, "short write to " + path.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(ErrorKind::kIo, "cannot rename into " + path.string());
}

InvertedIndex InvertedIndex::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    fail(ErrorKind::kMissingInput, "no such index: " + path.string());
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot open " + path.string());
  Reader r(in, path.string());
  char magic[sizeof kMagic];
  r.read(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    fail(ErrorKind::kParse, path.string() + " is not an index file");
  }
  const auto version = r.u32();
  if (version != kFormatVersion) {
    fail(ErrorKind::kValidation, "index version mismatch in " + path.string() + ": file has " +
                                     std::to_string(version) + ", expected " +
                                     std::to_string(kFormatVersion));
  }
  InvertedIndex idx;
  idx.tokenizer_.stem = r.u32() != 0;
  idx.tokenizer_.stopwords = r.u32() != 0;
  const auto n_docs = r.u32();
  idx.docs_.resize(n_docs);
  idx.doc_lengths_.resize(n_docs);
  for (std::uint32_t d = 0; d < n_docs; ++d) {
    idx.docs_[d].doc_id = r.str();
    idx.docs_[d].title = r.str();
    idx.docs_[d].contents = r.str();
    idx.doc_lengths_[d] = r.u32();
    idx.doc_numbers_.emplace(idx.docs_[d].doc_id, d);
  }
  idx.avg_doc_length_ = r.f64();
  const auto n_terms = r.u32();
  idx.terms_.resize(n_terms);
  idx.postings_.resize(n_terms);
  for (std::uint32_t t = 0; t < n_terms; ++t) {
    idx.terms_[t] = r.str();
    idx.term_ids_.emplace(idx.terms_[t], t);
    auto& plist = idx.postings_[t];
    plist.resize(r.u32());
    for (auto& p : plist) {
      p.doc = r.u32();
      p.tf = r.u32();
      if (p.doc >= n_docs) fail(ErrorKind::kParse, "corrupt posting in " + path.string());
    }
  }
  return idx;
}

std::size_t InvertedIndex::document_frequency(std::string_view term) const {
  const auto* p = postings(term);
  return p ? p->size() : 0;
}

const std::vector<InvertedIndex::Posting>* InvertedIndex::postings(std::string_view term) const {
  auto it = term_ids_.find(std::string(term));
  return it == term_ids_.end() ? nullptr : &postings_[it->second];
}

std::size_t InvertedIndex::doc_number(std::string_view doc_id) const {
  auto it = doc_numbers_.find(std::string(doc_id));
  if (it == doc_numbers_.end()) {
    fail(ErrorKind::kLookup, "unknown doc_id '" + std::string(doc_id) + "'");
  }
  return it->second;
}

std::uint32_t InvertedIndex::doc_length(std::string_view doc_id) const {
  return doc_lengths_[doc_number(doc_id)];
}

const DocumentRecord& InvertedIndex::document(std::string_view doc_id) const {
  return docs_[doc_number(doc_id)];
}

bool InvertedIndex::contains(std::string_view doc_id) const {
  return doc_numbers_.count(std::string(doc_id)) != 0;
}

double InvertedIndex::idf(std::string_view term) const {
  const double n = static_cast<double>(docs_.size());
  const double df = static_cast<double>(document_frequency(term));
  return std::log(1.0 + (n - df + 0.5) / (df + 0.5));
}

double InvertedIndex::term_weight(double idf, std::uint32_t tf, std::uint32_t doc_len,
                                  const Bm25Params& params) const {
  const double f = static_cast<double>(tf);
  const double norm =
      params.k1 * (1.0 - params.b + params.b * static_cast<double>(doc_len) / avg_doc_length_);
  return idf * f * (params.k1 + 1.0) / (f + norm);
}

double InvertedIndex::bm25_score(const Bm25Params& params,
                                 const std::vector<std::string>& query_terms,
                                 std::string_view doc_id) const {
  const auto d = doc_number(doc_id);
  double score = 0.0;
  for (const auto& term : query_terms) {
    const auto* plist = postings(term);
    if (!plist) continue;
    auto it = std::lower_bound(plist->begin(), plist->end(), d,
                               [](const Posting& p, std::size_t doc) { return p.doc < doc; });
    if (it == plist->end() || it->doc != d) continue;
    score += term_weight(idf(term), it->tf, doc_lengths_[d], params);
  }
  return score;
}

RetrievalResult InvertedIndex::retrieve(const Bm25Params& params, std::string_view query_text,
                                        std::size_t top_n, std::string qid) const {
  params.validate();
  if (top_n == 0) fail(ErrorKind::kValidation, "top_n must be >= 1");
  RetrievalResult result;
  result.qid = std::move(qid);
  result.query_text_used = std::string(query_text);

  const auto terms = tokenize_text(query_text, tokenizer_);
  std::vector<double> acc(docs_.size(), 0.0);
  std::vector<char> touched(docs_.size(), 0);
  std::vector<std::uint32_t> hits;
  for (const auto& term : terms) {
    const auto* plist = postings(term);
    if (!plist) continue;
    const double w = idf(term);
    for (const auto& p : *plist) {
      acc[p.doc] += term_weight(w, p.tf, doc_lengths_[p.doc], params);
      if (!touched[p.doc]) {
        touched[p.doc] = 1;
        hits.push_back(p.doc);
      }
    }
  }
  auto better = [&](std::uint32_t a, std::uint32_t b) {
    if (acc[a] != acc[b]) return acc[a] > acc[b];
    return docs_[a].doc_id < docs_[b].doc_id;
  };
  const auto keep = std::min(top_n, hits.size());
  std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(keep), hits.end(),
                    better);
  result.ranked.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) {
    result.ranked.push_back({docs_[hits[i]].doc_id, acc[hits[i]]});
  }
  return result;
}

}  // namespace grogu
