#pragma once

// Property tests for grounding utility (gold identification, concordance
// with answer correctness, layout selection), plus the statistics and
// retrieval/overlap metrics they report.

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "grogu/corpus.hpp"
#include "grogu/error.hpp"
#include "grogu/metric.hpp"
#include "grogu/prompt.hpp"
#include "grogu/retrieval.hpp"
#include "grogu/scoring.hpp"

namespace grogu {

// ---------------------------------------------------------------------------
// Text normalization and answer matching

// Lowercase, delete ASCII punctuation, collapse whitespace.
std::string normalize_text(std::string_view text);
// normalize_text plus removal of the articles a/an/the.
std::string normalize_answer(std::string_view text);

// True iff some normalized gold answer is a substring of the normalized
// prediction. Empty golds never match.
bool answer_correct(std::string_view prediction, const std::vector<std::string>& gold_answers);

bool contains_any_answer(std::string_view text, const std::vector<std::string>& gold_answers);

struct Overlap {
  double em = 0.0;
  double f1 = 0.0;
  double precision = 0.0;
  double recall = 0.0;
};

// Token-level EM/P/R/F1 against each gold, maximized per metric.
Overlap token_overlap(std::string_view prediction, const std::vector<std::string>& gold_answers);
Overlap mean_overlap(const std::vector<Overlap>& per_query);

// ---------------------------------------------------------------------------
// Statistics

struct SignTestResult {
  std::size_t wins = 0;
  std::size_t losses = 0;
  std::size_t ties = 0;
  double p_two_sided = 1.0;
};

// Exact two-sided binomial sign test; ties are reported but excluded.
SignTestResult sign_test(std::size_t wins, std::size_t losses, std::size_t ties = 0);

enum class TiePolicy { kDiscordant, kSplit };

struct ConcordanceCase {
  std::string qid;
  bool correct_a = false;  // context "w/ retr"
  bool correct_b = false;  // context "w/ rand"
  double utility_a = 0.0;
  double utility_b = 0.0;

  // Exactly one of correct_a / correct_b must hold.
  void validate() const;
};

struct ConcordanceResult {
  double concordant = 0.0;
  double discordant = 0.0;
  std::size_t ties = 0;
  double tau = 0.0;
};

// tau = (C - D) / (C + D). Throws kValidation when C + D = 0.
ConcordanceResult concordance_tau(const std::vector<ConcordanceCase>& cases,
                                  TiePolicy ties = TiePolicy::kDiscordant);

struct ClassifierResult {
  std::size_t n = 0;
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  double accuracy = 0.0;
  std::optional<double> f1;        // positive class: context b is correct
  std::optional<double> macro_f1;  // mean over both classes
};

// Predicts that the higher-utility context is the correct one; a tie
// predicts context a. F1 is undefined when every prediction is one class.
ClassifierResult utility_classifier_eval(const std::vector<ConcordanceCase>& cases);

double f1_from_counts(std::size_t tp, std::size_t fp, std::size_t fn);

// ---------------------------------------------------------------------------
// Retrieval metrics

// Mean of 1/rank of the gold doc (0 when absent).
double mrr(const std::vector<RetrievalResult>& runs, const std::vector<std::string>& gold_doc_ids);
// Fraction of runs with the gold doc in the top k.
double recall_at_k(const std::vector<RetrievalResult>& runs,
                   const std::vector<std::string>& gold_doc_ids, std::size_t k);

// ---------------------------------------------------------------------------
// Seeded sampling (portable: does not depend on the standard library's
// distribution implementations)

class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next();
  // Uniform in [0, n) by rejection.
  std::uint64_t below(std::uint64_t n);

 private:
  std::uint64_t state_;
};

std::uint64_t seed_for(std::uint64_t seed, std::string_view salt);

// ---------------------------------------------------------------------------
// Gold identification

struct GoldTestCase {
  QueryRecord query;
  DocumentRecord gold_doc;
  DocumentRecord distractor_doc;
  DocumentRecord random_doc;
};

struct SkippedCase {
  std::string qid;
  std::string reason;
  std::optional<ErrorKind> kind;  // set for backend failures
};

// Highest-ranked document (other than `exclude_doc_id`) containing none of
// the gold answers; nullopt means the case must be skipped.
std::optional<DocumentRecord> pick_distractor(const RetrievalResult& retrieval,
                                              const InvertedIndex& index,
                                              const std::vector<std::string>& gold_answers,
                                              std::string_view exclude_doc_id = {});

// Uniform over the corpus excluding `exclude_doc_id`.
DocumentRecord pick_random_document(const InvertedIndex& index, std::string_view exclude_doc_id,
                                    SplitMix64& rng);

struct GoldCaseSet {
  std::vector<GoldTestCase> cases;
  std::vector<SkippedCase> skipped;
};

GoldCaseSet build_gold_cases(const std::vector<QueryRecord>& queries, const InvertedIndex& index,
                             const Bm25Params& bm25, std::size_t search_depth,
                             std::uint64_t seed);

struct WinTally {
  std::size_t wins = 0, losses = 0, ties = 0;

  double win_rate() const;  // percent, ties count as non-wins
  SignTestResult sign() const { return sign_test(wins, losses, ties); }
};

struct GoldCaseScores {
  std::string qid;
  Formulation formulation = Formulation::kKeyEntropy;
  double gold = 0.0, distractor = 0.0, random = 0.0;
};

struct FormulationWinRates {
  Formulation formulation = Formulation::kKeyEntropy;
  WinTally vs_distractor;
  WinTally vs_random;
};

struct GoldWinReport {
  std::size_t evaluated = 0;
  std::vector<FormulationWinRates> rates;
  std::vector<GoldCaseScores> table;
  std::vector<SkippedCase> skipped;
  // Paired KeyEntropy vs Entropy: wins where only KeyEntropy ranks gold first.
  std::optional<SignTestResult> key_vs_plain_distractor;
  std::optional<SignTestResult> key_vs_plain_random;

  const FormulationWinRates* find(Formulation f) const;
};

GoldWinReport gold_win_rates(const std::vector<GoldTestCase>& cases,
                             const std::vector<Formulation>& formulations,
                             UtilityScorer& scorer, std::size_t jobs = 1);

// ---------------------------------------------------------------------------
// Concordance with answer correctness

struct ConcordanceContexts {
  QueryRecord query;
  GroundingContext with_retrieved;  // gold + top non-gold retrieved
  GroundingContext with_random;     // gold + random documents
};

// `noise_docs` non-gold documents per context; gold goes to a seeded random
// slot in each context independently.
std::vector<ConcordanceContexts> build_concordance_contexts(
    const std::vector<QueryRecord>& queries, const InvertedIndex& index, const Bm25Params& bm25,
    std::size_t noise_docs, std::uint64_t seed, std::vector<SkippedCase>* skipped = nullptr);

// Mean BM25 score of the context documents for the question.
double relevance_utility(const InvertedIndex& index, const Bm25Params& bm25,
                         std::string_view question, const GroundingContext& context);

struct ConcordanceRow {
  std::string qid;
  bool correct_retr = false, correct_rand = false;
  std::string answer_retr, answer_rand;
  std::vector<double> utility_retr, utility_rand;  // per formulation, then relevance
};

struct FormulationConcordance {
  std::string metric;  // formulation name or "relevance"
  ConcordanceResult tau;
  ClassifierResult classifier;
};

struct ConcordanceReport {
  std::size_t total = 0;
  std::size_t retr_correct = 0, rand_correct = 0;
  std::size_t retr_wins = 0, rand_wins = 0, ties = 0;  // by correctness
  std::vector<FormulationConcordance> metrics;
  std::vector<ConcordanceRow> table;  // only cases with exactly one correct context
  std::vector<SkippedCase> skipped;
  std::optional<std::string> tau_error;  // set when no case qualified
};

ConcordanceReport concordance_eval(const std::vector<ConcordanceContexts>& contexts,
                                   const std::vector<Formulation>& formulations,
                                   UtilityScorer& scorer, const InvertedIndex* index,
                                   const Bm25Params& bm25, TiePolicy ties = TiePolicy::kDiscordant,
                                   std::size_t jobs = 1);

// ---------------------------------------------------------------------------
// Layout selection

inline constexpr std::array<std::size_t, 3> kLayoutGoldSlots = {0, 4, 9};

struct LayoutCase {
  QueryRecord query;
  std::array<GroundingContext, 3> variants;  // gold at slots 0, 4, 9
};

// Throws kStructural unless exactly nine other documents are given.
LayoutCase make_layout_variants(const QueryRecord& query, const DocumentRecord& gold,
                                const std::vector<DocumentRecord>& nine_docs);

std::vector<LayoutCase> build_layout_cases(const std::vector<QueryRecord>& queries,
                                           const InvertedIndex& index, const Bm25Params& bm25,
                                           std::vector<SkippedCase>* skipped = nullptr);

struct LayoutAccuracy {
  double own_i = 0.0;    // LM_i(D_i)
  double cross_i = 0.0;  // LM_i(D_j)
  double own_j = 0.0;    // LM_j(D_j)
  double cross_j = 0.0;  // LM_j(D_i)
  double random_i = 0.0; // LM_i(D_rand)
  double random_j = 0.0; // LM_j(D_rand)
};

struct LayoutRow {
  std::string qid;
  std::array<double, 3> utility_i{}, utility_j{};
  std::array<bool, 3> correct_i{}, correct_j{};
  std::size_t pick_i = 0, pick_j = 0, pick_random = 0;
};

struct LayoutReport {
  LayoutAccuracy accuracy;  // percentages
  std::vector<LayoutRow> table;
  std::vector<SkippedCase> skipped;
};

// Utility ties across variants resolve to the lowest gold slot.
LayoutReport layout_selection_eval(UtilityScorer& scorer_i, UtilityScorer& scorer_j,
                                   const std::vector<LayoutCase>& cases, Formulation formulation,
                                   std::uint64_t seed, std::size_t jobs = 1);

}  // namespace grogu
