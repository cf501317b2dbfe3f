#pragma once

// Rewrite preference data: score each candidate rewrite by the grounding
// utility of the documents it retrieves, then emit SFT targets and
// gap-filtered DPO pairs.

#include <cstddef>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "grogu/error.hpp"
#include "grogu/metric.hpp"
#include "grogu/retrieval.hpp"
#include "grogu/scoring.hpp"

namespace grogu {

struct RewriteSet {
  std::string qid;
  std::vector<std::string> conversation;  // prior turns
  std::string question;                   // current turn
  std::vector<std::string> rewrites;      // deduplicated, first occurrence kept

  void dedup();
};

// {"qid", "conversation", "question", "rewrites"} per line; rewrites are
// deduplicated on load.
std::vector<RewriteSet> load_rewrites_jsonl(const std::filesystem::path& path);
void save_rewrites_jsonl(const std::filesystem::path& path, const std::vector<RewriteSet>& sets);

// What the generation prompt carries in its question slot.
enum class QuestionSlot { kOriginal, kRewrite, kConversation };
std::string_view question_slot_name(QuestionSlot s);
QuestionSlot parse_question_slot(std::string_view name);

// Append-only JSONL sidecar: {"key", "value", "timestamp"} per line.
class ScoreCache {
 public:
  explicit ScoreCache(std::filesystem::path path);

  std::optional<double> get(const std::string& key) const;
  void put(const std::string& key, double value);
  std::size_t size() const;

 private:
  std::filesystem::path path_;
  mutable std::mutex mu_;
  std::map<std::string, double> entries_;
};

struct RewriteScoreKey {
  std::string model_id;
  Formulation formulation = Formulation::kKeyEntropy;
  KeyTokenConfig keys;
  UtilityMode mode = UtilityMode::kGroundedOnly;
  std::string prompt_fingerprint;
  std::string question_text;
  std::string rewrite;
  std::vector<std::string> doc_ids;

  std::string hash() const;
};

struct RewriteScore {
  std::string rewrite;
  RetrievalResult retrieval;
  Formulation formulation = Formulation::kKeyEntropy;
  double utility = 0.0;
  bool empty_retrieval = false;
  bool from_cache = false;
};

struct RewriteScoringOptions {
  Formulation formulation = Formulation::kKeyEntropy;
  std::size_t top_n = 10;
  QuestionSlot question_slot = QuestionSlot::kOriginal;
  Bm25Params bm25;
};

RewriteScore score_rewrite(const std::string& rewrite, const RewriteSet& set,
                           const InvertedIndex& index, UtilityScorer& scorer,
                           const RewriteScoringOptions& opts, ScoreCache* cache = nullptr);

struct RewriteFailure {
  std::string rewrite;
  std::string error;
  std::optional<ErrorKind> kind;
};

struct SetScores {
  std::string qid;
  std::vector<RewriteScore> scores;  // rewrite order, failures omitted
  std::vector<RewriteFailure> failures;
};

// Scores every (set, rewrite) pair on up to `jobs` threads.
std::vector<SetScores> score_rewrite_sets(const std::vector<RewriteSet>& sets,
                                          const InvertedIndex& index, UtilityScorer& scorer,
                                          const RewriteScoringOptions& opts,
                                          ScoreCache* cache = nullptr, std::size_t jobs = 1);

struct SftRecord {
  std::string qid;
  std::string prompt;
  std::string target;
  double score = 0.0;

  bool operator==(const SftRecord&) const = default;
};

struct PreferencePair {
  std::string qid;
  std::string prompt;
  std::string chosen;
  std::string rejected;
  double chosen_score = 0.0;
  double rejected_score = 0.0;
  double gap = 0.0;

  bool operator==(const PreferencePair&) const = default;
};

struct DroppedQuery {
  std::string qid;
  std::string reason;
};

// Rewriter input rendered from the conversation.
std::string render_conversation(const RewriteSet& set);

// Score ties go to the lexicographically smallest rewrite.
std::vector<SftRecord> build_sft_records(const std::vector<RewriteSet>& sets,
                                         const std::vector<SetScores>& scores,
                                         std::vector<DroppedQuery>* dropped = nullptr);

// (argmax, argmin) per qid; max == min is skipped.
std::vector<PreferencePair> build_dpo_pairs(const std::vector<RewriteSet>& sets,
                                            const std::vector<SetScores>& scores,
                                            std::vector<DroppedQuery>* dropped = nullptr);

// Keeps the ceil(keep_fraction * N) largest gaps, ties at the cut by
// ascending qid; output sorted by qid.
std::vector<PreferencePair> filter_by_gap(const std::vector<PreferencePair>& pairs,
                                          double keep_fraction = 0.5);

std::string sft_jsonl(const std::vector<SftRecord>& records);
std::string dpo_jsonl(const std::vector<PreferencePair>& pairs);
void emit_sft_jsonl(const std::filesystem::path& path, const std::vector<SftRecord>& records);
void emit_dpo_jsonl(const std::filesystem::path& path, const std::vector<PreferencePair>& pairs);
std::vector<SftRecord> load_sft_jsonl(const std::filesystem::path& path);
std::vector<PreferencePair> load_dpo_jsonl(const std::filesystem::path& path);

}  // namespace grogu
