#pragma once

// Needle LM: an analytic language model whose next-token distributions have
// closed-form entropies.
//
// The model is told the gold answers for each question. When one of them
// appears verbatim within the first `window` word tokens of the grounding
// documents, the model copies it: each answer position (and the stop token
// after it) gets probability `peak`, with the rest spread uniformly over the
// other V-1 tokens. Everywhere else the distribution is uniform over V, and
// greedy decoding breaks the tie toward the lowest token id.

#include <cstddef>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "grogu/backend.hpp"
#include "grogu/corpus.hpp"

namespace grogu {

struct NeedleLmParams {
  // Word vocabulary; the stop token is appended after these, so V = size + 1.
  std::vector<std::string> words;
  double peak = 0.9;
  std::optional<std::size_t> window;  // visible document tokens; nullopt = unbounded

  // 99 words plus the stop token: V = 100.
  static std::vector<std::string> default_words();
  static NeedleLmParams defaults();

  void validate() const;
};

class NeedleLm final : public LanguageModel {
 public:
  static constexpr const char* kStopToken = "</s>";

  NeedleLm(ModelRef ref, NeedleLmParams params, const std::vector<QueryRecord>& answer_key);

  const ModelRef& ref() const override { return ref_; }
  const NeedleLmParams& params() const noexcept { return params_; }
  std::size_t vocab_size() const noexcept { return vocab_.size(); }

  // Token string for a vocabulary word (" word"), or the stop token.
  static std::string token_for(const std::string& word) { return " " + word; }

  double uniform_entropy() const;
  double peaked_entropy() const;

  // Answer word ids the model would copy for this prompt, if any is visible.
  std::optional<std::vector<std::size_t>> visible_answer(const Prompt& prompt) const;

  ScoredSequence greedy_generate(const Prompt& prompt, const ScoreOptions& opts = {}) override;
  ScoredSequence force_score(const Prompt& prompt, std::span<const std::string> forced,
                             const ScoreOptions& opts = {}) override;

 private:
  // Peaked token id at position i given the prefix, or nullopt for uniform.
  std::optional<std::size_t> peak_at(const std::optional<std::vector<std::size_t>>& answer,
                                     std::span<const std::size_t> prefix) const;
  std::size_t token_id(const std::string& token) const;
  TokenScore score(std::optional<std::size_t> peak, std::size_t chosen) const;
  TokenDistribution distribution(std::optional<std::size_t> peak) const;

  ModelRef ref_;
  NeedleLmParams params_;
  std::vector<std::string> vocab_;  // token strings; last is the stop token
  std::unordered_map<std::string, std::size_t> word_ids_;
  std::unordered_map<std::string, std::vector<std::vector<std::string>>> answers_;
  double log_peak_ = 0.0;
  double log_tail_ = 0.0;
  double log_uniform_ = 0.0;
};

}  // namespace grogu
