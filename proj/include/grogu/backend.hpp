#pragma once

// Language-model backends: the analytic Needle LM, trace replay/recording,
// and a completions-style HTTP client. All of them produce TokenScore lists;
// the metric code never sees which backend was used.

#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "grogu/metric.hpp"
#include "grogu/prompt.hpp"

namespace grogu {

enum class BackendKind { kTrace, kHttp, kNeedle };

std::string_view backend_kind_name(BackendKind k);
BackendKind parse_backend_kind(std::string_view name);

// Decoding is always greedy.
struct ModelRef {
  BackendKind backend_kind = BackendKind::kNeedle;
  std::string model_id = "needle";
  int max_new_tokens = 64;
};

struct ScoreOptions {
  // Ask the backend to attach per-position distributions. The Needle LM only
  // materializes them on request.
  bool with_distributions = false;
};

// Tokens with aligned scores, and distributions when requested/available.
struct ScoredSequence {
  std::vector<std::string> tokens;
  std::vector<TokenScore> scores;
  std::vector<TokenDistribution> distributions;  // empty or aligned with tokens
};

// Concatenation of token strings with surrounding whitespace trimmed. Tokens
// carry their own leading spaces, as BPE vocabularies do.
std::string detokenize(std::span<const std::string> tokens);

class LanguageModel {
 public:
  virtual ~LanguageModel() = default;

  virtual const ModelRef& ref() const = 0;

  // Argmax decoding until the stop token or max_new_tokens.
  virtual ScoredSequence greedy_generate(const Prompt& prompt, const ScoreOptions& opts = {}) = 0;

  // Teacher-forced scoring of `forced`; output aligns 1:1 with `forced`.
  virtual ScoredSequence force_score(const Prompt& prompt, std::span<const std::string> forced,
                                     const ScoreOptions& opts = {}) = 0;
};

}  // namespace grogu
