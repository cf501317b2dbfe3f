#pragma once

// Grounding-utility scoring against a live or replayed backend:
// greedy-generate with the context, teacher-force the same tokens without
// it, then reduce the two score lists to a UtilityScore.

#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "grogu/backend.hpp"
#include "grogu/metric.hpp"
#include "grogu/prompt.hpp"

namespace grogu {

struct ScoringConfig {
  PromptSpec prompt;
  KeyTokenConfig keys;
  UtilityMode mode = UtilityMode::kGroundedOnly;
};

struct ContextTrace {
  GenerationTrace trace;  // grounded generation + ungrounded teacher-forced scores
  std::string answer;     // detokenized grounded generation
};

class UtilityScorer {
 public:
  UtilityScorer(LanguageModel& model, ScoringConfig config);

  const ScoringConfig& config() const noexcept { return config_; }
  LanguageModel& model() noexcept { return model_; }

  // Throws kValidation when the grounded generation is empty.
  ContextTrace trace(const std::string& question, const std::vector<std::string>& history,
                     const GroundingContext& context);

  // Reduces a trace under `formulation`. Full mode generates (once per
  // question) and scores the ungrounded answer for the second term.
  UtilityScore utility(const ContextTrace& ct, Formulation formulation,
                       const std::string& question, const std::vector<std::string>& history);

  UtilityScore score(const std::string& question, const std::vector<std::string>& history,
                     const GroundingContext& context, Formulation formulation);

 private:
  double ungrounded_gamma(const std::string& question, const std::vector<std::string>& history,
                          Formulation formulation);

  LanguageModel& model_;
  ScoringConfig config_;
  std::mutex mu_;
  std::map<std::string, std::vector<TokenScore>> ungrounded_generations_;
};

}  // namespace grogu
