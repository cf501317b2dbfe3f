#include "grogu/scoring.hpp"

#include "grogu/error.hpp"

namespace grogu {

UtilityScorer::UtilityScorer(LanguageModel& model, ScoringConfig config)
    : model_(model), config_(std::move(config)) {
  config_.prompt.validate();
  config_.keys.validate();
}

ContextTrace UtilityScorer::trace(const std::string& question,
                                  const std::vector<std::string>& history,
                                  const GroundingContext& context) {
  const auto grounded_prompt = make_prompt(config_.prompt, question, history, &context);
  auto generated = model_.greedy_generate(grounded_prompt);
  if (generated.tokens.empty()) {
    fail(ErrorKind::kValidation, "grounded generation is empty");
  }
  const auto ungrounded_prompt = make_prompt(config_.prompt, question, history, nullptr);
  auto forced = model_.force_score(ungrounded_prompt, generated.tokens);
  if (forced.scores.size() != generated.tokens.size()) {
    fail(ErrorKind::kStructural, "teacher-forced scores do not align with the generation");
  }
  ContextTrace ct;
  ct.answer = detokenize(generated.tokens);
  ct.trace.tokens = std::move(generated.tokens);
  ct.trace.grounded_scores = std::move(generated.scores);
  ct.trace.ungrounded_scores = std::move(forced.scores);
  ct.trace.model_ref = model_.ref().model_id;
  ct.trace.validate();
  return ct;
}

double UtilityScorer::ungrounded_gamma(const std::string& question,
                                       const std::vector<std::string>& history,
                                       Formulation formulation) {
  const auto prompt = make_prompt(config_.prompt, question, history, nullptr);
  std::vector<TokenScore> scores;
  {
    std::lock_guard lock(mu_);
    if (auto it = ungrounded_generations_.find(prompt.text); it != ungrounded_generations_.end()) {
      scores = it->second;
    }
  }
  if (scores.empty()) {
    scores = model_.greedy_generate(prompt).scores;
    if (scores.empty()) fail(ErrorKind::kValidation, "ungrounded generation is empty");
    std::lock_guard lock(mu_);
    ungrounded_generations_.emplace(prompt.text, scores);
  }
  return ungrounded_confidence(scores, formulation, config_.keys).gamma;
}

UtilityScore UtilityScorer::utility(const ContextTrace& ct, Formulation formulation,
                                    const std::string& question,
                                    const std::vector<std::string>& history) {
  auto grounded = confidence(ct.trace, formulation, config_.keys);
  std::optional<double> ungrounded;
  if (config_.mode == UtilityMode::kFull) {
    ungrounded = ungrounded_gamma(question, history, formulation);
  }
  return grogu(grounded.gamma, ungrounded, config_.mode, formulation,
               std::move(grounded.key_token_indices));
}

UtilityScore UtilityScorer::score(const std::string& question,
                                  const std::vector<std::string>& history,
                                  const GroundingContext& context, Formulation formulation) {
  return utility(trace(question, history, context), formulation, question, history);
}

}  // namespace grogu
