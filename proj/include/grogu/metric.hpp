#pragma once

// Token-level confidence and the grounding-utility difference.
//
// Everything in this header is a pure function of its arguments. Natural
// logarithms are used throughout.

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace grogu {

// Probabilities below this are dropped before any entropy computation.
inline constexpr double kProbabilityFloor = 1e-12;
// Tolerance on total mass (head + residual) of a distribution.
inline constexpr double kMassTolerance = 1e-6;

struct TokenProb {
  std::string token;
  double prob = 0.0;
};

// Next-token distribution: either the full support, or a top-k head plus the
// residual mass of the unseen tail.
class TokenDistribution {
 public:
  TokenDistribution() = default;

  // Validates normalization, drops entries below kProbabilityFloor, and
  // sorts entries by descending probability (stable on token text).
  static TokenDistribution make(std::vector<TokenProb> entries,
                                double residual_mass, std::size_t vocab_size);

  // Convenience for a full distribution given as raw probabilities; tokens
  // are named by their index.
  static TokenDistribution full(std::span<const double> probs);

  // Keeps the `k` most probable entries and folds the rest into the
  // residual.
  TokenDistribution truncated(std::size_t k) const;

  const std::vector<TokenProb>& entries() const noexcept { return entries_; }
  double residual_mass() const noexcept { return residual_; }
  std::size_t vocab_size() const noexcept { return vocab_size_; }
  bool is_full() const noexcept { return residual_ == 0.0; }

 private:
  std::vector<TokenProb> entries_;
  double residual_ = 0.0;
  std::size_t vocab_size_ = 0;
};

struct EntropyBounds {
  double lower = 0.0;
  double upper = 0.0;

  double midpoint() const noexcept { return 0.5 * (lower + upper); }
};

// -sum p ln p over a full distribution. Throws kValidation when the
// distribution carries residual mass; use entropy_bounds() for those.
double token_entropy(const TokenDistribution& dist);

// Lower bound places the residual on a single token; upper bound spreads it
// uniformly over the V-k unseen tokens. Both collapse to the exact entropy
// when the residual is zero.
EntropyBounds entropy_bounds(const TokenDistribution& dist);

struct TokenScore {
  std::string token;
  double chosen_logprob = 0.0;  // ln p(token), <= 0
  double entropy_nats = 0.0;    // point estimate
  double entropy_lower = 0.0;
  double entropy_upper = 0.0;
};

// Scores a realized token under `dist`. Truncated distributions use the
// bounds midpoint as the point estimate.
TokenScore score_token(const TokenDistribution& dist, std::string token,
                       double chosen_logprob);

struct GenerationTrace {
  std::vector<std::string> tokens;
  std::vector<TokenScore> grounded_scores;
  std::optional<std::vector<TokenScore>> ungrounded_scores;
  std::string model_ref;

  // Throws kStructural when lengths disagree or the trace is empty.
  void validate() const;
};

struct KeyTokenConfig {
  double alpha = 0.05;       // entropy-change threshold, nats
  double top_k_frac = 0.1;   // fallback fraction

  void validate() const;
};

enum class Formulation { kPpl, kKeyPpl, kEntropy, kKeyEntropy };

std::string_view formulation_name(Formulation f);
// Accepts "ppl", "keyppl", "entropy", "keyentropy" (case-insensitive).
Formulation parse_formulation(std::string_view name);
bool uses_key_tokens(Formulation f);

enum class Condition { kGrounded, kUngrounded };
enum class UtilityMode { kFull, kGroundedOnly };

std::string_view utility_mode_name(UtilityMode m);

// Mean of -chosen_logprob over `indices`. The two-argument overload uses
// every token. Throws kValidation on an empty selection.
double mean_nll(const GenerationTrace& trace, Condition condition,
                std::span<const std::size_t> indices);
double mean_nll(const GenerationTrace& trace, Condition condition);
inline double perplexity_from_nll(double nll) { return std::exp(nll); }

// Fallback rule: the max(1, ceil(K*n)) highest values, ties to the lower
// index. Returned ascending.
std::vector<std::size_t> top_fraction_indices(std::span<const double> values,
                                              double top_k_frac);

// Grounded path: |H_g(i) - H_u(i)| > alpha, else fallback on H_g.
std::vector<std::size_t> select_key_tokens(const GenerationTrace& trace,
                                           const KeyTokenConfig& cfg);

// Single-condition path used for an ungrounded generation: H(i) > alpha,
// else fallback on H.
std::vector<std::size_t> select_key_tokens_single(
    std::span<const TokenScore> scores, const KeyTokenConfig& cfg);

struct Confidence {
  double gamma = 0.0;
  std::vector<std::size_t> key_token_indices;  // empty for non-key formulations
};

// Confidence of the grounded generation. Key formulations need both score
// lists.
Confidence confidence(const GenerationTrace& trace, Formulation formulation,
                      const KeyTokenConfig& cfg);

// Confidence of an ungrounded generation scored on its own (single list).
Confidence ungrounded_confidence(std::span<const TokenScore> scores,
                                 Formulation formulation,
                                 const KeyTokenConfig& cfg);

struct UtilityScore {
  double value = 0.0;
  Formulation formulation = Formulation::kKeyEntropy;
  double grounded_confidence = 0.0;
  std::optional<double> ungrounded_confidence;
  UtilityMode mode = UtilityMode::kGroundedOnly;
  std::vector<std::size_t> key_token_indices;
};

UtilityScore grogu(double grounded_gamma, std::optional<double> ungrounded_gamma,
                   UtilityMode mode, Formulation formulation = Formulation::kKeyEntropy,
                   std::vector<std::size_t> key_token_indices = {});

}  // namespace grogu
