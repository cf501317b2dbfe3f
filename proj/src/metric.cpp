#include "grogu/metric.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <sstream>

#include "grogu/error.hpp"

namespace grogu {

namespace {

// ceil(K*n) without 0.1*30 = 3.0000000000000004 rounding up to 4.
std::size_t fallback_count(double top_k_frac, std::size_t n) {
  const double raw = top_k_frac * static_cast<double>(n);
  const auto count = static_cast<std::size_t>(std::ceil(raw - 1e-9));
  return std::clamp<std::size_t>(count, 1, n);
}

const std::vector<TokenScore>& scores_for(const GenerationTrace& trace,
                                          Condition condition) {
  if (condition == Condition::kGrounded) return trace.grounded_scores;
  if (!trace.ungrounded_scores) {
    fail(ErrorKind::kValidation, "trace has no ungrounded scores");
  }
  return *trace.ungrounded_scores;
}

std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

double mean_entropy(std::span<const TokenScore> scores,
                    std::span<const std::size_t> indices) {
  if (indices.empty()) fail(ErrorKind::kValidation, "empty token selection");
  double sum = 0.0;
  for (std::size_t i : indices) sum += scores[i].entropy_nats;
  return sum / static_cast<double>(indices.size());
}

double mean_nll_of(std::span<const TokenScore> scores,
                   std::span<const std::size_t> indices) {
  if (indices.empty()) fail(ErrorKind::kValidation, "empty token selection");
  double sum = 0.0;
  for (std::size_t i : indices) {
    if (i >= scores.size()) {
      fail(ErrorKind::kStructural, "token index out of range");
    }
    sum -= scores[i].chosen_logprob;
  }
  return sum / static_cast<double>(indices.size());
}

std::vector<double> entropies_of(std::span<const TokenScore> scores) {
  std::vector<double> h;
  h.reserve(scores.size());
  for (const auto& s : scores) h.push_back(s.entropy_nats);
  return h;
}

}  // namespace

TokenDistribution TokenDistribution::make(std::vector<TokenProb> entries,
                                          double residual_mass,
                                          std::size_t vocab_size) {
  if (vocab_size == 0) fail(ErrorKind::kValidation, "vocab_size must be positive");
  if (!(residual_mass >= 0.0 && residual_mass < 1.0)) {
    fail(ErrorKind::kValidation, "residual_mass must lie in [0, 1)");
  }
  double mass = residual_mass;
  for (const auto& e : entries) {
    if (!(e.prob >= 0.0 && e.prob <= 1.0)) {
      fail(ErrorKind::kValidation, "probability outside [0, 1] for token '" + e.token + "'");
    }
    mass += e.prob;
  }
  if (std::abs(mass - 1.0) > kMassTolerance) {
    std::ostringstream msg;
    msg.precision(12);
    msg << "distribution not normalized: mass deficit " << (1.0 - mass);
    fail(ErrorKind::kValidation, msg.str());
  }
  std::erase_if(entries, [](const TokenProb& e) { return e.prob < kProbabilityFloor; });
  if (entries.size() > vocab_size) {
    fail(ErrorKind::kValidation, "more entries than vocab_size");
  }
  std::stable_sort(entries.begin(), entries.end(),
                   [](const TokenProb& a, const TokenProb& b) { return a.prob > b.prob; });
  TokenDistribution d;
  d.entries_ = std::move(entries);
  d.residual_ = residual_mass;
  d.vocab_size_ = vocab_size;
  return d;
}

TokenDistribution TokenDistribution::full(std::span<const double> probs) {
  std::vector<TokenProb> entries;
  entries.reserve(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) {
    entries.push_back({std::to_string(i), probs[i]});
  }
  return make(std::move(entries), 0.0, probs.size());
}

TokenDistribution TokenDistribution::truncated(std::size_t k) const {
  if (k >= entries_.size()) return *this;
  TokenDistribution d;
  d.vocab_size_ = vocab_size_;
  d.entries_.assign(entries_.begin(), entries_.begin() + static_cast<std::ptrdiff_t>(k));
  // Sum the dropped tail smallest-first so tiny entries are not absorbed.
  double tail = 0.0;
  for (auto it = entries_.rbegin(); it != entries_.rend() - static_cast<std::ptrdiff_t>(k); ++it) {
    tail += it->prob;
  }
  d.residual_ = residual_ + tail;
  return d;
}

double token_entropy(const TokenDistribution& dist) {
  if (!dist.is_full()) {
    fail(ErrorKind::kValidation,
         "token_entropy needs a full distribution; residual mass present, use entropy_bounds");
  }
  double h = 0.0;
  for (const auto& e : dist.entries()) h -= e.prob * std::log(e.prob);
  return std::max(h, 0.0);
}

EntropyBounds entropy_bounds(const TokenDistribution& dist) {
  if (dist.entries().empty()) fail(ErrorKind::kValidation, "entropy_bounds needs entries");
  double head = 0.0;
  for (const auto& e : dist.entries()) head -= e.prob * std::log(e.prob);
  const double r = dist.residual_mass();
  if (r == 0.0) {
    head = std::max(head, 0.0);
    return {head, head};
  }
  const std::size_t k = dist.entries().size();
  if (dist.vocab_size() <= k) {
    fail(ErrorKind::kValidation,
         "inconsistent distribution: residual mass with no unseen vocabulary");
  }
  const double unseen = static_cast<double>(dist.vocab_size() - k);
  const double lower = head - r * std::log(r);
  const double upper = head - r * std::log(r / unseen);
  return {std::max(lower, 0.0), std::max(upper, 0.0)};
}

TokenScore score_token(const TokenDistribution& dist, std::string token,
                       double chosen_logprob) {
  if (chosen_logprob > 0.0) fail(ErrorKind::kValidation, "chosen logprob must be <= 0");
  TokenScore s;
  s.token = std::move(token);
  s.chosen_logprob = chosen_logprob;
  if (dist.is_full()) {
    const double h = token_entropy(dist);
    s.entropy_nats = s.entropy_lower = s.entropy_upper = h;
  } else {
    const auto b = entropy_bounds(dist);
    s.entropy_lower = b.lower;
    s.entropy_upper = b.upper;
    s.entropy_nats = b.midpoint();
  }
  return s;
}

void GenerationTrace::validate() const {
  if (tokens.empty()) fail(ErrorKind::kStructural, "generation trace has no tokens");
  if (grounded_scores.size() != tokens.size()) {
    fail(ErrorKind::kStructural, "grounded score count does not match token count");
  }
  if (ungrounded_scores && ungrounded_scores->size() != tokens.size()) {
    fail(ErrorKind::kStructural, "ungrounded score count does not match token count");
  }
}

void KeyTokenConfig::validate() const {
  if (!(alpha >= 0.0)) fail(ErrorKind::kValidation, "alpha must be >= 0");
  if (!(top_k_frac > 0.0 && top_k_frac <= 1.0)) {
    fail(ErrorKind::kValidation, "top_k_frac must lie in (0, 1]");
  }
}

std::string_view formulation_name(Formulation f) {
  switch (f) {
    case Formulation::kPpl: return "ppl";
    case Formulation::kKeyPpl: return "keyppl";
    case Formulation::kEntropy: return "entropy";
    case Formulation::kKeyEntropy: return "keyentropy";
  }
  return "unknown";
}

Formulation parse_formulation(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  for (auto f : {Formulation::kPpl, Formulation::kKeyPpl, Formulation::kEntropy,
                 Formulation::kKeyEntropy}) {
    if (formulation_name(f) == lower) return f;
  }
  fail(ErrorKind::kConfig, "unknown metric '" + std::string(name) +
                               "' (expected keyentropy|entropy|keyppl|ppl)");
}

bool uses_key_tokens(Formulation f) {
  return f == Formulation::kKeyPpl || f == Formulation::kKeyEntropy;
}

std::string_view utility_mode_name(UtilityMode m) {
  return m == UtilityMode::kFull ? "full" : "grounded_only";
}

double mean_nll(const GenerationTrace& trace, Condition condition,
                std::span<const std::size_t> indices) {
  return mean_nll_of(scores_for(trace, condition), indices);
}

double mean_nll(const GenerationTrace& trace, Condition condition) {
  const auto& scores = scores_for(trace, condition);
  const auto idx = all_indices(scores.size());
  return mean_nll_of(scores, idx);
}

std::vector<std::size_t> top_fraction_indices(std::span<const double> values,
                                              double top_k_frac) {
  if (values.empty()) return {};
  auto order = all_indices(values.size());
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
  order.resize(fallback_count(top_k_frac, values.size()));
  std::sort(order.begin(), order.end());
  return order;
}

std::vector<std::size_t> select_key_tokens(const GenerationTrace& trace,
                                           const KeyTokenConfig& cfg) {
  trace.validate();
  const auto& grounded = trace.grounded_scores;
  const auto& ungrounded = scores_for(trace, Condition::kUngrounded);
  std::vector<std::size_t> keys;
  for (std::size_t i = 0; i < grounded.size(); ++i) {
    if (std::abs(grounded[i].entropy_nats - ungrounded[i].entropy_nats) > cfg.alpha) {
      keys.push_back(i);
    }
  }
  if (!keys.empty()) return keys;
  const auto h = entropies_of(grounded);
  return top_fraction_indices(h, cfg.top_k_frac);
}

std::vector<std::size_t> select_key_tokens_single(std::span<const TokenScore> scores,
                                                  const KeyTokenConfig& cfg) {
  std::vector<std::size_t> keys;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i].entropy_nats > cfg.alpha) keys.push_back(i);
  }
  if (!keys.empty()) return keys;
  const auto h = entropies_of(scores);
  return top_fraction_indices(h, cfg.top_k_frac);
}

namespace {

Confidence confidence_over(std::span<const TokenScore> scores, Formulation formulation,
                           std::vector<std::size_t> keys) {
  Confidence c;
  switch (formulation) {
    case Formulation::kEntropy:
      c.gamma = -mean_entropy(scores, all_indices(scores.size()));
      break;
    case Formulation::kPpl:
      c.gamma = -perplexity_from_nll(mean_nll_of(scores, all_indices(scores.size())));
      break;
    case Formulation::kKeyEntropy:
      c.gamma = -mean_entropy(scores, keys);
      c.key_token_indices = std::move(keys);
      break;
    case Formulation::kKeyPpl:
      c.gamma = -perplexity_from_nll(mean_nll_of(scores, keys));
      c.key_token_indices = std::move(keys);
      break;
  }
  return c;
}

}  // namespace

Confidence confidence(const GenerationTrace& trace, Formulation formulation,
                      const KeyTokenConfig& cfg) {
  trace.validate();
  std::vector<std::size_t> keys;
  if (uses_key_tokens(formulation)) {
    if (!trace.ungrounded_scores) {
      fail(ErrorKind::kValidation, std::string(formulation_name(formulation)) +
                                       " requires ungrounded teacher-forced scores");
    }
    keys = select_key_tokens(trace, cfg);
  }
  return confidence_over(trace.grounded_scores, formulation, std::move(keys));
}

Confidence ungrounded_confidence(std::span<const TokenScore> scores,
                                 Formulation formulation, const KeyTokenConfig& cfg) {
  if (scores.empty()) fail(ErrorKind::kStructural, "ungrounded generation has no tokens");
  std::vector<std::size_t> keys;
  if (uses_key_tokens(formulation)) keys = select_key_tokens_single(scores, cfg);
  return confidence_over(scores, formulation, std::move(keys));
}

UtilityScore grogu(double grounded_gamma, std::optional<double> ungrounded_gamma,
                   UtilityMode mode, Formulation formulation,
                   std::vector<std::size_t> key_token_indices) {
  UtilityScore u;
  u.formulation = formulation;
  u.mode = mode;
  u.grounded_confidence = grounded_gamma;
  u.key_token_indices = std::move(key_token_indices);
  if (mode == UtilityMode::kFull) {
    if (!ungrounded_gamma) {
      fail(ErrorKind::kValidation, "full-mode utility needs the ungrounded confidence");
    }
    u.ungrounded_confidence = ungrounded_gamma;
    u.value = grounded_gamma - *ungrounded_gamma;
  } else {
    u.value = grounded_gamma;
  }
  return u;
}

}  // namespace grogu
