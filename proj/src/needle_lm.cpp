#include "grogu/needle_lm.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "grogu/error.hpp"
#include "grogu/retrieval.hpp"

namespace grogu {

namespace {

std::string question_key(std::string_view question) {
  std::string key;
  for (const auto& t : tokenize_text(question)) {
    if (!key.empty()) key.push_back(' ');
    key += t;
  }
  return key;
}

}  // namespace

std::vector<std::string> NeedleLmParams::default_words() {
  return {
      "nothing", "edinburgh", "castle",  "balamory", "island",  "river",   "mountain",
      "forest",  "city",      "harbor",  "bridge",   "tower",   "garden",  "market",
      "village", "valley",    "desert",  "ocean",    "lake",    "station", "library",
      "museum",  "theater",   "school",  "church",   "palace",  "temple",  "airport",
      "canal",   "meadow",    "red",     "blue",     "green",   "yellow",  "purple",
      "orange",  "silver",    "golden",  "black",    "white",   "north",   "south",
      "east",    "west",      "central", "upper",    "lower",   "old",     "new",
      "great",   "john",      "mary",    "edie",     "mccredie", "archie", "josie",
      "penny",   "spencer",   "suzie",   "henry",    "alpha",   "beta",    "gamma",
      "delta",   "omega",     "sigma",   "kappa",    "lambda",  "theta",   "zeta",
      "one",     "two",       "three",   "four",     "five",    "six",     "seven",
      "eight",   "nine",      "ten",     "spring",   "summer",  "autumn",  "winter",
      "morning", "evening",   "night",   "dawn",     "dusk",    "noon",    "king",
      "queen",   "prince",    "duke",    "knight",   "bishop",  "captain", "doctor",
      "farmer"};
}

NeedleLmParams NeedleLmParams::defaults() {
  NeedleLmParams p;
  p.words = default_words();
  return p;
}

void NeedleLmParams::validate() const {
  if (words.empty()) fail(ErrorKind::kConfig, "Needle LM vocabulary is empty");
  std::set<std::string> seen;
  for (const auto& w : words) {
    if (w.empty() || tokenize_text(w) != std::vector<std::string>{w}) {
      fail(ErrorKind::kConfig, "Needle LM vocabulary word '" + w +
                                   "' is not a single lowercase alphanumeric token");
    }
    if (!seen.insert(w).second) fail(ErrorKind::kConfig, "duplicate vocabulary word '" + w + "'");
  }
  const double v = static_cast<double>(words.size() + 1);
  if (!(peak > 1.0 / v && peak < 1.0)) {
    fail(ErrorKind::kConfig, "Needle LM peak must lie in (1/V, 1)");
  }
  if (window && *window == 0) fail(ErrorKind::kConfig, "Needle LM window must be positive");
}

NeedleLm::NeedleLm(ModelRef ref, NeedleLmParams params,
                   const std::vector<QueryRecord>& answer_key)
    : ref_(std::move(ref)), params_(std::move(params)) {
  params_.validate();
  ref_.backend_kind = BackendKind::kNeedle;
  for (std::size_t i = 0; i < params_.words.size(); ++i) {
    vocab_.push_back(token_for(params_.words[i]));
    word_ids_.emplace(params_.words[i], i);
  }
  vocab_.emplace_back(kStopToken);
  const double v = static_cast<double>(vocab_.size());
  log_peak_ = std::log(params_.peak);
  log_tail_ = std::log((1.0 - params_.peak) / (v - 1.0));
  log_uniform_ = -std::log(v);
  for (const auto& q : answer_key) {
    auto& list = answers_[question_key(q.question)];
    for (const auto& a : q.gold_answers) list.push_back(tokenize_text(a));
  }
}

double NeedleLm::uniform_entropy() const { return std::log(static_cast<double>(vocab_.size())); }

double NeedleLm::peaked_entropy() const {
  const double lam = params_.peak;
  const double v = static_cast<double>(vocab_.size());
  return -lam * std::log(lam) - (1.0 - lam) * std::log((1.0 - lam) / (v - 1.0));
}

std::optional<std::vector<std::size_t>> NeedleLm::visible_answer(const Prompt& prompt) const {
  auto it = answers_.find(question_key(prompt.question));
  if (it == answers_.end() || prompt.documents.empty()) return std::nullopt;

  std::vector<std::string> visible;
  for (const auto& d : prompt.documents) {
    for (auto& t : tokenize_text(d.contents)) visible.push_back(std::move(t));
  }
  if (params_.window && visible.size() > *params_.window) visible.resize(*params_.window);

  std::optional<std::vector<std::size_t>> best;
  std::size_t best_start = visible.size();
  for (const auto& answer : it->second) {
    if (answer.empty()) continue;
    std::vector<std::size_t> ids;
    for (const auto& w : answer) {
      auto wit = word_ids_.find(w);
      if (wit == word_ids_.end()) break;
      ids.push_back(wit->second);
    }
    if (ids.size() != answer.size()) continue;  // not producible with this vocabulary
    for (std::size_t s = 0; s + answer.size() <= visible.size() && s < best_start; ++s) {
      if (std::equal(answer.begin(), answer.end(), visible.begin() + static_cast<std::ptrdiff_t>(s))) {
        best_start = s;
        best = std::move(ids);
        break;
      }
    }
  }
  return best;
}

std::optional<std::size_t> NeedleLm::peak_at(
    const std::optional<std::vector<std::size_t>>& answer,
    std::span<const std::size_t> prefix) const {
  if (!answer || prefix.size() > answer->size()) return std::nullopt;
  if (!std::equal(prefix.begin(), prefix.end(), answer->begin())) return std::nullopt;
  if (prefix.size() == answer->size()) return vocab_.size() - 1;  // stop
  return (*answer)[prefix.size()];
}

std::size_t NeedleLm::token_id(const std::string& token) const {
  if (token == kStopToken) return vocab_.size() - 1;
  if (token.size() > 1 && token.front() == ' ') {
    auto it = word_ids_.find(token.substr(1));
    if (it != word_ids_.end()) return it->second;
  }
  fail(ErrorKind::kValidation, "token '" + token + "' is not in the Needle LM vocabulary");
}

TokenScore NeedleLm::score(std::optional<std::size_t> peak, std::size_t chosen) const {
  TokenScore s;
  s.token = vocab_[chosen];
  if (peak) {
    s.chosen_logprob = (chosen == *peak) ? log_peak_ : log_tail_;
    s.entropy_nats = peaked_entropy();
  } else {
    s.chosen_logprob = log_uniform_;
    s.entropy_nats = uniform_entropy();
  }
  s.entropy_lower = s.entropy_upper = s.entropy_nats;
  return s;
}

TokenDistribution NeedleLm::distribution(std::optional<std::size_t> peak) const {
  const double v = static_cast<double>(vocab_.size());
  const double tail = peak ? (1.0 - params_.peak) / (v - 1.0) : 1.0 / v;
  std::vector<TokenProb> entries;
  entries.reserve(vocab_.size());
  for (std::size_t i = 0; i < vocab_.size(); ++i) {
    entries.push_back({vocab_[i], (peak && *peak == i) ? params_.peak : tail});
  }
  return TokenDistribution::make(std::move(entries), 0.0, vocab_.size());
}

ScoredSequence NeedleLm::greedy_generate(const Prompt& prompt, const ScoreOptions& opts) {
  const auto answer = visible_answer(prompt);
  ScoredSequence out;
  std::vector<std::size_t> prefix;
  const std::size_t stop = vocab_.size() - 1;
  for (int step = 0; step < ref_.max_new_tokens; ++step) {
    const auto peak = peak_at(answer, prefix);
    const std::size_t chosen = peak ? *peak : 0;  // uniform tie -> lowest id
    if (chosen == stop) break;
    out.tokens.push_back(vocab_[chosen]);
    out.scores.push_back(score(peak, chosen));
    if (opts.with_distributions) out.distributions.push_back(distribution(peak));
    prefix.push_back(chosen);
  }
  return out;
}

ScoredSequence NeedleLm::force_score(const Prompt& prompt, std::span<const std::string> forced,
                                     const ScoreOptions& opts) {
  if (forced.empty()) fail(ErrorKind::kValidation, "force_score needs at least one token");
  const auto answer = visible_answer(prompt);
  ScoredSequence out;
  std::vector<std::size_t> prefix;
  prefix.reserve(forced.size());
  for (const auto& tok : forced) {
    const auto id = token_id(tok);
    const auto peak = peak_at(answer, prefix);
    out.tokens.push_back(tok);
    out.scores.push_back(score(peak, id));
    if (opts.with_distributions) out.distributions.push_back(distribution(peak));
    prefix.push_back(id);
  }
  return out;
}

}  // namespace grogu
