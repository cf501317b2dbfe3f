#include "grogu/synth.hpp"

#include <set>
#include <string>

#include "grogu/error.hpp"
#include "grogu/evaluation.hpp"
#include "grogu/needle_lm.hpp"

namespace grogu {

namespace {

constexpr std::size_t kAnswerWordsBegin = 1;  // skip "nothing"
constexpr std::size_t kAnswerWordsEnd = 50;
constexpr std::size_t kFillerWordsEnd = 99;

std::string join(const std::vector<std::string>& words) {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out.push_back(' ');
    out += w;
  }
  return out;
}

class Words {
 public:
  explicit Words(std::uint64_t seed) : rng_(seed), vocab_(NeedleLmParams::default_words()) {}

  std::string filler() {
    return vocab_[kAnswerWordsEnd + rng_.below(kFillerWordsEnd - kAnswerWordsEnd)];
  }
  std::vector<std::string> fillers(std::size_t n) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(filler());
    return out;
  }
  std::vector<std::string> fresh_answer() {
    const std::uint64_t span = kAnswerWordsEnd - kAnswerWordsBegin;
    while (true) {
      const auto a = kAnswerWordsBegin + rng_.below(span);
      const auto b = kAnswerWordsBegin + rng_.below(span);
      if (a == b) continue;
      std::vector<std::string> answer{vocab_[a], vocab_[b]};
      if (used_.insert(join(answer)).second) return answer;
    }
  }
  std::uint64_t below(std::uint64_t n) { return rng_.below(n); }

 private:
  SplitMix64 rng_;
  std::vector<std::string> vocab_;
  std::set<std::string> used_;
};

std::string topic(std::size_t q) { return "t" + std::to_string(q) + "a t" + std::to_string(q) + "b"; }

}  // namespace

void SynthConfig::validate() const {
  if (queries == 0) fail(ErrorKind::kValidation, "synth: need at least one query");
  if (queries > 2000) fail(ErrorKind::kValidation, "synth: at most 2000 queries (distinct answers)");
  if (gold_len < 4) fail(ErrorKind::kValidation, "synth: gold docs need at least 4 tokens");
  if (related_len < 3 || noise_len < 1) fail(ErrorKind::kValidation, "synth: documents too short");
}

SynthConfig gold_suite_config() {
  SynthConfig c;
  c.queries = 200;
  c.related_per_query = 3;
  c.noise_docs = 200;
  return c;
}

SynthConfig concordance_suite_config() {
  SynthConfig c;
  c.queries = 100;
  c.related_per_query = 4;
  c.noise_docs = 2000;
  c.gold_len = 12;
  c.related_len = 30;
  c.noise_len = 6;
  c.seed = 11;
  c.needle_window = 36;
  return c;
}

SynthConfig layout_suite_config() {
  SynthConfig c;
  c.queries = 60;
  c.related_per_query = 9;
  c.noise_docs = 60;
  c.seed = 13;
  c.needle_window = 60;
  return c;
}

SynthSuite make_synth_suite(const SynthConfig& config) {
  config.validate();
  Words words(config.seed);
  SynthSuite suite;
  for (std::size_t q = 0; q < config.queries; ++q) {
    const auto qid = "q" + std::to_string(q);
    const auto answer = words.fresh_answer();
    // topic (2) + filler, answer spliced at a seeded position after the topic
    auto body = words.fillers(config.gold_len - 4);
    const auto pos = static_cast<std::ptrdiff_t>(words.below(body.size() + 1));
    body.insert(body.begin() + pos, answer.begin(), answer.end());
    const auto gold_id = "gold-" + std::to_string(q);
    suite.corpus.push_back({gold_id, "Topic " + std::to_string(q), topic(q) + " " + join(body)});
    for (std::size_t r = 0; r < config.related_per_query; ++r) {
      suite.corpus.push_back({"rel-" + std::to_string(q) + "-" + std::to_string(r),
                              "Topic " + std::to_string(q),
                              topic(q) + " " + join(words.fillers(config.related_len - 2))});
    }
    suite.queries.push_back({qid, "what is " + topic(q), {}, {join(answer)}, gold_id});
  }
  for (std::size_t n = 0; n < config.noise_docs; ++n) {
    suite.corpus.push_back({"noise-" + std::to_string(n), "Misc", join(words.fillers(config.noise_len))});
  }
  return suite;
}

SynthPrefs make_pref_suite(std::size_t queries, std::uint64_t seed) {
  if (queries < 2) fail(ErrorKind::kValidation, "pref suite needs at least two queries");
  SynthConfig config;
  config.queries = queries;
  config.related_per_query = 3;
  config.noise_docs = 20;
  config.seed = seed;
  SynthPrefs prefs;
  prefs.suite = make_synth_suite(config);
  for (std::size_t q = 0; q < queries; ++q) {
    auto& query = prefs.suite.queries[q];
    query.question = "what is the answer for item " + std::to_string(q);
    query.history = {"tell me about " + topic(q), "that sounds interesting"};
    const auto other = (q + 1) % queries;
    RewriteSet set;
    set.qid = query.qid;
    set.conversation = query.history;
    set.question = query.question;
    set.rewrites = {topic(q) + " answer", query.question, topic(other), topic(q) + " answer"};
    set.dedup();
    prefs.rewrites.push_back(std::move(set));
  }
  return prefs;
}

}  // namespace grogu
