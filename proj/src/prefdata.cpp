#include "grogu/prefdata.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <set>

#include <json.hpp>

#include "grogu/error.hpp"
#include "grogu/hashing.hpp"
#include "grogu/io.hpp"
#include "grogu/worker_pool.hpp"

namespace grogu {

using ordered_json = nlohmann::ordered_json;

void RewriteSet::dedup() {
  std::set<std::string> seen;
  std::vector<std::string> kept;
  for (auto& r : rewrites) {
    if (seen.insert(r).second) kept.push_back(std::move(r));
  }
  rewrites = std::move(kept);
}

std::vector<RewriteSet> load_rewrites_jsonl(const std::filesystem::path& path) {
  std::vector<RewriteSet> out;
  std::set<std::string> qids;
  for_each_line(path, [&](std::string_view line, std::size_t n) {
    const auto where = path.string() + ":" + std::to_string(n) + ": ";
    RewriteSet set;
    try {
      const auto j = ordered_json::parse(line);
      set.qid = j.at("qid").get<std::string>();
      set.question = j.at("question").get<std::string>();
      if (j.contains("conversation")) set.conversation = j["conversation"].get<std::vector<std::string>>();
      set.rewrites = j.at("rewrites").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::kParse, where + e.what());
    }
    if (!qids.insert(set.qid).second) fail(ErrorKind::kValidation, where + "duplicate qid '" + set.qid + "'");
    set.dedup();
    if (set.rewrites.empty()) fail(ErrorKind::kValidation, where + "no rewrites for '" + set.qid + "'");
    out.push_back(std::move(set));
  });
  return out;
}

void save_rewrites_jsonl(const std::filesystem::path& path, const std::vector<RewriteSet>& sets) {
  std::string text;
  for (const auto& s : sets) {
    ordered_json j;
    j["qid"] = s.qid;
    j["conversation"] = s.conversation;
    j["question"] = s.question;
    j["rewrites"] = s.rewrites;
    text += j.dump() + "\n";
  }
  write_file_atomic(path, text);
}

std::string_view question_slot_name(QuestionSlot s) {
  switch (s) {
    case QuestionSlot::kOriginal: return "original";
    case QuestionSlot::kRewrite: return "rewrite";
    case QuestionSlot::kConversation: return "conversation";
  }
  return "unknown";
}

QuestionSlot parse_question_slot(std::string_view name) {
  if (name == "original") return QuestionSlot::kOriginal;
  if (name == "rewrite") return QuestionSlot::kRewrite;
  if (name == "conversation") return QuestionSlot::kConversation;
  fail(ErrorKind::kConfig,
       "unknown question slot '" + std::string(name) + "' (expected original|rewrite|conversation)");
}

// ---------------------------------------------------------------------------

ScoreCache::ScoreCache(std::filesystem::path path) : path_(std::move(path)) {
  if (!std::filesystem::exists(path_)) return;
  for_each_line(path_, [&](std::string_view line, std::size_t n) {
    try {
      const auto j = ordered_json::parse(line);
      entries_[j.at("key").get<std::string>()] = j.at("value").get<double>();
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::kParse, path_.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  });
}

std::optional<double> ScoreCache::get(const std::string& key) const {
  std::lock_guard lock(mu_);
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void ScoreCache::put(const std::string& key, double value) {
  std::lock_guard lock(mu_);
  if (!entries_.emplace(key, value).second) return;
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", &tm);
  ordered_json j;
  j["key"] = key;
  j["value"] = value;
  j["timestamp"] = stamp;
  std::ofstream out(path_, std::ios::app | std::ios::binary);
  if (!out) fail(ErrorKind::kIo, "cannot append to score cache " + path_.string());
  out << j.dump() << '\n';
}

std::size_t ScoreCache::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

std::string RewriteScoreKey::hash() const {
  char num[64];
  std::snprintf(num, sizeof num, "%.17g|%.17g", keys.alpha, keys.top_k_frac);
  std::string docs;
  for (const auto& d : doc_ids) {
    docs += d;
    docs.push_back('\n');
  }
  const std::string_view fields[] = {model_id,
                                     formulation_name(formulation),
                                     num,
                                     utility_mode_name(mode),
                                     prompt_fingerprint,
                                     question_text,
                                     rewrite,
                                     docs};
  return sha256_fields_hex(fields);
}

namespace {

std::string slot_question(const RewriteSet& set, const std::string& rewrite, QuestionSlot slot) {
  return slot == QuestionSlot::kRewrite ? rewrite : set.question;
}

const std::vector<std::string>& slot_history(const RewriteSet& set, QuestionSlot slot) {
  static const std::vector<std::string> kNone;
  return slot == QuestionSlot::kConversation ? set.conversation : kNone;
}

}  // namespace

RewriteScore score_rewrite(const std::string& rewrite, const RewriteSet& set,
                           const InvertedIndex& index, UtilityScorer& scorer,
                           const RewriteScoringOptions& opts, ScoreCache* cache) {
  RewriteScore rs;
  rs.rewrite = rewrite;
  rs.formulation = opts.formulation;
  rs.retrieval = index.retrieve(opts.bm25, rewrite, opts.top_n, set.qid);
  rs.empty_retrieval = rs.retrieval.ranked.empty();

  GroundingContext context;
  for (const auto& hit : rs.retrieval.ranked) context.documents.push_back(index.document(hit.doc_id));
  const auto question = slot_question(set, rewrite, opts.question_slot);
  const auto& history = slot_history(set, opts.question_slot);

  std::string key;
  if (cache) {
    RewriteScoreKey k{scorer.model().ref().model_id,
                      opts.formulation,
                      scorer.config().keys,
                      scorer.config().mode,
                      scorer.config().prompt.fingerprint(),
                      question,
                      rewrite,
                      context.doc_ids()};
    key = k.hash();
    if (auto hit = cache->get(key)) {
      rs.utility = *hit;
      rs.from_cache = true;
      return rs;
    }
  }
  rs.utility = scorer.score(question, history, context, opts.formulation).value;
  if (cache) cache->put(key, rs.utility);
  return rs;
}

std::vector<SetScores> score_rewrite_sets(const std::vector<RewriteSet>& sets,
                                          const InvertedIndex& index, UtilityScorer& scorer,
                                          const RewriteScoringOptions& opts, ScoreCache* cache,
                                          std::size_t jobs) {
  std::vector<std::pair<std::size_t, std::size_t>> work;
  for (std::size_t s = 0; s < sets.size(); ++s) {
    for (std::size_t r = 0; r < sets[s].rewrites.size(); ++r) work.emplace_back(s, r);
  }
  auto outcomes = parallel_map(work.size(), jobs, [&](std::size_t i) {
    const auto& set = sets[work[i].first];
    return score_rewrite(set.rewrites[work[i].second], set, index, scorer, opts, cache);
  });
  std::vector<SetScores> out(sets.size());
  for (std::size_t s = 0; s < sets.size(); ++s) out[s].qid = sets[s].qid;
  for (std::size_t i = 0; i < work.size(); ++i) {
    auto& dst = out[work[i].first];
    auto& o = outcomes[i];
    if (o.value) {
      dst.scores.push_back(std::move(*o.value));
    } else {
      dst.failures.push_back({sets[work[i].first].rewrites[work[i].second], o.error, o.error_kind});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

std::string render_conversation(const RewriteSet& set) {
  std::string out;
  for (std::size_t i = 0; i < set.conversation.size(); ++i) {
    out += "Turn " + std::to_string(i + 1) + ": " + set.conversation[i] + "\n";
  }
  out += "Question: " + set.question + "\nRewrite:";
  return out;
}

namespace {

struct Extremes {
  const RewriteScore* best = nullptr;
  const RewriteScore* worst = nullptr;
};

Extremes extremes(const std::vector<RewriteScore>& scores) {
  Extremes e;
  for (const auto& s : scores) {
    if (!e.best || s.utility > e.best->utility ||
        (s.utility == e.best->utility && s.rewrite < e.best->rewrite)) {
      e.best = &s;
    }
    if (!e.worst || s.utility < e.worst->utility ||
        (s.utility == e.worst->utility && s.rewrite < e.worst->rewrite)) {
      e.worst = &s;
    }
  }
  return e;
}

void check_aligned(const std::vector<RewriteSet>& sets, const std::vector<SetScores>& scores) {
  if (sets.size() != scores.size()) fail(ErrorKind::kStructural, "rewrite sets and scores differ in count");
  for (std::size_t i = 0; i < sets.size(); ++i) {
    if (sets[i].qid != scores[i].qid) {
      fail(ErrorKind::kStructural, "scores for '" + scores[i].qid + "' misaligned with set '" + sets[i].qid + "'");
    }
  }
}

}  // namespace

std::vector<SftRecord> build_sft_records(const std::vector<RewriteSet>& sets,
                                         const std::vector<SetScores>& scores,
                                         std::vector<DroppedQuery>* dropped) {
  check_aligned(sets, scores);
  std::vector<SftRecord> out;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    const auto e = extremes(scores[i].scores);
    if (!e.best) {
      if (dropped) dropped->push_back({sets[i].qid, "every rewrite failed to score"});
      continue;
    }
    out.push_back({sets[i].qid, render_conversation(sets[i]), e.best->rewrite, e.best->utility});
  }
  return out;
}

std::vector<PreferencePair> build_dpo_pairs(const std::vector<RewriteSet>& sets,
                                            const std::vector<SetScores>& scores,
                                            std::vector<DroppedQuery>* dropped) {
  check_aligned(sets, scores);
  std::vector<PreferencePair> out;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    const auto& qid = sets[i].qid;
    if (scores[i].scores.size() < 2) {
      if (dropped) dropped->push_back({qid, "fewer than two scored rewrites"});
      continue;
    }
    const auto e = extremes(scores[i].scores);
    if (e.best->utility == e.worst->utility) {
      if (dropped) dropped->push_back({qid, "zero utility gap"});
      continue;
    }
    out.push_back({qid, render_conversation(sets[i]), e.best->rewrite, e.worst->rewrite,
                   e.best->utility, e.worst->utility, e.best->utility - e.worst->utility});
  }
  return out;
}

std::vector<PreferencePair> filter_by_gap(const std::vector<PreferencePair>& pairs,
                                          double keep_fraction) {
  if (!(keep_fraction > 0.0 && keep_fraction <= 1.0)) {
    fail(ErrorKind::kValidation, "keep fraction must be in (0, 1]");
  }
  if (pairs.empty()) return {};
  const double raw = keep_fraction * static_cast<double>(pairs.size());
  const auto keep = std::min(pairs.size(), static_cast<std::size_t>(std::ceil(raw - 1e-9)));
  auto ranked = pairs;
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.gap != b.gap) return a.gap > b.gap;
    return a.qid < b.qid;
  });
  ranked.resize(keep);
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.qid < b.qid; });
  return ranked;
}

std::string sft_jsonl(const std::vector<SftRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    ordered_json j;
    j["prompt"] = r.prompt;
    j["target"] = r.target;
    j["score"] = r.score;
    j["qid"] = r.qid;
    out += j.dump() + "\n";
  }
  return out;
}

std::string dpo_jsonl(const std::vector<PreferencePair>& pairs) {
  std::string out;
  for (const auto& p : pairs) {
    ordered_json j;
    j["prompt"] = p.prompt;
    j["chosen"] = p.chosen;
    j["rejected"] = p.rejected;
    j["chosen_score"] = p.chosen_score;
    j["rejected_score"] = p.rejected_score;
    j["gap"] = p.gap;
    j["qid"] = p.qid;
    out += j.dump() + "\n";
  }
  return out;
}

void emit_sft_jsonl(const std::filesystem::path& path, const std::vector<SftRecord>& records) {
  write_file_atomic(path, sft_jsonl(records));
}

void emit_dpo_jsonl(const std::filesystem::path& path, const std::vector<PreferencePair>& pairs) {
  write_file_atomic(path, dpo_jsonl(pairs));
}

std::vector<SftRecord> load_sft_jsonl(const std::filesystem::path& path) {
  std::vector<SftRecord> out;
  for_each_line(path, [&](std::string_view line, std::size_t n) {
    try {
      const auto j = ordered_json::parse(line);
      out.push_back({j.at("qid").get<std::string>(), j.at("prompt").get<std::string>(),
                     j.at("target").get<std::string>(), j.at("score").get<double>()});
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::kParse, path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  });
  return out;
}

std::vector<PreferencePair> load_dpo_jsonl(const std::filesystem::path& path) {
  std::vector<PreferencePair> out;
  for_each_line(path, [&](std::string_view line, std::size_t n) {
    try {
      const auto j = ordered_json::parse(line);
      out.push_back({j.at("qid").get<std::string>(), j.at("prompt").get<std::string>(),
                     j.at("chosen").get<std::string>(), j.at("rejected").get<std::string>(),
                     j.at("chosen_score").get<double>(), j.at("rejected_score").get<double>(),
                     j.at("gap").get<double>()});
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::kParse, path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  });
  return out;
}

}  // namespace grogu
