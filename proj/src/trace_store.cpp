#include "grogu/trace_store.hpp"

#include <cmath>
#include <fstream>
#include <vector>

#include <json.hpp>

#include "grogu/error.hpp"
#include "grogu/hashing.hpp"
#include "grogu/io.hpp"

namespace grogu {

using ordered_json = nlohmann::ordered_json;

namespace {

bool same_payload(const TraceRow& a, const TraceRow& b) {
  if (a.model != b.model || a.prompt_sha256 != b.prompt_sha256 || a.tokens != b.tokens ||
      a.vocab_size != b.vocab_size || a.scores.size() != b.scores.size()) {
    return false;
  }
  for (std::size_t i = 0; i < a.scores.size(); ++i) {
    const auto& x = a.scores[i];
    const auto& y = b.scores[i];
    if (x.lp != y.lp || x.residual != y.residual || x.top != y.top) return false;
  }
  return true;
}

}  // namespace

std::string TraceRow::to_json_line() const {
  ordered_json row;
  row["key"] = key;
  row["model"] = model;
  row["prompt_sha256"] = prompt_sha256;
  row["tokens"] = tokens;
  auto scores_json = ordered_json::array();
  for (const auto& s : scores) {
    ordered_json entry;
    entry["lp"] = s.lp;
    auto top_json = ordered_json::array();
    for (const auto& [tok, lp] : s.top) top_json.push_back(ordered_json::array({tok, lp}));
    entry["top"] = std::move(top_json);
    entry["residual"] = s.residual;
    scores_json.push_back(std::move(entry));
  }
  row["scores"] = std::move(scores_json);
  row["vocab_size"] = vocab_size;
  return row.dump();
}

TraceRow TraceRow::from_json_line(std::string_view line, std::size_t line_number) {
  const auto where = "trace line " + std::to_string(line_number) + ": ";
  try {
    const auto j = ordered_json::parse(line);
    TraceRow row;
    row.key = j.at("key").get<std::string>();
    row.model = j.at("model").get<std::string>();
    row.prompt_sha256 = j.at("prompt_sha256").get<std::string>();
    row.tokens = j.at("tokens").get<std::vector<std::string>>();
    for (const auto& s : j.at("scores")) {
      TraceScoreRow sr;
      sr.lp = s.at("lp").get<double>();
      for (const auto& pair : s.at("top")) {
        if (!pair.is_array() || pair.size() != 2) {
          fail(ErrorKind::kParse, where + "top entries must be [token, logprob] pairs");
        }
        sr.top.emplace_back(pair[0].get<std::string>(), pair[1].get<double>());
      }
      sr.residual = s.at("residual").get<double>();
      row.scores.push_back(std::move(sr));
    }
    row.vocab_size = j.at("vocab_size").get<std::size_t>();
    if (!row.tokens.empty() && row.scores.size() != row.tokens.size()) {
      fail(ErrorKind::kParse, where + "scores and tokens differ in length");
    }
    return row;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kParse, where + e.what());
  }
}

ScoredSequence TraceRow::to_sequence() const {
  ScoredSequence seq;
  seq.tokens = tokens;
  seq.scores.reserve(scores.size());
  seq.distributions.reserve(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    std::vector<TokenProb> entries;
    entries.reserve(scores[i].top.size());
    for (const auto& [tok, lp] : scores[i].top) entries.push_back({tok, std::exp(lp)});
    auto dist = TokenDistribution::make(std::move(entries), scores[i].residual, vocab_size);
    seq.scores.push_back(score_token(dist, tokens[i], scores[i].lp));
    seq.distributions.push_back(std::move(dist));
  }
  return seq;
}

std::string trace_key(std::string_view model_id, std::string_view prompt,
                      std::span<const std::string> forced) {
  std::vector<std::string_view> fields;
  fields.reserve(forced.size() + 2);
  fields.push_back(model_id);
  fields.push_back(prompt);
  for (const auto& t : forced) fields.push_back(t);
  return sha256_fields_hex(fields).substr(0, 16);
}

TraceStore::TraceStore(std::filesystem::path path) : path_(std::move(path)) {
  if (!std::filesystem::exists(path_)) return;
  for_each_line(path_, [&](std::string_view line, std::size_t number) {
    auto row = TraceRow::from_json_line(line, number);
    auto [it, inserted] = rows_.emplace(row.key, row);
    if (!inserted && !same_payload(it->second, row)) {
      fail(ErrorKind::kIntegrity, "trace line " + std::to_string(number) + ": key " + row.key +
                                      " already holds a different payload");
    }
  });
}

std::size_t TraceStore::size() const {
  std::shared_lock lock(mu_);
  return rows_.size();
}

const TraceRow* TraceStore::find_checked(std::string_view model_id, std::string_view prompt,
                                         std::span<const std::string> forced) const {
  const auto key = trace_key(model_id, prompt, forced);
  auto it = rows_.find(key);
  if (it == rows_.end()) return nullptr;
  const auto& row = it->second;
  const bool tokens_match =
      forced.empty() || std::equal(forced.begin(), forced.end(), row.tokens.begin(), row.tokens.end());
  if (row.model != model_id || row.prompt_sha256 != sha256_hex(prompt) || !tokens_match) {
    fail(ErrorKind::kIntegrity, "trace key " + key + " collides with a different payload");
  }
  return &row;
}

ScoredSequence TraceStore::lookup(std::string_view model_id, std::string_view prompt,
                                  std::span<const std::string> forced) const {
  std::shared_lock lock(mu_);
  const auto* row = find_checked(model_id, prompt, forced);
  if (!row) {
    fail(ErrorKind::kCacheMiss, "trace store " + path_.string() + " has no row for key " +
                                    trace_key(model_id, prompt, forced));
  }
  return row->to_sequence();
}

bool TraceStore::contains(std::string_view model_id, std::string_view prompt,
                          std::span<const std::string> forced) const {
  std::shared_lock lock(mu_);
  return find_checked(model_id, prompt, forced) != nullptr;
}

void TraceStore::append(const TraceRow& row) {
  std::unique_lock lock(mu_);
  if (auto it = rows_.find(row.key); it != rows_.end()) {
    if (same_payload(it->second, row)) return;
    fail(ErrorKind::kIntegrity, "trace key " + row.key + " already holds a different payload");
  }
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  std::ofstream out(path_, std::ios::binary | std::ios::app);
  if (!out) fail(ErrorKind::kIo, "cannot append to " + path_.string());
  out << row.to_json_line() << '\n';
  out.flush();
  if (!out) fail(ErrorKind::kIo, "short write to " + path_.string());
  rows_.emplace(row.key, row);
}

TraceBackend::TraceBackend(ModelRef ref, std::shared_ptr<const TraceStore> store)
    : ref_(std::move(ref)), store_(std::move(store)) {
  ref_.backend_kind = BackendKind::kTrace;
}

ScoredSequence TraceBackend::greedy_generate(const Prompt& prompt, const ScoreOptions&) {
  return store_->lookup(ref_.model_id, prompt.text, {});
}

ScoredSequence TraceBackend::force_score(const Prompt& prompt, std::span<const std::string> forced,
                                         const ScoreOptions&) {
  if (forced.empty()) fail(ErrorKind::kValidation, "force_score needs at least one token");
  return store_->lookup(ref_.model_id, prompt.text, forced);
}

RecordingBackend::RecordingBackend(LanguageModel& inner, std::shared_ptr<TraceStore> store,
                                   std::optional<std::size_t> top_k)
    : inner_(inner), store_(std::move(store)), top_k_(top_k) {}

ScoredSequence RecordingBackend::record(const Prompt& prompt,
                                        std::span<const std::string> key_tokens,
                                        const ScoredSequence& live) {
  if (live.distributions.size() != live.tokens.size()) {
    fail(ErrorKind::kCapability, "backend '" + inner_.ref().model_id +
                                     "' did not return distributions; cannot record a trace");
  }
  TraceRow row;
  row.model = inner_.ref().model_id;
  row.key = trace_key(row.model, prompt.text, key_tokens);
  row.prompt_sha256 = sha256_hex(prompt.text);
  row.tokens = live.tokens;
  for (std::size_t i = 0; i < live.tokens.size(); ++i) {
    const auto dist = top_k_ ? live.distributions[i].truncated(*top_k_) : live.distributions[i];
    if (row.vocab_size == 0) row.vocab_size = dist.vocab_size();
    TraceScoreRow sr;
    sr.lp = live.scores[i].chosen_logprob;
    for (const auto& e : dist.entries()) sr.top.emplace_back(e.token, std::log(e.prob));
    sr.residual = dist.residual_mass();
    row.scores.push_back(std::move(sr));
  }
  if (row.vocab_size == 0 && !live.distributions.empty()) {
    row.vocab_size = live.distributions.front().vocab_size();
  }
  store_->append(row);
  return row.to_sequence();
}

ScoredSequence RecordingBackend::greedy_generate(const Prompt& prompt, const ScoreOptions&) {
  ScoreOptions opts;
  opts.with_distributions = true;
  const auto live = inner_.greedy_generate(prompt, opts);
  return record(prompt, {}, live);
}

ScoredSequence RecordingBackend::force_score(const Prompt& prompt,
                                             std::span<const std::string> forced,
                                             const ScoreOptions&) {
  ScoreOptions opts;
  opts.with_distributions = true;
  const auto live = inner_.force_score(prompt, forced, opts);
  return record(prompt, forced, live);
}

}  // namespace grogu
