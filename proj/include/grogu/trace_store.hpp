#pragma once

// JSONL trace store. One row per (model, prompt, forced sequence):
//
//   {"key": hex64, "model": str, "prompt_sha256": hex, "tokens": [str],
//    "scores": [{"lp": f, "top": [[tok, lp], ...], "residual": f}],
//    "vocab_size": int}
//
// Greedy generations are stored under the key of an empty forced sequence,
// with "tokens" holding the generated tokens.

#include <cstddef>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "grogu/backend.hpp"

namespace grogu {

struct TraceScoreRow {
  double lp = 0.0;
  std::vector<std::pair<std::string, double>> top;  // (token, logprob)
  double residual = 0.0;
};

struct TraceRow {
  std::string key;
  std::string model;
  std::string prompt_sha256;
  std::vector<std::string> tokens;
  std::vector<TraceScoreRow> scores;
  std::size_t vocab_size = 0;

  std::string to_json_line() const;
  // Throws kParse mentioning `line_number`.
  static TraceRow from_json_line(std::string_view line, std::size_t line_number);

  // Rebuilds distributions and TokenScores from the stored logprobs.
  ScoredSequence to_sequence() const;
};

// 16 hex chars: the first 64 bits of SHA-256 over (model, prompt, tokens).
std::string trace_key(std::string_view model_id, std::string_view prompt,
                      std::span<const std::string> forced);

// Concurrent readers, one appender at a time. Appends go straight to disk.
class TraceStore {
 public:
  // Loads existing rows when `path` exists; otherwise starts empty and
  // creates the file on first append.
  explicit TraceStore(std::filesystem::path path);

  std::size_t size() const;
  const std::filesystem::path& path() const noexcept { return path_; }

  // Throws kCacheMiss when absent and kIntegrity when the stored payload
  // disagrees with the request under the same key.
  ScoredSequence lookup(std::string_view model_id, std::string_view prompt,
                        std::span<const std::string> forced) const;
  bool contains(std::string_view model_id, std::string_view prompt,
                std::span<const std::string> forced) const;

  // Idempotent for an identical payload; kIntegrity on a differing one.
  void append(const TraceRow& row);

 private:
  const TraceRow* find_checked(std::string_view model_id, std::string_view prompt,
                               std::span<const std::string> forced) const;

  std::filesystem::path path_;
  mutable std::shared_mutex mu_;
  std::unordered_map<std::string, TraceRow> rows_;
};

// Replays a trace store. Never contacts a model.
class TraceBackend final : public LanguageModel {
 public:
  TraceBackend(ModelRef ref, std::shared_ptr<const TraceStore> store);

  const ModelRef& ref() const override { return ref_; }
  ScoredSequence greedy_generate(const Prompt& prompt, const ScoreOptions& opts = {}) override;
  ScoredSequence force_score(const Prompt& prompt, std::span<const std::string> forced,
                             const ScoreOptions& opts = {}) override;

 private:
  ModelRef ref_;
  std::shared_ptr<const TraceStore> store_;
};

// Wraps a live backend and writes every call into a trace store. Scores are
// rebuilt from the stored row, so a later replay returns identical bits.
class RecordingBackend final : public LanguageModel {
 public:
  // `top_k` truncates stored distributions; nullopt keeps them whole.
  RecordingBackend(LanguageModel& inner, std::shared_ptr<TraceStore> store,
                   std::optional<std::size_t> top_k = std::nullopt);

  const ModelRef& ref() const override { return inner_.ref(); }
  ScoredSequence greedy_generate(const Prompt& prompt, const ScoreOptions& opts = {}) override;
  ScoredSequence force_score(const Prompt& prompt, std::span<const std::string> forced,
                             const ScoreOptions& opts = {}) override;

 private:
  ScoredSequence record(const Prompt& prompt, std::span<const std::string> key_tokens,
                        const ScoredSequence& live);

  LanguageModel& inner_;
  std::shared_ptr<TraceStore> store_;
  std::optional<std::size_t> top_k_;
};

}  // namespace grogu
