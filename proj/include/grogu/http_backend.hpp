#pragma once

// Completions-style HTTP client with per-token top-k logprobs.
//
// Generation:  POST {path} {"model", "prompt", "max_tokens", "temperature": 0,
//                           "logprobs": k}
// Scoring:     POST {path} {"model", "prompt": prompt + forced text,
//                           "max_tokens": 0, "echo": true, "logprobs": k}
//
// The response must carry choices[0].logprobs with "tokens",
// "token_logprobs" and "top_logprobs" (objects {token: lp} or lists of
// {"token", "logprob"}). The top-k width is written into every trace row via
// the recorded distributions, so entropy bounds stay auditable.

#include <cstddef>
#include <memory>
#include <semaphore>
#include <string>

#include "grogu/backend.hpp"

namespace grogu {

struct HttpBackendConfig {
  std::string endpoint;  // scheme://host:port
  std::string api_key;   // sent as a bearer token; never logged
  std::string path = "/v1/completions";
  int top_logprobs = 5;
  std::size_t vocab_size = 0;
  int max_retries = 2;
  int timeout_seconds = 60;
  std::ptrdiff_t parallelism = 4;

  // GROGU_HTTP_ENDPOINT, GROGU_HTTP_API_KEY, GROGU_HTTP_VOCAB_SIZE.
  static HttpBackendConfig from_env();
  void validate() const;
};

class HttpBackend final : public LanguageModel {
 public:
  HttpBackend(ModelRef ref, HttpBackendConfig config);
  ~HttpBackend() override;

  const ModelRef& ref() const override { return ref_; }
  ScoredSequence greedy_generate(const Prompt& prompt, const ScoreOptions& opts = {}) override;
  ScoredSequence force_score(const Prompt& prompt, std::span<const std::string> forced,
                             const ScoreOptions& opts = {}) override;

 private:
  std::string post(const std::string& body, bool scoring);

  ModelRef ref_;
  HttpBackendConfig config_;
  std::unique_ptr<std::counting_semaphore<1024>> in_flight_;
};

}  // namespace grogu
