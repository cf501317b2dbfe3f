#include "grogu/http_backend.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "grogu/error.hpp"

namespace grogu {

using json = nlohmann::json;

namespace {

std::string env_or(const char* name, std::string fallback) {
  const char* v = std::getenv(name);
  return v ? std::string(v) : std::move(fallback);
}

struct ParsedLogprobs {
  std::vector<std::string> tokens;
  std::vector<double> token_logprobs;  // NaN where the server sent null
  std::vector<std::vector<TokenProb>> top;
};

ParsedLogprobs parse_logprobs(const json& body) {
  const auto& choices = body.at("choices");
  if (!choices.is_array() || choices.empty()) {
    fail(ErrorKind::kCapability, "completion response has no choices");
  }
  const auto& lp = choices[0].value("logprobs", json());
  if (!lp.is_object()) {
    fail(ErrorKind::kCapability, "completion response carries no logprobs");
  }
  ParsedLogprobs out;
  out.tokens = lp.at("tokens").get<std::vector<std::string>>();
  for (const auto& v : lp.at("token_logprobs")) {
    out.token_logprobs.push_back(v.is_null() ? std::nan("") : v.get<double>());
  }
  for (const auto& entry : lp.at("top_logprobs")) {
    std::vector<TokenProb> probs;
    if (entry.is_object()) {
      for (const auto& [tok, v] : entry.items()) probs.push_back({tok, std::exp(v.get<double>())});
    } else if (entry.is_array()) {
      for (const auto& item : entry) {
        probs.push_back({item.at("token").get<std::string>(),
                         std::exp(item.at("logprob").get<double>())});
      }
    }
    out.top.push_back(std::move(probs));
  }
  if (out.token_logprobs.size() != out.tokens.size() || out.top.size() != out.tokens.size()) {
    fail(ErrorKind::kCapability, "completion logprobs arrays are misaligned");
  }
  return out;
}

}  // namespace

HttpBackendConfig HttpBackendConfig::from_env() {
  HttpBackendConfig c;
  c.endpoint = env_or("GROGU_HTTP_ENDPOINT", "");
  c.api_key = env_or("GROGU_HTTP_API_KEY", "");
  const auto vocab = env_or("GROGU_HTTP_VOCAB_SIZE", "");
  if (!vocab.empty()) c.vocab_size = std::stoul(vocab);
  return c;
}

void HttpBackendConfig::validate() const {
  if (endpoint.empty()) {
    fail(ErrorKind::kConfig, "HTTP backend needs an endpoint (set GROGU_HTTP_ENDPOINT)");
  }
  if (vocab_size == 0) {
    fail(ErrorKind::kConfig, "HTTP backend needs the model vocabulary size (GROGU_HTTP_VOCAB_SIZE)");
  }
  if (top_logprobs < 1) fail(ErrorKind::kConfig, "top_logprobs must be >= 1");
  if (parallelism < 1 || parallelism > 1024) fail(ErrorKind::kConfig, "parallelism must lie in [1, 1024]");
}

HttpBackend::HttpBackend(ModelRef ref, HttpBackendConfig config)
    : ref_(std::move(ref)), config_(std::move(config)) {
  config_.validate();
  ref_.backend_kind = BackendKind::kHttp;
  in_flight_ = std::make_unique<std::counting_semaphore<1024>>(config_.parallelism);
}

HttpBackend::~HttpBackend() = default;

std::string HttpBackend::post(const std::string& body, bool scoring) {
  in_flight_->acquire();
  struct Release {
    std::counting_semaphore<1024>* s;
    ~Release() { s->release(); }
  } release{in_flight_.get()};

  httplib::Client client(config_.endpoint);
  client.set_connection_timeout(config_.timeout_seconds, 0);
  client.set_read_timeout(config_.timeout_seconds, 0);
  httplib::Headers headers;
  if (!config_.api_key.empty()) {
    headers.emplace("Authorization", "Bearer " + config_.api_key);
  }

  const int attempts_allowed = config_.max_retries + 1;
  std::string last_error;
  for (int attempt = 1; attempt <= attempts_allowed; ++attempt) {
    auto res = client.Post(config_.path, headers, body, "application/json");
    if (res && res->status == 200) return res->body;
    if (res && scoring && (res->status == 400 || res->status == 404 || res->status == 422 ||
                           res->status == 501)) {
      fail(ErrorKind::kCapability,
           "endpoint rejected echo scoring (HTTP " + std::to_string(res->status) +
               "); record traces with a backend that supports echo and replay them with "
               "--backend trace");
    }
    const bool retryable = !res || res->status == 429 || res->status >= 500;
    last_error = res ? "HTTP " + std::to_string(res->status) : httplib::to_string(res.error());
    if (!retryable) throw TransportError("HTTP backend request failed: " + last_error, attempt, false);
    if (attempt < attempts_allowed) {
      std::this_thread::sleep_for(std::chrono::milliseconds(100LL << (attempt - 1)));
    }
  }
  throw TransportError("HTTP backend unavailable after " + std::to_string(attempts_allowed) +
                           " attempts: " + last_error,
                       attempts_allowed, true);
}

namespace {

ScoredSequence to_sequence(const ParsedLogprobs& lp, std::size_t first, std::size_t vocab_size,
                           bool with_distributions) {
  ScoredSequence seq;
  for (std::size_t i = first; i < lp.tokens.size(); ++i) {
    if (std::isnan(lp.token_logprobs[i])) {
      fail(ErrorKind::kCapability, "server returned no logprob for token '" + lp.tokens[i] + "'");
    }
    double head = 0.0;
    for (const auto& e : lp.top[i]) head += e.prob;
    double residual = 1.0 - head;
    if (residual < kProbabilityFloor) residual = 0.0;
    auto dist = TokenDistribution::make(lp.top[i], residual, vocab_size);
    seq.tokens.push_back(lp.tokens[i]);
    seq.scores.push_back(score_token(dist, lp.tokens[i], std::min(lp.token_logprobs[i], 0.0)));
    if (with_distributions) seq.distributions.push_back(std::move(dist));
  }
  return seq;
}

}  // namespace

ScoredSequence HttpBackend::greedy_generate(const Prompt& prompt, const ScoreOptions& opts) {
  json req = {{"model", ref_.model_id},   {"prompt", prompt.text},
              {"max_tokens", ref_.max_new_tokens}, {"temperature", 0},
              {"logprobs", config_.top_logprobs}};
  const auto body = post(req.dump(), false);
  try {
    const auto lp = parse_logprobs(json::parse(body));
    return to_sequence(lp, 0, config_.vocab_size, opts.with_distributions);
  } catch (const json::exception& e) {
    fail(ErrorKind::kParse, std::string("malformed completion response: ") + e.what());
  }
}

ScoredSequence HttpBackend::force_score(const Prompt& prompt, std::span<const std::string> forced,
                                        const ScoreOptions& opts) {
  if (forced.empty()) fail(ErrorKind::kValidation, "force_score needs at least one token");
  std::string continuation;
  for (const auto& t : forced) continuation += t;
  json req = {{"model", ref_.model_id}, {"prompt", prompt.text + continuation},
              {"max_tokens", 0},        {"echo", true},
              {"temperature", 0},       {"logprobs", config_.top_logprobs}};
  const auto body = post(req.dump(), true);
  ParsedLogprobs lp;
  try {
    lp = parse_logprobs(json::parse(body));
  } catch (const json::exception& e) {
    fail(ErrorKind::kParse, std::string("malformed completion response: ") + e.what());
  }
  if (lp.tokens.size() < forced.size()) {
    fail(ErrorKind::kCapability, "echo response shorter than the forced continuation");
  }
  const std::size_t first = lp.tokens.size() - forced.size();
  for (std::size_t i = 0; i < forced.size(); ++i) {
    if (lp.tokens[first + i] != forced[i]) {
      fail(ErrorKind::kCapability,
           "server tokenized the forced continuation differently; score with --backend trace");
    }
  }
  return to_sequence(lp, first, config_.vocab_size, opts.with_distributions);
}

}  // namespace grogu
