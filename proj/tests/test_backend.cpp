#include <doctest.h>

#include <httplib.h>
#include <json.hpp>

#include <filesystem>
#include <cstring>
#include <fstream>
#include <thread>

#include "grogu/error.hpp"
#include "grogu/http_backend.hpp"
#include "grogu/io.hpp"
#include "grogu/needle_lm.hpp"
#include "grogu/prompt.hpp"
#include "grogu/scoring.hpp"
#include "grogu/trace_store.hpp"
#include "oracles.hpp"

using namespace grogu;
namespace fs = std::filesystem;

namespace {

const double kPeaked = oracle::needle_peaked(0.9, 100.0);
const double kUniform = std::log(100.0);

std::vector<QueryRecord> answer_key() {
  return {{"q1", "who lives in the castle", {}, {"edinburgh castle"}, std::string("g")}};
}

NeedleLm needle(std::optional<std::size_t> window = std::nullopt) {
  auto p = NeedleLmParams::defaults();
  p.window = window;
  return NeedleLm(ModelRef{}, p, answer_key());
}

Prompt prompt_with(const std::string& contents) {
  GroundingContext ctx{{{"g", "Castle", contents}}};
  return make_prompt(PromptSpec{}, "who lives in the castle", {}, &ctx);
}

fs::path temp_path(const std::string& name) {
  auto dir = fs::temp_directory_path() / "grogu_test_backend";
  fs::create_directories(dir);
  auto p = dir / name;
  fs::remove(p);
  return p;
}

}  // namespace

TEST_CASE("prompt assembly") {
  PromptSpec spec;
  spec.system_preamble = "";
  spec.template_text = "Q: {question}";
  CHECK(assemble_prompt(spec, "who?", {}, nullptr) == "Q: who?");

  const GroundingContext ctx{{{"a", "Balamory", "Edie McCredie drives the bus."},
                              {"b", "Castles", "Edinburgh Castle sits on a rock."}}};
  const auto text = assemble_prompt(PromptSpec{}, "who drives the bus?", {"tell me about Balamory"}, &ctx);
  CHECK(text == read_file(fs::path(GROGU_TEST_FIXTURES) / "prompt_two_docs.txt"));

  const GroundingContext empty;
  const auto grounded = assemble_prompt(PromptSpec{}, "q?", {}, &ctx);
  const auto none = assemble_prompt(PromptSpec{}, "q?", {}, &empty);
  CHECK(none == assemble_prompt(PromptSpec{}, "q?", {}, nullptr));
  CHECK(grounded.size() > none.size());
}

TEST_CASE("prompt spec validation") {
  PromptSpec spec;
  spec.template_text = "{documents} {oops} {question}";
  CHECK_THROWS_AS(spec.validate(), Error);
  spec.template_text = "{documents}";
  CHECK_THROWS_AS(spec.validate(), Error);
  spec.template_text = "{{literal}} {question}";
  CHECK_NOTHROW(spec.validate());
  CHECK(assemble_prompt([&] { auto s = spec; s.system_preamble = ""; return s; }(), "x", {}, nullptr) ==
        "{literal} x");
  CHECK(PromptSpec{}.fingerprint() != spec.fingerprint());
}

TEST_CASE("needle closed-form entropies") {
  auto lm = needle();
  CHECK(lm.vocab_size() == 100);
  CHECK(lm.peaked_entropy() == doctest::Approx(0.784595).epsilon(1e-6));
  CHECK(lm.peaked_entropy() == doctest::Approx(kPeaked).epsilon(1e-12));
  CHECK(lm.uniform_entropy() == doctest::Approx(4.605170).epsilon(1e-6));
}

TEST_CASE("needle copies a visible answer") {
  auto lm = needle();
  const auto p = prompt_with("the old edinburgh castle stands");
  const auto g = lm.greedy_generate(p);
  CHECK(g.tokens == std::vector<std::string>{" edinburgh", " castle"});
  CHECK(detokenize(g.tokens) == "edinburgh castle");
  for (const auto& s : g.scores) {
    CHECK(s.entropy_nats == doctest::Approx(kPeaked).epsilon(1e-12));
    CHECK(s.chosen_logprob == doctest::Approx(std::log(0.9)));
  }
  const auto f = lm.force_score(p, g.tokens);
  for (std::size_t i = 0; i < g.scores.size(); ++i) CHECK(f.scores[i].chosen_logprob == g.scores[i].chosen_logprob);
}

TEST_CASE("needle without the answer repeats the lowest id") {
  auto lm = needle();
  const auto g = lm.greedy_generate(prompt_with("nothing to see here"));
  CHECK(g.tokens.size() == 64);
  for (const auto& t : g.tokens) CHECK(t == " nothing");
  for (const auto& s : g.scores) CHECK(s.entropy_nats == doctest::Approx(kUniform).epsilon(1e-12));
}

TEST_CASE("needle window hides late answers") {
  auto lm = needle(10);
  std::string text;
  for (int i = 0; i < 12; ++i) text += "farmer ";
  text += "edinburgh castle";
  const auto forced = std::vector<std::string>{" edinburgh", " castle"};
  const auto f = lm.force_score(prompt_with(text), forced);
  for (const auto& s : f.scores) CHECK(s.entropy_nats == doctest::Approx(kUniform).epsilon(1e-12));
  auto wide = needle();
  CHECK(wide.force_score(prompt_with(text), forced).scores[0].entropy_nats == doctest::Approx(kPeaked));
  CHECK_THROWS_AS(lm.force_score(prompt_with(text), std::vector<std::string>{" unknownword"}), Error);
}

TEST_CASE("needle distributions on request") {
  auto lm = needle();
  const auto g = lm.greedy_generate(prompt_with("edinburgh castle"), ScoreOptions{true});
  REQUIRE(g.distributions.size() == g.tokens.size());
  CHECK(token_entropy(g.distributions[0]) == doctest::Approx(kPeaked).epsilon(1e-12));
}

TEST_CASE("trace rows round trip and rebuild bounds") {
  TraceRow row;
  row.model = "m";
  row.prompt_sha256 = "abc";
  row.tokens = {" a", " b"};
  row.vocab_size = 50;
  row.key = trace_key("m", "prompt", row.tokens);
  // top-5 with residual 0.02
  TraceScoreRow s;
  s.lp = std::log(0.5);
  s.top = {{" a", std::log(0.5)}, {" c", std::log(0.2)}, {" d", std::log(0.13)}, {" e", std::log(0.1)},
           {" f", std::log(0.05)}};
  s.residual = 0.02;
  row.scores = {s, s};
  const auto back = TraceRow::from_json_line(row.to_json_line(), 1);
  CHECK(back.to_json_line() == row.to_json_line());
  const auto seq = back.to_sequence();
  const auto expect = entropy_bounds(
      TokenDistribution::make({{" a", 0.5}, {" c", 0.2}, {" d", 0.13}, {" e", 0.1}, {" f", 0.05}}, 0.02, 50));
  CHECK(seq.scores[0].entropy_lower == doctest::Approx(expect.lower).epsilon(1e-9));
  CHECK(seq.scores[0].entropy_upper == doctest::Approx(expect.upper).epsilon(1e-9));
  CHECK_THROWS_WITH_AS(TraceRow::from_json_line("{not json", 7), doctest::Contains("7"), Error);
}

TEST_CASE("record then replay gives identical scores") {
  const auto path = temp_path("trace.jsonl");
  auto lm = needle();
  auto store = std::make_shared<TraceStore>(path);
  RecordingBackend rec(lm, store, 5);
  UtilityScorer live(rec, ScoringConfig{});
  const GroundingContext ctx{{{"g", "t", "edinburgh castle"}}};
  const auto a = live.score("who lives in the castle", {}, ctx, Formulation::kKeyEntropy);

  TraceBackend replay(ModelRef{}, std::make_shared<const TraceStore>(path));
  UtilityScorer again(replay, ScoringConfig{});
  const auto b = again.score("who lives in the castle", {}, ctx, Formulation::kKeyEntropy);
  CHECK(std::memcmp(&a.value, &b.value, sizeof(double)) == 0);
  CHECK(a.key_token_indices == b.key_token_indices);

  const GroundingContext other{{{"x", "t", "nothing here"}}};
  CHECK_THROWS_AS(again.score("who lives in the castle", {}, other, Formulation::kKeyEntropy), Error);
  try {
    again.score("who lives in the castle", {}, other, Formulation::kKeyEntropy);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kCacheMiss);
  }
}

TEST_CASE("trace store integrity") {
  const auto path = temp_path("integrity.jsonl");
  TraceStore store(path);
  TraceRow row;
  row.model = "m";
  row.prompt_sha256 = "p";
  row.tokens = {" a"};
  row.vocab_size = 2;
  row.key = trace_key("m", "p", row.tokens);
  row.scores = {TraceScoreRow{std::log(0.5), {{" a", std::log(0.5)}, {" b", std::log(0.5)}}, 0.0}};
  store.append(row);
  CHECK_NOTHROW(store.append(row));
  auto changed = row;
  changed.scores[0].lp = std::log(0.25);
  CHECK_THROWS_AS(store.append(changed), Error);
  CHECK(TraceStore(path).size() == 1);
}

// ---------------------------------------------------------------------------
// HTTP backend against an in-process server

namespace {

struct MockServer {
  httplib::Server server;
  int port = 0;
  std::thread thread;
  int failures_left = 0;
  bool reject_echo = false;

  MockServer() {
    server.Post("/v1/completions", [this](const httplib::Request& req, httplib::Response& res) {
      if (failures_left > 0) {
        --failures_left;
        res.status = 503;
        return;
      }
      const auto body = nlohmann::json::parse(req.body);
      if (req.get_header_value("Authorization") != "Bearer secret") {
        res.status = 401;
        return;
      }
      const bool echo = body.value("echo", false);
      if (echo && reject_echo) {
        res.status = 400;
        return;
      }
      nlohmann::json lp;
      if (echo) {
        lp["tokens"] = {"Answer", ":", " edinburgh", " castle"};
        lp["token_logprobs"] = {nullptr, -0.1, std::log(0.6), std::log(0.7)};
        lp["top_logprobs"] = nlohmann::json::array(
            {nullptr, {{":", -0.1}}, {{" edinburgh", std::log(0.6)}, {" leith", std::log(0.3)}},
             nlohmann::json::array({{{"token", " castle"}, {"logprob", std::log(0.7)}},
                                    {{"token", " rock"}, {"logprob", std::log(0.2)}}})});
      } else {
        lp["tokens"] = {" edinburgh", " castle"};
        lp["token_logprobs"] = {std::log(0.8), std::log(0.9)};
        lp["top_logprobs"] = {{{" edinburgh", std::log(0.8)}, {" leith", std::log(0.15)}},
                              {{" castle", std::log(0.9)}, {" rock", std::log(0.1)}}};
      }
      nlohmann::json out;
      out["choices"] = {{{"text", ""}, {"logprobs", lp}}};
      res.set_content(out.dump(), "application/json");
    });
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~MockServer() {
    server.stop();
    thread.join();
  }

  HttpBackendConfig config() const {
    HttpBackendConfig c;
    c.endpoint = "http://127.0.0.1:" + std::to_string(port);
    c.api_key = "secret";
    c.vocab_size = 1000;
    c.max_retries = 2;
    c.timeout_seconds = 5;
    return c;
  }
};

}  // namespace

TEST_CASE("http backend generates and echo-scores") {
  MockServer mock;
  HttpBackend http(ModelRef{BackendKind::kHttp, "mock", 8}, mock.config());
  const Prompt p{"Question: where?\nAnswer:", "where?", {}};
  const auto g = http.greedy_generate(p);
  CHECK(g.tokens == std::vector<std::string>{" edinburgh", " castle"});
  CHECK(g.scores[0].chosen_logprob == doctest::Approx(std::log(0.8)));
  const auto b0 = entropy_bounds(TokenDistribution::make({{" edinburgh", 0.8}, {" leith", 0.15}}, 0.05, 1000));
  CHECK(g.scores[0].entropy_lower == doctest::Approx(b0.lower));
  CHECK(g.scores[0].entropy_upper == doctest::Approx(b0.upper));

  const auto f = http.force_score(p, g.tokens);
  REQUIRE(f.tokens == g.tokens);
  CHECK(f.scores[1].chosen_logprob == doctest::Approx(std::log(0.7)));
}

TEST_CASE("http backend retries transient failures") {
  MockServer mock;
  mock.failures_left = 2;
  HttpBackend http(ModelRef{BackendKind::kHttp, "mock", 8}, mock.config());
  CHECK(http.greedy_generate(Prompt{"x", "x", {}}).tokens.size() == 2);
  mock.failures_left = 5;
  try {
    http.greedy_generate(Prompt{"x", "x", {}});
    FAIL("expected a transport error");
  } catch (const TransportError& e) {
    CHECK(e.attempts() == 3);
    CHECK(e.retryable());
  }
}

TEST_CASE("http backend without echo scoring points at the trace backend") {
  MockServer mock;
  mock.reject_echo = true;
  HttpBackend http(ModelRef{BackendKind::kHttp, "mock", 8}, mock.config());
  const std::vector<std::string> forced = {" edinburgh"};
  CHECK_THROWS_WITH_AS(http.force_score(Prompt{"x", "x", {}}, forced), doctest::Contains("--backend trace"), Error);
}

TEST_CASE("http backend unreachable") {
  HttpBackendConfig c;
  c.endpoint = "http://127.0.0.1:1";
  c.vocab_size = 10;
  c.max_retries = 0;
  c.timeout_seconds = 1;
  HttpBackend http(ModelRef{BackendKind::kHttp, "mock", 8}, c);
  CHECK_THROWS_AS(http.greedy_generate(Prompt{"x", "x", {}}), TransportError);
  HttpBackendConfig bad;
  CHECK_THROWS_AS(HttpBackend(ModelRef{}, bad), Error);
}
