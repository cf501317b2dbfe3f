#include <doctest.h>

#include <random>

#include "grogu/error.hpp"
#include "grogu/metric.hpp"
#include "oracles.hpp"

using namespace grogu;

namespace {

TokenScore ts(double h, double lp = -1.0) { return TokenScore{"x", lp, h, h, h}; }

GenerationTrace trace_of(const std::vector<double>& hg, const std::vector<double>& hu,
                         const std::vector<double>& lps = {}) {
  GenerationTrace t;
  std::vector<TokenScore> u;
  for (std::size_t i = 0; i < hg.size(); ++i) {
    t.tokens.push_back(" w" + std::to_string(i));
    t.grounded_scores.push_back(ts(hg[i], lps.empty() ? -1.0 : lps[i]));
    u.push_back(ts(hu[i]));
  }
  t.ungrounded_scores = u;
  return t;
}

}  // namespace

TEST_CASE("token_entropy fixtures") {
  const double uniform4[] = {0.25, 0.25, 0.25, 0.25};
  CHECK(token_entropy(TokenDistribution::full(uniform4)) == doctest::Approx(std::log(4.0)).epsilon(1e-12));
  const double onehot[] = {1.0};
  CHECK(token_entropy(TokenDistribution::full(onehot)) == 0.0);
  const std::vector<double> p = {0.5, 0.25, 0.25};
  CHECK(token_entropy(TokenDistribution::full(p)) ==
        doctest::Approx(static_cast<double>(oracle::entropy(p))).epsilon(1e-12));
  CHECK(token_entropy(TokenDistribution::full(p)) == doctest::Approx(1.039721).epsilon(1e-6));
}

TEST_CASE("token_entropy rejects bad input") {
  const double short_mass[] = {0.5, 0.4};
  CHECK_THROWS_AS(TokenDistribution::full(short_mass), Error);
  auto truncated = TokenDistribution::make({{"a", 0.9}}, 0.1, 10);
  CHECK_THROWS_AS(token_entropy(truncated), Error);
}

TEST_CASE("tiny probabilities are dropped") {
  const double p[] = {1.0 - 1e-13, 1e-13};
  const auto d = TokenDistribution::full(p);
  CHECK(d.entries().size() == 1);
}

TEST_CASE("entropy_bounds fixtures") {
  const double half[] = {0.5, 0.5};
  auto b = entropy_bounds(TokenDistribution::full(half));
  CHECK(b.lower == doctest::Approx(std::log(2.0)));
  CHECK(b.upper == doctest::Approx(std::log(2.0)));
  // closed forms: -0.9 ln 0.9 - 0.1 ln 0.1 and -0.9 ln 0.9 - 0.1 ln(0.1 / 9)
  const double head = -0.9 * std::log(0.9);
  b = entropy_bounds(TokenDistribution::make({{"t", 0.9}}, 0.1, 10));
  CHECK(b.lower == doctest::Approx(head - 0.1 * std::log(0.1)).epsilon(1e-12));
  CHECK(b.upper == doctest::Approx(head - 0.1 * std::log(0.1 / 9.0)).epsilon(1e-12));
  CHECK(b.lower == doctest::Approx(0.325083).epsilon(1e-6));
  CHECK(b.upper == doctest::Approx(0.544806).epsilon(1e-6));
  CHECK_THROWS_AS(entropy_bounds(TokenDistribution::make({{"a", 0.5}, {"b", 0.4}}, 0.1, 2)), Error);
}

TEST_CASE("truncated keeps the head and folds the tail") {
  const double p[] = {0.1, 0.6, 0.3};
  const auto t = TokenDistribution::full(p).truncated(1);
  REQUIRE(t.entries().size() == 1);
  CHECK(t.entries()[0].prob == 0.6);
  CHECK(t.residual_mass() == doctest::Approx(0.4));
  const auto s = score_token(t, "1", std::log(0.6));
  const auto b = entropy_bounds(t);
  CHECK(s.entropy_nats == doctest::Approx(b.midpoint()));
}

TEST_CASE("mean_nll and perplexity") {
  auto t = trace_of({1, 1, 1}, {1, 1, 1}, {0.0, 0.0, 0.0});
  CHECK(perplexity_from_nll(mean_nll(t, Condition::kGrounded)) == 1.0);
  t = trace_of({1, 1}, {1, 1}, {std::log(0.5), std::log(0.5)});
  CHECK(perplexity_from_nll(mean_nll(t, Condition::kGrounded)) == doctest::Approx(2.0));
  t = trace_of({1, 1}, {1, 1}, {std::log(0.25), 0.0});
  CHECK(perplexity_from_nll(mean_nll(t, Condition::kGrounded)) == doctest::Approx(2.0));
  const std::vector<std::size_t> none;
  CHECK_THROWS_AS(mean_nll(t, Condition::kGrounded, none), Error);
}

TEST_CASE("select_key_tokens fixtures") {
  KeyTokenConfig cfg;
  auto t = trace_of({0.10, 1.20, 0.10}, {0.10, 0.30, 0.12});
  CHECK(select_key_tokens(t, cfg) == std::vector<std::size_t>{1});

  const std::vector<double> h = {0.30, 0.10, 0.20, 0.40, 0.25, 0.15, 0.05, 0.35, 0.12, 0.18};
  t = trace_of(h, h);
  CHECK(select_key_tokens(t, cfg) == std::vector<std::size_t>{3});

  cfg.alpha = 0.0;
  t = trace_of({0.1, 0.2, 0.3}, {0.2, 0.1, 0.4});
  CHECK(select_key_tokens(t, cfg) == std::vector<std::size_t>{0, 1, 2});
}

TEST_CASE("key-token threshold is strict and fallback handles ties and rounding") {
  KeyTokenConfig cfg{0.5, 0.1};
  auto t = trace_of({1.0, 2.0}, {1.5, 2.5});  // diffs exactly alpha
  CHECK(select_key_tokens(t, cfg) == std::vector<std::size_t>{1});
  t = trace_of({2.0, 2.0, 1.0}, {2.0, 2.0, 1.0});
  CHECK(select_key_tokens(t, cfg) == std::vector<std::size_t>{0});
  std::vector<double> h(30);
  for (std::size_t i = 0; i < h.size(); ++i) h[i] = static_cast<double>(i);
  const auto idx = top_fraction_indices(h, 0.1);
  CHECK(idx == std::vector<std::size_t>{27, 28, 29});
}

TEST_CASE("select_key_tokens matches the exhaustive reference") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t n = 1 + rng() % 64;
    const double alpha = 0.05 * static_cast<double>(rng() % 11);
    const double frac = 0.1 * static_cast<double>(1 + rng() % 10);
    std::vector<double> hg(n), hu(n);
    const bool quiet = rng() % 3 == 0;
    for (std::size_t i = 0; i < n; ++i) {
      hg[i] = std::round(unit(rng) * 20.0) / 4.0;  // coarse grid: plenty of ties
      hu[i] = quiet ? hg[i] + (unit(rng) - 0.5) * alpha : unit(rng) * 5.0;
    }
    const auto expect = oracle::key_tokens(hg, hu, alpha, frac);
    CHECK(select_key_tokens(trace_of(hg, hu), KeyTokenConfig{alpha, frac}) == expect);
  }
}

TEST_CASE("select_key_tokens length mismatch") {
  auto t = trace_of({1, 2}, {1, 2});
  t.ungrounded_scores->pop_back();
  CHECK_THROWS_AS(select_key_tokens(t, KeyTokenConfig{}), Error);
}

TEST_CASE("confidence formulations") {
  KeyTokenConfig cfg;
  auto t = trace_of({0.5, 0.5}, {0.5, 0.5});
  CHECK(confidence(t, Formulation::kEntropy, cfg).gamma == doctest::Approx(-0.5));
  t = trace_of({0.1, 1.2, 0.1}, {0.1, 0.3, 0.12}, {std::log(0.5), std::log(0.25), 0.0});
  auto c = confidence(t, Formulation::kKeyEntropy, cfg);
  CHECK(c.gamma == doctest::Approx(-1.2));
  CHECK(c.key_token_indices == std::vector<std::size_t>{1});
  CHECK(confidence(t, Formulation::kKeyPpl, cfg).gamma == doctest::Approx(-4.0));
  CHECK(confidence(t, Formulation::kPpl, cfg).gamma ==
        doctest::Approx(-std::exp((std::log(2.0) + std::log(4.0)) / 3.0)));
  t.ungrounded_scores.reset();
  CHECK_THROWS_AS(confidence(t, Formulation::kKeyEntropy, cfg), Error);
  CHECK_NOTHROW(confidence(t, Formulation::kEntropy, cfg));
}

TEST_CASE("grogu sign convention and modes") {
  auto u = grogu::grogu(-0.40, -1.50, UtilityMode::kFull);
  CHECK(u.value == doctest::Approx(1.10));
  CHECK(grogu::grogu(-0.7, -0.7, UtilityMode::kFull).value == 0.0);
  CHECK(grogu::grogu(-0.7, std::nullopt, UtilityMode::kGroundedOnly).value == -0.7);
  CHECK_THROWS_AS(grogu::grogu(-0.7, std::nullopt, UtilityMode::kFull), Error);
}

TEST_CASE("ungrounded single-list key rule") {
  const std::vector<TokenScore> scores = {ts(0.01), ts(0.2), ts(0.03)};
  CHECK(select_key_tokens_single(scores, KeyTokenConfig{}) == std::vector<std::size_t>{1});
  const std::vector<TokenScore> flat = {ts(0.01), ts(0.02)};
  CHECK(select_key_tokens_single(flat, KeyTokenConfig{}) == std::vector<std::size_t>{1});
}

TEST_CASE("config validation and names") {
  CHECK_THROWS_AS(KeyTokenConfig({0.05, 0.0}).validate(), Error);
  CHECK_THROWS_AS(KeyTokenConfig({-0.1, 0.1}).validate(), Error);
  CHECK(parse_formulation("KeyEntropy") == Formulation::kKeyEntropy);
  CHECK_THROWS_AS(parse_formulation("bogus"), Error);
  for (auto f : {Formulation::kPpl, Formulation::kKeyPpl, Formulation::kEntropy, Formulation::kKeyEntropy}) {
    CHECK(parse_formulation(formulation_name(f)) == f);
  }
}
