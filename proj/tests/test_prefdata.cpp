#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "grogu/error.hpp"
#include "grogu/needle_lm.hpp"
#include "grogu/prefdata.hpp"
#include "grogu/synth.hpp"
#include "oracles.hpp"

using namespace grogu;
namespace fs = std::filesystem;

namespace {

fs::path temp_path(const std::string& name) {
  auto dir = fs::temp_directory_path() / "grogu_test_prefdata";
  fs::create_directories(dir);
  return dir / name;
}

RewriteSet set_of(const std::string& qid, std::vector<std::string> rewrites) {
  return {qid, {"tell me about balamory"}, "who drives the bus?", std::move(rewrites)};
}

SetScores scores_of(const std::string& qid, const std::vector<std::pair<std::string, double>>& s) {
  SetScores out{qid, {}, {}};
  for (const auto& [rw, u] : s) {
    RewriteScore r;
    r.rewrite = rw;
    r.utility = u;
    out.scores.push_back(r);
  }
  return out;
}

PreferencePair pair_with_gap(const std::string& qid, double gap) {
  return {qid, "p", "c", "r", gap, 0.0, gap};
}

}  // namespace

TEST_CASE("sft target is the argmax and the pair is argmax vs argmin") {
  const std::vector<RewriteSet> sets = {set_of("q1", {"r1", "r2", "r3"})};
  const std::vector<SetScores> scores = {scores_of("q1", {{"r1", 0.2}, {"r2", 0.8}, {"r3", -0.1}})};
  const auto sft = build_sft_records(sets, scores);
  REQUIRE(sft.size() == 1);
  CHECK(sft[0].target == "r2");
  CHECK(sft[0].score == 0.8);
  const auto pairs = build_dpo_pairs(sets, scores);
  REQUIRE(pairs.size() == 1);
  CHECK(pairs[0].chosen == "r2");
  CHECK(pairs[0].rejected == "r3");
  CHECK(pairs[0].gap == doctest::Approx(0.9));
  CHECK(pairs[0].prompt == render_conversation(sets[0]));
  CHECK(render_conversation(sets[0]) == "Turn 1: tell me about balamory\nQuestion: who drives the bus?\nRewrite:");
}

TEST_CASE("negative-only utilities still pick the largest") {
  const std::vector<RewriteSet> sets = {set_of("q1", {"a", "b", "c"})};
  const std::vector<SetScores> scores = {scores_of("q1", {{"a", -3.0}, {"b", -0.5}, {"c", -1.25}})};
  CHECK(build_sft_records(sets, scores)[0].target == "b");
  const auto p = build_dpo_pairs(sets, scores)[0];
  CHECK(p.chosen == "b");
  CHECK(p.rejected == "a");
  CHECK(p.gap == doctest::Approx(2.5));
}

TEST_CASE("ties and degenerate sets") {
  const std::vector<RewriteSet> sets = {set_of("q1", {"zeta", "alpha"}), set_of("q2", {"only"}),
                                        set_of("q3", {"x", "y"})};
  const std::vector<SetScores> scores = {scores_of("q1", {{"zeta", 1.0}, {"alpha", 1.0}}),
                                         scores_of("q2", {{"only", 0.3}}),
                                         scores_of("q3", {{"x", 0.1}, {"y", 0.4}})};
  std::vector<DroppedQuery> dropped;
  const auto sft = build_sft_records(sets, scores);
  CHECK(sft[0].target == "alpha");
  const auto pairs = build_dpo_pairs(sets, scores, &dropped);
  REQUIRE(pairs.size() == 1);
  CHECK(pairs[0].qid == "q3");
  REQUIRE(dropped.size() == 2);
  CHECK(dropped[0].reason == "zero utility gap");
  CHECK(dropped[1].reason == "fewer than two scored rewrites");
  auto misaligned = scores;
  std::swap(misaligned[0], misaligned[1]);
  CHECK_THROWS_AS(build_dpo_pairs(sets, misaligned), Error);
}

TEST_CASE("filter keeps the largest gaps") {
  const std::vector<PreferencePair> pairs = {pair_with_gap("q1", 0.9), pair_with_gap("q2", 0.5),
                                             pair_with_gap("q3", 0.4), pair_with_gap("q4", 0.1)};
  const auto kept = filter_by_gap(pairs, 0.5);
  REQUIRE(kept.size() == 2);
  CHECK(kept[0].gap == 0.9);
  CHECK(kept[1].gap == 0.5);
  CHECK(filter_by_gap(pairs, 1.0).size() == 4);
  CHECK(filter_by_gap(pairs, 0.3).size() == 2);
  CHECK_THROWS_AS(filter_by_gap(pairs, 0.0), Error);
  CHECK_THROWS_AS(filter_by_gap(pairs, 1.5), Error);
  const std::vector<PreferencePair> tied = {pair_with_gap("b", 1.0), pair_with_gap("a", 1.0),
                                            pair_with_gap("c", 1.0)};
  const auto cut = filter_by_gap(tied, 0.5);
  REQUIRE(cut.size() == 2);
  CHECK(cut[0].qid == "a");
  CHECK(cut[1].qid == "b");
}

TEST_CASE("filter cardinality on random inputs") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 1 + rng() % 40;
    const double f = 0.05 * static_cast<double>(1 + rng() % 20);
    std::vector<PreferencePair> pairs;
    for (std::size_t i = 0; i < n; ++i) {
      pairs.push_back(pair_with_gap("q" + std::to_string(i), static_cast<double>(1 + rng() % 5)));
    }
    const auto kept = filter_by_gap(pairs, f);
    CHECK(kept.size() == oracle::ceil_count(f * static_cast<double>(n)));
    double min_kept = 1e9;
    for (const auto& p : kept) min_kept = std::min(min_kept, p.gap);
    std::size_t above = 0;
    for (const auto& p : pairs) above += p.gap > min_kept;
    CHECK(above <= kept.size());
  }
}

TEST_CASE("choices are invariant to a constant utility shift") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::pair<std::string, double>> s;
    std::vector<std::string> names;
    for (int i = 0; i < 5; ++i) {
      names.push_back("r" + std::to_string(i));
      s.emplace_back(names.back(), std::round(u(rng) * 8.0) / 8.0);
    }
    auto shifted = s;
    for (auto& [rw, v] : shifted) v += 3.0;
    const std::vector<RewriteSet> sets = {set_of("q", names)};
    const auto a = build_dpo_pairs(sets, {scores_of("q", s)});
    const auto b = build_dpo_pairs(sets, {scores_of("q", shifted)});
    REQUIRE(a.size() == b.size());
    if (a.empty()) continue;
    CHECK(a[0].chosen == b[0].chosen);
    CHECK(a[0].rejected == b[0].rejected);
    CHECK(a[0].gap == doctest::Approx(b[0].gap));
  }
}

TEST_CASE("jsonl round trips") {
  const std::vector<SftRecord> sft = {{"q1", "Turn 1: a\nQuestion: b\nRewrite:", "t", 0.25}};
  const std::vector<PreferencePair> dpo = {{"q1", "p", "c", "r", 0.5, -0.25, 0.75}};
  const auto sp = temp_path("sft.jsonl");
  const auto dp = temp_path("dpo.jsonl");
  emit_sft_jsonl(sp, sft);
  emit_dpo_jsonl(dp, dpo);
  CHECK(load_sft_jsonl(sp) == sft);
  CHECK(load_dpo_jsonl(dp) == dpo);
  CHECK(sft_jsonl(sft).rfind("{\"prompt\":", 0) == 0);
}

TEST_CASE("rewrite sets dedup and validate") {
  RewriteSet s = set_of("q", {"a", "b", "a", "c", "b"});
  s.dedup();
  CHECK(s.rewrites == std::vector<std::string>{"a", "b", "c"});
  const auto path = temp_path("rewrites.jsonl");
  save_rewrites_jsonl(path, {set_of("q1", {"x", "x", "y"})});
  const auto back = load_rewrites_jsonl(path);
  REQUIRE(back.size() == 1);
  CHECK(back[0].rewrites == std::vector<std::string>{"x", "y"});
  save_rewrites_jsonl(path, {set_of("q1", {"x"}), set_of("q1", {"y"})});
  CHECK_THROWS_AS(load_rewrites_jsonl(path), Error);
  CHECK(parse_question_slot(question_slot_name(QuestionSlot::kConversation)) == QuestionSlot::kConversation);
}

TEST_CASE("score cache persists and keys on identity") {
  const auto path = temp_path("cache.jsonl");
  fs::remove(path);
  {
    ScoreCache c(path);
    c.put("k1", 0.5);
    c.put("k2", -1.0);
    CHECK(c.size() == 2);
  }
  ScoreCache c(path);
  CHECK(c.get("k1") == 0.5);
  CHECK(c.get("k2") == -1.0);
  CHECK_FALSE(c.get("k3").has_value());

  RewriteScoreKey a;
  a.model_id = "m";
  a.rewrite = "r";
  a.doc_ids = {"d1", "d2"};
  auto b = a;
  CHECK(a.hash() == b.hash());
  b.doc_ids = {"d2", "d1"};
  CHECK(a.hash() != b.hash());
  b = a;
  b.formulation = Formulation::kEntropy;
  CHECK(a.hash() != b.hash());
  b = a;
  b.keys.alpha = 0.2;
  CHECK(a.hash() != b.hash());
}

TEST_CASE("end-to-end scoring on the synthetic pref suite") {
  const auto prefs = make_pref_suite(4, 7);
  const auto idx = InvertedIndex::build(prefs.suite.corpus);
  NeedleLm lm(ModelRef{}, NeedleLmParams::defaults(), prefs.suite.queries);
  UtilityScorer scorer(lm, ScoringConfig{});
  const auto path = temp_path("e2e_cache.jsonl");
  fs::remove(path);
  ScoreCache cache(path);
  const auto scores = score_rewrite_sets(prefs.rewrites, idx, scorer, RewriteScoringOptions{}, &cache, 2);
  REQUIRE(scores.size() == 4);
  for (const auto& s : scores) {
    CHECK(s.scores.size() + s.failures.size() == 3);
  }
  const auto sft = build_sft_records(prefs.rewrites, scores);
  REQUIRE(sft.size() == 4);
  for (std::size_t q = 0; q < 4; ++q) CHECK(sft[q].target == prefs.rewrites[q].rewrites[0]);
  const auto again = score_rewrite_sets(prefs.rewrites, idx, scorer, RewriteScoringOptions{}, &cache, 1);
  for (std::size_t q = 0; q < 4; ++q) {
    for (std::size_t i = 0; i < again[q].scores.size(); ++i) {
      CHECK(again[q].scores[i].utility == scores[q].scores[i].utility);
      if (!again[q].scores[i].empty_retrieval) CHECK(again[q].scores[i].from_cache);
    }
  }
}
