#include <doctest.h>

#include <random>
#include <set>

#include "grogu/error.hpp"
#include "grogu/evaluation.hpp"
#include "grogu/needle_lm.hpp"
#include "grogu/synth.hpp"
#include "oracles.hpp"

using namespace grogu;

namespace {

ConcordanceCase cc(bool a_correct, double ua, double ub) { return {"q", a_correct, !a_correct, ua, ub}; }

RetrievalResult run_of(std::vector<std::string> ids) {
  RetrievalResult r;
  double s = 100;
  for (auto& id : ids) r.ranked.push_back({std::move(id), s--});
  return r;
}

}  // namespace

TEST_CASE("answer matching") {
  CHECK(answer_correct("Edie McCredie, played by Juliet Cadzow.", {"Edie McCredie"}));
  CHECK_FALSE(answer_correct("", {"Edie McCredie"}));
  CHECK_FALSE(answer_correct("the blue house is Mr. Bloom's", {"Edie McCredie"}));
  CHECK_THROWS_AS(answer_correct("x", {}), Error);
  CHECK(normalize_answer("The  Nick, Hancock!") == "nick hancock");
}

TEST_CASE("token overlap") {
  auto o = token_overlap("nick hancock", {"Nick Hancock", "Lee Mack"});
  CHECK(o.f1 == 1.0);
  CHECK(o.em == 1.0);
  o = token_overlap("hancock hosted", {"Nick Hancock"});
  CHECK(o.f1 == doctest::Approx(0.5));
  CHECK(o.precision == doctest::Approx(0.5));
  o = token_overlap("", {"Nick Hancock"});
  CHECK(o.f1 == 0.0);
  CHECK(o.em == 0.0);
  CHECK(mean_overlap({{1, 1, 1, 1}, {0, 0.5, 0.5, 0.5}}).f1 == doctest::Approx(0.75));
}

TEST_CASE("sign test fixtures and oracle") {
  CHECK(sign_test(8, 0).p_two_sided == doctest::Approx(0.0078125).epsilon(1e-12));
  CHECK(sign_test(9, 1).p_two_sided == doctest::Approx(0.021484).epsilon(1e-6));
  CHECK(sign_test(5, 5).p_two_sided == 1.0);
  CHECK_THROWS_AS(sign_test(0, 0, 3), Error);
  for (unsigned n = 1; n <= 64; ++n) {
    for (unsigned w = 0; w <= n; ++w) {
      const double lib = sign_test(w, n - w).p_two_sided;
      CHECK(std::fabs(lib - static_cast<double>(oracle::sign_test_p(w, n - w))) <= 1e-12);
    }
  }
  CHECK(sign_test(1500, 1400).p_two_sided < 0.1);
}

TEST_CASE("concordance tau") {
  std::vector<ConcordanceCase> cases;
  for (int i = 0; i < 3; ++i) cases.push_back(cc(true, 1.0, 0.0));
  cases.push_back(cc(false, 1.0, 0.0));
  CHECK(concordance_tau(cases).tau == doctest::Approx(0.5));
  cases = {cc(true, 1, 0), cc(true, 0, 1)};
  CHECK(concordance_tau(cases).tau == 0.0);
  cases.assign(10, cc(false, 0, 1));
  CHECK(concordance_tau(cases).tau == 1.0);
  cases = {cc(true, 1, 1), cc(true, 2, 1)};
  CHECK(concordance_tau(cases).tau == 0.0);
  CHECK(concordance_tau(cases, TiePolicy::kSplit).tau == doctest::Approx(0.5));
  CHECK_THROWS_AS(concordance_tau({}), Error);
  CHECK_THROWS_AS(concordance_tau({{"q", true, true, 0, 1}}), Error);
}

TEST_CASE("utility classifier") {
  std::vector<ConcordanceCase> all_right = {cc(true, 1, 0), cc(false, 0, 1)};
  auto r = utility_classifier_eval(all_right);
  CHECK(r.accuracy == 100.0);
  REQUIRE(r.f1);
  CHECK(*r.f1 == 1.0);
  std::vector<ConcordanceCase> constant = {cc(true, 1, 0), cc(false, 1, 0)};
  CHECK_FALSE(utility_classifier_eval(constant).f1.has_value());
  CHECK(f1_from_counts(2, 1, 1) == doctest::Approx(2.0 / 3.0));
  // tie predicts context a
  r = utility_classifier_eval({cc(true, 1, 1), cc(false, 0, 1)});
  CHECK(r.tn == 1);
  CHECK(r.tp == 1);
}

TEST_CASE("mrr and recall fixtures and oracle") {
  const std::vector<RetrievalResult> runs = {run_of({"g"}), run_of({"a", "b", "c", "g"}), run_of({"x"})};
  CHECK(mrr(runs, {"g", "g", "g"}) == doctest::Approx(0.416667).epsilon(1e-6));
  CHECK(mrr({run_of({"g"}), run_of({"g", "x"})}, {"g", "g"}) == 1.0);
  CHECK(recall_at_k(runs, {"g", "g", "g"}, 1) == doctest::Approx(1.0 / 3.0));
  CHECK_THROWS_AS(mrr(runs, {"g"}), Error);

  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<RetrievalResult> rs;
    std::vector<std::vector<std::string>> raw;
    std::vector<std::string> gold;
    for (int q = 0; q < 5; ++q) {
      std::vector<std::string> ids;
      for (std::size_t k = 0; k < rng() % 12; ++k) ids.push_back("d" + std::to_string(rng() % 15));
      raw.push_back(ids);
      rs.push_back(run_of(ids));
      gold.push_back("d" + std::to_string(rng() % 15));
    }
    CHECK(mrr(rs, gold) == oracle::mrr(raw, gold));
    CHECK(recall_at_k(rs, gold, 3) == oracle::recall(raw, gold, 3));
  }
}

TEST_CASE("seeded sampling is stable") {
  SplitMix64 a(1), b(1);
  for (int i = 0; i < 10; ++i) CHECK(a.next() == b.next());
  SplitMix64 c(42);
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 1000; ++i) {
    const auto v = c.below(7);
    CHECK(v < 7);
    seen.insert(v);
  }
  CHECK(seen.size() == 7);
  CHECK(seed_for(1, "q1") != seed_for(1, "q2"));
  CHECK(seed_for(1, "q1") == seed_for(1, "q1"));
}

TEST_CASE("distractor and random selection") {
  const auto idx = InvertedIndex::build({{"gold", "", "topic edinburgh castle"},
                                         {"clean1", "", "topic words"},
                                         {"clean2", "", "topic more words"},
                                         {"dirty", "", "topic edinburgh castle again"}});
  RetrievalResult r = run_of({"dirty", "clean1", "clean2"});
  CHECK(pick_distractor(r, idx, {"edinburgh castle"})->doc_id == "clean1");
  r = run_of({"clean2", "clean1"});
  CHECK(pick_distractor(r, idx, {"edinburgh castle"})->doc_id == "clean2");
  r = run_of({"dirty", "gold"});
  CHECK_FALSE(pick_distractor(r, idx, {"edinburgh castle"}).has_value());
  SplitMix64 rng(3);
  for (int i = 0; i < 100; ++i) CHECK(pick_random_document(idx, "gold", rng).doc_id != "gold");
}

TEST_CASE("layout variants are permutations") {
  const DocumentRecord g{"g", "", "gold"};
  std::vector<DocumentRecord> nine;
  std::vector<std::string> order;
  for (int i = 0; i < 9; ++i) {
    nine.push_back({"n" + std::to_string(i), "", "x"});
    order.push_back(nine.back().doc_id);
  }
  const auto lc = make_layout_variants(QueryRecord{}, g, nine);
  const std::size_t slots[] = {0, 4, 9};
  for (int v = 0; v < 3; ++v) {
    const auto ids = lc.variants[v].doc_ids();
    REQUIRE(ids.size() == 10);
    CHECK(ids[slots[v]] == "g");
    std::vector<std::string> rest;
    for (const auto& id : ids) {
      if (id != "g") rest.push_back(id);
    }
    CHECK(rest == order);
    const auto first = lc.variants[0].doc_ids();
    CHECK(std::multiset<std::string>(ids.begin(), ids.end()) == std::multiset<std::string>(first.begin(), first.end()));
  }
  nine.pop_back();
  CHECK_THROWS_AS(make_layout_variants(QueryRecord{}, g, nine), Error);
}

TEST_CASE("gold win rates on a small needle suite") {
  auto cfg = gold_suite_config();
  cfg.queries = 10;
  const auto suite = make_synth_suite(cfg);
  const auto idx = InvertedIndex::build(suite.corpus);
  const auto set = build_gold_cases(suite.queries, idx, Bm25Params{}, 100, 1);
  CHECK(set.cases.size() == 10);
  NeedleLm lm(ModelRef{}, NeedleLmParams::defaults(), suite.queries);
  UtilityScorer scorer(lm, ScoringConfig{});
  const auto report = gold_win_rates(set.cases, {Formulation::kKeyEntropy}, scorer);
  CHECK(report.evaluated == 10);
  CHECK(report.rates[0].vs_random.win_rate() == 100.0);
  // closed-form gap between the peaked and uniform confidences
  const auto& row = report.table.front();
  CHECK(row.gold - row.random == doctest::Approx(3.820575).epsilon(1e-6));
  WinTally t{7, 3, 0};
  CHECK(t.win_rate() == doctest::Approx(70.0));
}
