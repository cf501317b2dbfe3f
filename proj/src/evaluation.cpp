#include "grogu/evaluation.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "grogu/error.hpp"
#include "grogu/worker_pool.hpp"

namespace grogu {

namespace {

std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string w;
  while (in >> w) out.push_back(std::move(w));
  return out;
}

double percent(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : 100.0 * static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

std::string normalize_text(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (c < 0x80 && std::ispunct(c)) continue;
    if (c < 0x80 && std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
  }
  return out;
}

std::string normalize_answer(std::string_view text) {
  std::string out;
  for (const auto& w : split_ws(normalize_text(text))) {
    if (w == "a" || w == "an" || w == "the") continue;
    if (!out.empty()) out.push_back(' ');
    out += w;
  }
  return out;
}

bool contains_any_answer(std::string_view text, const std::vector<std::string>& gold_answers) {
  const auto norm = normalize_text(text);
  for (const auto& g : gold_answers) {
    const auto ng = normalize_text(g);
    if (!ng.empty() && norm.find(ng) != std::string::npos) return true;
  }
  return false;
}

bool answer_correct(std::string_view prediction, const std::vector<std::string>& gold_answers) {
  if (gold_answers.empty()) fail(ErrorKind::kValidation, "answer_correct needs gold answers");
  return contains_any_answer(prediction, gold_answers);
}

Overlap token_overlap(std::string_view prediction, const std::vector<std::string>& gold_answers) {
  if (gold_answers.empty()) fail(ErrorKind::kValidation, "token_overlap needs gold answers");
  const auto pred_norm = normalize_answer(prediction);
  const auto pred = split_ws(pred_norm);
  Overlap best;
  for (const auto& g : gold_answers) {
    const auto gold_norm = normalize_answer(g);
    const auto gold = split_ws(gold_norm);
    Overlap o;
    o.em = (pred_norm == gold_norm) ? 1.0 : 0.0;
    if (pred.empty() || gold.empty()) {
      const double same = (pred.empty() && gold.empty()) ? 1.0 : 0.0;
      o.f1 = o.precision = o.recall = same;
    } else {
      std::map<std::string, int> counts;
      for (const auto& t : gold) ++counts[t];
      std::size_t common = 0;
      for (const auto& t : pred) {
        auto it = counts.find(t);
        if (it != counts.end() && it->second > 0) {
          --it->second;
          ++common;
        }
      }
      if (common > 0) {
        o.precision = static_cast<double>(common) / static_cast<double>(pred.size());
        o.recall = static_cast<double>(common) / static_cast<double>(gold.size());
        o.f1 = 2.0 * o.precision * o.recall / (o.precision + o.recall);
      }
    }
    best.em = std::max(best.em, o.em);
    best.f1 = std::max(best.f1, o.f1);
    best.precision = std::max(best.precision, o.precision);
    best.recall = std::max(best.recall, o.recall);
  }
  return best;
}

Overlap mean_overlap(const std::vector<Overlap>& per_query) {
  Overlap m;
  if (per_query.empty()) return m;
  for (const auto& o : per_query) {
    m.em += o.em;
    m.f1 += o.f1;
    m.precision += o.precision;
    m.recall += o.recall;
  }
  const double n = static_cast<double>(per_query.size());
  m.em /= n;
  m.f1 /= n;
  m.precision /= n;
  m.recall /= n;
  return m;
}

SignTestResult sign_test(std::size_t wins, std::size_t losses, std::size_t ties) {
  const std::size_t n = wins + losses;
  if (n == 0) fail(ErrorKind::kValidation, "sign test needs at least one win or loss");
  SignTestResult r{wins, losses, ties, 1.0};
  const std::size_t m = std::min(wins, losses);
  double tail = 0.0;
  if (n <= 1000) {
    // C(n, i) / 2^n by the ratio recurrence; 2^-n is exact in binary.
    double term = std::ldexp(1.0, -static_cast<int>(n));
    for (std::size_t i = 0; i <= m; ++i) {
      tail += term;
      term = term * static_cast<double>(n - i) / static_cast<double>(i + 1);
    }
  } else {
    const double ln2n = static_cast<double>(n) * std::log(2.0);
    const double lgn = std::lgamma(static_cast<double>(n) + 1.0);
    for (std::size_t i = 0; i <= m; ++i) {
      tail += std::exp(lgn - std::lgamma(static_cast<double>(i) + 1.0) -
                       std::lgamma(static_cast<double>(n - i) + 1.0) - ln2n);
    }
  }
  r.p_two_sided = std::min(1.0, 2.0 * tail);
  return r;
}

void ConcordanceCase::validate() const {
  if (correct_a == correct_b) {
    fail(ErrorKind::kValidation,
         "concordance case '" + qid + "' must have exactly one correct context");
  }
}

ConcordanceResult concordance_tau(const std::vector<ConcordanceCase>& cases, TiePolicy ties) {
  ConcordanceResult r;
  for (const auto& c : cases) {
    c.validate();
    const double correct_u = c.correct_a ? c.utility_a : c.utility_b;
    const double wrong_u = c.correct_a ? c.utility_b : c.utility_a;
    if (correct_u > wrong_u) {
      r.concordant += 1.0;
    } else if (correct_u < wrong_u) {
      r.discordant += 1.0;
    } else {
      ++r.ties;
      if (ties == TiePolicy::kSplit) {
        r.concordant += 0.5;
        r.discordant += 0.5;
      } else {
        r.discordant += 1.0;
      }
    }
  }
  const double total = r.concordant + r.discordant;
  if (total <= 0.0) fail(ErrorKind::kValidation, "tau undefined: no concordant or discordant cases");
  r.tau = (r.concordant - r.discordant) / total;
  return r;
}

double f1_from_counts(std::size_t tp, std::size_t fp, std::size_t fn) {
  const double denom = 2.0 * static_cast<double>(tp) + static_cast<double>(fp + fn);
  return denom == 0.0 ? 0.0 : 2.0 * static_cast<double>(tp) / denom;
}

ClassifierResult utility_classifier_eval(const std::vector<ConcordanceCase>& cases) {
  ClassifierResult r;
  r.n = cases.size();
  std::size_t predicted_b = 0;
  for (const auto& c : cases) {
    c.validate();
    const bool predict_b = c.utility_b > c.utility_a;
    predicted_b += predict_b ? 1 : 0;
    if (predict_b && c.correct_b) ++r.tp;
    else if (predict_b && !c.correct_b) ++r.fp;
    else if (!predict_b && c.correct_b) ++r.fn;
    else ++r.tn;
  }
  if (r.n == 0) return r;
  r.accuracy = percent(r.tp + r.tn, r.n);
  const bool single_class = predicted_b == 0 || predicted_b == r.n;
  if (!single_class) {
    r.f1 = f1_from_counts(r.tp, r.fp, r.fn);
    const double f1_neg = f1_from_counts(r.tn, r.fn, r.fp);
    r.macro_f1 = 0.5 * (*r.f1 + f1_neg);
  }
  return r;
}

double mrr(const std::vector<RetrievalResult>& runs, const std::vector<std::string>& gold_doc_ids) {
  if (runs.size() != gold_doc_ids.size()) {
    fail(ErrorKind::kStructural, "mrr: runs and gold ids differ in count");
  }
  if (runs.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t q = 0; q < runs.size(); ++q) {
    const auto& ranked = runs[q].ranked;
    for (std::size_t r = 0; r < ranked.size(); ++r) {
      if (ranked[r].doc_id == gold_doc_ids[q]) {
        sum += 1.0 / static_cast<double>(r + 1);
        break;
      }
    }
  }
  return sum / static_cast<double>(runs.size());
}

double recall_at_k(const std::vector<RetrievalResult>& runs,
                   const std::vector<std::string>& gold_doc_ids, std::size_t k) {
  if (runs.size() != gold_doc_ids.size()) {
    fail(ErrorKind::kStructural, "recall_at_k: runs and gold ids differ in count");
  }
  if (runs.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t q = 0; q < runs.size(); ++q) {
    const auto& ranked = runs[q].ranked;
    const auto end = ranked.begin() + static_cast<std::ptrdiff_t>(std::min(k, ranked.size()));
    if (std::any_of(ranked.begin(), end,
                    [&](const ScoredDoc& d) { return d.doc_id == gold_doc_ids[q]; })) {
      ++hits;
    }
  }
  return static_cast<double>(hits) / static_cast<double>(runs.size());
}

std::uint64_t SplitMix64::next() {
  std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t SplitMix64::below(std::uint64_t n) {
  if (n == 0) fail(ErrorKind::kValidation, "cannot sample from an empty range");
  const std::uint64_t threshold = (0 - n) % n;
  while (true) {
    const auto r = next();
    if (r >= threshold) return r % n;
  }
}

std::uint64_t seed_for(std::uint64_t seed, std::string_view salt) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (char c : salt) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  SplitMix64 mix(seed ^ h);
  return mix.next();
}

std::optional<DocumentRecord> pick_distractor(const RetrievalResult& retrieval,
                                              const InvertedIndex& index,
                                              const std::vector<std::string>& gold_answers,
                                              std::string_view exclude_doc_id) {
  if (retrieval.ranked.empty()) return std::nullopt;
  for (const auto& hit : retrieval.ranked) {
    if (!exclude_doc_id.empty() && hit.doc_id == exclude_doc_id) continue;
    const auto& doc = index.document(hit.doc_id);
    if (!contains_any_answer(doc.contents, gold_answers)) return doc;
  }
  return std::nullopt;
}

DocumentRecord pick_random_document(const InvertedIndex& index, std::string_view exclude_doc_id,
                                    SplitMix64& rng) {
  const auto& docs = index.documents();
  const bool exclude = !exclude_doc_id.empty() && index.contains(exclude_doc_id);
  const std::size_t pool = docs.size() - (exclude ? 1 : 0);
  if (pool == 0) fail(ErrorKind::kValidation, "corpus has no document besides the gold one");
  std::size_t pick = rng.below(pool);
  if (exclude) {
    // Skip over the excluded position.
    std::size_t skip = 0;
    for (std::size_t i = 0; i < docs.size(); ++i) {
      if (docs[i].doc_id == exclude_doc_id) {
        skip = i;
        break;
      }
    }
    if (pick >= skip) ++pick;
  }
  return docs[pick];
}

namespace {

std::optional<std::string> gold_problem(const QueryRecord& q, const InvertedIndex& index) {
  if (!q.gold_doc_id) return "no gold_doc_id";
  if (!index.contains(*q.gold_doc_id)) return "gold doc '" + *q.gold_doc_id + "' not in index";
  if (q.gold_answers.empty()) return "no gold answers";
  return std::nullopt;
}

}  // namespace

GoldCaseSet build_gold_cases(const std::vector<QueryRecord>& queries, const InvertedIndex& index,
                             const Bm25Params& bm25, std::size_t search_depth,
                             std::uint64_t seed) {
  GoldCaseSet set;
  for (const auto& q : queries) {
    if (auto problem = gold_problem(q, index)) {
      set.skipped.push_back({q.qid, *problem, std::nullopt});
      continue;
    }
    const auto& gold = index.document(*q.gold_doc_id);
    const auto ranked = index.retrieve(bm25, q.question, search_depth, q.qid);
    auto distractor = pick_distractor(ranked, index, q.gold_answers, gold.doc_id);
    if (!distractor) {
      set.skipped.push_back({q.qid, "every retrieved document contains an answer", std::nullopt});
      continue;
    }
    SplitMix64 rng(seed_for(seed, q.qid));
    auto random = pick_random_document(index, gold.doc_id, rng);
    set.cases.push_back({q, gold, std::move(*distractor), std::move(random)});
  }
  return set;
}

double WinTally::win_rate() const { return percent(wins, wins + losses + ties); }

const FormulationWinRates* GoldWinReport::find(Formulation f) const {
  for (const auto& r : rates) {
    if (r.formulation == f) return &r;
  }
  return nullptr;
}

namespace {

void tally(WinTally& t, double gold, double other) {
  if (gold > other) ++t.wins;
  else if (gold < other) ++t.losses;
  else ++t.ties;
}

std::optional<SignTestResult> paired_sign(const std::vector<int>& key_wins,
                                          const std::vector<int>& plain_wins) {
  std::size_t plus = 0, minus = 0, ties = 0;
  for (std::size_t i = 0; i < key_wins.size(); ++i) {
    if (key_wins[i] > plain_wins[i]) ++plus;
    else if (key_wins[i] < plain_wins[i]) ++minus;
    else ++ties;
  }
  if (plus + minus == 0) return SignTestResult{0, 0, ties, 1.0};
  return sign_test(plus, minus, ties);
}

}  // namespace

GoldWinReport gold_win_rates(const std::vector<GoldTestCase>& cases,
                             const std::vector<Formulation>& formulations,
                             UtilityScorer& scorer, std::size_t jobs) {
  if (cases.empty()) fail(ErrorKind::kValidation, "gold_win_rates needs at least one case");
  if (formulations.empty()) fail(ErrorKind::kValidation, "no formulations requested");

  auto outcomes = parallel_map(cases.size(), jobs, [&](std::size_t i) {
    const auto& c = cases[i];
    std::array<ContextTrace, 3> traces;
    const std::array<const DocumentRecord*, 3> docs = {&c.gold_doc, &c.distractor_doc,
                                                       &c.random_doc};
    for (std::size_t d = 0; d < 3; ++d) {
      traces[d] = scorer.trace(c.query.question, c.query.history, GroundingContext{{*docs[d]}});
    }
    std::vector<GoldCaseScores> rows;
    for (auto f : formulations) {
      GoldCaseScores row{c.query.qid, f, 0, 0, 0};
      row.gold = scorer.utility(traces[0], f, c.query.question, c.query.history).value;
      row.distractor = scorer.utility(traces[1], f, c.query.question, c.query.history).value;
      row.random = scorer.utility(traces[2], f, c.query.question, c.query.history).value;
      rows.push_back(row);
    }
    return rows;
  });

  GoldWinReport report;
  for (auto f : formulations) report.rates.push_back({f, {}, {}});
  std::map<Formulation, std::vector<int>> win_dst, win_rnd;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    auto& o = outcomes[i];
    if (!o.value) {
      report.skipped.push_back({cases[i].query.qid, "backend failure: " + o.error, o.error_kind});
      continue;
    }
    ++report.evaluated;
    for (std::size_t k = 0; k < formulations.size(); ++k) {
      const auto& row = (*o.value)[k];
      tally(report.rates[k].vs_distractor, row.gold, row.distractor);
      tally(report.rates[k].vs_random, row.gold, row.random);
      win_dst[row.formulation].push_back(row.gold > row.distractor ? 1 : 0);
      win_rnd[row.formulation].push_back(row.gold > row.random ? 1 : 0);
      report.table.push_back(row);
    }
  }
  if (win_dst.count(Formulation::kKeyEntropy) && win_dst.count(Formulation::kEntropy) &&
      report.evaluated > 0) {
    report.key_vs_plain_distractor =
        paired_sign(win_dst[Formulation::kKeyEntropy], win_dst[Formulation::kEntropy]);
    report.key_vs_plain_random =
        paired_sign(win_rnd[Formulation::kKeyEntropy], win_rnd[Formulation::kEntropy]);
  }
  return report;
}

std::vector<ConcordanceContexts> build_concordance_contexts(
    const std::vector<QueryRecord>& queries, const InvertedIndex& index, const Bm25Params& bm25,
    std::size_t noise_docs, std::uint64_t seed, std::vector<SkippedCase>* skipped) {
  std::vector<ConcordanceContexts> out;
  for (const auto& q : queries) {
    if (auto problem = gold_problem(q, index)) {
      if (skipped) skipped->push_back({q.qid, *problem, std::nullopt});
      continue;
    }
    const auto& gold = index.document(*q.gold_doc_id);
    if (index.doc_count() < noise_docs + 1) {
      if (skipped) skipped->push_back({q.qid, "corpus too small for random documents", std::nullopt});
      continue;
    }
    const auto ranked = index.retrieve(bm25, q.question, noise_docs + 1, q.qid);
    std::vector<DocumentRecord> retrieved;
    for (const auto& hit : ranked.ranked) {
      if (hit.doc_id == gold.doc_id) continue;
      if (retrieved.size() < noise_docs) retrieved.push_back(index.document(hit.doc_id));
    }
    if (retrieved.size() < noise_docs) {
      if (skipped) skipped->push_back({q.qid, "too few retrieved non-gold documents", std::nullopt});
      continue;
    }
    SplitMix64 rng(seed_for(seed, q.qid));
    std::vector<DocumentRecord> random;
    std::set<std::string> used{gold.doc_id};
    while (random.size() < noise_docs) {
      auto doc = pick_random_document(index, gold.doc_id, rng);
      if (used.insert(doc.doc_id).second) random.push_back(std::move(doc));
    }
    auto with_gold = [&](std::vector<DocumentRecord> docs) {
      const auto slot = static_cast<std::ptrdiff_t>(rng.below(docs.size() + 1));
      docs.insert(docs.begin() + slot, gold);
      return GroundingContext{std::move(docs)};
    };
    ConcordanceContexts cc;
    cc.query = q;
    cc.with_retrieved = with_gold(std::move(retrieved));
    cc.with_random = with_gold(std::move(random));
    out.push_back(std::move(cc));
  }
  return out;
}

double relevance_utility(const InvertedIndex& index, const Bm25Params& bm25,
                         std::string_view question, const GroundingContext& context) {
  if (context.empty()) return 0.0;
  const auto terms = tokenize_text(question, index.tokenizer());
  double sum = 0.0;
  for (const auto& d : context.documents) sum += index.bm25_score(bm25, terms, d.doc_id);
  return sum / static_cast<double>(context.documents.size());
}

ConcordanceReport concordance_eval(const std::vector<ConcordanceContexts>& contexts,
                                   const std::vector<Formulation>& formulations,
                                   UtilityScorer& scorer, const InvertedIndex* index,
                                   const Bm25Params& bm25, TiePolicy ties, std::size_t jobs) {
  auto outcomes = parallel_map(contexts.size(), jobs, [&](std::size_t i) {
    const auto& cc = contexts[i];
    const auto& q = cc.query;
    const auto retr = scorer.trace(q.question, q.history, cc.with_retrieved);
    const auto rand = scorer.trace(q.question, q.history, cc.with_random);
    ConcordanceRow row;
    row.qid = q.qid;
    row.answer_retr = retr.answer;
    row.answer_rand = rand.answer;
    row.correct_retr = answer_correct(retr.answer, q.gold_answers);
    row.correct_rand = answer_correct(rand.answer, q.gold_answers);
    for (auto f : formulations) {
      row.utility_retr.push_back(scorer.utility(retr, f, q.question, q.history).value);
      row.utility_rand.push_back(scorer.utility(rand, f, q.question, q.history).value);
    }
    if (index) {
      row.utility_retr.push_back(relevance_utility(*index, bm25, q.question, cc.with_retrieved));
      row.utility_rand.push_back(relevance_utility(*index, bm25, q.question, cc.with_random));
    }
    return row;
  });

  ConcordanceReport report;
  for (std::size_t i = 0; i < contexts.size(); ++i) {
    auto& o = outcomes[i];
    if (!o.value) {
      report.skipped.push_back({contexts[i].query.qid, "backend failure: " + o.error, o.error_kind});
      continue;
    }
    const auto& row = *o.value;
    ++report.total;
    report.retr_correct += row.correct_retr;
    report.rand_correct += row.correct_rand;
    if (row.correct_retr == row.correct_rand) {
      ++report.ties;
      continue;
    }
    (row.correct_retr ? report.retr_wins : report.rand_wins)++;
    report.table.push_back(row);
  }

  std::vector<std::string> names;
  for (auto f : formulations) names.emplace_back(formulation_name(f));
  if (index) names.emplace_back("relevance");
  if (report.table.empty()) {
    report.tau_error = "tau undefined: no case where exactly one context answers correctly";
    return report;
  }
  for (std::size_t m = 0; m < names.size(); ++m) {
    std::vector<ConcordanceCase> cases;
    cases.reserve(report.table.size());
    for (const auto& row : report.table) {
      cases.push_back({row.qid, row.correct_retr, row.correct_rand, row.utility_retr[m],
                       row.utility_rand[m]});
    }
    report.metrics.push_back({names[m], concordance_tau(cases, ties), utility_classifier_eval(cases)});
  }
  return report;
}

LayoutCase make_layout_variants(const QueryRecord& query, const DocumentRecord& gold,
                                const std::vector<DocumentRecord>& nine_docs) {
  if (nine_docs.size() != 9) {
    fail(ErrorKind::kStructural, "layout variants need exactly 9 non-gold documents, got " +
                                     std::to_string(nine_docs.size()));
  }
  LayoutCase lc;
  lc.query = query;
  for (std::size_t v = 0; v < kLayoutGoldSlots.size(); ++v) {
    auto docs = nine_docs;
    docs.insert(docs.begin() + static_cast<std::ptrdiff_t>(kLayoutGoldSlots[v]), gold);
    lc.variants[v].documents = std::move(docs);
  }
  return lc;
}

std::vector<LayoutCase> build_layout_cases(const std::vector<QueryRecord>& queries,
                                           const InvertedIndex& index, const Bm25Params& bm25,
                                           std::vector<SkippedCase>* skipped) {
  std::vector<LayoutCase> out;
  for (const auto& q : queries) {
    if (auto problem = gold_problem(q, index)) {
      if (skipped) skipped->push_back({q.qid, *problem, std::nullopt});
      continue;
    }
    const auto& gold = index.document(*q.gold_doc_id);
    const auto ranked = index.retrieve(bm25, q.question, 10, q.qid);
    std::vector<DocumentRecord> nine;
    for (const auto& hit : ranked.ranked) {
      if (hit.doc_id != gold.doc_id && nine.size() < 9) nine.push_back(index.document(hit.doc_id));
    }
    if (nine.size() < 9) {
      if (skipped) skipped->push_back({q.qid, "fewer than nine retrieved non-gold documents", std::nullopt});
      continue;
    }
    out.push_back(make_layout_variants(q, gold, nine));
  }
  return out;
}

namespace {

std::size_t argmax_lowest(const std::array<double, 3>& u) {
  std::size_t best = 0;
  for (std::size_t v = 1; v < u.size(); ++v) {
    if (u[v] > u[best]) best = v;
  }
  return best;
}

}  // namespace

LayoutReport layout_selection_eval(UtilityScorer& scorer_i, UtilityScorer& scorer_j,
                                   const std::vector<LayoutCase>& cases, Formulation formulation,
                                   std::uint64_t seed, std::size_t jobs) {
  if (cases.empty()) fail(ErrorKind::kValidation, "layout selection needs at least one case");
  auto outcomes = parallel_map(cases.size(), jobs, [&](std::size_t i) {
    const auto& lc = cases[i];
    const auto& q = lc.query;
    LayoutRow row;
    row.qid = q.qid;
    for (std::size_t v = 0; v < 3; ++v) {
      const auto ti = scorer_i.trace(q.question, q.history, lc.variants[v]);
      row.utility_i[v] = scorer_i.utility(ti, formulation, q.question, q.history).value;
      row.correct_i[v] = answer_correct(ti.answer, q.gold_answers);
      const auto tj = scorer_j.trace(q.question, q.history, lc.variants[v]);
      row.utility_j[v] = scorer_j.utility(tj, formulation, q.question, q.history).value;
      row.correct_j[v] = answer_correct(tj.answer, q.gold_answers);
    }
    row.pick_i = argmax_lowest(row.utility_i);
    row.pick_j = argmax_lowest(row.utility_j);
    SplitMix64 rng(seed_for(seed, q.qid));
    row.pick_random = rng.below(3);
    return row;
  });

  LayoutReport report;
  std::size_t n = 0, own_i = 0, cross_i = 0, own_j = 0, cross_j = 0, rand_i = 0, rand_j = 0;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    auto& o = outcomes[i];
    if (!o.value) {
      report.skipped.push_back({cases[i].query.qid, "backend failure: " + o.error, o.error_kind});
      continue;
    }
    const auto& r = *o.value;
    ++n;
    own_i += r.correct_i[r.pick_i];
    cross_i += r.correct_i[r.pick_j];
    own_j += r.correct_j[r.pick_j];
    cross_j += r.correct_j[r.pick_i];
    rand_i += r.correct_i[r.pick_random];
    rand_j += r.correct_j[r.pick_random];
    report.table.push_back(r);
  }
  report.accuracy = {percent(own_i, n),   percent(cross_i, n), percent(own_j, n),
                     percent(cross_j, n), percent(rand_i, n),  percent(rand_j, n)};
  return report;
}

}  // namespace grogu
