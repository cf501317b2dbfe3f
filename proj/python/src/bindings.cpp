#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "grogu/error.hpp"
#include "grogu/evaluation.hpp"
#include "grogu/metric.hpp"
#include "grogu/needle_lm.hpp"
#include "grogu/retrieval.hpp"
#include "grogu/synth.hpp"

namespace py = pybind11;
using namespace grogu;

namespace {

GenerationTrace trace_of(const std::vector<double>& hg, const std::vector<double>& hu) {
  GenerationTrace t;
  std::vector<TokenScore> u;
  for (std::size_t i = 0; i < hg.size(); ++i) {
    t.tokens.push_back(" t" + std::to_string(i));
    t.grounded_scores.push_back({t.tokens.back(), 0.0, hg[i], hg[i], hg[i]});
    if (i < hu.size()) u.push_back({t.tokens.back(), 0.0, hu[i], hu[i], hu[i]});
  }
  t.ungrounded_scores = u;
  return t;
}

std::vector<RetrievalResult> runs_of(const std::vector<std::vector<std::string>>& ranked) {
  std::vector<RetrievalResult> out;
  for (const auto& ids : ranked) {
    RetrievalResult r;
    double s = static_cast<double>(ids.size());
    for (const auto& id : ids) r.ranked.push_back({id, s--});
    out.push_back(std::move(r));
  }
  return out;
}

py::dict sign_dict(const SignTestResult& s) {
  py::dict d;
  d["wins"] = s.wins;
  d["losses"] = s.losses;
  d["ties"] = s.ties;
  d["p_two_sided"] = s.p_two_sided;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "GroGU grounding-utility metric";
  static py::exception<Error> grogu_error(m, "GroguError", PyExc_ValueError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      grogu_error((std::string(error_kind_name(e.kind())) + ": " + e.what()).c_str());
    }
  });

  m.def("token_entropy", [](const std::vector<double>& probs) { return token_entropy(TokenDistribution::full(probs)); },
        py::arg("probs"));
  m.def(
      "entropy_bounds",
      [](const std::vector<double>& head, double residual, std::size_t vocab_size) {
        std::vector<TokenProb> entries;
        for (std::size_t i = 0; i < head.size(); ++i) entries.push_back({std::to_string(i), head[i]});
        const auto b = entropy_bounds(TokenDistribution::make(std::move(entries), residual, vocab_size));
        return py::make_tuple(b.lower, b.upper);
      },
      py::arg("head"), py::arg("residual"), py::arg("vocab_size"));
  m.def(
      "select_key_tokens",
      [](const std::vector<double>& hg, const std::vector<double>& hu, double alpha, double frac) {
        return select_key_tokens(trace_of(hg, hu), KeyTokenConfig{alpha, frac});
      },
      py::arg("grounded_entropies"), py::arg("ungrounded_entropies"), py::arg("alpha") = 0.05,
      py::arg("top_k_frac") = 0.1);
  m.def(
      "grogu",
      [](double grounded, std::optional<double> ungrounded) {
        return grogu::grogu(grounded, ungrounded, ungrounded ? UtilityMode::kFull : UtilityMode::kGroundedOnly).value;
      },
      py::arg("grounded_confidence"), py::arg("ungrounded_confidence") = py::none());
  m.def("sign_test", [](std::size_t w, std::size_t l, std::size_t t) { return sign_dict(sign_test(w, l, t)); },
        py::arg("wins"), py::arg("losses"), py::arg("ties") = 0);
  m.def(
      "mrr", [](const std::vector<std::vector<std::string>>& ranked, const std::vector<std::string>& gold) {
        return mrr(runs_of(ranked), gold);
      },
      py::arg("ranked"), py::arg("gold"));
  m.def(
      "recall_at_k",
      [](const std::vector<std::vector<std::string>>& ranked, const std::vector<std::string>& gold, std::size_t k) {
        return recall_at_k(runs_of(ranked), gold, k);
      },
      py::arg("ranked"), py::arg("gold"), py::arg("k"));

  py::class_<InvertedIndex>(m, "Index")
      .def(py::init([](const std::vector<std::tuple<std::string, std::string, std::string>>& docs, bool stem,
                       bool stopwords) {
             std::vector<DocumentRecord> corpus;
             for (const auto& [id, title, text] : docs) corpus.push_back({id, title, text});
             return InvertedIndex::build(std::move(corpus), {stem, stopwords});
           }),
           py::arg("docs"), py::arg("stem") = false, py::arg("stopwords") = false)
      .def_static("load", [](const std::string& path) { return InvertedIndex::load(path); })
      .def("save", [](const InvertedIndex& idx, const std::string& path) { idx.save(path); })
      .def_property_readonly("doc_count", &InvertedIndex::doc_count)
      .def_property_readonly("avg_doc_length", &InvertedIndex::avg_doc_length)
      .def("idf", [](const InvertedIndex& idx, const std::string& t) { return idx.idf(t); })
      .def(
          "bm25_score",
          [](const InvertedIndex& idx, const std::vector<std::string>& terms, const std::string& doc_id, double k1,
             double b) { return idx.bm25_score({k1, b}, terms, doc_id); },
          py::arg("terms"), py::arg("doc_id"), py::arg("k1") = 0.9, py::arg("b") = 0.4)
      .def(
          "retrieve",
          [](const InvertedIndex& idx, const std::string& query, std::size_t top_n, double k1, double b) {
            std::vector<std::pair<std::string, double>> out;
            for (const auto& d : idx.retrieve({k1, b}, query, top_n).ranked) out.emplace_back(d.doc_id, d.score);
            return out;
          },
          py::arg("query"), py::arg("top_n") = 10, py::arg("k1") = 0.9, py::arg("b") = 0.4);

  m.def(
      "needle_gold_eval",
      [](std::size_t queries, std::uint64_t seed) {
        auto cfg = gold_suite_config();
        cfg.queries = queries;
        cfg.seed = seed;
        const auto suite = make_synth_suite(cfg);
        const auto idx = InvertedIndex::build(suite.corpus);
        const auto set = build_gold_cases(suite.queries, idx, Bm25Params{}, 100, seed);
        NeedleLm lm(ModelRef{}, NeedleLmParams::defaults(), suite.queries);
        UtilityScorer scorer(lm, ScoringConfig{});
        const std::vector<Formulation> all = {Formulation::kPpl, Formulation::kKeyPpl, Formulation::kEntropy,
                                              Formulation::kKeyEntropy};
        GoldWinReport report;
        {
          py::gil_scoped_release release;
          report = gold_win_rates(set.cases, all, scorer);
        }
        py::dict out;
        out["evaluated"] = report.evaluated;
        for (const auto& r : report.rates) {
          py::dict e;
          e["vs_distractor"] = r.vs_distractor.win_rate();
          e["vs_random"] = r.vs_random.win_rate();
          out[py::str(std::string(formulation_name(r.formulation)))] = e;
        }
        return out;
      },
      py::arg("queries") = 50, py::arg("seed") = 7);
}
