#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "grogu/corpus.hpp"
#include "grogu/error.hpp"
#include "grogu/retrieval.hpp"
#include "oracles.hpp"

using namespace grogu;
namespace fs = std::filesystem;

namespace {

std::vector<DocumentRecord> toy() {
  return {{"d1", "", "cat sat"}, {"d2", "", "cat cat hat"}, {"d3", "", "dog"}};
}

fs::path temp_path(const std::string& name) {
  auto dir = fs::temp_directory_path() / "grogu_test_retrieval";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("tokenize_text") {
  CHECK(tokenize_text("Who lives in Balamory?") == std::vector<std::string>{"who", "lives", "in", "balamory"});
  CHECK(tokenize_text("").empty());
  CHECK(tokenize_text("cat-sat CAT") == std::vector<std::string>{"cat", "sat", "cat"});
  CHECK(tokenize_text("Café au lait") == std::vector<std::string>{"café", "au", "lait"});
  CHECK(tokenize_text("the running dogs", {true, true}) == std::vector<std::string>{"run", "dog"});
}

TEST_CASE("porter stemmer samples") {
  CHECK(porter_stem("caresses") == "caress");
  CHECK(porter_stem("ponies") == "poni");
  CHECK(porter_stem("relational") == "relat");
  CHECK(porter_stem("hopping") == "hop");
  CHECK(porter_stem("generalizations") == "gener");
}

TEST_CASE("toy index statistics") {
  const auto idx = InvertedIndex::build(toy());
  CHECK(idx.doc_count() == 3);
  CHECK(idx.document_frequency("cat") == 2);
  CHECK(idx.avg_doc_length() == 2.0);
  const auto single = InvertedIndex::build({{"only", "", "a b c d"}});
  CHECK(single.avg_doc_length() == 4.0);
  CHECK_THROWS_WITH_AS(InvertedIndex::build({}), doctest::Contains("empty corpus"), Error);
  CHECK_THROWS_WITH_AS(InvertedIndex::build({{"x", "", "a"}, {"x", "", "b"}}), doctest::Contains("x"), Error);
}

TEST_CASE("bm25 toy scores") {
  const auto idx = InvertedIndex::build(toy());
  const Bm25Params p;
  const std::vector<std::vector<std::string>> docs = {{"cat", "sat"}, {"cat", "cat", "hat"}, {"dog"}};
  CHECK(idx.bm25_score(p, {"cat"}, "d2") == doctest::Approx(0.579875).epsilon(1e-6));
  CHECK(idx.bm25_score(p, {"cat"}, "d2") == doctest::Approx(oracle::bm25(docs, 1, {"cat"}, 0.9, 0.4)).epsilon(1e-12));
  CHECK(idx.bm25_score(p, {"cat"}, "d1") == doctest::Approx(oracle::bm25(docs, 0, {"cat"}, 0.9, 0.4)).epsilon(1e-12));
  CHECK(idx.bm25_score(p, {"dog"}, "d3") == doctest::Approx(oracle::bm25(docs, 2, {"dog"}, 0.9, 0.4)).epsilon(1e-12));
  CHECK(idx.idf("dog") == doctest::Approx(0.980829).epsilon(1e-6));
  CHECK(idx.bm25_score(p, {"dog"}, "d1") == 0.0);
  CHECK_THROWS_AS(idx.bm25_score(p, {"cat"}, "nope"), Error);
}

TEST_CASE("retrieve ranks and breaks ties by doc id") {
  const auto idx = InvertedIndex::build(toy());
  const auto r = idx.retrieve(Bm25Params{}, "cat", 2, "q");
  REQUIRE(r.ranked.size() == 2);
  CHECK(r.ranked[0].doc_id == "d2");
  CHECK(r.ranked[1].doc_id == "d1");
  CHECK(idx.retrieve(Bm25Params{}, "zebra", 5, "q").ranked.empty());
  CHECK(idx.retrieve(Bm25Params{}, "cat dog", 10, "q").ranked.size() == 3);
  const auto ties = InvertedIndex::build({{"b", "", "x y"}, {"a", "", "x z"}, {"c", "", "x w"}});
  const auto rt = ties.retrieve(Bm25Params{}, "x", 3, "q");
  CHECK(rt.ranked[0].doc_id == "a");
  CHECK(rt.ranked[1].doc_id == "b");
  CHECK(rt.ranked[2].doc_id == "c");
}

TEST_CASE("bm25 is monotone in tf at fixed length") {
  const auto idx = InvertedIndex::build(
      {{"a", "", "t x x x"}, {"b", "", "t t x x"}, {"c", "", "t t t x"}, {"d", "", "y y y y"}});
  const Bm25Params p;
  CHECK(idx.bm25_score(p, {"t"}, "a") <= idx.bm25_score(p, {"t"}, "b"));
  CHECK(idx.bm25_score(p, {"t"}, "b") <= idx.bm25_score(p, {"t"}, "c"));
}

TEST_CASE("random corpora match the bm25 oracle") {
  std::mt19937_64 rng(3);
  const std::vector<std::string> words = {"a", "b", "c", "d", "e", "f", "g"};
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<DocumentRecord> corpus;
    std::vector<std::vector<std::string>> docs;
    for (int d = 0; d < 12; ++d) {
      std::vector<std::string> toks;
      std::string text;
      for (std::size_t k = 0; k < 1 + rng() % 9; ++k) {
        toks.push_back(words[rng() % words.size()]);
        text += toks.back() + " ";
      }
      docs.push_back(toks);
      corpus.push_back({"doc" + std::to_string(d), "", text});
    }
    const auto idx = InvertedIndex::build(corpus);
    const std::vector<std::string> q = {words[rng() % 7], words[rng() % 7]};
    const Bm25Params p{1.2, 0.75};
    for (int d = 0; d < 12; ++d) {
      CHECK(idx.bm25_score(p, q, "doc" + std::to_string(d)) ==
            doctest::Approx(oracle::bm25(docs, static_cast<std::size_t>(d), q, 1.2, 0.75)).epsilon(1e-12));
    }
  }
}

TEST_CASE("index round trip preserves retrieval") {
  std::mt19937_64 rng(9);
  std::vector<DocumentRecord> corpus;
  for (int d = 0; d < 200; ++d) {
    std::string text;
    for (int k = 0; k < 15; ++k) text += "w" + std::to_string(rng() % 60) + " ";
    corpus.push_back({"d" + std::to_string(d), "t", text});
  }
  const auto idx = InvertedIndex::build(corpus, {true, false});
  const auto path = temp_path("round.idx");
  idx.save(path);
  const auto back = InvertedIndex::load(path);
  CHECK(back.tokenizer() == idx.tokenizer());
  for (int q = 0; q < 100; ++q) {
    const auto text = "w" + std::to_string(rng() % 60) + " w" + std::to_string(rng() % 60);
    CHECK(idx.retrieve(Bm25Params{}, text, 10, "q").ranked == back.retrieve(Bm25Params{}, text, 10, "q").ranked);
  }
}

TEST_CASE("index version mismatch is reported") {
  const auto path = temp_path("version.idx");
  InvertedIndex::build(toy()).save(path);
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(8);
    const std::uint32_t bogus = 999;
    f.write(reinterpret_cast<const char*>(&bogus), sizeof bogus);
  }
  CHECK_THROWS_WITH_AS(InvertedIndex::load(path), doctest::Contains("version mismatch"), Error);
  CHECK_THROWS_AS(InvertedIndex::load(temp_path("absent.idx")), Error);
}

TEST_CASE("corpus and query JSONL") {
  const auto cpath = temp_path("corpus.jsonl");
  save_corpus_jsonl(cpath, toy());
  CHECK(load_corpus_jsonl(cpath) == toy());
  {
    std::ofstream(cpath) << "{\"id\":\"a\",\"title\":\"\",\"contents\":\"x\"}\n\n{broken\n";
  }
  CHECK_THROWS_WITH_AS(load_corpus_jsonl(cpath), doctest::Contains(":3"), Error);
  const auto qpath = temp_path("queries.jsonl");
  std::vector<QueryRecord> qs = {{"q1", "who?", {"hi"}, {"Edie"}, std::string("d1")}, {"q2", "what?", {}, {}, std::nullopt}};
  save_queries_jsonl(qpath, qs);
  CHECK(load_queries_jsonl(qpath) == qs);
  qs.push_back(qs.front());
  save_queries_jsonl(qpath, qs);
  CHECK_THROWS_AS(load_queries_jsonl(qpath), Error);
}
