#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <map>
#include <memory>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "grogu/corpus.hpp"
#include "grogu/evaluation.hpp"
#include "grogu/hashing.hpp"
#include "grogu/http_backend.hpp"
#include "grogu/io.hpp"
#include "grogu/needle_lm.hpp"
#include "grogu/prefdata.hpp"
#include "grogu/report.hpp"
#include "grogu/retrieval.hpp"
#include "grogu/scoring.hpp"
#include "grogu/synth.hpp"
#include "grogu/trace_store.hpp"
#include "grogu/worker_pool.hpp"

namespace grogu::cli {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kMissingInput:
      return 2;
    case ErrorKind::kTransport:
    case ErrorKind::kCapability:
    case ErrorKind::kCacheMiss:
      return 3;
    default:
      return 4;
  }
}

namespace {

constexpr const char* kVersion = "0.1.0";

struct Options {
  // inputs and outputs
  std::string corpus, queries, rewrites, index, trace_file, record_trace, prompt_config;
  std::string score_cache, input, query_text, dest;
  std::string out_dir = "runs";
  std::string run_dir;
  // model
  std::string backend = "needle";
  std::string model = "needle";
  std::string model_j = "needle-weak";
  int max_new_tokens = 64;
  std::size_t needle_window = 0;
  std::size_t needle_window_j = 60;
  double peak = 0.9;
  std::size_t record_top_k = 0;
  // metric
  double alpha = 0.05;
  double top_k_frac = 0.1;
  std::vector<std::string> metrics;
  std::string mode = "grounded-only";
  // retrieval
  double k1 = 0.9;
  double b = 0.4;
  std::size_t top_n = 10;
  bool stem = false;
  bool stopwords = false;
  // evaluation
  std::size_t search_depth = 100;
  std::size_t noise_docs = 4;
  std::string ties = "discordant";
  // preference data
  double keep_frac = 0.5;
  std::string question_slot = "original";
  // synth
  std::string suite = "gold";
  std::size_t synth_queries = 0;
  // shared
  std::uint64_t seed = 7;
  std::size_t jobs = 1;
};

// ---------------------------------------------------------------------------
// Option groups

void add_run_options(CLI::App* cmd, Options& o) {
  cmd->add_option("--out", o.out_dir, "Parent directory for timestamped run directories")
      ->capture_default_str();
  cmd->add_option("--run-dir", o.run_dir, "Exact run directory (overrides --out naming)");
  cmd->add_option("--jobs", o.jobs, "Worker threads; 0 uses every hardware thread")
      ->capture_default_str();
  cmd->add_option("--seed", o.seed, "Seed for every random choice")->capture_default_str();
}

void add_index_options(CLI::App* cmd, Options& o) {
  cmd->add_option("--corpus", o.corpus, "Corpus JSONL {id, title, contents}");
  cmd->add_option("--index", o.index, "Index file (rebuilt from --corpus on version mismatch)");
  cmd->add_option("--k1", o.k1, "BM25 k1 (published retriever default)")->capture_default_str();
  cmd->add_option("--b", o.b, "BM25 b (published retriever default)")->capture_default_str();
  cmd->add_flag("--stem", o.stem, "Porter-stem terms when building an index");
  cmd->add_flag("--stopwords", o.stopwords, "Drop English stopwords when building an index");
}

void add_model_options(CLI::App* cmd, Options& o) {
  cmd->add_option("--backend", o.backend, "needle | trace | http (http reads GROGU_HTTP_* env vars)")
      ->capture_default_str();
  cmd->add_option("--model", o.model, "Model id recorded in traces and cache keys")
      ->capture_default_str();
  cmd->add_option("--max-new-tokens", o.max_new_tokens, "Greedy generation budget")
      ->capture_default_str();
  cmd->add_option("--trace-file", o.trace_file, "Trace JSONL replayed by --backend trace");
  cmd->add_option("--record-trace", o.record_trace, "Append every backend call to this trace JSONL");
  cmd->add_option("--record-top-k", o.record_top_k,
                  "Truncate recorded distributions to the top k tokens; 0 keeps them whole")
      ->capture_default_str();
  cmd->add_option("--needle-window", o.needle_window,
                  "Needle LM visible document tokens; 0 is unbounded")
      ->capture_default_str();
  cmd->add_option("--needle-peak", o.peak, "Needle LM probability on copied tokens")
      ->capture_default_str();
  cmd->add_option("--prompt-config", o.prompt_config, "JSON prompt template override");
}

void add_metric_options(CLI::App* cmd, Options& o, const std::string& metric_help) {
  cmd->add_option("--alpha", o.alpha, "Key-token entropy threshold in nats (published default)")
      ->capture_default_str();
  cmd->add_option("--top-k-frac", o.top_k_frac,
                  "Fallback fraction of highest-entropy tokens (published default)")
      ->capture_default_str();
  cmd->add_option("--metric", o.metrics, metric_help)->delimiter(',');
  cmd->add_option("--mode", o.mode,
                  "grounded-only (confidence with context) | full (minus ungrounded confidence)")
      ->capture_default_str();
}

// ---------------------------------------------------------------------------
// Run directory and manifest

std::string utc_stamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%d-%H%M%S", &tm);
  return buf;
}

ordered_json config_json(const Options& o, const std::string& command) {
  ordered_json c;
  c["command"] = command;
  c["corpus"] = o.corpus;
  c["queries"] = o.queries;
  c["rewrites"] = o.rewrites;
  c["index"] = o.index;
  c["input"] = o.input;
  c["query_text"] = o.query_text;
  c["backend"] = o.backend;
  c["model"] = o.model;
  c["model_j"] = o.model_j;
  c["max_new_tokens"] = o.max_new_tokens;
  c["trace_file"] = o.trace_file;
  c["record_trace"] = o.record_trace;
  c["record_top_k"] = o.record_top_k;
  c["needle_window"] = o.needle_window;
  c["needle_window_j"] = o.needle_window_j;
  c["needle_peak"] = o.peak;
  c["prompt_config"] = o.prompt_config;
  c["alpha"] = o.alpha;
  c["top_k_frac"] = o.top_k_frac;
  c["metrics"] = o.metrics;
  c["mode"] = o.mode;
  c["k1"] = o.k1;
  c["b"] = o.b;
  c["stem"] = o.stem;
  c["stopwords"] = o.stopwords;
  c["top_n"] = o.top_n;
  c["search_depth"] = o.search_depth;
  c["noise_docs"] = o.noise_docs;
  c["ties"] = o.ties;
  c["keep_frac"] = o.keep_frac;
  c["question_slot"] = o.question_slot;
  c["score_cache"] = o.score_cache;
  c["seed"] = o.seed;
  c["jobs"] = o.jobs;
  return c;
}

class Run {
 public:
  Run(const Options& o, const std::string& command) {
    config_ = config_json(o, command);
    const auto config_hash = sha256_hex(config_.dump());
    dir_ = o.run_dir.empty() ? fs::path(o.out_dir) / (utc_stamp() + "-" + config_hash.substr(0, 8))
                             : fs::path(o.run_dir);
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) fail(ErrorKind::kIo, "cannot create run directory " + dir_.string() + ": " + ec.message());
    manifest_["tool"] = "grogu";
    manifest_["version"] = kVersion;
    manifest_["config"] = config_;
    manifest_["config_sha256"] = config_hash;
    auto inputs = ordered_json::object();
    for (const auto* p : {&o.corpus, &o.queries, &o.rewrites, &o.trace_file, &o.prompt_config, &o.input}) {
      if (!p->empty() && fs::is_regular_file(*p)) inputs[*p] = sha256_hex(read_file(*p));
    }
    manifest_["inputs"] = std::move(inputs);
    manifest_["outputs"] = ordered_json::array();
    flush();
  }

  const fs::path& dir() const { return dir_; }

  fs::path write(const std::string& name, const std::string& bytes) {
    const auto path = dir_ / name;
    write_file_atomic(path, bytes);
    manifest_["outputs"].push_back({{"file", name}, {"sha256", sha256_hex(bytes)}});
    flush();
    return path;
  }

 private:
  void flush() { write_file_atomic(dir_ / "manifest.json", manifest_.dump(2) + "\n"); }

  ordered_json config_;
  ordered_json manifest_;
  fs::path dir_;
};

// ---------------------------------------------------------------------------
// Inputs

Bm25Params bm25_of(const Options& o) {
  Bm25Params p{o.k1, o.b};
  p.validate();
  return p;
}

void require(const std::string& value, const char* flag) {
  if (value.empty()) fail(ErrorKind::kConfig, std::string(flag) + " is required");
}

InvertedIndex load_index(const Options& o, std::ostream& err) {
  const TokenizerOptions tok{o.stem, o.stopwords};
  if (!o.index.empty() && fs::exists(o.index)) {
    try {
      return InvertedIndex::load(o.index);
    } catch (const Error& e) {
      const std::string what = e.what();
      if (e.kind() != ErrorKind::kValidation || what.find("version mismatch") == std::string::npos ||
          o.corpus.empty()) {
        throw;
      }
      err << "warning: " << what << "; rebuilding from " << o.corpus << "\n";
      auto index = InvertedIndex::build(load_corpus_jsonl(o.corpus), tok);
      index.save(o.index);
      return index;
    }
  }
  if (o.corpus.empty()) {
    if (!o.index.empty()) fail(ErrorKind::kMissingInput, "no such index: " + o.index);
    fail(ErrorKind::kConfig, "--corpus or --index is required");
  }
  return InvertedIndex::build(load_corpus_jsonl(o.corpus), tok);
}

std::vector<Formulation> formulations_of(const Options& o, bool default_all) {
  std::vector<Formulation> out;
  for (const auto& m : o.metrics) {
    if (m == "all") {
      out = {Formulation::kPpl, Formulation::kKeyPpl, Formulation::kEntropy, Formulation::kKeyEntropy};
      continue;
    }
    out.push_back(parse_formulation(m));
  }
  if (out.empty()) {
    if (default_all) {
      return {Formulation::kPpl, Formulation::kKeyPpl, Formulation::kEntropy, Formulation::kKeyEntropy};
    }
    return {Formulation::kKeyEntropy};
  }
  std::vector<Formulation> unique;
  for (auto f : out) {
    if (std::find(unique.begin(), unique.end(), f) == unique.end()) unique.push_back(f);
  }
  return unique;
}

Formulation single_formulation(const Options& o) {
  const auto fs = formulations_of(o, false);
  if (fs.size() != 1) fail(ErrorKind::kConfig, "this command takes exactly one --metric");
  return fs.front();
}

UtilityMode mode_of(const Options& o) {
  if (o.mode == "grounded-only" || o.mode == "grounded_only") return UtilityMode::kGroundedOnly;
  if (o.mode == "full") return UtilityMode::kFull;
  fail(ErrorKind::kConfig, "unknown --mode '" + o.mode + "' (expected grounded-only|full)");
}

ScoringConfig scoring_of(const Options& o) {
  ScoringConfig c;
  if (!o.prompt_config.empty()) c.prompt = PromptSpec::load_json(o.prompt_config);
  c.keys = KeyTokenConfig{o.alpha, o.top_k_frac};
  c.keys.validate();
  c.mode = mode_of(o);
  return c;
}

// Owns the backend stack: base model, optional recorder on top.
class ModelStack {
 public:
  ModelStack(const Options& o, const std::string& model_id, std::size_t window,
             const std::vector<QueryRecord>& answer_key,
             std::shared_ptr<TraceStore> recording_store) {
    ModelRef ref;
    ref.backend_kind = parse_backend_kind(o.backend);
    ref.model_id = model_id;
    ref.max_new_tokens = o.max_new_tokens;
    if (o.max_new_tokens <= 0) fail(ErrorKind::kConfig, "--max-new-tokens must be positive");
    switch (ref.backend_kind) {
      case BackendKind::kNeedle: {
        auto params = NeedleLmParams::defaults();
        params.peak = o.peak;
        if (window > 0) params.window = window;
        base_ = std::make_unique<NeedleLm>(ref, params, answer_key);
        break;
      }
      case BackendKind::kTrace: {
        require(o.trace_file, "--trace-file");
        if (!fs::exists(o.trace_file)) fail(ErrorKind::kMissingInput, "no such trace file: " + o.trace_file);
        base_ = std::make_unique<TraceBackend>(ref, std::make_shared<const TraceStore>(o.trace_file));
        break;
      }
      case BackendKind::kHttp:
        base_ = std::make_unique<HttpBackend>(ref, HttpBackendConfig::from_env());
        break;
    }
    if (recording_store) {
      std::optional<std::size_t> top_k;
      if (o.record_top_k > 0) top_k = o.record_top_k;
      recorder_ = std::make_unique<RecordingBackend>(*base_, std::move(recording_store), top_k);
    }
  }

  LanguageModel& get() { return recorder_ ? *recorder_ : *base_; }

 private:
  std::unique_ptr<LanguageModel> base_;
  std::unique_ptr<RecordingBackend> recorder_;
};

std::shared_ptr<TraceStore> recording_store(const Options& o) {
  if (o.record_trace.empty()) return nullptr;
  return std::make_shared<TraceStore>(o.record_trace);
}

std::vector<QueryRecord> answer_key_for(const Options& o, const std::vector<QueryRecord>& queries) {
  if (o.backend == "needle" && queries.empty()) {
    fail(ErrorKind::kConfig, "the needle backend needs --queries with gold answers");
  }
  return queries;
}

void fail_if_nothing_evaluated(std::size_t evaluated, const std::vector<SkippedCase>& skipped) {
  if (evaluated > 0) return;
  if (skipped.empty()) fail(ErrorKind::kValidation, "no usable cases");
  for (const auto& s : skipped) {
    if (s.kind) fail(*s.kind, "every case failed; first: " + s.qid + ": " + s.reason);
  }
  fail(ErrorKind::kValidation, "no usable cases; first skipped: " + skipped.front().qid + ": " +
                                   skipped.front().reason);
}

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? sep : "") + parts[i];
  return out;
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// Subcommands

int cmd_index(const Options& o, std::ostream& out, std::ostream&) {
  require(o.corpus, "--corpus");
  Run run(o, "index");
  const auto index = InvertedIndex::build(load_corpus_jsonl(o.corpus), TokenizerOptions{o.stem, o.stopwords});
  const fs::path path = o.index.empty() ? run.dir() / "index.bin" : fs::path(o.index);
  index.save(path);
  out << "indexed " << index.doc_count() << " documents (avg length "
      << index.avg_doc_length() << ") -> " << path.string() << "\n";
  return 0;
}

int cmd_retrieve(const Options& o, std::ostream& out, std::ostream& err) {
  if (o.query_text.empty() && o.queries.empty()) fail(ErrorKind::kConfig, "--query or --queries is required");
  if (o.top_n == 0) fail(ErrorKind::kValidation, "--top-n must be at least 1");
  const auto index = load_index(o, err);
  const auto bm25 = bm25_of(o);
  Run run(o, "retrieve");
  auto ranked_json = [](const RetrievalResult& r) {
    auto arr = ordered_json::array();
    for (const auto& d : r.ranked) arr.push_back(ordered_json::array({d.doc_id, d.score}));
    return arr;
  };
  if (!o.query_text.empty()) {
    const auto r = index.retrieve(bm25, o.query_text, o.top_n, "query");
    for (std::size_t i = 0; i < r.ranked.size(); ++i) {
      out << (i + 1) << "\t" << r.ranked[i].doc_id << "\t" << num(r.ranked[i].score) << "\n";
    }
    ordered_json j;
    j["query"] = o.query_text;
    j["ranked"] = ranked_json(r);
    run.write("retrieval.json", j.dump(2) + "\n");
    return 0;
  }
  const auto queries = load_queries_jsonl(o.queries);
  std::vector<RetrievalResult> runs;
  std::string lines;
  for (const auto& q : queries) {
    runs.push_back(index.retrieve(bm25, q.question, o.top_n, q.qid));
    ordered_json j;
    j["qid"] = q.qid;
    j["ranked"] = ranked_json(runs.back());
    lines += j.dump() + "\n";
  }
  run.write("run.jsonl", lines);
  const bool all_gold = !queries.empty() && std::all_of(queries.begin(), queries.end(),
                                                         [](const QueryRecord& q) { return q.gold_doc_id.has_value(); });
  if (all_gold) {
    std::vector<std::string> golds;
    for (const auto& q : queries) golds.push_back(*q.gold_doc_id);
    ordered_json m;
    m["queries"] = queries.size();
    m["mrr"] = mrr(runs, golds);
    m["recall_at_" + std::to_string(o.top_n)] = recall_at_k(runs, golds, o.top_n);
    run.write("metrics.json", m.dump(2) + "\n");
    out << "MRR " << m["mrr"].get<double>() << ", Recall@" << o.top_n << " "
        << recall_at_k(runs, golds, o.top_n) << " over " << queries.size() << " queries\n";
  } else {
    out << "retrieved for " << queries.size() << " queries\n";
  }
  return 0;
}

int cmd_score(const Options& o, std::ostream& out, std::ostream& err) {
  require(o.queries, "--queries");
  const auto index = load_index(o, err);
  const auto bm25 = bm25_of(o);
  const auto queries = load_queries_jsonl(o.queries);
  const auto formulations = formulations_of(o, false);
  Run run(o, "score");
  ModelStack stack(o, o.model, o.needle_window, answer_key_for(o, queries), recording_store(o));
  UtilityScorer scorer(stack.get(), scoring_of(o));
  auto outcomes = parallel_map(queries.size(), o.jobs, [&](std::size_t i) {
    const auto& q = queries[i];
    const auto r = index.retrieve(bm25, q.question, o.top_n, q.qid);
    GroundingContext ctx;
    for (const auto& d : r.ranked) ctx.documents.push_back(index.document(d.doc_id));
    const auto ct = scorer.trace(q.question, q.history, ctx);
    std::vector<double> values;
    for (auto f : formulations) values.push_back(scorer.utility(ct, f, q.question, q.history).value);
    return std::make_tuple(ct.answer, ctx.doc_ids(), values);
  });
  std::string csv = "qid,answer,doc_ids";
  for (auto f : formulations) csv += "," + std::string(formulation_name(f));
  csv += "\n";
  std::size_t ok = 0;
  std::vector<SkippedCase> skipped;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    auto& oc = outcomes[i];
    if (!oc.value) {
      skipped.push_back({queries[i].qid, oc.error, oc.error_kind});
      err << "warning: " << queries[i].qid << ": " << oc.error << "\n";
      continue;
    }
    ++ok;
    const auto& [answer, ids, values] = *oc.value;
    csv += queries[i].qid + ",\"" + answer + "\"," + join(ids, ";");
    for (double v : values) csv += "," + num(v);
    csv += "\n";
  }
  fail_if_nothing_evaluated(ok, skipped);
  run.write("utilities.csv", csv);
  out << "scored " << ok << " of " << queries.size() << " queries -> " << (run.dir() / "utilities.csv").string()
      << "\n";
  return 0;
}

int cmd_eval_gold(const Options& o, std::ostream& out, std::ostream& err) {
  require(o.queries, "--queries");
  const auto index = load_index(o, err);
  const auto queries = load_queries_jsonl(o.queries);
  const auto formulations = formulations_of(o, true);
  Run run(o, "eval-gold");
  auto set = build_gold_cases(queries, index, bm25_of(o), o.search_depth, o.seed);
  if (set.cases.empty()) fail_if_nothing_evaluated(0, set.skipped);
  ModelStack stack(o, o.model, o.needle_window, answer_key_for(o, queries), recording_store(o));
  UtilityScorer scorer(stack.get(), scoring_of(o));
  auto report = gold_win_rates(set.cases, formulations, scorer, o.jobs);
  report.skipped.insert(report.skipped.begin(), set.skipped.begin(), set.skipped.end());
  fail_if_nothing_evaluated(report.evaluated, report.skipped);
  const auto json = gold_report_json(report);
  run.write("gold_report.json", json);
  run.write("gold_cases.csv", gold_report_csv(report));
  out << summarize_report_json(json);
  return 0;
}

int cmd_eval_concordance(const Options& o, std::ostream& out, std::ostream& err) {
  require(o.queries, "--queries");
  const auto index = load_index(o, err);
  const auto queries = load_queries_jsonl(o.queries);
  const auto formulations = formulations_of(o, true);
  const auto bm25 = bm25_of(o);
  TiePolicy ties;
  if (o.ties == "discordant") ties = TiePolicy::kDiscordant;
  else if (o.ties == "split") ties = TiePolicy::kSplit;
  else fail(ErrorKind::kConfig, "unknown --ties '" + o.ties + "' (expected discordant|split)");
  Run run(o, "eval-concordance");
  std::vector<SkippedCase> skipped;
  const auto contexts = build_concordance_contexts(queries, index, bm25, o.noise_docs, o.seed, &skipped);
  if (contexts.empty()) fail_if_nothing_evaluated(0, skipped);
  ModelStack stack(o, o.model, o.needle_window, answer_key_for(o, queries), recording_store(o));
  UtilityScorer scorer(stack.get(), scoring_of(o));
  auto report = concordance_eval(contexts, formulations, scorer, &index, bm25, ties, o.jobs);
  report.skipped.insert(report.skipped.begin(), skipped.begin(), skipped.end());
  fail_if_nothing_evaluated(report.total, report.skipped);
  const auto json = concordance_report_json(report);
  run.write("concordance_report.json", json);
  run.write("concordance_cases.csv", concordance_report_csv(report));
  out << summarize_report_json(json);
  return 0;
}

int cmd_eval_layout(const Options& o, std::ostream& out, std::ostream& err) {
  require(o.queries, "--queries");
  const auto index = load_index(o, err);
  const auto queries = load_queries_jsonl(o.queries);
  const auto formulation = single_formulation(o);
  if (o.model == o.model_j) fail(ErrorKind::kConfig, "--model and --model-j must differ");
  Run run(o, "eval-layout");
  std::vector<SkippedCase> skipped;
  const auto cases = build_layout_cases(queries, index, bm25_of(o), &skipped);
  if (cases.empty()) fail_if_nothing_evaluated(0, skipped);
  const auto key = answer_key_for(o, queries);
  auto store = recording_store(o);
  ModelStack stack_i(o, o.model, o.needle_window, key, store);
  ModelStack stack_j(o, o.model_j, o.needle_window_j, key, store);
  const auto cfg = scoring_of(o);
  UtilityScorer scorer_i(stack_i.get(), cfg);
  UtilityScorer scorer_j(stack_j.get(), cfg);
  auto report = layout_selection_eval(scorer_i, scorer_j, cases, formulation, o.seed, o.jobs);
  report.skipped.insert(report.skipped.begin(), skipped.begin(), skipped.end());
  fail_if_nothing_evaluated(report.table.size(), report.skipped);
  const auto json = layout_report_json(report, formulation);
  run.write("layout_report.json", json);
  run.write("layout_cases.csv", layout_report_csv(report));
  out << summarize_report_json(json);
  return 0;
}

int cmd_build_prefs(const Options& o, std::ostream& out, std::ostream& err) {
  require(o.rewrites, "--rewrites");
  const auto index = load_index(o, err);
  const auto sets = load_rewrites_jsonl(o.rewrites);
  std::vector<QueryRecord> key;
  if (!o.queries.empty()) key = load_queries_jsonl(o.queries);
  RewriteScoringOptions opts;
  opts.formulation = single_formulation(o);
  opts.top_n = o.top_n;
  if (o.top_n == 0) fail(ErrorKind::kValidation, "--top-n must be at least 1");
  opts.question_slot = parse_question_slot(o.question_slot);
  opts.bm25 = bm25_of(o);
  if (!(o.keep_frac > 0.0 && o.keep_frac <= 1.0)) fail(ErrorKind::kValidation, "--keep-frac must be in (0, 1]");
  Run run(o, "build-prefs");
  ModelStack stack(o, o.model, o.needle_window, answer_key_for(o, key), recording_store(o));
  UtilityScorer scorer(stack.get(), scoring_of(o));
  std::unique_ptr<ScoreCache> cache;
  if (!o.score_cache.empty()) cache = std::make_unique<ScoreCache>(o.score_cache);
  const auto scores = score_rewrite_sets(sets, index, scorer, opts, cache.get(), o.jobs);

  std::size_t scored = 0;
  std::vector<SkippedCase> failures;
  std::string csv = "qid,rewrite,utility,docs_retrieved\n";
  for (const auto& s : scores) {
    for (const auto& r : s.scores) {
      ++scored;
      csv += s.qid + ",\"" + r.rewrite + "\"," + num(r.utility) + "," + std::to_string(r.retrieval.ranked.size()) + "\n";
      if (r.empty_retrieval) err << "warning: " << s.qid << ": rewrite '" << r.rewrite << "' retrieved nothing\n";
    }
    for (const auto& f : s.failures) {
      failures.push_back({s.qid, f.error, f.kind});
      err << "warning: " << s.qid << ": rewrite '" << f.rewrite << "' failed: " << f.error << "\n";
    }
  }
  fail_if_nothing_evaluated(scored, failures);

  std::vector<DroppedQuery> dropped;
  const auto sft = build_sft_records(sets, scores, &dropped);
  const auto pairs = build_dpo_pairs(sets, scores, &dropped);
  const auto kept = filter_by_gap(pairs, o.keep_frac);
  for (const auto& d : dropped) err << "note: " << d.qid << ": " << d.reason << "\n";
  if (sft.empty()) err << "warning: no SFT records\n";
  if (kept.empty()) err << "warning: no DPO pairs\n";
  run.write("rewrite_scores.csv", csv);
  run.write("sft.jsonl", sft_jsonl(sft));
  run.write("dpo.jsonl", dpo_jsonl(kept));
  out << sft.size() << " SFT records, " << kept.size() << " of " << pairs.size()
      << " DPO pairs kept -> " << run.dir().string() << "\n";
  return 0;
}

void flatten(const ordered_json& j, const std::string& prefix, std::string& csv) {
  if (j.is_object()) {
    for (auto it = j.begin(); it != j.end(); ++it) flatten(it.value(), prefix.empty() ? it.key() : prefix + "." + it.key(), csv);
  } else if (j.is_array()) {
    for (std::size_t i = 0; i < j.size(); ++i) {
      const auto& e = j[i];
      std::string label = std::to_string(i);
      if (e.is_object()) {
        if (e.contains("formulation")) label = e["formulation"].get<std::string>();
        else if (e.contains("metric")) label = e["metric"].get<std::string>();
        else if (e.contains("qid")) label = e["qid"].get<std::string>();
      }
      flatten(e, prefix + "." + label, csv);
    }
  } else if (j.is_number()) {
    csv += prefix + "," + j.dump() + "\n";
  } else if (j.is_string()) {
    csv += prefix + ",\"" + j.get<std::string>() + "\"\n";
  }
}

int cmd_report(const Options& o, std::ostream& out, std::ostream&) {
  require(o.input, "--input");
  const auto text = read_file(o.input);
  const auto summary = summarize_report_json(text);
  Run run(o, "report");
  std::string csv = "field,value\n";
  flatten(ordered_json::parse(text), "", csv);
  run.write("summary.txt", summary);
  run.write("summary.csv", csv);
  out << summary;
  return 0;
}

int cmd_sweep(const Options& o, std::ostream& out, std::ostream& err) {
  require(o.queries, "--queries");
  const auto index = load_index(o, err);
  const auto queries = load_queries_jsonl(o.queries);
  const auto formulation = single_formulation(o);
  Run run(o, "sweep");
  auto set = build_gold_cases(queries, index, bm25_of(o), o.search_depth, o.seed);
  if (set.cases.empty()) fail_if_nothing_evaluated(0, set.skipped);
  ModelStack stack(o, o.model, o.needle_window, answer_key_for(o, queries), recording_store(o));
  auto base = scoring_of(o);
  UtilityScorer tracer(stack.get(), base);
  // Traces do not depend on alpha or K: compute them once.
  auto traced = parallel_map(set.cases.size(), o.jobs, [&](std::size_t i) {
    const auto& c = set.cases[i];
    std::array<ContextTrace, 3> t;
    t[0] = tracer.trace(c.query.question, c.query.history, GroundingContext{{c.gold_doc}});
    t[1] = tracer.trace(c.query.question, c.query.history, GroundingContext{{c.distractor_doc}});
    t[2] = tracer.trace(c.query.question, c.query.history, GroundingContext{{c.random_doc}});
    return t;
  });
  std::size_t evaluated = 0;
  for (const auto& t : traced) evaluated += t.value ? 1 : 0;
  std::vector<SkippedCase> skipped = set.skipped;
  for (std::size_t i = 0; i < traced.size(); ++i) {
    if (!traced[i].value) skipped.push_back({set.cases[i].query.qid, traced[i].error, traced[i].error_kind});
  }
  fail_if_nothing_evaluated(evaluated, skipped);

  std::string csv = "alpha,top_k_frac,win_distractor,win_random,mean\n";
  double best_mean = -1.0, best_alpha = 0.0, best_k = 0.0;
  for (int ai = 0; ai <= 10; ++ai) {
    for (int ki = 1; ki <= 10; ++ki) {
      auto cfg = base;
      cfg.keys = KeyTokenConfig{ai / 20.0, ki / 10.0};
      UtilityScorer scorer(stack.get(), cfg);
      WinTally dst, rnd;
      for (std::size_t i = 0; i < traced.size(); ++i) {
        if (!traced[i].value) continue;
        const auto& q = set.cases[i].query;
        const auto& t = *traced[i].value;
        const double g = scorer.utility(t[0], formulation, q.question, q.history).value;
        const double d = scorer.utility(t[1], formulation, q.question, q.history).value;
        const double r = scorer.utility(t[2], formulation, q.question, q.history).value;
        (g > d ? dst.wins : g < d ? dst.losses : dst.ties)++;
        (g > r ? rnd.wins : g < r ? rnd.losses : rnd.ties)++;
      }
      const double mean = 0.5 * (dst.win_rate() + rnd.win_rate());
      csv += num(ai / 20.0) + "," + num(ki / 10.0) + "," + num(dst.win_rate()) + "," + num(rnd.win_rate()) + "," +
             num(mean) + "\n";
      if (mean > best_mean) {
        best_mean = mean;
        best_alpha = ai / 20.0;
        best_k = ki / 10.0;
      }
    }
  }
  ordered_json best;
  best["formulation"] = formulation_name(formulation);
  best["alpha"] = best_alpha;
  best["top_k_frac"] = best_k;
  best["mean_win_rate"] = best_mean;
  best["evaluated"] = evaluated;
  run.write("sweep.csv", csv);
  run.write("sweep_best.json", best.dump(2) + "\n");
  out << "best alpha " << best_alpha << ", K " << best_k << " (mean win rate " << best_mean << "%)\n";
  return 0;
}

int cmd_synth(const Options& o, std::ostream& out, std::ostream&) {
  require(o.dest, "--dest");
  const fs::path dest(o.dest);
  std::error_code ec;
  fs::create_directories(dest, ec);
  if (ec) fail(ErrorKind::kIo, "cannot create " + dest.string() + ": " + ec.message());
  ordered_json meta;
  meta["suite"] = o.suite;
  meta["seed"] = o.seed;
  SynthSuite suite;
  if (o.suite == "prefs") {
    auto prefs = make_pref_suite(o.synth_queries ? o.synth_queries : 4, o.seed);
    save_rewrites_jsonl(dest / "rewrites.jsonl", prefs.rewrites);
    suite = std::move(prefs.suite);
  } else {
    SynthConfig c;
    if (o.suite == "gold") c = gold_suite_config();
    else if (o.suite == "concordance") c = concordance_suite_config();
    else if (o.suite == "layout") c = layout_suite_config();
    else fail(ErrorKind::kConfig, "unknown --suite '" + o.suite + "' (expected gold|concordance|layout|prefs)");
    c.seed = o.seed;
    if (o.synth_queries) c.queries = o.synth_queries;
    suite = make_synth_suite(c);
    meta["needle_window"] = c.needle_window ? ordered_json(*c.needle_window) : ordered_json(nullptr);
  }
  meta["queries"] = suite.queries.size();
  meta["documents"] = suite.corpus.size();
  save_corpus_jsonl(dest / "corpus.jsonl", suite.corpus);
  save_queries_jsonl(dest / "queries.jsonl", suite.queries);
  write_file_atomic(dest / "suite.json", meta.dump(2) + "\n");
  out << "wrote " << o.suite << " suite: " << suite.corpus.size() << " documents, " << suite.queries.size()
      << " queries -> " << dest.string() << "\n";
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"grogu: grounding-utility scoring, evaluation, and preference data for RAG"};
  app.set_version_flag("--version", kVersion);
  app.set_config("--config", "", "INI/TOML file with option values (flags override)");
  app.require_subcommand(1);

  using Handler = int (*)(const Options&, std::ostream&, std::ostream&);
  std::vector<std::pair<CLI::App*, Handler>> handlers;
  auto add = [&](const char* name, const char* help, Handler h) {
    auto* cmd = app.add_subcommand(name, help);
    add_run_options(cmd, o);
    handlers.emplace_back(cmd, h);
    return cmd;
  };
  const std::string single = "Utility formulation: keyentropy | entropy | keyppl | ppl";
  const std::string several = "Comma-separated formulations or 'all' (default all)";

  auto* index = add("index", "Build a BM25 index from a corpus JSONL", cmd_index);
  add_index_options(index, o);

  auto* retrieve = add("retrieve", "Rank documents for one query or a query file", cmd_retrieve);
  add_index_options(retrieve, o);
  retrieve->add_option("--query", o.query_text, "Query text");
  retrieve->add_option("--queries", o.queries, "Query JSONL; reports MRR/Recall when gold ids exist");
  retrieve->add_option("--top-n", o.top_n, "Documents per query")->capture_default_str();

  auto* score = add("score", "Grounding utility of each query's top-N retrieved documents", cmd_score);
  add_index_options(score, o);
  add_model_options(score, o);
  add_metric_options(score, o, single + " (comma list allowed)");
  score->add_option("--queries", o.queries, "Query JSONL");
  score->add_option("--top-n", o.top_n, "Documents per query (published default)")->capture_default_str();

  auto* gold = add("eval-gold", "Gold identification win rates against distractor and random docs",
                   cmd_eval_gold);
  add_index_options(gold, o);
  add_model_options(gold, o);
  add_metric_options(gold, o, several);
  gold->add_option("--queries", o.queries, "Query JSONL with gold answers and gold doc ids");
  gold->add_option("--search-depth", o.search_depth, "Retrieved documents searched for a distractor")
      ->capture_default_str();

  auto* conc = add("eval-concordance", "Concordance between utility and answer correctness",
                   cmd_eval_concordance);
  add_index_options(conc, o);
  add_model_options(conc, o);
  add_metric_options(conc, o, several);
  conc->add_option("--queries", o.queries, "Query JSONL with gold answers and gold doc ids");
  conc->add_option("--noise-docs", o.noise_docs, "Non-gold documents per context")->capture_default_str();
  conc->add_option("--ties", o.ties, "Utility ties: discordant | split")->capture_default_str();

  auto* layout = add("eval-layout", "Context layout selection with two models", cmd_eval_layout);
  add_index_options(layout, o);
  add_model_options(layout, o);
  add_metric_options(layout, o, single);
  layout->add_option("--queries", o.queries, "Query JSONL with gold answers and gold doc ids");
  layout->add_option("--model-j", o.model_j, "Second model id")->capture_default_str();
  layout->add_option("--needle-window-j", o.needle_window_j,
                     "Second Needle LM visible document tokens; 0 is unbounded")
      ->capture_default_str();

  auto* prefs = add("build-prefs", "Score rewrites and emit SFT and DPO JSONL", cmd_build_prefs);
  add_index_options(prefs, o);
  add_model_options(prefs, o);
  add_metric_options(prefs, o, single);
  prefs->add_option("--rewrites", o.rewrites, "Rewrite JSONL {qid, conversation, question, rewrites}");
  prefs->add_option("--queries", o.queries, "Query JSONL (answer key for the needle backend)");
  prefs->add_option("--top-n", o.top_n, "Documents retrieved per rewrite (published default)")
      ->capture_default_str();
  prefs->add_option("--keep-frac", o.keep_frac, "Fraction of pairs kept by gap (published default)")
      ->capture_default_str();
  prefs->add_option("--question-slot", o.question_slot,
                    "Generation prompt question: original | rewrite | conversation")
      ->capture_default_str();
  prefs->add_option("--score-cache", o.score_cache, "Append-only JSONL cache of rewrite utilities");

  auto* report = add("report", "Plain-text and CSV summary of a report JSON", cmd_report);
  report->add_option("--input", o.input, "Report JSON written by an eval command");

  auto* sweep = add("sweep", "Grid over alpha in [0, 0.5] and K in [0.1, 1] by gold win rate", cmd_sweep);
  add_index_options(sweep, o);
  add_model_options(sweep, o);
  add_metric_options(sweep, o, single);
  sweep->add_option("--queries", o.queries, "Validation query JSONL with gold doc ids");
  sweep->add_option("--search-depth", o.search_depth, "Retrieved documents searched for a distractor")
      ->capture_default_str();

  auto* synth = add("synth", "Write a seeded synthetic Needle LM suite", cmd_synth);
  synth->add_option("--suite", o.suite, "gold | concordance | layout | prefs")->capture_default_str();
  synth->add_option("--dest", o.dest, "Output directory");
  synth->add_option("--num-queries", o.synth_queries, "Override the suite's query count");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 4;
  }
  for (const auto& [cmd, handler] : handlers) {
    if (!cmd->parsed()) continue;
    try {
      return handler(o, out, err);
    } catch (const Error& e) {
      err << "error[" << error_kind_name(e.kind()) << "]: " << e.what() << "\n";
      return exit_code_for(e.kind());
    } catch (const std::exception& e) {
      err << "error[internal]: " << e.what() << "\n";
      return 1;
    }
  }
  return 4;
}

}  // namespace grogu::cli
