#include "grogu/corpus.hpp"

#include <set>
#include <sstream>

#include <json.hpp>

#include "grogu/error.hpp"
#include "grogu/io.hpp"

namespace grogu {

using ordered_json = nlohmann::ordered_json;

namespace {

std::string where(const std::filesystem::path& path, std::size_t line) {
  return path.string() + ":" + std::to_string(line);
}

ordered_json parse_row(std::string_view text, const std::filesystem::path& path,
                       std::size_t line) {
  try {
    auto row = ordered_json::parse(text);
    if (!row.is_object()) fail(ErrorKind::kParse, where(path, line) + ": expected a JSON object");
    return row;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kParse, where(path, line) + ": " + e.what());
  }
}

std::string required_string(const ordered_json& row, const char* field,
                            const std::filesystem::path& path, std::size_t line) {
  auto it = row.find(field);
  if (it == row.end() || !it->is_string()) {
    fail(ErrorKind::kParse, where(path, line) + ": missing string field '" + field + "'");
  }
  return it->get<std::string>();
}

std::vector<std::string> string_list(const ordered_json& row, const char* field,
                                     const std::filesystem::path& path, std::size_t line) {
  std::vector<std::string> out;
  auto it = row.find(field);
  if (it == row.end() || it->is_null()) return out;
  if (!it->is_array()) {
    fail(ErrorKind::kParse, where(path, line) + ": field '" + field + "' must be a list");
  }
  for (const auto& v : *it) {
    if (!v.is_string()) {
      fail(ErrorKind::kParse, where(path, line) + ": field '" + field + "' must hold strings");
    }
    out.push_back(v.get<std::string>());
  }
  return out;
}

}  // namespace

std::vector<DocumentRecord> load_corpus_jsonl(const std::filesystem::path& path) {
  std::vector<DocumentRecord> docs;
  for_each_line(path, [&](std::string_view text, std::size_t line) {
    auto row = parse_row(text, path, line);
    DocumentRecord d;
    d.doc_id = required_string(row, "id", path, line);
    if (auto it = row.find("title"); it != row.end() && it->is_string()) {
      d.title = it->get<std::string>();
    }
    d.contents = required_string(row, "contents", path, line);
    if (d.contents.empty()) {
      fail(ErrorKind::kValidation, where(path, line) + ": document '" + d.doc_id +
                                       "' has empty contents");
    }
    docs.push_back(std::move(d));
  });
  return docs;
}

void save_corpus_jsonl(const std::filesystem::path& path,
                       const std::vector<DocumentRecord>& docs) {
  std::string out;
  for (const auto& d : docs) {
    ordered_json row;
    row["id"] = d.doc_id;
    row["title"] = d.title;
    row["contents"] = d.contents;
    out += row.dump();
    out += '\n';
  }
  write_file_atomic(path, out);
}

std::vector<QueryRecord> load_queries_jsonl(const std::filesystem::path& path) {
  std::vector<QueryRecord> queries;
  std::set<std::string> seen;
  for_each_line(path, [&](std::string_view text, std::size_t line) {
    auto row = parse_row(text, path, line);
    QueryRecord q;
    q.qid = required_string(row, "qid", path, line);
    q.question = required_string(row, "question", path, line);
    q.history = string_list(row, "history", path, line);
    q.gold_answers = string_list(row, "gold_answers", path, line);
    if (auto it = row.find("gold_doc_id"); it != row.end() && it->is_string()) {
      q.gold_doc_id = it->get<std::string>();
    }
    if (!seen.insert(q.qid).second) {
      fail(ErrorKind::kValidation, where(path, line) + ": duplicate qid '" + q.qid + "'");
    }
    queries.push_back(std::move(q));
  });
  return queries;
}

void save_queries_jsonl(const std::filesystem::path& path,
                        const std::vector<QueryRecord>& queries) {
  std::string out;
  for (const auto& q : queries) {
    ordered_json row;
    row["qid"] = q.qid;
    row["question"] = q.question;
    row["history"] = q.history;
    row["gold_answers"] = q.gold_answers;
    if (q.gold_doc_id) row["gold_doc_id"] = *q.gold_doc_id;
    out += row.dump();
    out += '\n';
  }
  write_file_atomic(path, out);
}

}  // namespace grogu
