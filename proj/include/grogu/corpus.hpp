#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace grogu {

struct DocumentRecord {
  std::string doc_id;
  std::string title;
  std::string contents;

  bool operator==(const DocumentRecord&) const = default;
};

struct QueryRecord {
  std::string qid;
  std::string question;
  std::vector<std::string> history;
  std::vector<std::string> gold_answers;  // evaluation only
  std::optional<std::string> gold_doc_id; // evaluation only

  bool operator==(const QueryRecord&) const = default;
};

// {"id", "title", "contents"} per line. Blank lines are skipped; a malformed
// line throws kParse naming the line number.
std::vector<DocumentRecord> load_corpus_jsonl(const std::filesystem::path& path);
void save_corpus_jsonl(const std::filesystem::path& path,
                       const std::vector<DocumentRecord>& docs);

// {"qid", "question", "history", "gold_answers", "gold_doc_id"} per line.
// Duplicate qids throw kValidation.
std::vector<QueryRecord> load_queries_jsonl(const std::filesystem::path& path);
void save_queries_jsonl(const std::filesystem::path& path,
                        const std::vector<QueryRecord>& queries);

}  // namespace grogu
