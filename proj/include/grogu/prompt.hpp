#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "grogu/corpus.hpp"

namespace grogu {

// Ordered document list placed in the prompt. Order is significant.
struct GroundingContext {
  std::vector<DocumentRecord> documents;

  bool empty() const noexcept { return documents.empty(); }
  std::vector<std::string> doc_ids() const;
};

// Prompt template with {documents}, {history} and {question} placeholders.
// `document_format` renders one document with {index}, {title} and {text}.
// "{{" and "}}" produce literal braces.
struct PromptSpec {
  std::string system_preamble =
      "Answer the question. Use the documents below when they are relevant.\n";
  std::string template_text = "{documents}{history}Question: {question}\nAnswer:";
  std::string document_format = "Document [{index}] (Title: {title}) {text}\n";
  std::string history_format = "Turn {index}: {text}\n";

  // Throws kConfig on unknown placeholders or a template without {question}.
  void validate() const;
  // Stable content hash of all four strings.
  std::string fingerprint() const;

  static PromptSpec load_json(const std::filesystem::path& path);
};

// Everything a backend may look at. Text-based backends only read `text`;
// the analytic backend also reads the structured fields.
struct Prompt {
  std::string text;
  std::string question;
  std::vector<DocumentRecord> documents;
};

std::string assemble_prompt(const PromptSpec& spec, std::string_view question,
                            const std::vector<std::string>& history,
                            const GroundingContext* context);

Prompt make_prompt(const PromptSpec& spec, std::string_view question,
                   const std::vector<std::string>& history, const GroundingContext* context);

}  // namespace grogu
