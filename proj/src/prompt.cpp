#include "grogu/prompt.hpp"

#include <array>
#include <map>

#include <json.hpp>

#include "grogu/error.hpp"
#include "grogu/hashing.hpp"
#include "grogu/io.hpp"

namespace grogu {

namespace {

using Vars = std::map<std::string_view, std::string_view>;

// Substitutes {name} from `vars`. With `vars` empty it only validates that
// every placeholder is in `allowed`.
std::string render(std::string_view tmpl, const std::vector<std::string_view>& allowed,
                   const Vars& vars, std::string_view what) {
  std::string out;
  out.reserve(tmpl.size());
  for (std::size_t i = 0; i < tmpl.size(); ++i) {
    const char c = tmpl[i];
    if (c == '{' && i + 1 < tmpl.size() && tmpl[i + 1] == '{') {
      out.push_back('{');
      ++i;
    } else if (c == '}' && i + 1 < tmpl.size() && tmpl[i + 1] == '}') {
      out.push_back('}');
      ++i;
    } else if (c == '{') {
      const auto close = tmpl.find('}', i);
      if (close == std::string_view::npos) {
        fail(ErrorKind::kConfig, std::string(what) + ": unclosed '{' in template");
      }
      const auto name = tmpl.substr(i + 1, close - i - 1);
      if (std::find(allowed.begin(), allowed.end(), name) == allowed.end()) {
        fail(ErrorKind::kConfig,
             std::string(what) + ": unknown placeholder {" + std::string(name) + "}");
      }
      if (auto it = vars.find(name); it != vars.end()) out.append(it->second);
      i = close;
    } else if (c == '}') {
      fail(ErrorKind::kConfig, std::string(what) + ": stray '}' in template");
    } else {
      out.push_back(c);
    }
  }
  return out;
}

const std::vector<std::string_view> kTemplateVars = {"documents", "history", "question"};
const std::vector<std::string_view> kItemVars = {"index", "title", "text"};

}  // namespace

std::vector<std::string> GroundingContext::doc_ids() const {
  std::vector<std::string> ids;
  ids.reserve(documents.size());
  for (const auto& d : documents) ids.push_back(d.doc_id);
  return ids;
}

void PromptSpec::validate() const {
  render(template_text, kTemplateVars, {}, "prompt template");
  render(document_format, kItemVars, {}, "document format");
  render(history_format, kItemVars, {}, "history format");
  if (template_text.find("{question}") == std::string::npos) {
    fail(ErrorKind::kConfig, "prompt template lacks the {question} placeholder");
  }
}

std::string PromptSpec::fingerprint() const {
  const std::array<std::string_view, 4> fields = {system_preamble, template_text,
                                                  document_format, history_format};
  return sha256_fields_hex(fields);
}

PromptSpec PromptSpec::load_json(const std::filesystem::path& path) {
  PromptSpec spec;
  try {
    const auto j = nlohmann::json::parse(read_file(path));
    spec.system_preamble = j.value("system_preamble", spec.system_preamble);
    spec.template_text = j.value("template", spec.template_text);
    spec.document_format = j.value("document_format", spec.document_format);
    spec.history_format = j.value("history_format", spec.history_format);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kParse, path.string() + ": " + e.what());
  }
  spec.validate();
  return spec;
}

std::string assemble_prompt(const PromptSpec& spec, std::string_view question,
                            const std::vector<std::string>& history,
                            const GroundingContext* context) {
  std::string docs;
  if (context) {
    for (std::size_t i = 0; i < context->documents.size(); ++i) {
      const auto& d = context->documents[i];
      const auto index = std::to_string(i + 1);
      docs += render(spec.document_format, kItemVars,
                     {{"index", index}, {"title", d.title}, {"text", d.contents}},
                     "document format");
    }
  }
  std::string turns;
  for (std::size_t i = 0; i < history.size(); ++i) {
    const auto index = std::to_string(i + 1);
    turns += render(spec.history_format, kItemVars,
                    {{"index", index}, {"title", ""}, {"text", history[i]}}, "history format");
  }
  return spec.system_preamble +
         render(spec.template_text, kTemplateVars,
                {{"documents", docs}, {"history", turns}, {"question", question}},
                "prompt template");
}

Prompt make_prompt(const PromptSpec& spec, std::string_view question,
                   const std::vector<std::string>& history, const GroundingContext* context) {
  Prompt p;
  p.text = assemble_prompt(spec, question, history, context);
  p.question = std::string(question);
  if (context) p.documents = context->documents;
  return p;
}

}  // namespace grogu
