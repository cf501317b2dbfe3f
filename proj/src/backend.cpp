#include "grogu/backend.hpp"

#include "grogu/error.hpp"

namespace grogu {

std::string_view backend_kind_name(BackendKind k) {
  switch (k) {
    case BackendKind::kTrace: return "trace";
    case BackendKind::kHttp: return "http";
    case BackendKind::kNeedle: return "needle";
  }
  return "unknown";
}

BackendKind parse_backend_kind(std::string_view name) {
  if (name == "trace") return BackendKind::kTrace;
  if (name == "http") return BackendKind::kHttp;
  if (name == "needle") return BackendKind::kNeedle;
  fail(ErrorKind::kConfig, "unknown backend '" + std::string(name) + "' (expected needle|trace|http)");
}

std::string detokenize(std::span<const std::string> tokens) {
  std::string text;
  for (const auto& t : tokens) text += t;
  const auto begin = text.find_first_not_of(" \t\n");
  if (begin == std::string::npos) return {};
  const auto end = text.find_last_not_of(" \t\n");
  return text.substr(begin, end - begin + 1);
}

}  // namespace grogu
