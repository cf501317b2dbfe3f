#include "grogu/error.hpp"

namespace grogu {

std::string_view error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kValidation: return "validation";
    case ErrorKind::kStructural: return "structural";
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kMissingInput: return "missing_input";
    case ErrorKind::kParse: return "parse";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kLookup: return "lookup";
    case ErrorKind::kCacheMiss: return "cache_miss";
    case ErrorKind::kIntegrity: return "integrity";
    case ErrorKind::kTransport: return "transport";
    case ErrorKind::kCapability: return "capability";
  }
  return "unknown";
}

}  // namespace grogu
