#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace grogu {

// Machine-readable error classes. The CLI maps these onto exit codes.
enum class ErrorKind {
  kValidation,   // input violates a documented invariant
  kStructural,   // mismatched lengths / wrong cardinality
  kConfig,       // bad template, flag, or config file
  kMissingInput, // referenced file does not exist
  kParse,        // malformed JSON / JSONL row
  kIo,           // unwritable path, short read
  kLookup,       // unknown doc id
  kCacheMiss,    // trace store has no row for a key
  kIntegrity,    // hash collision on differing payloads
  kTransport,    // HTTP backend unreachable or returned an error
  kCapability,   // backend cannot perform the requested operation
};

std::string_view error_kind_name(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Transport failures carry how many attempts were made and whether a retry
// could plausibly succeed.
class TransportError : public Error {
 public:
  TransportError(const std::string& message, int attempts, bool retryable)
      : Error(ErrorKind::kTransport, message),
        attempts_(attempts),
        retryable_(retryable) {}

  int attempts() const noexcept { return attempts_; }
  bool retryable() const noexcept { return retryable_; }

 private:
  int attempts_;
  bool retryable_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace grogu
