#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace annobias {

// Error categories. The CLI maps these to exit codes: input/validation
// problems exit 1, everything else exits 2.
enum class errc {
  io,
  schema,
  duplicate,
  parameter,
  quota,
  stratum_empty,
  empty_corpus,
  empty_blacklist,
  degenerate_data,
  shape_mismatch,
  capability,
  task_mismatch,
  internal,
};

inline std::string_view errc_name(errc c) {
  switch (c) {
    case errc::io: return "io";
    case errc::schema: return "schema";
    case errc::duplicate: return "duplicate";
    case errc::parameter: return "parameter";
    case errc::quota: return "quota";
    case errc::stratum_empty: return "stratum_empty";
    case errc::empty_corpus: return "empty_corpus";
    case errc::empty_blacklist: return "empty_blacklist";
    case errc::degenerate_data: return "degenerate_data";
    case errc::shape_mismatch: return "shape_mismatch";
    case errc::capability: return "capability";
    case errc::task_mismatch: return "task_mismatch";
    case errc::internal: return "internal";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(errc code, const std::string& message)
      : std::runtime_error(std::string(errc_name(code)) + ": " + message),
        code_(code) {}

  errc code() const noexcept { return code_; }

  // true for errors caused by bad inputs or configuration rather than by a
  // failure at run time
  bool is_validation() const noexcept {
    switch (code_) {
      case errc::io:
      case errc::schema:
      case errc::duplicate:
      case errc::parameter:
      case errc::quota:
      case errc::stratum_empty:
      case errc::empty_corpus:
      case errc::empty_blacklist:
      case errc::degenerate_data:
      case errc::task_mismatch:
        return true;
      default:
        return false;
    }
  }

 private:
  errc code_;
};

}  // namespace annobias
