#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace xdistill {

enum class ErrorCode {
  kContractViolation,
  kRejectedInput,
  kMissingFile,
  kSchema,
  kInvalidLabel,
  kDanglingPath,
  kDuplicateKey,
  kTooFewPatients,
  kMissingWarp,
  kUndefinedAuc,
  kEmptyInput,
  kUnwritablePath,
  kDivergence,
  kConfig,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library carries a code so that callers (the
/// CLI in particular) can map it to an exit status without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool condition, const std::string& message) {
  if (!condition) fail(ErrorCode::kContractViolation, message);
}

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kContractViolation: return "contract_violation";
    case ErrorCode::kRejectedInput: return "rejected_input";
    case ErrorCode::kMissingFile: return "missing_file";
    case ErrorCode::kSchema: return "schema";
    case ErrorCode::kInvalidLabel: return "invalid_label";
    case ErrorCode::kDanglingPath: return "dangling_path";
    case ErrorCode::kDuplicateKey: return "duplicate_key";
    case ErrorCode::kTooFewPatients: return "too_few_patients";
    case ErrorCode::kMissingWarp: return "missing_warp";
    case ErrorCode::kUndefinedAuc: return "undefined_auc";
    case ErrorCode::kEmptyInput: return "empty_input";
    case ErrorCode::kUnwritablePath: return "unwritable_path";
    case ErrorCode::kDivergence: return "divergence";
    case ErrorCode::kConfig: return "config";
  }
  return "unknown";
}

}  // namespace xdistill
