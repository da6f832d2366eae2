#ifndef DUALDET_ERROR_H_
#define DUALDET_ERROR_H_

#include <stdexcept>
#include <string>

namespace dualdet {

enum class ErrorCode {
  kInvalidGeometry,
  kEmptyInput,
  kInvalidCost,
  kInvalidParameter,
  kNumericDomain,
  kAssignmentMismatch,
  kInvalidGrid,
  kGradientShape,
  kShapeMismatch,
  kUndefinedMetric,
  kParse,
  kUnknownImage,
  kValidation,
  kRecordMismatch,
  kGeneration,
  kDivergence,
  kIo,
};

const char* ErrorCodeName(ErrorCode code);

// Single exception type for the library; callers branch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(ErrorCodeName(code)) + ": " + what),
        code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

inline const char* ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidGeometry: return "invalid-geometry";
    case ErrorCode::kEmptyInput: return "empty-input";
    case ErrorCode::kInvalidCost: return "invalid-cost";
    case ErrorCode::kInvalidParameter: return "invalid-parameter";
    case ErrorCode::kNumericDomain: return "numeric-domain";
    case ErrorCode::kAssignmentMismatch: return "assignment-mismatch";
    case ErrorCode::kInvalidGrid: return "invalid-grid";
    case ErrorCode::kGradientShape: return "gradient-shape";
    case ErrorCode::kShapeMismatch: return "shape-mismatch";
    case ErrorCode::kUndefinedMetric: return "undefined-metric";
    case ErrorCode::kParse: return "parse";
    case ErrorCode::kUnknownImage: return "unknown-image";
    case ErrorCode::kValidation: return "validation";
    case ErrorCode::kRecordMismatch: return "record-mismatch";
    case ErrorCode::kGeneration: return "generation";
    case ErrorCode::kDivergence: return "divergence";
    case ErrorCode::kIo: return "io";
  }
  return "unknown";
}

}  // namespace dualdet

#endif  // DUALDET_ERROR_H_
