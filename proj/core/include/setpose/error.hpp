#pragma once

#include <stdexcept>
#include <string>

namespace setpose {

/// Broad failure class; the CLI maps each category onto its exit code.
enum class ErrorCategory {
  Config,   // bad configuration or arguments
  Io,       // filesystem / serialization problems
  Data,     // dataset content cannot support the request
  Numeric,  // non-finite values, degenerate geometry
  Logic,    // caller broke a precondition (shapes, keys)
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

#define SETPOSE_DEFINE_ERROR(Name, Category)                              \
  class Name : public Error {                                             \
   public:                                                                \
    explicit Name(const std::string& what) : Error(Category, what) {}     \
  }

SETPOSE_DEFINE_ERROR(ConfigError, ErrorCategory::Config);
SETPOSE_DEFINE_ERROR(IoError, ErrorCategory::Io);
SETPOSE_DEFINE_ERROR(FormatError, ErrorCategory::Io);
SETPOSE_DEFINE_ERROR(EmptySide, ErrorCategory::Data);
SETPOSE_DEFINE_ERROR(MissingScaleStats, ErrorCategory::Config);
SETPOSE_DEFINE_ERROR(NonPositiveDepth, ErrorCategory::Numeric);
SETPOSE_DEFINE_ERROR(NonPositiveScale, ErrorCategory::Numeric);
SETPOSE_DEFINE_ERROR(DegeneratePose, ErrorCategory::Numeric);
SETPOSE_DEFINE_ERROR(NonFinite, ErrorCategory::Numeric);
SETPOSE_DEFINE_ERROR(NonFiniteLoss, ErrorCategory::Numeric);
SETPOSE_DEFINE_ERROR(ShapeError, ErrorCategory::Logic);
SETPOSE_DEFINE_ERROR(KeyMismatch, ErrorCategory::Logic);
SETPOSE_DEFINE_ERROR(InconsistentAssignment, ErrorCategory::Logic);

#undef SETPOSE_DEFINE_ERROR

/// Process exit code for a failure category (0 is reserved for success).
int exit_code(ErrorCategory category) noexcept;

}  // namespace setpose
