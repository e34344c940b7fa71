#include "setpose/error.hpp"

namespace setpose {

int exit_code(ErrorCategory category) noexcept {
  switch (category) {
    case ErrorCategory::Config:
      return 2;
    case ErrorCategory::Io:
      return 3;
    case ErrorCategory::Data:
      return 4;
    case ErrorCategory::Numeric:
      return 5;
    case ErrorCategory::Logic:
      return 5;
  }
  return 1;
}

}  // namespace setpose
